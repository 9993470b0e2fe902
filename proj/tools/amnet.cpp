#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "amnet/cli.hpp"

namespace {

using amnet::cli::RunConfig;

struct Flags {
  std::string config;
  std::string manifest, checkpoint, out, split;
  std::vector<std::string> splits, ids;
  std::int64_t seed = -1;
  bool no_attention = false;
  std::size_t n = 0;
};

void add_common(CLI::App* cmd, Flags& f) {
  cmd->add_option("--config", f.config, "JSON run config");
  cmd->add_option("--seed", f.seed, "seed for model, training and data generation");
  cmd->add_flag("--no-attention", f.no_attention, "replace attention scores with ones");
}

RunConfig resolve(const Flags& f) {
  RunConfig rc = f.config.empty() ? RunConfig{} : amnet::cli::load_run_config(f.config);
  if (!f.manifest.empty()) rc.manifest = f.manifest;
  if (!f.checkpoint.empty()) rc.checkpoint = f.checkpoint;
  if (!f.out.empty()) rc.out = f.out;
  if (!f.splits.empty()) rc.splits = f.splits;
  if (!f.split.empty()) rc.eval_split = f.split;
  if (!f.ids.empty()) rc.ids = f.ids;
  if (f.seed >= 0) rc.seed = static_cast<std::uint64_t>(f.seed);
  if (f.n > 0) rc.synth_n = f.n;
  rc.no_attention = rc.no_attention || f.no_attention;
  return rc;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"amnet: attention-recurrent memorability regression"};
  app.require_subcommand(1);
  Flags f;

  auto* train = app.add_subcommand("train", "train on a manifest's train/val splits");
  add_common(train, f);
  train->add_option("--manifest", f.manifest, "dataset manifest");
  train->add_option("--out", f.out, "output directory for checkpoint and report");
  train->add_option("--checkpoint", f.checkpoint, "checkpoint path (default <out>/checkpoint.amwt)");

  auto* eval = app.add_subcommand("eval", "rank correlation and MSE of a checkpoint");
  add_common(eval, f);
  eval->add_option("--manifest", f.manifest, "dataset manifest");
  eval->add_option("--checkpoint", f.checkpoint, "checkpoint to evaluate");
  eval->add_option("--splits", f.splits, "several manifests; reports each and the mean");
  eval->add_option("--split", f.split, "which split to score: train, val or test (default test)");

  auto* predict = app.add_subcommand("predict", "per-image scores");
  add_common(predict, f);
  predict->add_option("--manifest", f.manifest, "dataset manifest");
  predict->add_option("--checkpoint", f.checkpoint, "checkpoint");
  predict->add_option("ids", f.ids, "record ids")->required();

  auto* attmap = app.add_subcommand("attmap", "attention heatmaps for one record");
  add_common(attmap, f);
  attmap->add_option("--manifest", f.manifest, "dataset manifest");
  attmap->add_option("--checkpoint", f.checkpoint, "checkpoint");
  attmap->add_option("--out", f.out, "output directory");
  attmap->add_option("id", f.ids, "record id")->required()->expected(1);

  auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference check of every parameter group");
  add_common(gradcheck, f);

  auto* synth = app.add_subcommand("synth", "generate a planted-location synthetic dataset");
  add_common(synth, f);
  synth->add_option("--out", f.out, "output directory");
  synth->add_option("-n,--count", f.n, "number of samples (>= 4)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : amnet::cli::kUsage;
  }

  RunConfig rc;
  try {
    rc = resolve(f);
  } catch (const amnet::cli::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return amnet::cli::kUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return amnet::cli::kIo;
  }

  if (*train) return amnet::cli::cmd_train(rc, std::cout, std::cerr);
  if (*eval) return amnet::cli::cmd_eval(rc, std::cout, std::cerr);
  if (*predict) return amnet::cli::cmd_predict(rc, std::cout, std::cerr);
  if (*attmap) return amnet::cli::cmd_attmap(rc, std::cout, std::cerr);
  if (*gradcheck) return amnet::cli::cmd_gradcheck(rc, std::cout, std::cerr);
  if (*synth) return amnet::cli::cmd_synth(rc, std::cout, std::cerr);
  return amnet::cli::kUsage;
}
