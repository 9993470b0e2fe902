#pragma once

// Command implementations behind the `amnet` tool. Each returns a process
// exit code and writes results to `out`, diagnostics to `err`.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "amnet/checkpoint.hpp"
#include "amnet/data.hpp"
#include "amnet/gradcheck.hpp"
#include "amnet/heatmap.hpp"
#include "amnet/metrics.hpp"
#include "amnet/model.hpp"
#include "amnet/training.hpp"

namespace amnet::cli {

namespace fs = std::filesystem;

enum ExitCode : int { kOk = 0, kUsage = 1, kIo = 2, kVerification = 3 };

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class LookupError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Everything a command may read: model and training hyperparameters plus
/// paths. Loaded from a JSON file, then overridden by flags.
struct RunConfig {
  ModelConfig model;
  TrainConfig train;
  std::string manifest;
  std::string checkpoint;
  std::string out;
  std::vector<std::string> splits;
  std::string eval_split = "test";
  std::optional<std::uint64_t> seed;
  bool no_attention = false;
  std::size_t synth_n = 100;
  SynthOptions synth;
  std::vector<std::string> ids;
};

inline RunConfig run_config_from_json(const nlohmann::json& j) {
  RunConfig rc;
  try {
    if (j.contains("model")) rc.model = model_config_from_json(j.at("model"));
    if (j.contains("train")) rc.train = train_config_from_json(j.at("train"));
    if (j.contains("manifest")) rc.manifest = j.at("manifest").get<std::string>();
    if (j.contains("checkpoint")) rc.checkpoint = j.at("checkpoint").get<std::string>();
    if (j.contains("out")) rc.out = j.at("out").get<std::string>();
    if (j.contains("splits")) rc.splits = j.at("splits").get<std::vector<std::string>>();
    if (j.contains("eval_split")) rc.eval_split = j.at("eval_split").get<std::string>();
    if (j.contains("seed")) rc.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("synth")) {
      const auto& s = j.at("synth");
      if (s.contains("n")) rc.synth_n = s.at("n").get<std::size_t>();
      if (s.contains("noise")) rc.synth.noise = s.at("noise").get<double>();
      if (s.contains("w")) rc.synth.dims.W = s.at("w").get<std::size_t>();
      if (s.contains("h")) rc.synth.dims.H = s.at("h").get<std::size_t>();
      if (s.contains("d")) rc.synth.dims.D = s.at("d").get<std::size_t>();
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad run config: ") + e.what());
  }
  return rc;
}

inline RunConfig load_run_config(const fs::path& path) {
  const std::string text = read_file_bytes(path);
  try {
    return run_config_from_json(nlohmann::json::parse(text));
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("config " + path.string() + " is not valid JSON: " + e.what());
  }
}

/// Seed and attention flags folded into the model/train configs.
inline ModelConfig effective_model(const RunConfig& rc) {
  ModelConfig m = rc.model;
  if (rc.seed) m.seed = *rc.seed;
  if (rc.no_attention) m.attention_enabled = false;
  return m;
}

inline TrainConfig effective_train(const RunConfig& rc) {
  TrainConfig t = rc.train;
  if (rc.seed) t.seed = *rc.seed;
  return t;
}

/// Runs `body`, mapping exceptions onto exit codes.
inline int guarded(std::ostream& err, const std::function<int()>& body) {
  try {
    return body();
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kUsage;
  } catch (const UndefinedCorrelation& e) {
    err << "undefined correlation: " << e.what() << '\n';
    return kVerification;
  } catch (const LookupError& e) {
    err << "lookup error: " << e.what() << '\n';
    return kIo;
  } catch (const IoError& e) {
    err << "io error: " << e.what() << '\n';
    return kIo;
  } catch (const FormatError& e) {
    err << "format error: " << e.what() << '\n';
    return kIo;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kIo;
  }
}

namespace detail {

inline fs::path require_path(const std::string& p, const char* what) {
  if (p.empty()) throw ConfigError(std::string("missing --") + what);
  return fs::path(p);
}

inline fs::path base_dir(const fs::path& manifest) {
  return manifest.has_parent_path() ? manifest.parent_path() : fs::path(".");
}

inline void check_dims(const DatasetManifest& m, const ModelConfig& c) {
  if (m.dims.W != c.W || m.dims.H != c.H || m.dims.D != c.D)
    throw FormatError("manifest grid " + std::to_string(m.dims.W) + "x" + std::to_string(m.dims.H) + "x" +
                      std::to_string(m.dims.D) + " does not match the checkpoint's " + std::to_string(c.W) + "x" +
                      std::to_string(c.H) + "x" + std::to_string(c.D));
}

inline std::string json_number(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

inline FeatureRecord find_record(const DatasetManifest& m, const fs::path& base, const std::string& id) {
  for (const auto& r : m.records) {
    if (r.id != id) continue;
    const fs::path p = fs::path(r.path).is_absolute() ? fs::path(r.path) : base / r.path;
    return {r.id, load_feature_file(p), r.score};
  }
  throw LookupError("no record with id '" + id + "'");
}

}  // namespace detail

// ---------------------------------------------------------------------------

inline int cmd_synth(const RunConfig& rc, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const fs::path dir = detail::require_path(rc.out, "out");
    if (rc.synth_n < 4) throw ConfigError("synth needs n >= 4");
    const auto ds = synth_dataset(rc.synth_n, rc.seed.value_or(0), rc.synth);
    const auto m = write_synth_dataset(ds, dir);
    out << nlohmann::json{{"manifest", (dir / "manifest.json").string()},
                          {"n", m.records.size()},
                          {"train", m.count(Split::train)},
                          {"val", m.count(Split::val)},
                          {"test", m.count(Split::test)}}
               .dump()
        << '\n';
    return int{kOk};
  });
}

inline int cmd_train(const RunConfig& rc, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const fs::path manifest_path = detail::require_path(rc.manifest, "manifest");
    const fs::path dir = detail::require_path(rc.out, "out");
    const DatasetManifest m = load_manifest(manifest_path);
    if (m.count(Split::train) == 0 || m.count(Split::val) == 0)
      throw ConfigError("manifest needs non-empty train and val splits");
    ModelConfig mcfg = effective_model(rc);
    mcfg.W = m.dims.W;
    mcfg.H = m.dims.H;
    mcfg.D = m.dims.D;
    const TrainConfig tcfg = effective_train(rc);
    const fs::path base = detail::base_dir(manifest_path);
    const auto train = load_split(m, base, Split::train);
    const auto val = load_split(m, base, Split::val);

    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
    const FitResult res = fit(train, val, mcfg, tcfg, {}, [&](const EpochRecord& e) {
      err << "epoch " << e.epoch << " train_loss " << e.train_loss << " val_rho " << e.val_rho << " val_mse "
          << e.val_mse << '\n';
    });

    const fs::path ck_path = rc.checkpoint.empty() ? dir / "checkpoint.amwt" : fs::path(rc.checkpoint);
    save_checkpoint(ck_path, {mcfg, res.stats, res.params});
    std::ofstream report(dir / "report.jsonl");
    if (!report) throw IoError("cannot write " + (dir / "report.jsonl").string());
    write_report_jsonl(report, res.report);

    const auto& best = res.report.epochs.at(res.report.best_epoch - 1);
    out << nlohmann::json{{"checkpoint", ck_path.string()},
                          {"epochs", res.report.epochs.size()},
                          {"best_epoch", res.report.best_epoch},
                          {"stopped_early", res.report.stopped_early},
                          {"val_rho", best.val_rho},
                          {"val_mse", best.val_mse},
                          {"final_train_loss", res.report.epochs.back().train_loss}}
               .dump()
        << '\n';
    return int{kOk};
  });
}

inline int cmd_eval(const RunConfig& rc, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const Checkpoint ck = load_checkpoint(detail::require_path(rc.checkpoint, "checkpoint"));
    std::vector<std::string> manifests = rc.splits;
    if (manifests.empty()) manifests.push_back(detail::require_path(rc.manifest, "manifest").string());
    const Split split = parse_split(rc.eval_split);

    std::vector<EvalMetrics> results;
    for (const auto& mp : manifests) {
      const DatasetManifest m = load_manifest(mp);
      detail::check_dims(m, ck.config);
      const auto records = load_split(m, detail::base_dir(mp), split);
      if (records.empty()) throw ConfigError("manifest " + mp + " has no '" + rc.eval_split + "' records");
      results.push_back(evaluate(records, ck.params, ck.config, ck.stats));
    }
    if (rc.splits.empty()) {
      const auto& r = results.front();
      out << "{\"rho\":" << detail::json_number(r.rho) << ",\"mse\":" << detail::json_number(r.mse)
          << ",\"n\":" << r.n << "}\n";
      return int{kOk};
    }
    double rho_sum = 0.0, mse_sum = 0.0;
    std::size_t n = 0;
    out << "{\"splits\":[";
    for (std::size_t i = 0; i < results.size(); ++i) {
      const auto& r = results[i];
      out << (i ? "," : "") << "{\"manifest\":" << nlohmann::json(manifests[i]).dump()
          << ",\"rho\":" << detail::json_number(r.rho) << ",\"mse\":" << detail::json_number(r.mse)
          << ",\"n\":" << r.n << "}";
      rho_sum += r.rho;
      mse_sum += r.mse;
      n += r.n;
    }
    const double k = static_cast<double>(results.size());
    out << "],\"rho\":" << detail::json_number(rho_sum / k) << ",\"mse\":" << detail::json_number(mse_sum / k)
        << ",\"n\":" << n << "}\n";
    return int{kOk};
  });
}

/// Per-step contributions on the score scale: half_range·m_t + mean/T, so
/// they sum to the unclamped denormalized total.
inline std::vector<double> denormalized_steps(const ForwardTrace& tr, const NormStats& st) {
  std::vector<double> out;
  const double share = st.mean / static_cast<double>(tr.m.size());
  for (double m : tr.m) out.push_back(m * st.half_range + share);
  return out;
}

inline double clamp_score(double y) { return std::clamp(y, 0.0, 1.0); }

inline int cmd_predict(const RunConfig& rc, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const Checkpoint ck = load_checkpoint(detail::require_path(rc.checkpoint, "checkpoint"));
    const fs::path mp = detail::require_path(rc.manifest, "manifest");
    const DatasetManifest m = load_manifest(mp);
    detail::check_dims(m, ck.config);
    if (rc.ids.empty()) throw ConfigError("predict needs at least one id");
    for (const auto& id : rc.ids) {
      const FeatureRecord r = detail::find_record(m, detail::base_dir(mp), id);
      const ForwardTrace tr = forward(r.features, ck.params, ck.config);
      const double y = denormalize_score(tr.y, ck.stats);
      nlohmann::json j{{"id", id}, {"y", clamp_score(y)}, {"y_raw", y}, {"m", denormalized_steps(tr, ck.stats)}};
      out << j.dump() << '\n';
    }
    return int{kOk};
  });
}

inline int cmd_attmap(const RunConfig& rc, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const Checkpoint ck = load_checkpoint(detail::require_path(rc.checkpoint, "checkpoint"));
    const fs::path mp = detail::require_path(rc.manifest, "manifest");
    const fs::path dir = detail::require_path(rc.out, "out");
    if (rc.ids.size() != 1) throw ConfigError("attmap takes exactly one id");
    const DatasetManifest m = load_manifest(mp);
    detail::check_dims(m, ck.config);
    const FeatureRecord r = detail::find_record(m, detail::base_dir(mp), rc.ids.front());
    const ForwardTrace tr = forward(r.features, ck.params, ck.config);

    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
    const std::size_t L = ck.config.L();
    nlohmann::json alpha = nlohmann::json::array();
    std::vector<std::string> images;
    for (std::size_t t = 0; t < ck.config.T; ++t) {
      std::span<const double> row(tr.alpha.data() + t * L, L);
      const fs::path img = dir / (r.id + "_t" + std::to_string(t + 1) + ".pgm");
      write_pgm(img, render_attention_map(row, ck.config.W, ck.config.H));
      images.push_back(img.string());
      alpha.push_back(std::vector<double>(row.begin(), row.end()));
    }
    const double y = denormalize_score(tr.y, ck.stats);
    nlohmann::json sidecar{{"id", r.id},
                           {"w", ck.config.W},
                           {"h", ck.config.H},
                           {"alpha", std::move(alpha)},
                           {"m", denormalized_steps(tr, ck.stats)},
                           {"y", clamp_score(y)},
                           {"y_raw", y},
                           {"images", images}};
    const fs::path side = dir / (r.id + "_attmap.json");
    write_file_bytes(side, sidecar.dump(1) + "\n");
    out << nlohmann::json{{"sidecar", side.string()}, {"images", images}}.dump() << '\n';
    return int{kOk};
  });
}

inline int cmd_gradcheck(const RunConfig& rc, std::ostream& out, std::ostream& err,
                         const GradCheckOptions& base = {}) {
  return guarded(err, [&] {
    GradCheckOptions opt = base;
    if (rc.seed) opt.data_seed = *rc.seed;
    if (rc.no_attention) opt.config.attention_enabled = false;
    const GradCheckReport rep = run_gradcheck(opt);
    out << std::left << std::setw(10) << "param" << std::setw(14) << "max_rel_err" << "status\n";
    for (const auto& g : rep.groups)
      out << std::left << std::setw(10) << g.name << std::setw(14) << std::scientific << std::setprecision(3)
          << g.max_rel_error << std::defaultfloat << (g.pass ? "pass" : "FAIL") << '\n';
    out << "worst " << rep.worst << ' ' << std::scientific << rep.worst_error << std::defaultfloat << " time "
        << std::fixed << std::setprecision(2) << rep.seconds << "s\n"
        << std::defaultfloat;
    if (!rep.pass) {
      err << "gradient check failed; worst param: " << rep.worst << '\n';
      return int{kVerification};
    }
    return int{kOk};
  });
}

}  // namespace amnet::cli
