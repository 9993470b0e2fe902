#pragma once

// JSON config blocks and the AMWT parameter checkpoint:
//   "AMWT" | u32 version | u32 config length | config JSON |
//   per param: u32 name length | name | u32 rank | u32 dims... | f64 values...
// All integers and floats little-endian. Params run to end of file.

#include <filesystem>
#include <map>
#include <string>

#include <json.hpp>

#include "amnet/data.hpp"
#include "amnet/model.hpp"
#include "amnet/training.hpp"

namespace amnet {

inline nlohmann::json to_json(const ModelConfig& c) {
  return {{"W", c.W},
          {"H", c.H},
          {"D", c.D},
          {"B", c.B},
          {"T", c.T},
          {"fm_hidden", c.fm_hidden},
          {"dropout_rate", c.dropout_rate},
          {"context_dropout_rate", c.context_dropout_rate},
          {"attention_enabled", c.attention_enabled},
          {"seed", c.seed}};
}

/// Missing keys keep their values from `base`.
inline ModelConfig model_config_from_json(const nlohmann::json& j, ModelConfig base = {}) {
  auto take = [&](const char* key, auto& field) {
    if (j.contains(key)) field = j.at(key).get<std::remove_reference_t<decltype(field)>>();
  };
  take("W", base.W);
  take("H", base.H);
  take("D", base.D);
  take("B", base.B);
  take("T", base.T);
  take("fm_hidden", base.fm_hidden);
  take("dropout_rate", base.dropout_rate);
  take("context_dropout_rate", base.context_dropout_rate);
  take("attention_enabled", base.attention_enabled);
  take("seed", base.seed);
  return base;
}

inline nlohmann::json to_json(const TrainConfig& c) {
  return {{"learning_rate", c.learning_rate}, {"lambda", c.lambda},         {"weight_decay", c.weight_decay},
          {"batch_size", c.batch_size},       {"max_epochs", c.max_epochs}, {"patience", c.patience},
          {"adam_beta1", c.adam_beta1},       {"adam_beta2", c.adam_beta2}, {"adam_eps", c.adam_eps},
          {"seed", c.seed}};
}

inline TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig base = {}) {
  auto take = [&](const char* key, auto& field) {
    if (j.contains(key)) field = j.at(key).get<std::remove_reference_t<decltype(field)>>();
  };
  take("learning_rate", base.learning_rate);
  take("lambda", base.lambda);
  take("weight_decay", base.weight_decay);
  take("batch_size", base.batch_size);
  take("max_epochs", base.max_epochs);
  take("patience", base.patience);
  take("adam_beta1", base.adam_beta1);
  take("adam_beta2", base.adam_beta2);
  take("adam_eps", base.adam_eps);
  take("seed", base.seed);
  return base;
}

inline constexpr std::array<char, 4> kCheckpointMagic{'A', 'M', 'W', 'T'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  ModelConfig config;
  NormStats stats;
  ModelParams params;
};

inline std::string encode_checkpoint(const Checkpoint& ck) {
  check_params(ck.params, ck.config);
  const std::string cfg =
      nlohmann::json{{"model", to_json(ck.config)},
                     {"norm", {{"mean", ck.stats.mean}, {"half_range", ck.stats.half_range}}}}
          .dump();
  std::string out(kCheckpointMagic.begin(), kCheckpointMagic.end());
  le::put_u32(out, kCheckpointVersion);
  le::put_u32(out, static_cast<std::uint32_t>(cfg.size()));
  out += cfg;
  for (const Param* p : ck.params.list()) {
    le::put_u32(out, static_cast<std::uint32_t>(p->name.size()));
    out += p->name;
    le::put_u32(out, static_cast<std::uint32_t>(p->value.rank()));
    for (std::size_t d : p->value.shape()) le::put_u32(out, static_cast<std::uint32_t>(d));
    for (double v : p->value.values()) le::put_f64(out, v);
  }
  return out;
}

inline Checkpoint decode_checkpoint(const std::string& bytes) {
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  const std::size_t n = bytes.size();
  std::size_t pos = 0;
  auto need = [&](std::size_t k, const char* what) {
    if (n - pos < k)
      throw FormatError(std::string("checkpoint truncated reading ") + what + ": expected " + std::to_string(k) +
                        " more bytes, got " + std::to_string(n - pos));
  };
  need(12, "header");
  if (!std::equal(kCheckpointMagic.begin(), kCheckpointMagic.end(), bytes.begin()))
    throw FormatError("bad checkpoint magic '" + bytes.substr(0, 4) + "'");
  const std::uint32_t version = le::get_u32(p + 4);
  if (version != kCheckpointVersion) throw FormatError("unsupported checkpoint version " + std::to_string(version));
  const std::uint32_t cfg_len = le::get_u32(p + 8);
  pos = 12;
  need(cfg_len, "config block");
  Checkpoint ck;
  try {
    const auto j = nlohmann::json::parse(bytes.substr(pos, cfg_len));
    ck.config = model_config_from_json(j.at("model"));
    ck.stats = {j.at("norm").at("mean").get<double>(), j.at("norm").at("half_range").get<double>()};
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("checkpoint config block: ") + e.what());
  }
  pos += cfg_len;
  ck.config.validate();

  std::map<std::string, Tensor> loaded;
  while (pos < n) {
    need(4, "param name length");
    const std::uint32_t name_len = le::get_u32(p + pos);
    pos += 4;
    need(name_len, "param name");
    std::string name = bytes.substr(pos, name_len);
    pos += name_len;
    need(4, "param rank");
    const std::uint32_t rank = le::get_u32(p + pos);
    pos += 4;
    need(4ull * rank, "param dims");
    Shape shape;
    for (std::uint32_t r = 0; r < rank; ++r, pos += 4) shape.push_back(le::get_u32(p + pos));
    const std::size_t count = shape_numel(shape);
    need(8 * count, "param values");
    std::vector<double> vals(count);
    for (std::size_t i = 0; i < count; ++i, pos += 8) vals[i] = le::get_f64(p + pos);
    loaded.emplace(std::move(name), Tensor(std::move(shape), std::move(vals)));
  }

  ck.params = zero_params(ck.config);
  for (Param* q : ck.params.list()) {
    auto it = loaded.find(q->name);
    if (it == loaded.end()) throw FormatError("checkpoint is missing param '" + q->name + "'");
    if (it->second.shape() != q->value.shape())
      throw FormatError("checkpoint param '" + q->name + "' has shape " + shape_str(it->second.shape()) +
                        ", config implies " + shape_str(q->value.shape()));
    q->value = std::move(it->second);
    q->grad = Tensor::zeros_like(q->value);
  }
  return ck;
}

inline void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck) {
  write_file_bytes(path, encode_checkpoint(ck));
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  return decode_checkpoint(read_file_bytes(path));
}

}  // namespace amnet
