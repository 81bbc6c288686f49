#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <variant>

#include <nlohmann/json.hpp>

#include "kdsel/detectors.hpp"
#include "kdsel/prune.hpp"
#include "kdsel/selector.hpp"

namespace kdsel {

struct TrainConfig {
  // optimization
  double learning_rate = 0.05;
  double clip_bound = 5.0;
  double momentum = 0.0;
  std::size_t batch_size = 32;
  std::size_t epochs = 30;
  std::uint64_t seed = 7;
  // data
  std::size_t window = 64;  // L
  std::size_t stride = 0;   // 0 means L/2
  double train_fraction = 0.8;
  EncoderKind encoder = EncoderKind::Mlp;
  // soft labels
  bool pisl = false;
  double t_soft = 0.25;
  double alpha = 0.4;
  // metadata alignment
  bool mki = false;
  double lambda = 0.78;
  double tau_nce = 0.1;
  std::size_t proj_dim = 64;  // H
  std::size_t text_dim = 128;  // d_K of the feature-hash embedder
  std::string embedder = "feature-hash";
  std::string embedding_file;
  // pruning
  PruneMode prune = PruneMode::None;
  double prune_ratio = 0.8;
  std::size_t lsh_bits = 14;
  std::size_t bins = 8;
  double anneal_fraction = 0.125;

  DetectorParams detectors{};
  bool detectors_mp_auto = true;  // MP subsequence follows L/2

  std::size_t effective_stride() const noexcept { return stride == 0 ? std::max<std::size_t>(1, window / 2) : stride; }
  DetectorParams detector_params() const;
  void validate() const;  // throws ConfigError
};

nlohmann::json to_json(const TrainConfig& config);
// Missing keys keep their defaults; unknown keys are rejected.
TrainConfig train_config_from_json(const nlohmann::json& doc);

// Minimal TOML reader for flat run-config files: `key = value` pairs,
// `[section]` headers, `#` comments; values are strings, booleans, integers
// or floats.
using TomlValue = std::variant<std::string, bool, std::int64_t, double>;
using TomlTable = std::map<std::string, std::map<std::string, TomlValue>>;  // "" is the root table
TomlTable parse_toml(const std::string& text);

TrainConfig load_train_config(const std::filesystem::path& path);
TrainConfig train_config_from_toml(const std::string& text);
std::string to_toml(const TrainConfig& config);

// A run file is a config TOML with an optional [data] table naming the inputs
// (corpus, metadata, labels). Relative paths resolve against the file's
// directory.
struct RunInputs {
  std::filesystem::path corpus;
  std::filesystem::path metadata;
  std::filesystem::path labels;
};

struct RunFile {
  TrainConfig config;
  RunInputs inputs;
};

RunFile load_run_file(const std::filesystem::path& path);

// KDSELECT_SEED, when set, replaces the configured seed.
void apply_env_overrides(TrainConfig& config);

}  // namespace kdsel
