#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "querynet/data/datasets.hpp"
#include "querynet/driver/attack.hpp"
#include "querynet/models/victim.hpp"

namespace querynet::cli {

/// Every validation problem found in a config, not just the first.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(std::vector<std::string> problems);
  const std::vector<std::string>& problems() const noexcept { return problems_; }

 private:
  std::vector<std::string> problems_;
};

struct DatasetConfig {
  /// "synth" or "idx".
  std::string kind = "synth";
  data::SynthSpec synth;
  std::string images;
  std::string labels;
  std::size_t limit = 0;
};

struct RunConfig {
  DatasetConfig train_data = [] {
    DatasetConfig d;
    d.synth.seed = 1;
    return d;
  }();
  DatasetConfig attack_data = [] {
    DatasetConfig d;
    d.synth.seed = 1000;
    d.synth.per_class = 67;
    return d;
  }();
  /// Leading samples of attack_data to attack; 0 takes all.
  std::size_t attack_samples = 200;

  std::uint64_t victim_seed = 7;
  models::VictimTrainOptions victim_training;
  /// Exactly one of these selects the victim for `attack`.
  std::string victim_checkpoint;
  std::string victim_endpoint;

  data::Norm norm = data::Norm::kLinf;
  float eps = 0.15f;
  std::size_t budget = 2000;
  std::vector<std::uint64_t> seeds = {0};
  bool exclude_misclassified = true;

  std::size_t surrogates = 3;
  models::EnsembleOptions ensemble;
  models::FitOptions fit;
  attackers::SquareSchedule schedule;
  attackers::SquarePlusOptions squareplus;
  double weight_ema = 0.0;

  bool disable_nas = false;
  bool disable_squareplus = false;
  bool square_only = false;

  /// Free-form label; empty derives one from the ablation flags.
  std::string variant;
};

/// Parses a JSON config. Missing keys keep their defaults; unknown keys,
/// wrong types and out-of-range values are all reported together.
RunConfig parse_config(const std::string& text);
RunConfig load_config(const std::string& path);

/// Fully expanded, key-sorted JSON. parse_config(canonical_json(c)) == c.
std::string canonical_json(const RunConfig& config);
/// 16 hex digits of 64-bit FNV-1a over canonical_json.
std::string config_hash(const RunConfig& config);

std::string variant_name(const RunConfig& config);
driver::AttackConfig attack_config(const RunConfig& config, std::uint64_t seed);
data::LabeledSet load_dataset(const DatasetConfig& config);
/// attack_data truncated to attack_samples.
data::LabeledSet attack_set(const RunConfig& config);

}  // namespace querynet::cli
