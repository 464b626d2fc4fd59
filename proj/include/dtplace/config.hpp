#pragma once

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <string>

#include "dtplace/data.hpp"
#include "dtplace/model.hpp"
#include "dtplace/netlist.hpp"
#include "dtplace/training.hpp"
#include "dtplace/vgae.hpp"

namespace dtplace {

/// Every stage's settings in one place. Loaded from a JSON file whose keys
/// override the defaults; unknown keys are rejected.
struct RunConfig {
  std::uint64_t seed = 0;
  int grid = 84;
  int workers = 1;
  std::string model_preset = "full";  // "full" or "desk"

  SyntheticSpec generator;
  vgae::TrainConfig vgae;
  data::DatasetConfig dataset;
  model::ModelConfig model;
  training::PretrainConfig pretrain;
  training::FinetuneConfig finetune;
  int eval_budget = 300;
  int eval_seeds = 5;
  double eval_temperature = 1.0;

  /// Pushes the shared fields (seed, grid) into the stage configs and
  /// applies the model preset.
  void resolve();
  /// Throws ValidationError naming the first bad field.
  void validate() const;

  nlohmann::json to_json() const;
  static RunConfig from_json(const nlohmann::json& j);
  static RunConfig load(const std::filesystem::path& path);
  /// Writes config.json into `dir`.
  void snapshot(const std::filesystem::path& dir) const;
};

}  // namespace dtplace
