#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "fan/features.hpp"
#include "fan/model.hpp"
#include "fan/synth.hpp"
#include "fan/train.hpp"

namespace fan::cli {

enum Command : unsigned {
  kSynth = 1u << 0,
  kExtract = 1u << 1,
  kTrain = 1u << 2,
  kEval = 1u << 3,
  kAblate = 1u << 4,
  kSpectrum = 1u << 5,
};

struct RunConfig {
  std::uint64_t seed = 1;
  std::string log_path;
  std::string ground_truth_path;  // empty: "<log>.world"
  std::string dataset_path;
  std::string checkpoint_path;
  std::string report_path;
  std::size_t repeats = 5;
  std::size_t spectrum_samples = 1000;
  WorldConfig world;
  DatasetConfig dataset;
  ModelConfig model;
  TrainConfig train;

  /// Copies `seed` into the world and training configs.
  void propagate_seed();
};

/// One settable key. The same name is used as `--name` on the command line
/// and as `name = value` in a config file.
struct Setting {
  std::string name;
  std::string help;
  unsigned commands;  // bitmask of Command values where the flag is offered
  std::function<void(RunConfig&, const std::string&)> apply;
};

const std::vector<Setting>& settings();

/// Applies one key; throws ConfigError for an unknown key or a bad value.
void apply_setting(RunConfig& config, const std::string& key, const std::string& value);

/// Applies every entry of a `key = value` file.
void apply_config_file(RunConfig& config, const std::string& path);

}  // namespace fan::cli
