#pragma once

#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "run_config.hpp"

namespace fan::cli {

/// Writes through a sibling temp file and renames it into place, so a failed
/// write never leaves a partial file at `path`.
void write_atomically(const std::string& path, const std::function<void(std::ostream&)>& write);

struct SynthSummary {
  std::size_t requests = 0;
  std::size_t impressions = 0;
  double click_rate = 0;
};

struct ExtractSummary {
  std::size_t train_samples = 0;
  std::size_t test_samples = 0;
  std::size_t skipped_lines = 0;
};

struct AblationRow {
  std::string variant;
  std::vector<double> aucs;
  double mean = 0;
  double stddev = 0;  // sample standard deviation, 0 for a single run
};

struct AblationTable {
  std::vector<AblationRow> rows;  // none, no_frm, no_tftn, no_cmn, no_ucn
};

/// Trains every variant `repeats` times with seeds seed, seed+1, ... on the
/// same dataset and collects held-out AUCs.
AblationTable run_ablation(const Dataset& dataset, const ModelConfig& base, const TrainConfig& train,
                           std::size_t repeats, std::ostream* progress);
void write_ablation_table(std::ostream& out, const AblationTable& table);

/// Deterministic random subset of at most `count` samples.
std::vector<const TrainingSample*> sample_subset(const Dataset& dataset, std::size_t count, std::uint64_t seed);

// Each command prints a short human-readable summary to `out` and writes its
// artifacts to the configured paths.
SynthSummary cmd_synth(const RunConfig& config, std::ostream& out);
ExtractSummary cmd_extract(const RunConfig& config, std::ostream& out);
TrainResult cmd_train(const RunConfig& config, std::ostream& out);
EvalResult cmd_eval(const RunConfig& config, std::ostream& out);
AblationTable cmd_ablate(const RunConfig& config, std::ostream& out);
SpectrumStats cmd_spectrum(const RunConfig& config, std::ostream& out);

/// Parses arguments and runs one subcommand. Returns the process exit code.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace fan::cli
