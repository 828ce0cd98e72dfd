#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

#include "fan/features.hpp"
#include "fan/model.hpp"
#include "fan/tensor.hpp"

namespace fan {

struct TrainConfig {
  double learning_rate = 0.01;
  std::size_t batch_size = 1024;
  std::size_t epochs = 1;
  double beta_start = 0.01;
  double beta_end = 0.5;
  std::size_t beta_ramp_steps = 0;  // 0 means 80% of the planned optimizer steps
  std::uint64_t seed = 1;
  double adagrad_epsilon = 1e-8;

  void validate() const;
};

inline constexpr double kProbabilityClamp = 1e-7;

/// Binary cross-entropy of one prediction, probability clamped to [eps, 1-eps].
double logloss(double label, double probability, double eps = kProbabilityClamp);
/// Mean of logloss over a batch.
double mean_logloss(std::span<const double> labels, std::span<const double> probabilities);

/// beta_start + (beta_end - beta_start) * min(1, step / ramp). `config` must
/// carry a resolved (non-zero) beta_ramp_steps.
double beta_at_step(std::size_t step, const TrainConfig& config);

struct LossTerms {
  Tensor total;
  Tensor main;     // L_m over every sample
  Tensor fatigue;  // L_f over samples that carry a fatigue label; 0 if none do
};

/// L = L_m + beta * L_f from an existing forward pass.
LossTerms combined_loss(Graph& g, const ForwardTrace& trace, const Batch& batch, double beta);
LossTerms combined_loss(Graph& g, const ParameterStore& params, const ModelConfig& config, const Batch& batch,
                        double beta);

/// accumulator += g^2; w -= lr * g / sqrt(accumulator + eps); then zero grads.
/// Throws ContractError if no gradient has been populated since the last step.
void adagrad_step(ParameterStore& params, double learning_rate, double epsilon);

/// Rank-sum AUC with ties counted one half. Throws MetricError when labels
/// hold a single class.
double auc(std::span<const double> scores, std::span<const double> labels);

struct EpochMetrics {
  std::size_t epoch = 0;
  double main_loss = 0;
  double fatigue_loss = 0;
  double total_loss = 0;
  double test_auc = 0;  // NaN when there is no usable held-out split
};

struct SpectrumStats {
  std::vector<double> f_mean, f_std, f_uc_mean, f_uc_std;
  std::vector<double> amplitude_mean;   // raw input amplitude A per bin
  double amplitude_asymmetry = 0;       // max over samples and k of |A[k] - A[N-k]|
  std::size_t samples = 0;
};

struct EvalResult {
  double main_auc = 0;     // NaN if undefined
  double fatigue_auc = 0;  // NaN if undefined
  double main_loss = 0;
  double fatigue_loss = 0;  // NaN when no sample carries a fatigue label or no fatigue branch
  std::size_t samples = 0;
};

struct MetricsReport {
  std::string ablation = "none";
  EvalResult evaluation;
  std::vector<EpochMetrics> epochs;
  std::optional<SpectrumStats> spectrum;
};

struct TrainResult {
  ParameterStore params;
  MetricsReport report;
};

/// Samples of one split, in dataset order.
std::vector<const TrainingSample*> select_split(const Dataset& dataset, Split split);

EvalResult evaluate(std::span<const TrainingSample* const> samples, const ParameterStore& params,
                    const ModelConfig& config, std::size_t batch_size = 1024);

/// Seeded mini-batch training on the train split, evaluated on the test
/// split after every epoch. `progress`, when given, receives one line per epoch.
TrainResult train(const Dataset& dataset, const ModelConfig& model_config, const TrainConfig& train_config,
                  std::ostream* progress = nullptr);

/// Per-bin mean and population std (two-pass) of row vectors.
void column_stats(std::span<const std::vector<double>> rows, std::vector<double>& mean, std::vector<double>& stddev);

/// Statistics of F and F_uc over the given samples.
SpectrumStats spectrum_stats(std::span<const TrainingSample* const> samples, const ParameterStore& params,
                             const ModelConfig& config);

/// Text report: "key = value" lines followed by comma-separated tables.
void write_report(std::ostream& out, const MetricsReport& report);
void write_report_file(const std::string& path, const MetricsReport& report);

}  // namespace fan
