#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fan/features.hpp"
#include "fan/tensor.hpp"

namespace fan {

/// Structural ablations. Several may be set at once; reported experiments
/// use at most one.
struct AblationFlags {
  bool no_frm = false;   // drop the whole fatigue branch
  bool no_tftn = false;  // feed the fitted time-domain series instead of the spectral net
  bool no_cmn = false;   // F_uc = alpha_u * F
  bool no_ucn = false;   // F_uc = F_c

  friend bool operator==(const AblationFlags&, const AblationFlags&) = default;
};

/// Parses "none", "no_frm", "no_tftn", "no_cmn" or "no_ucn".
AblationFlags ablation_from_name(const std::string& name);
std::string ablation_name(const AblationFlags& flags);

struct ModelConfig {
  std::size_t fft_points = 32;
  std::size_t heads = 8;
  std::size_t attn_hidden = 128;
  std::size_t emb_item = 64;
  std::size_t emb_category = 32;
  std::size_t emb_brand = 32;
  std::size_t emb_other = 8;
  std::size_t max_sequence = 50;
  std::vector<std::size_t> spectral_hidden{64};    // MLP_A, MLP_phi
  std::vector<std::size_t> modulation_hidden{64};  // MLP_b, MLP_alpha, MLP_u
  std::vector<std::size_t> main_hidden{256, 128};
  std::vector<std::size_t> bias_hidden{64, 32};
  std::vector<std::size_t> output_hidden{128, 64};
  std::vector<std::size_t> fatigue_hidden{64, 32};
  AblationFlags ablation;
  FeatureCardinalities cardinalities;

  /// Throws ConfigError when the config cannot describe a model.
  void validate() const;

  std::size_t sequence_width() const { return emb_item + emb_category + emb_brand; }
  std::size_t user_width() const { return 3 * emb_other; }
  std::size_t item_width() const { return emb_item + emb_category + emb_brand + 2 * emb_other; }
  std::size_t context_width() const { return 2 * emb_other; }
  std::size_t category_width() const { return emb_category + 2 * emb_other; }
  std::size_t interest_width() const { return main_hidden.back() + bias_hidden.back(); }

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

std::map<std::string, std::string> to_key_values(const ModelConfig& config);
ModelConfig model_config_from_key_values(const std::map<std::string, std::string>& values);

/// All trainable tensors by canonical name, each with its Adagrad accumulator.
/// Copying a store deep-copies every tensor.
class ParameterStore {
 public:
  struct Entry {
    Tensor value;
    std::vector<double> accumulator;
  };

  ParameterStore() = default;
  ParameterStore(const ParameterStore& other);
  ParameterStore& operator=(const ParameterStore& other);
  ParameterStore(ParameterStore&&) noexcept = default;
  ParameterStore& operator=(ParameterStore&&) noexcept = default;

  Tensor& add(const std::string& name, Tensor value);
  bool contains(const std::string& name) const { return entries_.contains(name); }
  const Tensor& at(const std::string& name) const;
  Tensor& at(const std::string& name);
  std::vector<double>& accumulator(const std::string& name);

  std::map<std::string, Entry>& entries() { return entries_; }
  const std::map<std::string, Entry>& entries() const { return entries_; }

  std::size_t parameter_count() const;
  void zero_grad();

 private:
  std::map<std::string, Entry> entries_;
};

/// Xavier-uniform weights, zero biases, embeddings uniform in +-0.01.
/// Creates only the tensors the configured ablation uses.
ParameterStore init_params(const ModelConfig& config, std::uint64_t seed);

/// Inputs for one forward pass. Identical behavior sequences (same user and
/// timestamp) are stored once and shared by the samples that reference them.
struct Batch {
  std::size_t size = 0;
  std::vector<std::size_t> user, user_activeness, user_exposure;
  std::vector<std::size_t> item, category, brand, item_ctr, item_exposure, category_ctr, category_exposure;
  std::vector<std::size_t> position, hour;

  std::vector<std::size_t> seq_item, seq_category, seq_brand;
  std::vector<std::size_t> seq_offsets;    // one past the end per group, starts with 0
  std::vector<std::size_t> seq_row_group;  // group of each sequence row
  std::vector<std::size_t> sample_group;   // group of each sample

  Tensor series;     // [size, N] fitted time-domain series
  Tensor amplitude;  // [size, N]
  Tensor phase;      // [size, N]

  std::vector<double> click;
  std::vector<double> fatigue_target;
  std::vector<double> fatigue_weight;  // 1 where a fatigue label exists
};

Batch make_batch(std::span<const TrainingSample* const> samples, const ModelConfig& config);
Batch make_batch(std::span<const TrainingSample> samples, const ModelConfig& config);

/// Every intermediate of one forward pass. Tensors of ablated stages are
/// left undefined.
struct ForwardTrace {
  Tensor e_seq, e_seq_hat, e_user, e_item, e_context, e_category, e_activeness;
  Tensor a_user, a_item, r_ui;
  Tensor amplitude, phase, amplitude_prime, phase_prime, f;
  Tensor b_c, w_c, f_c, alpha_u, f_uc;
  Tensor y_hat, y_f_hat;
};

Tensor mlp_forward(Graph& g, const ParameterStore& params, const std::string& prefix, const Tensor& x,
                   bool relu_after_last);

struct UimOutput {
  Tensor e_seq, e_seq_hat, e_user, e_item, e_context, a_user, a_item, r_ui;
};
UimOutput uim_forward(Graph& g, const ParameterStore& params, const ModelConfig& config, const Batch& batch);

struct TftnOutput {
  Tensor amplitude_prime, phase_prime, f;
};
TftnOutput tftn_forward(Graph& g, const ParameterStore& params, const Tensor& amplitude, const Tensor& phase);

struct CmnOutput {
  Tensor b_c, w_c, f_c;
};
CmnOutput cmn_forward(Graph& g, const ParameterStore& params, const Tensor& f, const Tensor& e_category);

struct UcnOutput {
  Tensor alpha_u, f_uc;
};
UcnOutput ucn_forward(Graph& g, const ParameterStore& params, const Tensor& f_c, const Tensor& e_activeness);

/// Full network on a batch. y_hat is [size,1]; y_f_hat is undefined under no_frm.
ForwardTrace forward(Graph& g, const ParameterStore& params, const ModelConfig& config, const Batch& batch);

struct Prediction {
  double click_probability = 0.5;
  std::optional<double> fatigue;
  ForwardTrace trace;

  /// Throws ContractError when the model has no fatigue branch.
  double fatigue_probability() const;
};

Prediction predict(const TrainingSample& sample, const ParameterStore& params, const ModelConfig& config);

/// Click probabilities for many samples, evaluated in inference batches.
std::vector<double> predict_clicks(std::span<const TrainingSample* const> samples, const ParameterStore& params,
                                   const ModelConfig& config, std::size_t batch_size = 1024);

// ---- checkpoints ------------------------------------------------------------

struct Checkpoint {
  ModelConfig config;
  ParameterStore params;
};

void save_checkpoint(const std::string& path, const ModelConfig& config, const ParameterStore& params);
/// Throws ConfigError if `expected` is given and differs from the stored config.
Checkpoint load_checkpoint(const std::string& path, const ModelConfig* expected = nullptr);

}  // namespace fan
