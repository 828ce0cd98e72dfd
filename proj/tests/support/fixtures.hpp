#pragma once

#include <random>
#include <stdexcept>

#include "fan/features.hpp"
#include "fan/model.hpp"
#include "fan/synth.hpp"

namespace fan::testing {

inline WorldConfig tiny_world_config(std::uint64_t seed = 3) {
  WorldConfig w;
  w.n_users = 6;
  w.n_items = 30;
  w.n_categories = 3;
  w.n_brands = 4;
  w.days = 4;
  w.requests_per_user_day = 4;
  w.impressions_per_request = 5;
  w.affinity_mu = 0.0;
  w.seed = seed;
  return w;
}

inline Dataset tiny_dataset(std::uint64_t seed = 3) {
  const auto wc = tiny_world_config(seed);
  const auto sim = simulate_logs(generate_world(wc), wc);
  DatasetConfig dc;
  dc.quantile_buckets = 4;
  dc.exposure_threshold = 2;
  return build_dataset(sim.log, dc);
}

/// Small widths so every parameter element can be finite-differenced.
inline ModelConfig tiny_model_config(const FeatureCardinalities& cardinalities) {
  ModelConfig c;
  c.fft_points = 8;
  c.heads = 2;
  c.attn_hidden = 4;
  c.emb_item = 3;
  c.emb_category = 2;
  c.emb_brand = 2;
  c.emb_other = 2;
  c.max_sequence = 6;
  c.spectral_hidden = {4};
  c.modulation_hidden = {4};
  c.main_hidden = {5, 4};
  c.bias_hidden = {3, 2};
  c.output_hidden = {4, 3};
  c.fatigue_hidden = {3, 2};
  c.cardinalities = cardinalities;
  return c;
}

/// A sample that exercises every branch: behavior of at least two items, a
/// fatigue series with non-zero entries and a fatigue label.
inline const TrainingSample& rich_sample(const Dataset& dataset) {
  for (const auto& s : dataset.samples) {
    if (!s.behavior || s.behavior->size() < 2 || s.fatigue_label == FatigueLabel::kAbsent) continue;
    std::size_t nonzero = 0;
    for (auto v : s.fatigue_series) nonzero += v != 0;
    if (nonzero >= 2) return s;
  }
  throw std::runtime_error("fixture dataset has no rich sample");
}

/// A non-degenerate sample for gradient checks: distinct behavior items, a
/// varied fatigue series and both labels present.
inline TrainingSample gradient_sample(const Dataset& dataset) {
  TrainingSample s = rich_sample(dataset);
  s.behavior = std::make_shared<BehaviorSequence>(BehaviorSequence{{1, 1, 1}, {4, 2, 3}, {2, 3, 2}, {5, 1, 4}});
  s.fatigue_series = {3, 0, 5, 2, 1};
  s.fatigue_label = FatigueLabel::kPositive;
  s.click = 1;
  return s;
}

/// Moves parameters to a well-conditioned point for finite differences.
///
/// At init scale (embeddings within 0.01) self-attention is nearly uniform,
/// so every downstream attention gradient is around 1e-8. There, central
/// differences with h = 1e-5 carry about 1e-11 of round-off, which is
/// already the whole relative budget. Sharper attention projections
/// (uniform in +-2), O(1) embeddings and non-zero biases lift those
/// gradients clear of the noise floor. MLP weights keep their init values.
inline void gradient_check_point(ParameterStore& params, std::uint64_t seed = 32) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (auto& [name, entry] : params.entries()) {
    double scale = 0.0;
    if (name.starts_with("emb.")) {
      scale = 0.5;
    } else if (name.ends_with(".bias")) {
      scale = 0.5;
    } else if (name.find("attn") != std::string::npos) {
      scale = 2.0;
    }
    if (scale > 0.0) {
      for (auto& v : entry.value.values()) v = scale * u(rng);
    }
  }
}

}  // namespace fan::testing
