#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "fan/request_log.hpp"

namespace fan {

struct WorldConfig {
  std::size_t n_users = 2000;
  std::size_t n_items = 10000;
  std::size_t n_categories = 50;
  std::size_t n_brands = 500;
  std::size_t days = 14;
  std::size_t requests_per_user_day = 5;
  std::size_t impressions_per_request = 10;
  std::uint64_t seed = 1;
  Timestamp start_timestamp = 1'600'000'000 - 1'600'000'000 % kSecondsPerDay;

  double fatigue_strength = 2.0;  // lambda
  // Per-category patience decay and fatigue ceiling are spread evenly over
  // these ranges, then shuffled across categories.
  double decay_min = 0.3;
  double decay_max = 0.9;
  double ceiling_min = 0.5;
  double ceiling_max = 3.0;
  // Per-user activeness offset ~ N(mean, std), added to every affinity logit.
  double activeness_mean = 0.0;
  double activeness_std = 0.5;
  // Base affinity logit ~ mu + activeness + sigma * N(0, 1).
  double affinity_mu = -1.5;
  double affinity_sigma = 1.0;
  double exploration = 0.2;

  void validate() const;
};

struct GroundTruth {
  std::size_t n_users = 0;
  std::size_t n_categories = 0;
  double fatigue_strength = 0;
  std::vector<double> affinity;     // [user * n_categories + category], in (0, 1)
  std::vector<double> decay;        // rho_c in (0, 1]
  std::vector<double> ceiling;      // m_c >= 0
  std::vector<double> activeness;   // per user, logit offset
  std::vector<std::uint32_t> item_category;
  std::vector<std::uint32_t> item_brand;

  double affinity_of(std::size_t user, std::size_t category) const { return affinity[user * n_categories + category]; }

  friend bool operator==(const GroundTruth&, const GroundTruth&) = default;
};

GroundTruth generate_world(const WorldConfig& config);

/// sum_j rho^age_j * non_clicks_j, with `non_clicks` ordered oldest first and
/// age 0 for the most recent request.
double fatigue_accumulator(double decay, std::span<const std::uint32_t> non_clicks);

/// sigmoid(logit(affinity) - lambda * min(m_c, accumulator)).
double oracle_ctr(const GroundTruth& world, std::size_t user, std::size_t category, double accumulator);
/// Same, from the user's per-request non-click counts on the item's category.
double oracle_ctr(const GroundTruth& world, std::size_t user, std::uint64_t item,
                  std::span<const std::uint32_t> category_non_clicks);

struct SimulatedImpression {
  std::size_t record = 0;  // index into the log
  std::size_t position = 0;
  double click_probability = 0;
};

struct Simulation {
  std::vector<RequestRecord> log;           // sorted by (timestamp, user)
  std::vector<SimulatedImpression> oracle;  // ground-truth probability of every impression
};

/// Ids in the log are 1-based (user u -> u + 1, item i -> i + 1, ...).
Simulation simulate_logs(const GroundTruth& world, const WorldConfig& config);

void write_ground_truth(std::ostream& out, const GroundTruth& world);
GroundTruth read_ground_truth(std::istream& in);

}  // namespace fan
