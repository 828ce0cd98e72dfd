#pragma once

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "fan/request_log.hpp"

namespace fan {

/// Per-request non-click counts of one category for one user, oldest first.
struct FatigueSeries {
  std::uint64_t user_id = 0;
  std::uint64_t category_id = 0;
  std::vector<std::uint32_t> values;
  std::vector<std::uint64_t> request_ids;
};

/// Builds the fatigue series from `user_log` (one user's requests sorted by
/// time) over requests in [as_of - window_days, as_of).
///
/// Each request holding at least one impression of `category` contributes one
/// entry: the number of its non-clicked impressions of that category, or 0 if
/// any of them was clicked. Requests without the category are skipped.
FatigueSeries extract_fatigue_series(std::span<const RequestRecord> user_log, std::uint64_t category,
                                     int window_days, Timestamp as_of);

enum class FatigueLabel : std::uint8_t { kNegative = 0, kPositive = 1, kAbsent = 2 };

/// Looks at (as_of, as_of + horizon_days]: any click on the category makes the
/// label negative; otherwise at least `exposure_threshold` impressions of the
/// category make it positive; anything else is absent.
FatigueLabel build_fatigue_label(std::span<const RequestRecord> user_log, std::uint64_t category, Timestamp as_of,
                                 int horizon_days, std::size_t exposure_threshold);

/// Index of the first boundary >= value, or boundaries.size() when value is
/// above all of them. Boundaries must be strictly ascending.
std::size_t discretize(double value, std::span<const double> boundaries);

/// Strictly ascending quantile cut points (deduplicated) of `values`;
/// `buckets` = 10 gives deciles.
std::vector<double> quantile_boundaries(std::vector<double> values, std::size_t buckets);

// ---- dataset ----------------------------------------------------------------

struct SequenceItem {
  std::uint32_t item = 0;
  std::uint32_t category = 0;
  std::uint32_t brand = 0;

  friend bool operator==(const SequenceItem&, const SequenceItem&) = default;
};

using BehaviorSequence = std::vector<SequenceItem>;

enum class Split : std::uint8_t { kTrain = 0, kTest = 1 };

struct UserFeatures {
  std::uint32_t user = 0;
  std::uint32_t activeness = 0;  // bucketed click count in the lookback window
  std::uint32_t exposure = 0;    // bucketed impression count in the lookback window
};

struct ItemFeatures {
  std::uint32_t item = 0;
  std::uint32_t category = 0;
  std::uint32_t brand = 0;
  std::uint32_t item_ctr = 0;
  std::uint32_t item_exposure = 0;
  std::uint32_t category_ctr = 0;
  std::uint32_t category_exposure = 0;
};

struct ContextFeatures {
  std::uint32_t position = 0;
  std::uint32_t hour = 0;
};

/// One impression with its encoded features. All codes are integers; 0 is
/// the reserved out-of-vocabulary code for id features.
struct TrainingSample {
  Split split = Split::kTrain;
  std::uint64_t request_id = 0;
  std::uint64_t user_id = 0;
  Timestamp timestamp = 0;
  UserFeatures user;
  ItemFeatures item;
  ContextFeatures context;
  std::shared_ptr<const BehaviorSequence> behavior;  // clicked items before timestamp, most recent last
  std::vector<std::uint32_t> fatigue_series;
  std::uint8_t click = 0;
  FatigueLabel fatigue_label = FatigueLabel::kAbsent;
};

/// Embedding table sizes implied by a dataset (codes are < size).
struct FeatureCardinalities {
  std::size_t users = 1;
  std::size_t items = 1;
  std::size_t categories = 1;
  std::size_t brands = 1;
  std::size_t positions = 1;
  std::size_t hours = 25;
  std::size_t user_activeness = 1;
  std::size_t user_exposure = 1;
  std::size_t item_ctr = 1;
  std::size_t item_exposure = 1;
  std::size_t category_ctr = 1;
  std::size_t category_exposure = 1;

  friend bool operator==(const FeatureCardinalities&, const FeatureCardinalities&) = default;
};

struct NumericBoundaries {
  std::vector<double> user_activeness;
  std::vector<double> user_exposure;
  std::vector<double> item_ctr;
  std::vector<double> item_exposure;
  std::vector<double> category_ctr;
  std::vector<double> category_exposure;
};

struct Dataset {
  FeatureCardinalities cardinalities;
  NumericBoundaries boundaries;
  std::vector<TrainingSample> samples;

  std::size_t count(Split split) const;
};

struct DatasetConfig {
  int lookback_days = 14;
  int label_horizon_days = 3;
  std::size_t exposure_threshold = 5;
  std::size_t max_sequence = 50;
  int warmup_days = 0;  // leading days whose impressions only serve as history
  int test_days = 1;    // trailing days placed in the test split
  std::size_t quantile_buckets = 10;
};

/// One sample per impression after the warm-up span, ordered by
/// (user_id, timestamp, position). Records may arrive in any order but each
/// user's requests must be time-sorted.
Dataset build_dataset(const std::vector<RequestRecord>& records, const DatasetConfig& config);

void write_dataset(std::ostream& out, const Dataset& dataset);
void write_dataset_file(const std::string& path, const Dataset& dataset);
Dataset read_dataset(std::istream& in);
Dataset read_dataset_file(const std::string& path);

}  // namespace fan
