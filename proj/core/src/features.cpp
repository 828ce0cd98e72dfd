#include "fan/features.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <unordered_map>

#include "fan/errors.hpp"

namespace fan {

namespace {

std::span<const RequestRecord>::iterator first_at_or_after(std::span<const RequestRecord> log, Timestamp t) {
  return std::lower_bound(log.begin(), log.end(), t,
                          [](const RequestRecord& r, Timestamp value) { return r.timestamp < value; });
}

std::span<const RequestRecord>::iterator first_after(std::span<const RequestRecord> log, Timestamp t) {
  return std::upper_bound(log.begin(), log.end(), t,
                          [](Timestamp value, const RequestRecord& r) { return value < r.timestamp; });
}

}  // namespace

FatigueSeries extract_fatigue_series(std::span<const RequestRecord> user_log, std::uint64_t category,
                                     int window_days, Timestamp as_of) {
  if (window_days <= 0) throw ConfigError("fatigue window must be positive");
  FatigueSeries series;
  series.category_id = category;
  if (!user_log.empty()) series.user_id = user_log.front().user_id;

  const auto begin = first_at_or_after(user_log, as_of - static_cast<Timestamp>(window_days) * kSecondsPerDay);
  const auto end = first_at_or_after(user_log, as_of);
  for (auto it = begin; it != end; ++it) {
    std::uint32_t non_clicks = 0;
    bool present = false;
    bool clicked = false;
    for (const auto& imp : it->impressions) {
      if (imp.category_id != category) continue;
      present = true;
      if (imp.clicked) {
        clicked = true;
      } else {
        ++non_clicks;
      }
    }
    if (!present) continue;
    series.values.push_back(clicked ? 0 : non_clicks);
    series.request_ids.push_back(it->request_id);
  }
  return series;
}

FatigueLabel build_fatigue_label(std::span<const RequestRecord> user_log, std::uint64_t category, Timestamp as_of,
                                 int horizon_days, std::size_t exposure_threshold) {
  if (horizon_days <= 0) throw ConfigError("label horizon must be positive");
  if (exposure_threshold == 0) throw ConfigError("exposure threshold must be at least 1");
  const Timestamp until = as_of + static_cast<Timestamp>(horizon_days) * kSecondsPerDay;
  std::size_t exposures = 0;
  for (auto it = first_after(user_log, as_of); it != user_log.end() && it->timestamp <= until; ++it) {
    for (const auto& imp : it->impressions) {
      if (imp.category_id != category) continue;
      if (imp.clicked) return FatigueLabel::kNegative;
      ++exposures;
    }
  }
  return exposures >= exposure_threshold ? FatigueLabel::kPositive : FatigueLabel::kAbsent;
}

std::size_t discretize(double value, std::span<const double> boundaries) {
  for (std::size_t i = 1; i < boundaries.size(); ++i) {
    if (!(boundaries[i - 1] < boundaries[i])) throw ConfigError("discretize: boundaries must be strictly ascending");
  }
  return static_cast<std::size_t>(std::lower_bound(boundaries.begin(), boundaries.end(), value) - boundaries.begin());
}

std::vector<double> quantile_boundaries(std::vector<double> values, std::size_t buckets) {
  std::vector<double> cuts;
  if (values.empty() || buckets < 2) return cuts;
  std::sort(values.begin(), values.end());
  for (std::size_t q = 1; q < buckets; ++q) {
    const auto idx = std::min(values.size() - 1, q * values.size() / buckets);
    const double cut = values[idx];
    if (cuts.empty() || cut > cuts.back()) cuts.push_back(cut);
  }
  return cuts;
}

std::size_t Dataset::count(Split split) const {
  return static_cast<std::size_t>(
      std::count_if(samples.begin(), samples.end(), [split](const TrainingSample& s) { return s.split == split; }));
}

namespace {

Timestamp day_start(Timestamp t) {
  Timestamp d = t / kSecondsPerDay;
  if (t < 0 && t % kSecondsPerDay != 0) --d;
  return d * kSecondsPerDay;
}

class Vocabulary {
 public:
  void add(std::uint64_t id) { ids_.insert(id); }
  void freeze() {
    std::uint32_t next = 1;
    for (auto id : ids_) codes_.emplace(id, next++);
  }
  std::uint32_t code(std::uint64_t id) const {
    auto it = codes_.find(id);
    return it == codes_.end() ? 0 : it->second;
  }
  std::size_t cardinality() const { return codes_.size() + 1; }

 private:
  std::set<std::uint64_t> ids_;
  std::unordered_map<std::uint64_t, std::uint32_t> codes_;
};

struct RawNumeric {
  double user_activeness = 0;
  double user_exposure = 0;
  double item_ctr = 0;
  double item_exposure = 0;
  double category_ctr = 0;
  double category_exposure = 0;
};

struct CounterPair {
  std::uint64_t impressions = 0;
  std::uint64_t clicks = 0;
};

double smoothed_ctr(const CounterPair& c) {
  // prior of one click in twenty impressions keeps cold items away from 0 and 1
  return (static_cast<double>(c.clicks) + 1.0) / (static_cast<double>(c.impressions) + 20.0);
}

std::uint32_t as_code(std::size_t bucket) { return static_cast<std::uint32_t>(bucket); }

}  // namespace

Dataset build_dataset(const std::vector<RequestRecord>& records, const DatasetConfig& config) {
  if (config.lookback_days <= 0 || config.label_horizon_days <= 0) {
    throw ConfigError("lookback and label horizon must be positive");
  }
  if (config.exposure_threshold == 0) throw ConfigError("exposure threshold must be at least 1");
  if (config.max_sequence == 0) throw ConfigError("behavior sequence length must be at least 1");
  Dataset dataset;
  if (records.empty()) return dataset;

  std::map<std::uint64_t, std::vector<RequestRecord>> by_user;
  Timestamp min_ts = records.front().timestamp;
  Timestamp max_ts = records.front().timestamp;
  for (const auto& r : records) {
    by_user[r.user_id].push_back(r);
    min_ts = std::min(min_ts, r.timestamp);
    max_ts = std::max(max_ts, r.timestamp);
  }
  for (auto& [user, log] : by_user) {
    std::stable_sort(log.begin(), log.end(),
                     [](const RequestRecord& a, const RequestRecord& b) { return a.timestamp < b.timestamp; });
  }

  const Timestamp test_start = config.test_days > 0
                                   ? day_start(max_ts) - static_cast<Timestamp>(config.test_days - 1) * kSecondsPerDay
                                   : max_ts + 1;
  const Timestamp warmup_end = day_start(min_ts) + static_cast<Timestamp>(config.warmup_days) * kSecondsPerDay;

  // Id vocabularies come from the training period only; later ids are OOV.
  Vocabulary users, items, categories, brands;
  std::uint32_t max_position = 0;
  for (const auto& r : records) {
    if (r.timestamp >= test_start) continue;
    users.add(r.user_id);
    for (const auto& imp : r.impressions) {
      items.add(imp.item_id);
      categories.add(imp.category_id);
      brands.add(imp.brand_id);
      max_position = std::max(max_position, imp.position);
    }
  }
  users.freeze();
  items.freeze();
  categories.freeze();
  brands.freeze();
  const std::size_t position_cardinality = static_cast<std::size_t>(max_position) + 2;

  // Item and category statistics from everything strictly earlier than each
  // request, processed in global time order.
  struct RequestRef {
    Timestamp timestamp;
    std::uint64_t user;
    std::size_t index;
  };
  std::vector<RequestRef> order;
  for (const auto& [user, log] : by_user) {
    for (std::size_t i = 0; i < log.size(); ++i) order.push_back({log[i].timestamp, user, i});
  }
  std::sort(order.begin(), order.end(), [](const RequestRef& a, const RequestRef& b) {
    return std::tie(a.timestamp, a.user, a.index) < std::tie(b.timestamp, b.user, b.index);
  });
  std::unordered_map<std::uint64_t, CounterPair> item_counts;
  std::unordered_map<std::uint64_t, CounterPair> category_counts;
  std::map<std::pair<std::uint64_t, std::size_t>, std::vector<RawNumeric>> request_stats;
  for (std::size_t start = 0; start < order.size();) {
    std::size_t stop = start;
    while (stop < order.size() && order[stop].timestamp == order[start].timestamp) ++stop;
    for (std::size_t i = start; i < stop; ++i) {
      const auto& rec = by_user[order[i].user][order[i].index];
      auto& stats = request_stats[{order[i].user, order[i].index}];
      stats.resize(rec.impressions.size());
      for (std::size_t p = 0; p < rec.impressions.size(); ++p) {
        const auto& imp = rec.impressions[p];
        const auto ic = item_counts[imp.item_id];
        const auto cc = category_counts[imp.category_id];
        stats[p].item_ctr = smoothed_ctr(ic);
        stats[p].item_exposure = std::log1p(static_cast<double>(ic.impressions));
        stats[p].category_ctr = smoothed_ctr(cc);
        stats[p].category_exposure = std::log1p(static_cast<double>(cc.impressions));
      }
    }
    for (std::size_t i = start; i < stop; ++i) {
      const auto& rec = by_user[order[i].user][order[i].index];
      for (const auto& imp : rec.impressions) {
        auto& ic = item_counts[imp.item_id];
        auto& cc = category_counts[imp.category_id];
        ++ic.impressions;
        ++cc.impressions;
        if (imp.clicked) {
          ++ic.clicks;
          ++cc.clicks;
        }
      }
    }
    start = stop;
  }

  std::vector<RawNumeric> raw;
  const Timestamp lookback = static_cast<Timestamp>(config.lookback_days) * kSecondsPerDay;
  for (const auto& [user, log] : by_user) {
    const std::span<const RequestRecord> span(log);
    std::vector<SequenceItem> clicked_history;
    std::shared_ptr<const BehaviorSequence> current = std::make_shared<BehaviorSequence>();
    std::size_t history_cursor = 0;  // requests [0, cursor) are folded into clicked_history
    std::size_t window_begin = 0;
    std::uint64_t window_clicks = 0;
    std::uint64_t window_impressions = 0;
    std::size_t window_end = 0;

    for (std::size_t i = 0; i < log.size(); ++i) {
      const auto& rec = log[i];
      bool grew = false;
      while (history_cursor < log.size() && log[history_cursor].timestamp < rec.timestamp) {
        for (const auto& imp : log[history_cursor].impressions) {
          if (imp.clicked) {
            clicked_history.push_back({items.code(imp.item_id), categories.code(imp.category_id),
                                       brands.code(imp.brand_id)});
            grew = true;
          }
        }
        ++history_cursor;
      }
      if (grew) {
        const auto keep = std::min(config.max_sequence, clicked_history.size());
        current = std::make_shared<BehaviorSequence>(clicked_history.end() - static_cast<std::ptrdiff_t>(keep),
                                                     clicked_history.end());
      }

      // activity counters over [ts - lookback, ts)
      while (window_end < log.size() && log[window_end].timestamp < rec.timestamp) {
        for (const auto& imp : log[window_end].impressions) {
          ++window_impressions;
          if (imp.clicked) ++window_clicks;
        }
        ++window_end;
      }
      while (window_begin < window_end && log[window_begin].timestamp < rec.timestamp - lookback) {
        for (const auto& imp : log[window_begin].impressions) {
          --window_impressions;
          if (imp.clicked) --window_clicks;
        }
        ++window_begin;
      }

      if (rec.timestamp < warmup_end) continue;

      std::map<std::uint64_t, std::pair<std::vector<std::uint32_t>, FatigueLabel>> per_category;
      for (const auto& imp : rec.impressions) {
        if (per_category.contains(imp.category_id)) continue;
        auto series = extract_fatigue_series(span, imp.category_id, config.lookback_days, rec.timestamp);
        auto label = build_fatigue_label(span, imp.category_id, rec.timestamp, config.label_horizon_days,
                                         config.exposure_threshold);
        per_category.emplace(imp.category_id, std::make_pair(std::move(series.values), label));
      }

      const auto& stats = request_stats[{user, i}];
      for (std::size_t p = 0; p < rec.impressions.size(); ++p) {
        const auto& imp = rec.impressions[p];
        TrainingSample s;
        s.split = rec.timestamp >= test_start ? Split::kTest : Split::kTrain;
        s.request_id = rec.request_id;
        s.user_id = user;
        s.timestamp = rec.timestamp;
        s.user.user = users.code(user);
        s.item.item = items.code(imp.item_id);
        s.item.category = categories.code(imp.category_id);
        s.item.brand = brands.code(imp.brand_id);
        s.context.position = imp.position + 1 < position_cardinality ? imp.position + 1 : 0;
        const auto seconds_of_day = rec.timestamp - day_start(rec.timestamp);
        s.context.hour = static_cast<std::uint32_t>(seconds_of_day / 3600) + 1;
        s.behavior = current;
        const auto& [series, label] = per_category.at(imp.category_id);
        s.fatigue_series = series;
        s.fatigue_label = label;
        s.click = imp.clicked ? 1 : 0;
        dataset.samples.push_back(std::move(s));

        RawNumeric r = stats[p];
        r.user_activeness = static_cast<double>(window_clicks);
        r.user_exposure = static_cast<double>(window_impressions);
        raw.push_back(r);
      }
    }
  }

  // Decile boundaries fitted on the training split only.
  auto fit = [&](double RawNumeric::*field) {
    std::vector<double> values;
    for (std::size_t i = 0; i < raw.size(); ++i) {
      if (dataset.samples[i].split == Split::kTrain) values.push_back(raw[i].*field);
    }
    return quantile_boundaries(std::move(values), config.quantile_buckets);
  };
  auto& b = dataset.boundaries;
  b.user_activeness = fit(&RawNumeric::user_activeness);
  b.user_exposure = fit(&RawNumeric::user_exposure);
  b.item_ctr = fit(&RawNumeric::item_ctr);
  b.item_exposure = fit(&RawNumeric::item_exposure);
  b.category_ctr = fit(&RawNumeric::category_ctr);
  b.category_exposure = fit(&RawNumeric::category_exposure);

  for (std::size_t i = 0; i < raw.size(); ++i) {
    auto& s = dataset.samples[i];
    s.user.activeness = as_code(discretize(raw[i].user_activeness, b.user_activeness));
    s.user.exposure = as_code(discretize(raw[i].user_exposure, b.user_exposure));
    s.item.item_ctr = as_code(discretize(raw[i].item_ctr, b.item_ctr));
    s.item.item_exposure = as_code(discretize(raw[i].item_exposure, b.item_exposure));
    s.item.category_ctr = as_code(discretize(raw[i].category_ctr, b.category_ctr));
    s.item.category_exposure = as_code(discretize(raw[i].category_exposure, b.category_exposure));
  }

  auto& c = dataset.cardinalities;
  c.users = users.cardinality();
  c.items = items.cardinality();
  c.categories = categories.cardinality();
  c.brands = brands.cardinality();
  c.positions = position_cardinality;
  c.hours = 25;
  c.user_activeness = b.user_activeness.size() + 1;
  c.user_exposure = b.user_exposure.size() + 1;
  c.item_ctr = b.item_ctr.size() + 1;
  c.item_exposure = b.item_exposure.size() + 1;
  c.category_ctr = b.category_ctr.size() + 1;
  c.category_exposure = b.category_exposure.size() + 1;
  return dataset;
}

}  // namespace fan
