#include "fan/synth.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <istream>
#include <map>
#include <numeric>
#include <ostream>
#include <random>
#include <sstream>

#include "fan/errors.hpp"

namespace fan {

void WorldConfig::validate() const {
  if (n_users == 0 || n_items == 0 || n_categories == 0 || n_brands == 0 || days == 0 ||
      requests_per_user_day == 0 || impressions_per_request == 0) {
    throw ConfigError("world counts must all be at least 1");
  }
  if (n_items < n_categories) throw ConfigError("need at least one item per category");
  if (requests_per_user_day > static_cast<std::size_t>(kSecondsPerDay)) {
    throw ConfigError("too many requests per user and day");
  }
  if (!(fatigue_strength >= 0.0)) throw ConfigError("fatigue_strength must be >= 0");
  if (!(decay_min > 0.0 && decay_min <= decay_max && decay_max <= 1.0)) {
    throw ConfigError("need 0 < decay_min <= decay_max <= 1");
  }
  if (!(ceiling_min >= 0.0 && ceiling_min <= ceiling_max)) throw ConfigError("need 0 <= ceiling_min <= ceiling_max");
  if (!(activeness_std >= 0.0 && affinity_sigma >= 0.0)) throw ConfigError("standard deviations must be >= 0");
  if (!(exploration >= 0.0 && exploration <= 1.0)) throw ConfigError("exploration must lie in [0, 1]");
}

namespace {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }
double logit(double p) { return std::log(p / (1.0 - p)); }

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Evenly spaced values over [lo, hi] in shuffled order, so categories always
// differ when there is more than one.
std::vector<double> spread(std::size_t n, double lo, double hi, std::mt19937_64& rng) {
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = lo + (hi - lo) * (static_cast<double>(i) + 0.5) / static_cast<double>(n);
  std::shuffle(out.begin(), out.end(), rng);
  return out;
}

}  // namespace

GroundTruth generate_world(const WorldConfig& config) {
  config.validate();
  std::mt19937_64 rng(splitmix64(config.seed));
  GroundTruth w;
  w.n_users = config.n_users;
  w.n_categories = config.n_categories;
  w.fatigue_strength = config.fatigue_strength;
  w.decay = spread(config.n_categories, config.decay_min, config.decay_max, rng);
  w.ceiling = spread(config.n_categories, config.ceiling_min, config.ceiling_max, rng);

  std::normal_distribution<double> normal(0.0, 1.0);
  w.activeness.resize(config.n_users);
  for (auto& a : w.activeness) a = config.activeness_mean + config.activeness_std * normal(rng);
  w.affinity.resize(config.n_users * config.n_categories);
  for (std::size_t u = 0; u < config.n_users; ++u) {
    for (std::size_t c = 0; c < config.n_categories; ++c) {
      const double z = config.affinity_mu + w.activeness[u] + config.affinity_sigma * normal(rng);
      // Keep strictly inside (0, 1) even for extreme draws.
      w.affinity[u * config.n_categories + c] = std::clamp(sigmoid(z), 1e-12, 1.0 - 1e-12);
    }
  }

  std::uniform_int_distribution<std::uint32_t> category(0, static_cast<std::uint32_t>(config.n_categories - 1));
  std::uniform_int_distribution<std::uint32_t> brand(0, static_cast<std::uint32_t>(config.n_brands - 1));
  w.item_category.resize(config.n_items);
  w.item_brand.resize(config.n_items);
  for (std::size_t i = 0; i < config.n_items; ++i) {
    w.item_category[i] = i < config.n_categories ? static_cast<std::uint32_t>(i) : category(rng);
    w.item_brand[i] = brand(rng);
  }
  return w;
}

double fatigue_accumulator(double decay, std::span<const std::uint32_t> non_clicks) {
  double acc = 0.0;
  for (auto n : non_clicks) acc = decay * acc + static_cast<double>(n);
  return acc;
}

double oracle_ctr(const GroundTruth& world, std::size_t user, std::size_t category, double accumulator) {
  if (user >= world.n_users || category >= world.n_categories) throw IndexError("oracle_ctr: user or category out of range");
  const double penalty = world.fatigue_strength * std::min(world.ceiling[category], accumulator);
  return sigmoid(logit(world.affinity_of(user, category)) - penalty);
}

double oracle_ctr(const GroundTruth& world, std::size_t user, std::uint64_t item,
                  std::span<const std::uint32_t> category_non_clicks) {
  if (item >= world.item_category.size()) throw IndexError("oracle_ctr: item out of range");
  const auto c = world.item_category[item];
  return oracle_ctr(world, user, c, fatigue_accumulator(world.decay[c], category_non_clicks));
}

Simulation simulate_logs(const GroundTruth& world, const WorldConfig& config) {
  config.validate();
  if (world.n_users != config.n_users || world.n_categories != config.n_categories ||
      world.item_category.size() != config.n_items) {
    throw ConfigError("world does not match the simulation config");
  }
  const std::size_t n_cat = config.n_categories;
  std::vector<std::vector<std::uint32_t>> items_by_category(n_cat);
  for (std::size_t i = 0; i < config.n_items; ++i) items_by_category[world.item_category[i]].push_back(static_cast<std::uint32_t>(i));

  const std::size_t per_user = config.days * config.requests_per_user_day;
  const Timestamp slot = kSecondsPerDay / static_cast<Timestamp>(config.requests_per_user_day);

  struct Pending {
    RequestRecord record;
    std::vector<double> probabilities;
  };
  std::vector<Pending> all;
  all.reserve(config.n_users * per_user);

  std::vector<double> cumulative(n_cat);
  std::vector<double> acc(n_cat);
  std::vector<std::uint32_t> non_clicks(n_cat);
  for (std::size_t u = 0; u < config.n_users; ++u) {
    // Independent stream per user.
    std::mt19937_64 rng(splitmix64(config.seed ^ splitmix64(u + 1)));
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::uniform_int_distribution<std::size_t> any_item(0, config.n_items - 1);
    std::uniform_int_distribution<Timestamp> jitter(0, slot - 1);

    double total = 0.0;
    for (std::size_t c = 0; c < n_cat; ++c) cumulative[c] = (total += world.affinity_of(u, c));
    std::fill(acc.begin(), acc.end(), 0.0);

    for (std::size_t r = 0; r < per_user; ++r) {
      const auto day = r / config.requests_per_user_day;
      const auto within = r % config.requests_per_user_day;
      Pending p;
      p.record.request_id = u * per_user + r + 1;
      p.record.user_id = u + 1;
      p.record.timestamp = config.start_timestamp + static_cast<Timestamp>(day) * kSecondsPerDay +
                           static_cast<Timestamp>(within) * slot + jitter(rng);
      std::fill(non_clicks.begin(), non_clicks.end(), 0u);
      for (std::size_t pos = 0; pos < config.impressions_per_request; ++pos) {
        std::uint32_t item;
        if (unit(rng) < config.exploration) {
          item = static_cast<std::uint32_t>(any_item(rng));
        } else {
          const double x = unit(rng) * total;
          auto c = static_cast<std::size_t>(std::upper_bound(cumulative.begin(), cumulative.end(), x) - cumulative.begin());
          c = std::min(c, n_cat - 1);
          const auto& pool = items_by_category[c];
          item = pool[std::uniform_int_distribution<std::size_t>(0, pool.size() - 1)(rng)];
        }
        const auto c = world.item_category[item];
        const double prob = oracle_ctr(world, u, c, acc[c]);
        const bool clicked = unit(rng) < prob;
        if (!clicked) ++non_clicks[c];
        p.record.impressions.push_back(
            {item + 1u, c + 1u, world.item_brand[item] + 1u, clicked, static_cast<std::uint32_t>(pos)});
        p.probabilities.push_back(prob);
      }
      for (std::size_t c = 0; c < n_cat; ++c) acc[c] = world.decay[c] * acc[c] + non_clicks[c];
      all.push_back(std::move(p));
    }
  }

  std::stable_sort(all.begin(), all.end(), [](const Pending& a, const Pending& b) {
    return a.record.timestamp != b.record.timestamp ? a.record.timestamp < b.record.timestamp
                                                    : a.record.user_id < b.record.user_id;
  });
  Simulation sim;
  sim.log.reserve(all.size());
  for (auto& p : all) {
    for (std::size_t pos = 0; pos < p.probabilities.size(); ++pos) {
      sim.oracle.push_back({sim.log.size(), pos, p.probabilities[pos]});
    }
    sim.log.push_back(std::move(p.record));
  }
  return sim;
}

namespace {

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

template <typename T>
void put_row(std::ostream& out, const char* key, const std::vector<T>& values) {
  out << key << '\t';
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) out << ',';
    if constexpr (std::is_floating_point_v<T>) {
      out << fmt(values[i]);
    } else {
      out << values[i];
    }
  }
  out << '\n';
}

template <typename T>
std::vector<T> parse_row(const std::string& key, const std::string& text) {
  std::vector<T> out;
  if (text.empty()) return out;
  std::size_t start = 0;
  while (start <= text.size()) {
    const auto end = std::min(text.find(',', start), text.size());
    T v{};
    const auto* first = text.data() + start;
    const auto* last = text.data() + end;
    auto [ptr, ec] = std::from_chars(first, last, v);
    if (ec != std::errc() || ptr != last) throw ParseError("ground truth '" + key + "': bad number");
    out.push_back(v);
    start = end + 1;
  }
  return out;
}

}  // namespace

void write_ground_truth(std::ostream& out, const GroundTruth& w) {
  out << "#fan-world\tv1\n";
  out << "users\t" << w.n_users << "\ncategories\t" << w.n_categories << "\nfatigue_strength\t"
      << fmt(w.fatigue_strength) << '\n';
  put_row(out, "decay", w.decay);
  put_row(out, "ceiling", w.ceiling);
  put_row(out, "activeness", w.activeness);
  put_row(out, "affinity", w.affinity);
  put_row(out, "item_category", w.item_category);
  put_row(out, "item_brand", w.item_brand);
}

GroundTruth read_ground_truth(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != "#fan-world\tv1") throw ParseError("not a ground-truth file");
  std::map<std::string, std::string> rows;
  while (std::getline(in, line)) {
    const auto tab = line.find('\t');
    if (tab == std::string::npos) throw ParseError("ground truth: malformed line");
    rows[line.substr(0, tab)] = line.substr(tab + 1);
  }
  auto need = [&](const char* key) -> const std::string& {
    const auto it = rows.find(key);
    if (it == rows.end()) throw ParseError(std::string("ground truth missing '") + key + "'");
    return it->second;
  };
  GroundTruth w;
  w.n_users = parse_row<std::size_t>("users", need("users")).at(0);
  w.n_categories = parse_row<std::size_t>("categories", need("categories")).at(0);
  w.fatigue_strength = parse_row<double>("fatigue_strength", need("fatigue_strength")).at(0);
  w.decay = parse_row<double>("decay", need("decay"));
  w.ceiling = parse_row<double>("ceiling", need("ceiling"));
  w.activeness = parse_row<double>("activeness", need("activeness"));
  w.affinity = parse_row<double>("affinity", need("affinity"));
  w.item_category = parse_row<std::uint32_t>("item_category", need("item_category"));
  w.item_brand = parse_row<std::uint32_t>("item_brand", need("item_brand"));
  if (w.decay.size() != w.n_categories || w.ceiling.size() != w.n_categories ||
      w.activeness.size() != w.n_users || w.affinity.size() != w.n_users * w.n_categories ||
      w.item_brand.size() != w.item_category.size()) {
    throw ParseError("ground truth: inconsistent sizes");
  }
  for (auto c : w.item_category) {
    if (c >= w.n_categories) throw ParseError("ground truth: item category out of range");
  }
  return w;
}

}  // namespace fan
