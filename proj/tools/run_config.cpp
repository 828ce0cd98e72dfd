#include "run_config.hpp"

#include <charconv>
#include <sstream>

#include "fan/config_file.hpp"
#include "fan/errors.hpp"

namespace fan::cli {

void RunConfig::propagate_seed() {
  world.seed = seed;
  train.seed = seed;
}

namespace {

template <typename T>
T parse_number(const std::string& key, const std::string& text) {
  T value{};
  const auto* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (text.empty() || ec != std::errc() || ptr != end) {
    throw ConfigError("'" + key + "': cannot parse '" + text + "'");
  }
  return value;
}

std::vector<std::size_t> parse_layers(const std::string& key, const std::string& text) {
  std::vector<std::size_t> out;
  std::stringstream in(text);
  std::string part;
  while (std::getline(in, part, ',')) out.push_back(parse_number<std::size_t>(key, part));
  if (out.empty()) throw ConfigError("'" + key + "': expected comma-separated layer widths");
  return out;
}

constexpr unsigned kAll = kSynth | kExtract | kTrain | kEval | kAblate | kSpectrum;
constexpr unsigned kFit = kTrain | kAblate;

template <typename T, typename Field>
Setting number(std::string name, std::string help, unsigned commands, Field field) {
  return {name, std::move(help), commands, [name, field](RunConfig& c, const std::string& v) {
            field(c) = parse_number<T>(name, v);
          }};
}

template <typename Field>
Setting layers(std::string name, std::string help, Field field) {
  return {name, std::move(help), kFit,
          [name, field](RunConfig& c, const std::string& v) { field(c) = parse_layers(name, v); }};
}

template <typename Field>
Setting path(std::string name, std::string help, unsigned commands, Field field) {
  return {std::move(name), std::move(help), commands, [field](RunConfig& c, const std::string& v) { field(c) = v; }};
}

std::vector<Setting> build_settings() {
  std::vector<Setting> s;
  s.push_back(number<std::uint64_t>("seed", "seed for world generation and training", kAll,
                                    [](RunConfig& c) -> auto& { return c.seed; }));
  s.push_back(path("log", "request log path", kSynth | kExtract, [](RunConfig& c) -> auto& { return c.log_path; }));
  s.push_back(path("ground-truth", "ground-truth output path (default <log>.world)", kSynth,
                   [](RunConfig& c) -> auto& { return c.ground_truth_path; }));
  s.push_back(path("dataset", "dataset path", kExtract | kTrain | kEval | kAblate | kSpectrum,
                   [](RunConfig& c) -> auto& { return c.dataset_path; }));
  s.push_back(path("checkpoint", "model checkpoint path", kTrain | kEval | kSpectrum,
                   [](RunConfig& c) -> auto& { return c.checkpoint_path; }));
  s.push_back(path("report", "metrics report output path", kTrain | kEval | kAblate | kSpectrum,
                   [](RunConfig& c) -> auto& { return c.report_path; }));
  s.push_back(number<std::size_t>("repeats", "training runs per ablation variant", kAblate,
                                  [](RunConfig& c) -> auto& { return c.repeats; }));
  s.push_back(number<std::size_t>("spectrum-samples", "samples drawn for spectrum statistics", kSpectrum,
                                  [](RunConfig& c) -> auto& { return c.spectrum_samples; }));

  // World.
  s.push_back(number<std::size_t>("users", "simulated users", kSynth, [](RunConfig& c) -> auto& { return c.world.n_users; }));
  s.push_back(number<std::size_t>("items", "simulated items", kSynth, [](RunConfig& c) -> auto& { return c.world.n_items; }));
  s.push_back(number<std::size_t>("categories", "simulated categories", kSynth,
                                  [](RunConfig& c) -> auto& { return c.world.n_categories; }));
  s.push_back(number<std::size_t>("brands", "simulated brands", kSynth, [](RunConfig& c) -> auto& { return c.world.n_brands; }));
  s.push_back(number<std::size_t>("days", "simulated days", kSynth, [](RunConfig& c) -> auto& { return c.world.days; }));
  s.push_back(number<std::size_t>("requests-per-day", "requests per user and day", kSynth,
                                  [](RunConfig& c) -> auto& { return c.world.requests_per_user_day; }));
  s.push_back(number<std::size_t>("impressions-per-request", "impressions per request", kSynth,
                                  [](RunConfig& c) -> auto& { return c.world.impressions_per_request; }));
  s.push_back(number<std::int64_t>("start-timestamp", "first simulated day (unix seconds)", kSynth,
                                   [](RunConfig& c) -> auto& { return c.world.start_timestamp; }));
  s.push_back(number<double>("fatigue-strength", "fatigue strength lambda", kSynth,
                             [](RunConfig& c) -> auto& { return c.world.fatigue_strength; }));
  s.push_back(number<double>("decay-min", "lowest per-category patience decay", kSynth,
                             [](RunConfig& c) -> auto& { return c.world.decay_min; }));
  s.push_back(number<double>("decay-max", "highest per-category patience decay", kSynth,
                             [](RunConfig& c) -> auto& { return c.world.decay_max; }));
  s.push_back(number<double>("ceiling-min", "lowest per-category fatigue ceiling", kSynth,
                             [](RunConfig& c) -> auto& { return c.world.ceiling_min; }));
  s.push_back(number<double>("ceiling-max", "highest per-category fatigue ceiling", kSynth,
                             [](RunConfig& c) -> auto& { return c.world.ceiling_max; }));
  s.push_back(number<double>("activeness-mean", "mean user activeness offset", kSynth,
                             [](RunConfig& c) -> auto& { return c.world.activeness_mean; }));
  s.push_back(number<double>("activeness-std", "std of user activeness offset", kSynth,
                             [](RunConfig& c) -> auto& { return c.world.activeness_std; }));
  s.push_back(number<double>("affinity-mu", "mean base affinity logit", kSynth,
                             [](RunConfig& c) -> auto& { return c.world.affinity_mu; }));
  s.push_back(number<double>("affinity-sigma", "std of base affinity logit", kSynth,
                             [](RunConfig& c) -> auto& { return c.world.affinity_sigma; }));
  s.push_back(number<double>("exploration", "share of uniformly sampled impressions", kSynth,
                             [](RunConfig& c) -> auto& { return c.world.exploration; }));

  // Dataset.
  s.push_back(number<int>("lookback-days", "history window in days", kExtract,
                          [](RunConfig& c) -> auto& { return c.dataset.lookback_days; }));
  s.push_back(number<int>("label-horizon-days", "fatigue label horizon in days", kExtract,
                          [](RunConfig& c) -> auto& { return c.dataset.label_horizon_days; }));
  s.push_back(number<std::size_t>("exposure-threshold", "exposures that make a fatigue-positive label", kExtract,
                                  [](RunConfig& c) -> auto& { return c.dataset.exposure_threshold; }));
  s.push_back(number<int>("warmup-days", "leading days used only as history", kExtract,
                          [](RunConfig& c) -> auto& { return c.dataset.warmup_days; }));
  s.push_back(number<int>("test-days", "trailing days held out for testing", kExtract,
                          [](RunConfig& c) -> auto& { return c.dataset.test_days; }));
  s.push_back(number<std::size_t>("quantile-buckets", "buckets for numeric features", kExtract,
                                  [](RunConfig& c) -> auto& { return c.dataset.quantile_buckets; }));
  s.push_back({"sequence-length", "maximum behavior sequence length", kExtract | kFit,
               [](RunConfig& c, const std::string& v) {
                 c.dataset.max_sequence = parse_number<std::size_t>("sequence-length", v);
                 c.model.max_sequence = c.dataset.max_sequence;
               }});

  // Model.
  s.push_back(number<std::size_t>("fft-points", "FFT length N", kFit, [](RunConfig& c) -> auto& { return c.model.fft_points; }));
  s.push_back(number<std::size_t>("heads", "self-attention heads", kFit, [](RunConfig& c) -> auto& { return c.model.heads; }));
  s.push_back(number<std::size_t>("attn-hidden", "attention width", kFit,
                                  [](RunConfig& c) -> auto& { return c.model.attn_hidden; }));
  s.push_back(number<std::size_t>("emb-item", "item embedding size", kFit, [](RunConfig& c) -> auto& { return c.model.emb_item; }));
  s.push_back(number<std::size_t>("emb-category", "category embedding size", kFit,
                                  [](RunConfig& c) -> auto& { return c.model.emb_category; }));
  s.push_back(number<std::size_t>("emb-brand", "brand embedding size", kFit,
                                  [](RunConfig& c) -> auto& { return c.model.emb_brand; }));
  s.push_back(number<std::size_t>("emb-other", "embedding size of the remaining fields", kFit,
                                  [](RunConfig& c) -> auto& { return c.model.emb_other; }));
  s.push_back(layers("spectral-hidden", "hidden widths of MLP_A and MLP_phi",
                     [](RunConfig& c) -> auto& { return c.model.spectral_hidden; }));
  s.push_back(layers("modulation-hidden", "hidden widths of MLP_b, MLP_alpha and MLP_u",
                     [](RunConfig& c) -> auto& { return c.model.modulation_hidden; }));
  s.push_back(layers("main-hidden", "MainNet widths", [](RunConfig& c) -> auto& { return c.model.main_hidden; }));
  s.push_back(layers("bias-hidden", "BiasNet widths", [](RunConfig& c) -> auto& { return c.model.bias_hidden; }));
  s.push_back(layers("output-hidden", "hidden widths of the click head", [](RunConfig& c) -> auto& { return c.model.output_hidden; }));
  s.push_back(layers("fatigue-hidden", "hidden widths of the fatigue head",
                     [](RunConfig& c) -> auto& { return c.model.fatigue_hidden; }));
  s.push_back({"ablation", "none, no_frm, no_tftn, no_cmn or no_ucn", kTrain,
               [](RunConfig& c, const std::string& v) { c.model.ablation = ablation_from_name(v); }});

  // Training.
  s.push_back(number<double>("lr", "Adagrad learning rate", kFit, [](RunConfig& c) -> auto& { return c.train.learning_rate; }));
  s.push_back(number<std::size_t>("batch-size", "mini-batch size", kFit, [](RunConfig& c) -> auto& { return c.train.batch_size; }));
  s.push_back(number<std::size_t>("epochs", "training epochs", kFit, [](RunConfig& c) -> auto& { return c.train.epochs; }));
  s.push_back(number<double>("beta-min", "fatigue loss weight at step 0", kFit,
                             [](RunConfig& c) -> auto& { return c.train.beta_start; }));
  s.push_back(number<double>("beta-max", "fatigue loss weight after the ramp", kFit,
                             [](RunConfig& c) -> auto& { return c.train.beta_end; }));
  s.push_back(number<std::size_t>("beta-ramp-steps", "steps of the linear ramp (0: 80% of all steps)", kFit,
                                  [](RunConfig& c) -> auto& { return c.train.beta_ramp_steps; }));
  s.push_back(number<double>("adagrad-epsilon", "Adagrad epsilon", kFit,
                             [](RunConfig& c) -> auto& { return c.train.adagrad_epsilon; }));
  return s;
}

}  // namespace

const std::vector<Setting>& settings() {
  static const std::vector<Setting> all = build_settings();
  return all;
}

void apply_setting(RunConfig& config, const std::string& key, const std::string& value) {
  for (const auto& s : settings()) {
    if (s.name == key) {
      s.apply(config, value);
      return;
    }
  }
  throw ConfigError("unknown setting '" + key + "'");
}

void apply_config_file(RunConfig& config, const std::string& path) {
  for (const auto& e : read_config_file(path)) {
    try {
      apply_setting(config, e.key, e.value);
    } catch (const ConfigError& err) {
      throw ConfigError(path + ":" + std::to_string(e.line) + ": " + err.what());
    }
  }
}

}  // namespace fan::cli
