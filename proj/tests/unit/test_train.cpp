#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

#include "fan/errors.hpp"
#include "fan/train.hpp"
#include "fixtures.hpp"

namespace fan {
namespace {

using testing::tiny_dataset;
using testing::tiny_model_config;

// ---- logloss and beta ---------------------------------------------------------

TEST(Logloss, Examples) {
  EXPECT_DOUBLE_EQ(logloss(1.0, 0.5), std::numbers::ln2);
  EXPECT_DOUBLE_EQ(logloss(0.0, 0.5), std::numbers::ln2);
  EXPECT_NEAR(logloss(0.0, 0.0), -std::log1p(-kProbabilityClamp), 1e-15);
  EXPECT_LT(logloss(0.0, 0.0), 1e-6);
  EXPECT_NEAR(logloss(1.0, 0.0), -std::log(kProbabilityClamp), 1e-12);  // clamped, not infinite
  EXPECT_NEAR(logloss(1.0, 0.8), -std::log(0.8), 1e-15);
}

TEST(Logloss, BatchMeanIsSumOverCount) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> p(0.0, 1.0);
  std::bernoulli_distribution y(0.3);
  std::vector<double> labels(257), probs(257);
  long double sum = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    labels[i] = y(rng);
    probs[i] = p(rng);
    const long double q = std::clamp<long double>(probs[i], kProbabilityClamp, 1 - kProbabilityClamp);
    sum -= labels[i] > 0 ? std::log(q) : std::log(1 - q);
  }
  EXPECT_NEAR(mean_logloss(labels, probs), static_cast<double>(sum / labels.size()), 1e-13);
  EXPECT_THROW(mean_logloss(labels, std::span<const double>(probs).first(3)), DimensionError);
}

TEST(Beta, ScheduleEndpointsAndMidpoint) {
  TrainConfig c;
  c.beta_ramp_steps = 100;
  EXPECT_DOUBLE_EQ(beta_at_step(0, c), 0.01);
  EXPECT_DOUBLE_EQ(beta_at_step(50, c), 0.255);
  EXPECT_DOUBLE_EQ(beta_at_step(100, c), 0.5);
  EXPECT_DOUBLE_EQ(beta_at_step(100000, c), 0.5);
  for (std::size_t s = 1; s <= 100; ++s) EXPECT_GE(beta_at_step(s, c), beta_at_step(s - 1, c));
  c.beta_ramp_steps = 0;
  EXPECT_THROW(beta_at_step(0, c), ConfigError);
}

TEST(TrainConfig, Validation) {
  TrainConfig c;
  EXPECT_NO_THROW(c.validate());
  EXPECT_DOUBLE_EQ(c.learning_rate, 0.01);
  EXPECT_EQ(c.batch_size, 1024u);
  c.learning_rate = 0.0;  // allowed: the null-update check needs it
  EXPECT_NO_THROW(c.validate());
  c.learning_rate = -1.0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = TrainConfig{};
  c.beta_start = 0.6;
  EXPECT_THROW(c.validate(), ConfigError);
  c = TrainConfig{};
  c.batch_size = 0;
  EXPECT_THROW(c.validate(), ConfigError);
}

// ---- combined loss ------------------------------------------------------------

struct Fixture {
  Dataset dataset = tiny_dataset();
  ModelConfig config = tiny_model_config(dataset.cardinalities);
  ParameterStore params = init_params(config, 5);
};

TEST(CombinedLoss, ZeroBetaIsMainLossExactly) {
  Fixture f;
  const auto batch = make_batch(select_split(f.dataset, Split::kTrain), f.config);
  auto g = Graph::inference();
  const auto terms = combined_loss(g, f.params, f.config, batch, 0.0);
  EXPECT_EQ(terms.total.item(), terms.main.item());
  EXPECT_GT(terms.fatigue.item(), 0.0);
}

TEST(CombinedLoss, NoFatigueLabelsMeansMainLoss) {
  Fixture f;
  auto samples = f.dataset.samples;
  for (auto& s : samples) s.fatigue_label = FatigueLabel::kAbsent;
  const auto batch = make_batch(std::span<const TrainingSample>(samples), f.config);
  auto g = Graph::inference();
  const auto terms = combined_loss(g, f.params, f.config, batch, 0.4);
  EXPECT_EQ(terms.fatigue.item(), 0.0);
  EXPECT_EQ(terms.total.item(), terms.main.item());
}

TEST(CombinedLoss, MatchesIndependentMeans) {
  Fixture f;
  const auto batch = make_batch(std::span<const TrainingSample>(f.dataset.samples), f.config);
  auto g = Graph::inference();
  const auto trace = forward(g, f.params, f.config, batch);
  long double main = 0, fat = 0;
  std::size_t labeled = 0;
  for (std::size_t i = 0; i < batch.size; ++i) {
    main += logloss(batch.click[i], trace.y_hat.values()[i]);
    const auto& s = f.dataset.samples[i];
    if (s.fatigue_label == FatigueLabel::kAbsent) continue;
    ++labeled;
    fat += logloss(s.fatigue_label == FatigueLabel::kPositive ? 1.0 : 0.0, trace.y_f_hat.values()[i]);
  }
  ASSERT_GT(labeled, 0u);
  ASSERT_LT(labeled, batch.size);
  const double beta = 0.3;
  const auto terms = combined_loss(g, trace, batch, beta);
  EXPECT_NEAR(terms.main.item(), static_cast<double>(main / batch.size), 1e-13);
  EXPECT_NEAR(terms.fatigue.item(), static_cast<double>(fat / labeled), 1e-13);
  EXPECT_NEAR(terms.total.item(), static_cast<double>(main / batch.size + beta * fat / labeled), 1e-13);
}

TEST(CombinedLoss, MonotoneInBeta) {
  Fixture f;
  const auto batch = make_batch(std::span<const TrainingSample>(f.dataset.samples), f.config);
  auto g = Graph::inference();
  const auto trace = forward(g, f.params, f.config, batch);
  double previous = -1;
  for (double beta : {0.0, 0.01, 0.1, 0.255, 0.5, 1.0}) {
    const double total = combined_loss(g, trace, batch, beta).total.item();
    EXPECT_GE(total, previous);
    previous = total;
  }
}

TEST(CombinedLoss, NoFrmHasNoFatigueTerm) {
  Fixture f;
  f.config.ablation = ablation_from_name("no_frm");
  f.params = init_params(f.config, 5);
  const auto batch = make_batch(std::span<const TrainingSample>(f.dataset.samples), f.config);
  auto g = Graph::inference();
  const auto terms = combined_loss(g, f.params, f.config, batch, 0.5);
  EXPECT_EQ(terms.total.item(), terms.main.item());
}

// ---- Adagrad ------------------------------------------------------------------

TEST(Adagrad, SingleWeightExamples) {
  ParameterStore p;
  p.add("w", Tensor::scalar(0.0));
  p.at("w").grad()[0] = 1.0;
  adagrad_step(p, 0.01, 1e-8);
  EXPECT_NEAR(p.at("w").item(), -0.01, 1e-9);
  EXPECT_EQ(p.at("w").grad()[0], 0.0);  // zeroed by the step
  p.at("w").grad()[0] = 1.0;
  adagrad_step(p, 0.01, 1e-8);
  EXPECT_NEAR(p.at("w").item() + 0.01, -0.01 / std::sqrt(2.0), 1e-9);
  EXPECT_DOUBLE_EQ(p.accumulator("w")[0], 2.0);
}

TEST(Adagrad, MatchesScalarRecurrence) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> gauss(0.0, 2.0);
  std::bernoulli_distribution skip(0.1);
  ParameterStore p;
  p.add("a", Tensor({2, 3}, {0.1, -0.2, 0.3, 0.0, 1.0, -1.0}));
  p.add("b", Tensor::scalar(0.5));
  std::vector<long double> w{0.1, -0.2, 0.3, 0.0, 1.0, -1.0, 0.5}, acc(7, 0.0L);
  const double lr = 0.05, eps = 1e-8;
  for (int step = 0; step < 100; ++step) {
    std::vector<double> grads(7);
    for (auto& g : grads) g = skip(rng) ? 0.0 : gauss(rng);
    grads[0] = gauss(rng);  // keep at least one gradient populated
    for (std::size_t i = 0; i < 6; ++i) p.at("a").grad()[i] = grads[i];
    p.at("b").grad()[0] = grads[6];
    const auto before = p.accumulator("a");
    adagrad_step(p, lr, eps);
    for (std::size_t i = 0; i < 7; ++i) {
      acc[i] += static_cast<long double>(grads[i]) * grads[i];
      w[i] -= lr * grads[i] / std::sqrt(acc[i] + eps);
    }
    for (std::size_t i = 0; i < 6; ++i) EXPECT_GE(p.accumulator("a")[i], before[i]);
  }
  for (std::size_t i = 0; i < 6; ++i) EXPECT_NEAR(p.at("a").values()[i], static_cast<double>(w[i]), 1e-12);
  EXPECT_NEAR(p.at("b").item(), static_cast<double>(w[6]), 1e-12);
}

TEST(Adagrad, StepWithoutGradientsIsAContractError) {
  ParameterStore p;
  p.add("w", Tensor::scalar(1.0));
  EXPECT_THROW(adagrad_step(p, 0.01, 1e-8), ContractError);
}

// ---- AUC -------------------------------------------------------------------------

double pairwise_auc(const std::vector<double>& s, const std::vector<double>& y) {
  double wins = 0, pairs = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (y[i] < 0.5) continue;
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (y[j] > 0.5) continue;
      pairs += 1;
      wins += s[i] > s[j] ? 1.0 : s[i] == s[j] ? 0.5 : 0.0;
    }
  }
  return wins / pairs;
}

TEST(Auc, Examples) {
  EXPECT_EQ(auc(std::vector<double>{0.1, 0.2, 0.8, 0.9}, std::vector<double>{0, 0, 1, 1}), 1.0);
  EXPECT_EQ(auc(std::vector<double>{0.9, 0.8, 0.2, 0.1}, std::vector<double>{0, 0, 1, 1}), 0.0);
  EXPECT_EQ(auc(std::vector<double>(6, 0.3), std::vector<double>{0, 1, 0, 1, 1, 0}), 0.5);
  EXPECT_THROW(auc(std::vector<double>{0.1, 0.2}, std::vector<double>{1, 1}), MetricError);
  EXPECT_THROW(auc(std::vector<double>{0.1}, std::vector<double>{1, 0}), DimensionError);
}

TEST(Auc, MatchesPairwiseCountingWithTies) {
  std::mt19937_64 rng(4);
  std::uniform_int_distribution<int> grid(0, 30);  // coarse scores give many ties
  std::bernoulli_distribution label(0.35);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> s(200), y(200);
    for (std::size_t i = 0; i < s.size(); ++i) {
      s[i] = grid(rng) / 30.0;
      y[i] = label(rng);
    }
    const double a = auc(s, y);
    EXPECT_NEAR(a, pairwise_auc(s, y), 1e-12);
    EXPECT_GE(a, 0.0);
    EXPECT_LE(a, 1.0);
  }
}

TEST(Auc, InvariantUnderIncreasingTransforms) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-3, 3);
  std::bernoulli_distribution label(0.5);
  std::vector<double> s(300), y(300), t1(300), t2(300);
  for (std::size_t i = 0; i < s.size(); ++i) {
    s[i] = std::round(u(rng) * 10) / 10;
    y[i] = label(rng);
    t1[i] = 1.0 / (1.0 + std::exp(-s[i]));
    t2[i] = s[i] * s[i] * s[i] + 5.0 * s[i];
  }
  EXPECT_EQ(auc(t1, y), auc(s, y));
  EXPECT_EQ(auc(t2, y), auc(s, y));
}

// ---- training ---------------------------------------------------------------------

WorldConfig small_world(std::uint64_t seed) {
  WorldConfig w;
  w.n_users = 40;
  w.n_items = 120;
  w.n_categories = 6;
  w.n_brands = 10;
  w.days = 6;
  w.requests_per_user_day = 4;
  w.impressions_per_request = 6;
  w.seed = seed;
  return w;
}

Dataset small_dataset(std::uint64_t seed = 9) {
  const auto w = small_world(seed);
  DatasetConfig dc;
  dc.quantile_buckets = 5;
  dc.exposure_threshold = 3;
  dc.max_sequence = 10;
  return build_dataset(simulate_logs(generate_world(w), w).log, dc);
}

ModelConfig small_model(const FeatureCardinalities& card) {
  auto c = tiny_model_config(card);
  c.max_sequence = 10;
  return c;
}

std::string report_text(const MetricsReport& r) {
  std::ostringstream out;
  write_report(out, r);
  return out.str();
}

TEST(Train, ZeroLearningRateLeavesParametersUnchanged) {
  const auto ds = small_dataset();
  const auto mc = small_model(ds.cardinalities);
  TrainConfig tc;
  tc.learning_rate = 0.0;
  tc.batch_size = 64;
  tc.seed = 3;
  const auto result = train(ds, mc, tc);
  const auto initial = init_params(mc, 3);
  for (const auto& [name, entry] : initial.entries()) {
    const auto a = entry.value.values();
    const auto b = result.params.at(name).values();
    ASSERT_TRUE(std::equal(a.begin(), a.end(), b.begin(), b.end())) << name;
  }
}

TEST(Train, DeterministicForFixedSeed) {
  const auto ds = small_dataset();
  const auto mc = small_model(ds.cardinalities);
  TrainConfig tc;
  tc.batch_size = 64;
  tc.epochs = 2;
  const auto a = train(ds, mc, tc);
  const auto b = train(ds, mc, tc);
  EXPECT_EQ(report_text(a.report), report_text(b.report));
  for (const auto& [name, entry] : a.params.entries()) {
    const auto x = entry.value.values();
    const auto y = b.params.at(name).values();
    ASSERT_TRUE(std::equal(x.begin(), x.end(), y.begin(), y.end())) << name;
  }
  tc.seed = 2;
  EXPECT_NE(report_text(train(ds, mc, tc).report), report_text(a.report));
}

TEST(Train, LearnsBelowTheUninformativeBaseline) {
  const auto ds = small_dataset();
  const auto mc = small_model(ds.cardinalities);
  TrainConfig tc;
  tc.batch_size = 64;
  tc.epochs = 3;
  std::ostringstream progress;
  const auto result = train(ds, mc, tc, &progress);
  ASSERT_EQ(result.report.epochs.size(), 3u);
  EXPECT_LT(result.report.epochs.back().main_loss, std::numbers::ln2);
  EXPECT_NE(progress.str().find("epoch 3"), std::string::npos);
  for (const auto& e : result.report.epochs) {
    EXPECT_GE(e.main_loss, 0.0);
    EXPECT_GE(e.fatigue_loss, 0.0);
    EXPECT_GE(e.test_auc, 0.0);
    EXPECT_LE(e.test_auc, 1.0);
  }
}

TEST(Train, DivergenceNamesTheBatch) {
  const auto ds = small_dataset();
  const auto mc = small_model(ds.cardinalities);
  TrainConfig tc;
  tc.batch_size = 64;
  tc.learning_rate = 1e300;
  try {
    train(ds, mc, tc);
    FAIL() << "expected NumericError";
  } catch (const NumericError& e) {
    const std::string what = e.what();
    EXPECT_NE(what.find("epoch 1"), std::string::npos) << what;
    EXPECT_NE(what.find("batch"), std::string::npos) << what;
  }
}

TEST(Train, NeedsTrainingSamples) {
  auto ds = small_dataset();
  for (auto& s : ds.samples) s.split = Split::kTest;
  EXPECT_THROW(train(ds, small_model(ds.cardinalities), TrainConfig{}), ContractError);
}

TEST(Train, SmallGradientStepDecreasesOneSampleLoss) {
  Fixture f;
  auto sample = testing::gradient_sample(f.dataset);
  const auto batch = make_batch(std::span<const TrainingSample>(&sample, 1), f.config);
  for (double beta : {0.0, 0.5}) {
    auto params = f.params;
    double before = 0;
    {
      Graph g;
      const auto loss = combined_loss(g, params, f.config, batch, beta);
      before = loss.total.item();
      g.backward(loss.total);
    }
    for (auto& [name, entry] : params.entries()) {
      auto w = entry.value.values();
      const auto gr = entry.value.grad();
      for (std::size_t i = 0; i < w.size(); ++i) w[i] -= 1e-4 * gr[i];
      entry.value.zero_grad();
    }
    auto g = Graph::inference();
    EXPECT_LT(combined_loss(g, params, f.config, batch, beta).total.item(), before);
  }
}

// ---- evaluation and statistics -------------------------------------------------------

TEST(Evaluate, AgreesWithPredictClicks) {
  Fixture f;
  const auto samples = select_split(f.dataset, Split::kTrain);
  const auto r = evaluate(samples, f.params, f.config, 5);
  const auto scores = predict_clicks(samples, f.params, f.config);
  std::vector<double> labels;
  double loss = 0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    labels.push_back(samples[i]->click);
    loss += logloss(samples[i]->click, scores[i]);
  }
  EXPECT_NEAR(r.main_auc, auc(scores, labels), 1e-12);
  EXPECT_NEAR(r.main_loss, loss / samples.size(), 1e-12);
  EXPECT_EQ(r.samples, samples.size());
  EXPECT_TRUE(std::isnan(evaluate({}, f.params, f.config).main_auc));
}

TEST(ColumnStats, MatchesTwoPassOracle) {
  std::mt19937_64 rng(6);
  std::normal_distribution<double> gauss(3.0, 1e-3);  // large mean, small spread
  std::vector<std::vector<double>> rows(10, std::vector<double>(8));
  for (auto& r : rows) {
    for (auto& v : r) v = gauss(rng);
  }
  std::vector<double> mean, stddev;
  column_stats(rows, mean, stddev);
  for (std::size_t k = 0; k < 8; ++k) {
    long double m = 0;
    for (const auto& r : rows) m += r[k];
    m /= rows.size();
    long double ss = 0;
    for (const auto& r : rows) ss += (r[k] - m) * (r[k] - m);
    EXPECT_NEAR(mean[k], static_cast<double>(m), 1e-14);
    EXPECT_NEAR(stddev[k], static_cast<double>(std::sqrt(ss / rows.size())), 1e-13);
  }
  const std::vector<std::vector<double>> constant(5, std::vector<double>{0.1, 2.7, -4.0});
  column_stats(constant, mean, stddev);
  for (double s : stddev) EXPECT_EQ(s, 0.0);
  EXPECT_THROW(column_stats(std::vector<std::vector<double>>{{1.0}, {1.0, 2.0}}, mean, stddev), DimensionError);
}

TEST(SpectrumStats, IdenticalSeriesGiveZeroSpreadOfF) {
  Fixture f;
  std::vector<TrainingSample> samples(12, testing::rich_sample(f.dataset));
  for (std::size_t i = 0; i < samples.size(); ++i) samples[i].user.activeness = static_cast<std::uint32_t>(i % 3);
  std::vector<const TrainingSample*> ptrs;
  for (const auto& s : samples) ptrs.push_back(&s);
  const auto stats = spectrum_stats(ptrs, f.params, f.config);
  ASSERT_EQ(stats.f_std.size(), f.config.fft_points);
  // Identical rows can land in different GEMM kernel blocks, so allow round-off.
  for (double s : stats.f_std) EXPECT_LE(s, 1e-15);
  EXPECT_LE(stats.amplitude_asymmetry, 1e-9);
  EXPECT_EQ(stats.samples, 12u);
}

TEST(SpectrumStats, RequiresTheFatigueBranch) {
  Fixture f;
  f.config.ablation = ablation_from_name("no_frm");
  f.params = init_params(f.config, 1);
  const auto samples = select_split(f.dataset, Split::kTrain);
  EXPECT_THROW(spectrum_stats(samples, f.params, f.config), ContractError);
}

TEST(Report, ListsKeysEpochsAndSpectrum) {
  MetricsReport r;
  r.ablation = "no_cmn";
  r.evaluation = {0.75, 0.6, 0.4, 0.5, 10};
  r.epochs.push_back({1, 0.5, 0.6, 0.7, 0.71});
  SpectrumStats s;
  s.f_mean = s.f_std = s.f_uc_mean = s.f_uc_std = s.amplitude_mean = {1.0, 2.0};
  s.samples = 3;
  r.spectrum = s;
  const auto text = report_text(r);
  for (const char* needle : {"ablation = no_cmn\n", "main_auc = 0.75\n", "[epochs]\n", "1,0.5,0.59999999999999998",
                             "[spectrum]\n", "spectrum_samples = 3\n", "bin,f_mean,f_std,f_uc_mean,f_uc_std",
                             "\n1,2,2,2,2,2\n"}) {
    EXPECT_NE(text.find(needle), std::string::npos) << needle << "\n" << text;
  }
}

}  // namespace
}  // namespace fan
