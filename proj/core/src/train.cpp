#include "fan/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>
#include <ostream>
#include <random>

#include "fan/errors.hpp"

namespace fan {

namespace {
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
}

void TrainConfig::validate() const {
  if (!(learning_rate >= 0.0)) throw ConfigError("learning rate must be non-negative");
  if (batch_size == 0) throw ConfigError("batch size must be positive");
  if (!(beta_start >= 0.0 && beta_start <= beta_end)) throw ConfigError("need 0 <= beta_start <= beta_end");
  if (!(adagrad_epsilon >= 0.0)) throw ConfigError("adagrad epsilon must be non-negative");
}

double logloss(double label, double probability, double eps) {
  const double p = std::clamp(probability, eps, 1.0 - eps);
  return -(label * std::log(p) + (1.0 - label) * std::log(1.0 - p));
}

double mean_logloss(std::span<const double> labels, std::span<const double> probabilities) {
  if (labels.size() != probabilities.size() || labels.empty()) {
    throw DimensionError("mean_logloss: need equally many labels and probabilities");
  }
  double total = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i) total += logloss(labels[i], probabilities[i]);
  return total / static_cast<double>(labels.size());
}

double beta_at_step(std::size_t step, const TrainConfig& config) {
  if (config.beta_ramp_steps == 0) throw ConfigError("beta_ramp_steps must be resolved to at least 1");
  const double progress =
      std::min(1.0, static_cast<double>(step) / static_cast<double>(config.beta_ramp_steps));
  return config.beta_start + (config.beta_end - config.beta_start) * progress;
}

LossTerms combined_loss(Graph& g, const ForwardTrace& trace, const Batch& batch, double beta) {
  LossTerms terms;
  const std::vector<double> ones(batch.size, 1.0);
  terms.main = binary_logloss(g, trace.y_hat, batch.click, ones, kProbabilityClamp);
  if (!trace.y_f_hat.defined()) {
    terms.fatigue = Tensor::scalar(0.0);
    terms.total = terms.main;
    return terms;
  }
  terms.fatigue = binary_logloss(g, trace.y_f_hat, batch.fatigue_target, batch.fatigue_weight, kProbabilityClamp);
  if (beta == 0.0) {
    terms.total = terms.main;
  } else {
    terms.total = add(g, terms.main, scale(g, terms.fatigue, beta));
  }
  return terms;
}

LossTerms combined_loss(Graph& g, const ParameterStore& params, const ModelConfig& config, const Batch& batch,
                        double beta) {
  if (batch.size == 0) throw ContractError("combined_loss: empty batch");
  const auto trace = forward(g, params, config, batch);
  return combined_loss(g, trace, batch, beta);
}

void adagrad_step(ParameterStore& params, double learning_rate, double epsilon) {
  bool any = false;
  for (const auto& [name, entry] : params.entries()) {
    for (double gv : entry.value.grad()) {
      if (gv != 0.0) {
        any = true;
        break;
      }
    }
    if (any) break;
  }
  if (!any) throw ContractError("adagrad_step: no gradients populated (run backward first)");

  for (auto& [name, entry] : params.entries()) {
    auto w = entry.value.values();
    auto gr = entry.value.grad();
    auto& acc = entry.accumulator;
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double gi = gr[i];
      if (gi == 0.0) continue;
      acc[i] += gi * gi;
      w[i] -= learning_rate * gi / std::sqrt(acc[i] + epsilon);
    }
    entry.value.zero_grad();
  }
}

double auc(std::span<const double> scores, std::span<const double> labels) {
  if (scores.size() != labels.size()) throw DimensionError("auc: scores and labels differ in length");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  double positives = 0.0;
  double rank_sum = 0.0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
    const double average_rank = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
    for (std::size_t t = i; t < j; ++t) {
      if (labels[order[t]] > 0.5) {
        positives += 1.0;
        rank_sum += average_rank;
      }
    }
    i = j;
  }
  const double negatives = static_cast<double>(scores.size()) - positives;
  if (positives == 0.0 || negatives == 0.0) throw MetricError("auc undefined: labels contain a single class");
  return (rank_sum - positives * (positives + 1.0) / 2.0) / (positives * negatives);
}

std::vector<const TrainingSample*> select_split(const Dataset& dataset, Split split) {
  std::vector<const TrainingSample*> out;
  for (const auto& s : dataset.samples) {
    if (s.split == split) out.push_back(&s);
  }
  return out;
}

namespace {

double auc_or_nan(std::span<const double> scores, std::span<const double> labels) {
  try {
    return auc(scores, labels);
  } catch (const MetricError&) {
    return kNaN;
  }
}

}  // namespace

EvalResult evaluate(std::span<const TrainingSample* const> samples, const ParameterStore& params,
                    const ModelConfig& config, std::size_t batch_size) {
  EvalResult r;
  r.samples = samples.size();
  if (samples.empty()) {
    r.main_auc = r.fatigue_auc = r.main_loss = r.fatigue_loss = kNaN;
    return r;
  }
  std::vector<double> clicks, click_scores, fatigue_labels, fatigue_scores;
  double main_total = 0.0;
  double fatigue_total = 0.0;
  for (std::size_t start = 0; start < samples.size(); start += batch_size) {
    const auto count = std::min(batch_size, samples.size() - start);
    auto g = Graph::inference();
    const auto batch = make_batch(samples.subspan(start, count), config);
    const auto trace = forward(g, params, config, batch);
    for (std::size_t i = 0; i < count; ++i) {
      const double p = trace.y_hat.values()[i];
      clicks.push_back(batch.click[i]);
      click_scores.push_back(p);
      main_total += logloss(batch.click[i], p);
      if (trace.y_f_hat.defined() && batch.fatigue_weight[i] > 0.0) {
        const double pf = trace.y_f_hat.values()[i];
        fatigue_labels.push_back(batch.fatigue_target[i]);
        fatigue_scores.push_back(pf);
        fatigue_total += logloss(batch.fatigue_target[i], pf);
      }
    }
  }
  r.main_auc = auc_or_nan(click_scores, clicks);
  r.main_loss = main_total / static_cast<double>(samples.size());
  if (fatigue_labels.empty()) {
    r.fatigue_auc = kNaN;
    r.fatigue_loss = kNaN;
  } else {
    r.fatigue_auc = auc_or_nan(fatigue_scores, fatigue_labels);
    r.fatigue_loss = fatigue_total / static_cast<double>(fatigue_labels.size());
  }
  return r;
}

TrainResult train(const Dataset& dataset, const ModelConfig& model_config, const TrainConfig& train_config,
                  std::ostream* progress) {
  train_config.validate();
  model_config.validate();
  const auto train_samples = select_split(dataset, Split::kTrain);
  const auto test_samples = select_split(dataset, Split::kTest);
  if (train_samples.empty()) throw ContractError("train: dataset has no training samples");

  // Impressions of one request stay together so that their shared behavior
  // sequence is encoded once per batch.
  std::vector<std::pair<std::size_t, std::size_t>> groups;  // [begin, end) into train_samples
  for (std::size_t i = 0; i < train_samples.size();) {
    std::size_t j = i + 1;
    while (j < train_samples.size() && train_samples[j]->request_id == train_samples[i]->request_id &&
           train_samples[j]->user_id == train_samples[i]->user_id) {
      ++j;
    }
    groups.emplace_back(i, j);
    i = j;
  }

  const std::size_t batches_per_epoch = (train_samples.size() + train_config.batch_size - 1) / train_config.batch_size;
  TrainConfig schedule = train_config;
  if (schedule.beta_ramp_steps == 0) {
    const auto planned = static_cast<double>(batches_per_epoch * std::max<std::size_t>(train_config.epochs, 1));
    schedule.beta_ramp_steps = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(0.8 * planned)));
  }

  TrainResult result{init_params(model_config, train_config.seed), {}};
  result.report.ablation = ablation_name(model_config.ablation);
  std::mt19937_64 rng(train_config.seed ^ 0x9e3779b97f4a7c15ULL);
  std::size_t step = 0;
  std::vector<const TrainingSample*> order;
  order.reserve(train_samples.size());

  for (std::size_t epoch = 1; epoch <= train_config.epochs; ++epoch) {
    std::shuffle(groups.begin(), groups.end(), rng);
    order.clear();
    for (const auto& [begin, end] : groups) {
      for (std::size_t i = begin; i < end; ++i) order.push_back(train_samples[i]);
    }

    double main_sum = 0.0, fatigue_sum = 0.0, total_sum = 0.0;
    double main_count = 0.0, fatigue_count = 0.0;
    for (std::size_t b = 0; b < batches_per_epoch; ++b) {
      const auto start = b * train_config.batch_size;
      const auto count = std::min(train_config.batch_size, order.size() - start);
      const auto batch = make_batch(std::span<const TrainingSample* const>(order).subspan(start, count), model_config);
      const double beta = beta_at_step(step, schedule);
      Graph g;
      const auto loss = combined_loss(g, result.params, model_config, batch, beta);
      const double total = loss.total.item();
      if (!std::isfinite(total)) {
        throw NumericError("non-finite loss at epoch " + std::to_string(epoch) + ", batch " + std::to_string(b) +
                           " (samples " + std::to_string(start) + ".." + std::to_string(start + count - 1) + ")");
      }
      g.backward(loss.total);
      adagrad_step(result.params, train_config.learning_rate, train_config.adagrad_epsilon);
      ++step;

      const double labeled = std::accumulate(batch.fatigue_weight.begin(), batch.fatigue_weight.end(), 0.0);
      main_sum += loss.main.item() * static_cast<double>(count);
      main_count += static_cast<double>(count);
      fatigue_sum += loss.fatigue.item() * labeled;
      fatigue_count += labeled;
      total_sum += total * static_cast<double>(count);
    }

    EpochMetrics m;
    m.epoch = epoch;
    m.main_loss = main_sum / main_count;
    m.fatigue_loss = fatigue_count > 0.0 && !model_config.ablation.no_frm ? fatigue_sum / fatigue_count : kNaN;
    m.total_loss = total_sum / main_count;
    m.test_auc = kNaN;
    if (!test_samples.empty()) {
      result.report.evaluation = evaluate(test_samples, result.params, model_config);
      m.test_auc = result.report.evaluation.main_auc;
    }
    result.report.epochs.push_back(m);
    if (progress != nullptr) {
      char line[256];
      std::snprintf(line, sizeof(line), "epoch %zu  main_loss %.6f  fatigue_loss %.6f  test_auc %.6f\n", epoch,
                    m.main_loss, m.fatigue_loss, m.test_auc);
      *progress << line << std::flush;
    }
  }
  if (test_samples.empty()) result.report.evaluation = evaluate(test_samples, result.params, model_config);
  return result;
}

void column_stats(std::span<const std::vector<double>> rows, std::vector<double>& mean, std::vector<double>& stddev) {
  if (rows.empty()) throw ContractError("column_stats: no rows");
  const auto n = rows.front().size();
  mean.assign(n, 0.0);
  stddev.assign(n, 0.0);
  for (const auto& r : rows) {
    if (r.size() != n) throw DimensionError("column_stats: ragged rows");
    for (std::size_t k = 0; k < n; ++k) mean[k] += r[k];
  }
  const double count = static_cast<double>(rows.size());
  for (auto& m : mean) m /= count;
  for (const auto& r : rows) {
    for (std::size_t k = 0; k < n; ++k) {
      const double d = r[k] - mean[k];
      stddev[k] += d * d;
    }
  }
  for (auto& s : stddev) s = std::sqrt(s / count);
}

SpectrumStats spectrum_stats(std::span<const TrainingSample* const> samples, const ParameterStore& params,
                             const ModelConfig& config) {
  if (config.ablation.no_frm) throw ContractError("spectrum_stats needs the fatigue branch");
  if (samples.empty()) throw ContractError("spectrum_stats: no samples");
  std::vector<std::vector<double>> f_rows, f_uc_rows, a_rows;
  const auto n = config.fft_points;
  double asymmetry = 0.0;
  constexpr std::size_t kChunk = 1024;
  for (std::size_t start = 0; start < samples.size(); start += kChunk) {
    const auto count = std::min(kChunk, samples.size() - start);
    auto g = Graph::inference();
    const auto batch = make_batch(samples.subspan(start, count), config);
    const auto trace = forward(g, params, config, batch);
    for (std::size_t i = 0; i < count; ++i) {
      const auto f = trace.f.values().subspan(i * n, n);
      const auto f_uc = trace.f_uc.values().subspan(i * n, n);
      const auto a = batch.amplitude.values().subspan(i * n, n);
      f_rows.emplace_back(f.begin(), f.end());
      f_uc_rows.emplace_back(f_uc.begin(), f_uc.end());
      a_rows.emplace_back(a.begin(), a.end());
      for (std::size_t k = 1; k < n; ++k) asymmetry = std::max(asymmetry, std::abs(a[k] - a[n - k]));
    }
  }
  SpectrumStats s;
  s.samples = samples.size();
  column_stats(f_rows, s.f_mean, s.f_std);
  column_stats(f_uc_rows, s.f_uc_mean, s.f_uc_std);
  std::vector<double> unused;
  column_stats(a_rows, s.amplitude_mean, unused);
  s.amplitude_asymmetry = asymmetry;
  return s;
}

namespace {

std::string num(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

void write_report(std::ostream& out, const MetricsReport& report) {
  out << "ablation = " << report.ablation << '\n';
  out << "samples = " << report.evaluation.samples << '\n';
  out << "main_auc = " << num(report.evaluation.main_auc) << '\n';
  out << "fatigue_auc = " << num(report.evaluation.fatigue_auc) << '\n';
  out << "mean_main_loss = " << num(report.evaluation.main_loss) << '\n';
  out << "mean_fatigue_loss = " << num(report.evaluation.fatigue_loss) << '\n';
  if (!report.epochs.empty()) {
    out << "\n[epochs]\nepoch,main_loss,fatigue_loss,total_loss,test_auc\n";
    for (const auto& e : report.epochs) {
      out << e.epoch << ',' << num(e.main_loss) << ',' << num(e.fatigue_loss) << ',' << num(e.total_loss) << ','
          << num(e.test_auc) << '\n';
    }
  }
  if (report.spectrum) {
    const auto& s = *report.spectrum;
    out << "\n[spectrum]\nspectrum_samples = " << s.samples << "\namplitude_asymmetry = " << num(s.amplitude_asymmetry)
        << "\nbin,f_mean,f_std,f_uc_mean,f_uc_std,amplitude_mean\n";
    for (std::size_t k = 0; k < s.f_mean.size(); ++k) {
      out << k << ',' << num(s.f_mean[k]) << ',' << num(s.f_std[k]) << ',' << num(s.f_uc_mean[k]) << ','
          << num(s.f_uc_std[k]) << ',' << num(s.amplitude_mean[k]) << '\n';
    }
  }
}

void write_report_file(const std::string& path, const MetricsReport& report) {
  std::ofstream out(path);
  if (!out) throw ParseError("cannot write report '" + path + "'");
  write_report(out, report);
}

}  // namespace fan
