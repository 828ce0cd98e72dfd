#include "commands.hpp"

#include <CLI11.hpp>
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <ostream>
#include <random>

#include "fan/errors.hpp"

namespace fan::cli {

void write_atomically(const std::string& path, const std::function<void(std::ostream&)>& write) {
  const std::string tmp = path + ".tmp";
  try {
    std::ofstream out(tmp, std::ios::trunc);
    if (!out) throw ParseError("cannot write '" + path + "'");
    write(out);
    out.close();
    if (!out) throw ParseError("failed writing '" + path + "'");
    std::filesystem::rename(tmp, path);
  } catch (...) {
    std::error_code ignored;
    std::filesystem::remove(tmp, ignored);
    throw;
  }
}

namespace {

const std::string& require(const std::string& value, const char* flag) {
  if (value.empty()) throw ConfigError(std::string("missing --") + flag);
  return value;
}

std::string fmt(const char* format, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), format, v);
  return buf;
}

}  // namespace

SynthSummary cmd_synth(const RunConfig& config, std::ostream& out) {
  const auto& log_path = require(config.log_path, "log");
  const auto world = generate_world(config.world);
  const auto sim = simulate_logs(world, config.world);
  write_atomically(log_path, [&](std::ostream& o) { write_request_log(o, sim.log); });
  const auto truth_path = config.ground_truth_path.empty() ? log_path + ".world" : config.ground_truth_path;
  write_atomically(truth_path, [&](std::ostream& o) { write_ground_truth(o, world); });

  SynthSummary s;
  s.requests = sim.log.size();
  std::size_t clicks = 0;
  for (const auto& r : sim.log) {
    s.impressions += r.impressions.size();
    for (const auto& imp : r.impressions) clicks += imp.clicked;
  }
  s.click_rate = s.impressions ? static_cast<double>(clicks) / static_cast<double>(s.impressions) : 0.0;
  out << "wrote " << s.requests << " requests (" << s.impressions << " impressions, click rate "
      << fmt("%.4f", s.click_rate) << ") to " << log_path << "\nground truth: " << truth_path << '\n';
  return s;
}

ExtractSummary cmd_extract(const RunConfig& config, std::ostream& out) {
  const auto log = read_request_log_file(require(config.log_path, "log"));
  const auto& dataset_path = require(config.dataset_path, "dataset");
  const auto dataset = build_dataset(log.records, config.dataset);
  write_atomically(dataset_path, [&](std::ostream& o) { write_dataset(o, dataset); });
  ExtractSummary s{dataset.count(Split::kTrain), dataset.count(Split::kTest), log.skipped.size()};
  for (const auto& issue : log.skipped) out << "skipped line " << issue.line << ": " << issue.message << '\n';
  out << "wrote " << s.train_samples << " train and " << s.test_samples << " test samples to " << dataset_path << '\n';
  return s;
}

TrainResult cmd_train(const RunConfig& config, std::ostream& out) {
  const auto dataset = read_dataset_file(require(config.dataset_path, "dataset"));
  const auto& checkpoint_path = require(config.checkpoint_path, "checkpoint");
  ModelConfig model = config.model;
  model.cardinalities = dataset.cardinalities;
  auto result = train(dataset, model, config.train, &out);
  save_checkpoint(checkpoint_path, model, result.params);
  if (!config.report_path.empty()) {
    write_atomically(config.report_path, [&](std::ostream& o) { write_report(o, result.report); });
  }
  out << "test auc " << fmt("%.6f", result.report.evaluation.main_auc) << ", checkpoint " << checkpoint_path << '\n';
  return result;
}

EvalResult cmd_eval(const RunConfig& config, std::ostream& out) {
  const auto dataset = read_dataset_file(require(config.dataset_path, "dataset"));
  const auto checkpoint = load_checkpoint(require(config.checkpoint_path, "checkpoint"));
  if (!(checkpoint.config.cardinalities == dataset.cardinalities)) {
    throw ConfigError("checkpoint vocabulary does not match the dataset");
  }
  auto samples = select_split(dataset, Split::kTest);
  if (samples.empty()) samples = select_split(dataset, Split::kTrain);
  MetricsReport report;
  report.ablation = ablation_name(checkpoint.config.ablation);
  report.evaluation = evaluate(samples, checkpoint.params, checkpoint.config);
  if (!config.report_path.empty()) {
    write_atomically(config.report_path, [&](std::ostream& o) { write_report(o, report); });
  }
  write_report(out, report);
  return report.evaluation;
}

AblationTable run_ablation(const Dataset& dataset, const ModelConfig& base, const TrainConfig& train_config,
                           std::size_t repeats, std::ostream* progress) {
  if (repeats == 0) throw ConfigError("repeats must be at least 1");
  AblationTable table;
  for (const char* variant : {"none", "no_frm", "no_tftn", "no_cmn", "no_ucn"}) {
    ModelConfig model = base;
    model.cardinalities = dataset.cardinalities;
    model.ablation = ablation_from_name(variant);
    AblationRow row;
    row.variant = variant;
    for (std::size_t r = 0; r < repeats; ++r) {
      TrainConfig tc = train_config;
      tc.seed = train_config.seed + r;
      const auto result = train(dataset, model, tc);
      row.aucs.push_back(result.report.evaluation.main_auc);
      if (progress != nullptr) {
        *progress << variant << " repeat " << r + 1 << "/" << repeats << " auc " << fmt("%.6f", row.aucs.back())
                  << '\n'
                  << std::flush;
      }
    }
    const double n = static_cast<double>(row.aucs.size());
    row.mean = std::accumulate(row.aucs.begin(), row.aucs.end(), 0.0) / n;
    double ss = 0.0;
    for (double a : row.aucs) ss += (a - row.mean) * (a - row.mean);
    row.stddev = row.aucs.size() > 1 ? std::sqrt(ss / (n - 1.0)) : 0.0;
    table.rows.push_back(std::move(row));
  }
  return table;
}

void write_ablation_table(std::ostream& out, const AblationTable& table) {
  out << "variant,mean_auc,std_auc,runs\n";
  for (const auto& row : table.rows) {
    out << row.variant << ',' << fmt("%.17g", row.mean) << ',' << fmt("%.17g", row.stddev) << ',';
    for (std::size_t i = 0; i < row.aucs.size(); ++i) out << (i ? ";" : "") << fmt("%.17g", row.aucs[i]);
    out << '\n';
  }
}

AblationTable cmd_ablate(const RunConfig& config, std::ostream& out) {
  const auto dataset = read_dataset_file(require(config.dataset_path, "dataset"));
  const auto table = run_ablation(dataset, config.model, config.train, config.repeats, &out);
  if (!config.report_path.empty()) {
    write_atomically(config.report_path, [&](std::ostream& o) { write_ablation_table(o, table); });
  }
  out << "\nmodel      AUC (mean +- std over " << config.repeats << " runs)\n";
  for (const auto& row : table.rows) {
    char line[128];
    std::snprintf(line, sizeof(line), "%-10s %.4f +- %.5f\n", row.variant.c_str(), row.mean, row.stddev);
    out << line;
  }
  return table;
}

std::vector<const TrainingSample*> sample_subset(const Dataset& dataset, std::size_t count, std::uint64_t seed) {
  std::vector<std::size_t> index(dataset.samples.size());
  std::iota(index.begin(), index.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(index.begin(), index.end(), rng);
  index.resize(std::min(count, index.size()));
  std::sort(index.begin(), index.end());
  std::vector<const TrainingSample*> out;
  for (auto i : index) out.push_back(&dataset.samples[i]);
  return out;
}

SpectrumStats cmd_spectrum(const RunConfig& config, std::ostream& out) {
  const auto dataset = read_dataset_file(require(config.dataset_path, "dataset"));
  const auto checkpoint = load_checkpoint(require(config.checkpoint_path, "checkpoint"));
  if (!(checkpoint.config.cardinalities == dataset.cardinalities)) {
    throw ConfigError("checkpoint vocabulary does not match the dataset");
  }
  const auto samples = sample_subset(dataset, config.spectrum_samples, config.seed);
  MetricsReport report;
  report.ablation = ablation_name(checkpoint.config.ablation);
  report.evaluation = evaluate(samples, checkpoint.params, checkpoint.config);
  report.spectrum = spectrum_stats(samples, checkpoint.params, checkpoint.config);
  if (!config.report_path.empty()) {
    write_atomically(config.report_path, [&](std::ostream& o) { write_report(o, report); });
  }
  write_report(out, report);
  return *report.spectrum;
}

namespace {

struct Subcommand {
  const char* name;
  const char* description;
  Command bit;
};

constexpr Subcommand kSubcommands[] = {
    {"synth", "simulate a request log and its ground truth", kSynth},
    {"extract", "build a training dataset from a request log", kExtract},
    {"train", "train a model and write a checkpoint", kTrain},
    {"eval", "evaluate a checkpoint on the held-out split", kEval},
    {"ablate", "train the full model and its four ablations repeatedly", kAblate},
    {"spectrum", "per-bin statistics of the fatigue representations", kSpectrum},
};

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Fatigue-aware CTR model: simulation, feature extraction, training and analysis"};
  app.require_subcommand(1, 1);
  app.set_help_all_flag("--help-all", "show help for every subcommand");

  std::map<std::string, std::string> given;  // setting name -> raw flag value
  std::map<std::string, CLI::App*> commands;
  std::map<std::string, std::string> config_files;
  for (const auto& sub : kSubcommands) {
    auto* cmd = app.add_subcommand(sub.name, sub.description);
    commands[sub.name] = cmd;
    cmd->add_option("--config", config_files[sub.name], "key = value file applied before flags")
        ->check(CLI::ExistingFile);
    for (const auto& s : settings()) {
      if ((s.commands & sub.bit) == 0) continue;
      cmd->add_option("--" + s.name, given[std::string(sub.name) + "/" + s.name], s.help);
    }
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err);
  }

  for (const auto& sub : kSubcommands) {
    auto* cmd = commands[sub.name];
    if (!cmd->parsed()) continue;
    try {
      RunConfig config;
      if (!config_files[sub.name].empty()) apply_config_file(config, config_files[sub.name]);
      for (const auto& s : settings()) {
        if ((s.commands & sub.bit) == 0) continue;
        if (cmd->count("--" + s.name) > 0) apply_setting(config, s.name, given[std::string(sub.name) + "/" + s.name]);
      }
      config.propagate_seed();
      switch (sub.bit) {
        case kSynth: cmd_synth(config, out); break;
        case kExtract: cmd_extract(config, out); break;
        case kTrain: cmd_train(config, out); break;
        case kEval: cmd_eval(config, out); break;
        case kAblate: cmd_ablate(config, out); break;
        case kSpectrum: cmd_spectrum(config, out); break;
      }
      return 0;
    } catch (const ConfigError& e) {
      err << "fan " << sub.name << ": " << e.what() << '\n';
      return 2;
    } catch (const std::exception& e) {
      err << "fan " << sub.name << ": " << e.what() << '\n';
      return 1;
    }
  }
  return 0;
}

}  // namespace fan::cli
