#include <benchmark/benchmark.h>

#include "fan/features.hpp"
#include "fan/model.hpp"
#include "fan/synth.hpp"
#include "fan/train.hpp"

namespace {

const fan::Dataset& dataset() {
  static const fan::Dataset d = [] {
    fan::WorldConfig w;
    w.n_users = 300;
    w.n_items = 2000;
    w.n_categories = 20;
    w.n_brands = 100;
    w.days = 7;
    const auto sim = fan::simulate_logs(fan::generate_world(w), w);
    return fan::build_dataset(sim.log, fan::DatasetConfig{});
  }();
  return d;
}

// range(0): batch size; range(1): 1 for the default widths, 0 for a narrow model.
fan::ModelConfig model_config(bool full_width) {
  fan::ModelConfig c;
  c.cardinalities = dataset().cardinalities;
  if (!full_width) {
    c.max_sequence = 20;
    c.heads = 4;
    c.attn_hidden = 32;
    c.emb_item = 16;
    c.emb_category = 8;
    c.emb_brand = 8;
  }
  return c;
}

fan::Batch batch_of(std::size_t size, const fan::ModelConfig& config) {
  const auto& d = dataset();
  std::vector<const fan::TrainingSample*> samples;
  for (std::size_t i = 0; i < size; ++i) samples.push_back(&d.samples[i % d.samples.size()]);
  return fan::make_batch(samples, config);
}

void BM_Forward(benchmark::State& state) {
  const auto config = model_config(state.range(1) != 0);
  const auto params = fan::init_params(config, 1);
  const auto batch = batch_of(static_cast<std::size_t>(state.range(0)), config);
  for (auto _ : state) {
    auto g = fan::Graph::inference();
    benchmark::DoNotOptimize(fan::forward(g, params, config, batch).y_hat.values()[0]);
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_Forward)->ArgsProduct({{64, 1024}, {0, 1}})->Unit(benchmark::kMillisecond);

void BM_TrainStep(benchmark::State& state) {
  const auto config = model_config(state.range(1) != 0);
  auto params = fan::init_params(config, 1);
  const auto batch = batch_of(static_cast<std::size_t>(state.range(0)), config);
  for (auto _ : state) {
    fan::Graph g;
    const auto loss = fan::combined_loss(g, params, config, batch, 0.25);
    g.backward(loss.total);
    fan::adagrad_step(params, 0.01, 1e-8);
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_TrainStep)->ArgsProduct({{64, 1024}, {0, 1}})->Unit(benchmark::kMillisecond);

void BM_BuildDataset(benchmark::State& state) {
  fan::WorldConfig w;
  w.n_users = 200;
  w.n_items = 2000;
  w.n_categories = 20;
  w.days = 7;
  const auto log = fan::simulate_logs(fan::generate_world(w), w).log;
  std::size_t impressions = 0;
  for (const auto& r : log) impressions += r.impressions.size();
  for (auto _ : state) benchmark::DoNotOptimize(fan::build_dataset(log, fan::DatasetConfig{}).samples.size());
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(impressions));
}
BENCHMARK(BM_BuildDataset)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
