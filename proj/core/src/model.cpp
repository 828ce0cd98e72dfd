#include "fan/model.hpp"

#include <cmath>
#include <random>
#include <unordered_map>

#include "fan/errors.hpp"
#include "fan/spectral.hpp"

namespace fan {

// ---- ParameterStore ---------------------------------------------------------

ParameterStore::ParameterStore(const ParameterStore& other) {
  for (const auto& [name, entry] : other.entries_) entries_.emplace(name, Entry{entry.value.clone(), entry.accumulator});
}

ParameterStore& ParameterStore::operator=(const ParameterStore& other) {
  if (this != &other) {
    ParameterStore copy(other);
    *this = std::move(copy);
  }
  return *this;
}

Tensor& ParameterStore::add(const std::string& name, Tensor value) {
  if (entries_.contains(name)) throw ContractError("duplicate parameter '" + name + "'");
  value.set_requires_grad(true);
  const auto n = value.size();
  auto [it, inserted] = entries_.emplace(name, Entry{std::move(value), std::vector<double>(n, 0.0)});
  return it->second.value;
}

const Tensor& ParameterStore::at(const std::string& name) const {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw ContractError("no parameter named '" + name + "'");
  return it->second.value;
}

Tensor& ParameterStore::at(const std::string& name) {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw ContractError("no parameter named '" + name + "'");
  return it->second.value;
}

std::vector<double>& ParameterStore::accumulator(const std::string& name) {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw ContractError("no parameter named '" + name + "'");
  return it->second.accumulator;
}

std::size_t ParameterStore::parameter_count() const {
  std::size_t n = 0;
  for (const auto& [name, entry] : entries_) n += entry.value.size();
  return n;
}

void ParameterStore::zero_grad() {
  for (auto& [name, entry] : entries_) entry.value.zero_grad();
}

// ---- initialization ---------------------------------------------------------

namespace {

enum class InitKind { kEmbedding, kWeight, kBias };

struct PendingTensor {
  Shape shape;
  InitKind kind;
};

void plan_mlp(std::map<std::string, PendingTensor>& plan, const std::string& prefix, std::size_t in,
              const std::vector<std::size_t>& widths) {
  for (std::size_t i = 0; i < widths.size(); ++i) {
    const auto base = prefix + "." + std::to_string(i);
    plan[base + ".weight"] = {{in, widths[i]}, InitKind::kWeight};
    plan[base + ".bias"] = {{1, widths[i]}, InitKind::kBias};
    in = widths[i];
  }
}

std::vector<std::size_t> with_output(std::vector<std::size_t> hidden, std::size_t out) {
  hidden.push_back(out);
  return hidden;
}

double uniform(std::mt19937_64& rng, double bound) {
  const double unit = static_cast<double>(rng() >> 11) * 0x1.0p-53;
  return (2.0 * unit - 1.0) * bound;
}

}  // namespace

ParameterStore init_params(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  const auto& card = config.cardinalities;
  std::map<std::string, PendingTensor> plan;
  auto embedding = [&plan](const std::string& name, std::size_t rows, std::size_t width) {
    plan[name] = {{std::max<std::size_t>(rows, 1), width}, InitKind::kEmbedding};
  };
  embedding("emb.item", card.items, config.emb_item);
  embedding("emb.category", card.categories, config.emb_category);
  embedding("emb.brand", card.brands, config.emb_brand);
  embedding("emb.user", card.users, config.emb_other);
  embedding("emb.user_activeness", card.user_activeness, config.emb_other);
  embedding("emb.user_exposure", card.user_exposure, config.emb_other);
  embedding("emb.item_ctr", card.item_ctr, config.emb_other);
  embedding("emb.item_exposure", card.item_exposure, config.emb_other);
  embedding("emb.category_ctr", card.category_ctr, config.emb_other);
  embedding("emb.category_exposure", card.category_exposure, config.emb_other);
  embedding("emb.position", card.positions, config.emb_other);
  embedding("emb.hour", card.hours, config.emb_other);

  const auto d = config.attn_hidden;
  plan["self_attn.query"] = {{config.sequence_width(), d}, InitKind::kWeight};
  plan["self_attn.key"] = {{config.sequence_width(), d}, InitKind::kWeight};
  plan["self_attn.value"] = {{config.sequence_width(), d}, InitKind::kWeight};
  plan["self_attn.output"] = {{d, d}, InitKind::kWeight};
  plan["user_attn.query"] = {{config.user_width(), d}, InitKind::kWeight};
  plan["user_attn.key"] = {{d, d}, InitKind::kWeight};
  plan["user_attn.value"] = {{d, d}, InitKind::kWeight};
  plan["target_attn.query"] = {{config.item_width(), d}, InitKind::kWeight};
  plan["target_attn.key"] = {{d, d}, InitKind::kWeight};
  plan["target_attn.value"] = {{d, d}, InitKind::kWeight};

  const auto main_in = config.item_width() + config.user_width() + config.context_width() + 2 * d;
  plan_mlp(plan, "main_net", main_in, config.main_hidden);
  plan_mlp(plan, "bias_net", config.user_width() + config.context_width(), config.bias_hidden);

  const auto n = config.fft_points;
  const auto& ab = config.ablation;
  std::size_t output_in = config.interest_width();
  if (!ab.no_frm) {
    output_in += n;
    if (!ab.no_tftn) {
      plan_mlp(plan, "mlp_a", n, with_output(config.spectral_hidden, n));
      plan_mlp(plan, "mlp_phi", n, with_output(config.spectral_hidden, n));
    }
    if (!ab.no_cmn) {
      plan_mlp(plan, "mlp_b", config.category_width(), with_output(config.modulation_hidden, n));
      plan_mlp(plan, "mlp_alpha", config.category_width(), with_output(config.modulation_hidden, n));
    }
    if (!ab.no_ucn) plan_mlp(plan, "mlp_u", config.emb_other, with_output(config.modulation_hidden, n));
    plan_mlp(plan, "mlp_f", n, with_output(config.fatigue_hidden, 1));
  }
  plan_mlp(plan, "mlp_o", output_in, with_output(config.output_hidden, 1));

  std::mt19937_64 rng(seed);
  ParameterStore store;
  for (const auto& [name, pending] : plan) {
    const auto rows = pending.shape[0];
    const auto cols = pending.shape[1];
    std::vector<double> values(rows * cols, 0.0);
    if (pending.kind == InitKind::kEmbedding) {
      for (auto& v : values) v = uniform(rng, 0.01);
    } else if (pending.kind == InitKind::kWeight) {
      const double bound = std::sqrt(6.0 / static_cast<double>(rows + cols));
      for (auto& v : values) v = uniform(rng, bound);
    }
    store.add(name, Tensor(pending.shape, std::move(values)));
  }
  return store;
}

// ---- batches ----------------------------------------------------------------

Batch make_batch(std::span<const TrainingSample* const> samples, const ModelConfig& config) {
  if (samples.empty()) throw ContractError("make_batch: no samples");
  const auto& card = config.cardinalities;
  const auto n = config.fft_points;
  Batch b;
  b.size = samples.size();
  b.seq_offsets.push_back(0);
  std::vector<double> series(b.size * n), amplitude(b.size * n), phase(b.size * n);
  std::unordered_map<const BehaviorSequence*, std::size_t> groups;
  auto code = [](std::uint32_t value, std::size_t cardinality) -> std::size_t {
    return value < cardinality ? value : 0;
  };

  for (std::size_t i = 0; i < b.size; ++i) {
    const auto& s = *samples[i];
    b.user.push_back(code(s.user.user, card.users));
    b.user_activeness.push_back(code(s.user.activeness, card.user_activeness));
    b.user_exposure.push_back(code(s.user.exposure, card.user_exposure));
    b.item.push_back(code(s.item.item, card.items));
    b.category.push_back(code(s.item.category, card.categories));
    b.brand.push_back(code(s.item.brand, card.brands));
    b.item_ctr.push_back(code(s.item.item_ctr, card.item_ctr));
    b.item_exposure.push_back(code(s.item.item_exposure, card.item_exposure));
    b.category_ctr.push_back(code(s.item.category_ctr, card.category_ctr));
    b.category_exposure.push_back(code(s.item.category_exposure, card.category_exposure));
    b.position.push_back(code(s.context.position, card.positions));
    b.hour.push_back(code(s.context.hour, card.hours));

    const BehaviorSequence* key = s.behavior.get();
    auto [it, inserted] = groups.try_emplace(key, b.seq_offsets.size() - 1);
    if (inserted) {
      const auto group = it->second;
      if (key != nullptr) {
        const auto keep = std::min(config.max_sequence, key->size());
        for (auto e = key->end() - static_cast<std::ptrdiff_t>(keep); e != key->end(); ++e) {
          b.seq_item.push_back(code(e->item, card.items));
          b.seq_category.push_back(code(e->category, card.categories));
          b.seq_brand.push_back(code(e->brand, card.brands));
          b.seq_row_group.push_back(group);
        }
      }
      b.seq_offsets.push_back(b.seq_item.size());
    }
    b.sample_group.push_back(it->second);

    std::vector<double> raw(s.fatigue_series.begin(), s.fatigue_series.end());
    const auto fitted = fit_to_length(raw, n);
    const auto spectrum = fft(fitted);
    std::copy(fitted.begin(), fitted.end(), series.begin() + static_cast<std::ptrdiff_t>(i * n));
    std::copy(spectrum.amplitude.begin(), spectrum.amplitude.end(),
              amplitude.begin() + static_cast<std::ptrdiff_t>(i * n));
    std::copy(spectrum.phase.begin(), spectrum.phase.end(), phase.begin() + static_cast<std::ptrdiff_t>(i * n));

    b.click.push_back(s.click);
    const bool labeled = s.fatigue_label != FatigueLabel::kAbsent;
    b.fatigue_target.push_back(s.fatigue_label == FatigueLabel::kPositive ? 1.0 : 0.0);
    b.fatigue_weight.push_back(labeled ? 1.0 : 0.0);
  }
  b.series = Tensor({b.size, n}, std::move(series));
  b.amplitude = Tensor({b.size, n}, std::move(amplitude));
  b.phase = Tensor({b.size, n}, std::move(phase));
  return b;
}

Batch make_batch(std::span<const TrainingSample> samples, const ModelConfig& config) {
  std::vector<const TrainingSample*> ptrs;
  ptrs.reserve(samples.size());
  for (const auto& s : samples) ptrs.push_back(&s);
  return make_batch(std::span<const TrainingSample* const>(ptrs), config);
}

// ---- forward ----------------------------------------------------------------

Tensor mlp_forward(Graph& g, const ParameterStore& params, const std::string& prefix, const Tensor& x,
                   bool relu_after_last) {
  Tensor h = x;
  for (std::size_t i = 0;; ++i) {
    const auto base = prefix + "." + std::to_string(i);
    if (!params.contains(base + ".weight")) {
      if (i == 0) throw ContractError("no MLP named '" + prefix + "'");
      break;
    }
    h = add_row_bias(g, matmul(g, h, params.at(base + ".weight")), params.at(base + ".bias"));
    const bool last = !params.contains(prefix + "." + std::to_string(i + 1) + ".weight");
    if (!last || relu_after_last) h = relu(g, h);
  }
  return h;
}

UimOutput uim_forward(Graph& g, const ParameterStore& params, const ModelConfig& config, const Batch& batch) {
  UimOutput out;
  out.e_user = concat(g, {gather(g, params.at("emb.user"), batch.user),
                          gather(g, params.at("emb.user_activeness"), batch.user_activeness),
                          gather(g, params.at("emb.user_exposure"), batch.user_exposure)});
  out.e_item = concat(g, {gather(g, params.at("emb.item"), batch.item),
                          gather(g, params.at("emb.category"), batch.category),
                          gather(g, params.at("emb.brand"), batch.brand),
                          gather(g, params.at("emb.item_ctr"), batch.item_ctr),
                          gather(g, params.at("emb.item_exposure"), batch.item_exposure)});
  out.e_context =
      concat(g, {gather(g, params.at("emb.position"), batch.position), gather(g, params.at("emb.hour"), batch.hour)});

  if (batch.seq_item.empty()) {
    out.a_user = Tensor::zeros({batch.size, config.attn_hidden});
    out.a_item = Tensor::zeros({batch.size, config.attn_hidden});
  } else {
    out.e_seq = concat(g, {gather(g, params.at("emb.item"), batch.seq_item),
                           gather(g, params.at("emb.category"), batch.seq_category),
                           gather(g, params.at("emb.brand"), batch.seq_brand)});
    const auto q = matmul(g, out.e_seq, params.at("self_attn.query"));
    const auto k = matmul(g, out.e_seq, params.at("self_attn.key"));
    const auto v = matmul(g, out.e_seq, params.at("self_attn.value"));
    const auto heads = segment_attention(g, q, k, v, batch.seq_row_group, batch.seq_offsets, config.heads);
    out.e_seq_hat = matmul(g, heads, params.at("self_attn.output"));

    const auto qu = matmul(g, out.e_user, params.at("user_attn.query"));
    const auto ku = matmul(g, out.e_seq_hat, params.at("user_attn.key"));
    const auto vu = matmul(g, out.e_seq_hat, params.at("user_attn.value"));
    out.a_user = segment_attention(g, qu, ku, vu, batch.sample_group, batch.seq_offsets, 1);

    const auto qi = matmul(g, out.e_item, params.at("target_attn.query"));
    const auto ki = matmul(g, out.e_seq_hat, params.at("target_attn.key"));
    const auto vi = matmul(g, out.e_seq_hat, params.at("target_attn.value"));
    out.a_item = segment_attention(g, qi, ki, vi, batch.sample_group, batch.seq_offsets, 1);
  }

  const auto main =
      mlp_forward(g, params, "main_net", concat(g, {out.e_item, out.e_user, out.e_context, out.a_user, out.a_item}),
                  true);
  const auto bias = mlp_forward(g, params, "bias_net", concat(g, {out.e_user, out.e_context}), true);
  out.r_ui = concat(g, {main, bias});
  return out;
}

TftnOutput tftn_forward(Graph& g, const ParameterStore& params, const Tensor& amplitude, const Tensor& phase) {
  if (amplitude.shape() != phase.shape()) {
    throw DimensionError("tftn: amplitude " + shape_to_string(amplitude.shape()) + " vs phase " +
                         shape_to_string(phase.shape()));
  }
  TftnOutput out;
  out.amplitude_prime = mlp_forward(g, params, "mlp_a", amplitude, false);
  out.phase_prime = mlp_forward(g, params, "mlp_phi", phase, false);
  out.f = mul(g, out.amplitude_prime, out.phase_prime);
  return out;
}

CmnOutput cmn_forward(Graph& g, const ParameterStore& params, const Tensor& f, const Tensor& e_category) {
  CmnOutput out;
  out.b_c = mlp_forward(g, params, "mlp_b", e_category, false);
  out.w_c = mlp_forward(g, params, "mlp_alpha", e_category, false);
  out.f_c = sub(g, out.b_c, mul(g, out.w_c, f));
  return out;
}

UcnOutput ucn_forward(Graph& g, const ParameterStore& params, const Tensor& f_c, const Tensor& e_activeness) {
  UcnOutput out;
  out.alpha_u = mlp_forward(g, params, "mlp_u", e_activeness, false);
  out.f_uc = mul(g, out.alpha_u, f_c);
  return out;
}

ForwardTrace forward(Graph& g, const ParameterStore& params, const ModelConfig& config, const Batch& batch) {
  ForwardTrace t;
  auto uim = uim_forward(g, params, config, batch);
  t.e_seq = uim.e_seq;
  t.e_seq_hat = uim.e_seq_hat;
  t.e_user = uim.e_user;
  t.e_item = uim.e_item;
  t.e_context = uim.e_context;
  t.a_user = uim.a_user;
  t.a_item = uim.a_item;
  t.r_ui = uim.r_ui;

  const auto& ab = config.ablation;
  if (ab.no_frm) {
    t.y_hat = sigmoid(g, mlp_forward(g, params, "mlp_o", t.r_ui, false));
    return t;
  }

  t.amplitude = batch.amplitude;
  t.phase = batch.phase;
  t.e_category = concat(g, {gather(g, params.at("emb.category"), batch.category),
                            gather(g, params.at("emb.category_ctr"), batch.category_ctr),
                            gather(g, params.at("emb.category_exposure"), batch.category_exposure)});
  t.e_activeness = gather(g, params.at("emb.user_activeness"), batch.user_activeness);

  if (ab.no_tftn) {
    t.f = batch.series;
  } else {
    auto tftn = tftn_forward(g, params, batch.amplitude, batch.phase);
    t.amplitude_prime = tftn.amplitude_prime;
    t.phase_prime = tftn.phase_prime;
    t.f = tftn.f;
  }

  Tensor modulated = t.f;
  if (!ab.no_cmn) {
    auto cmn = cmn_forward(g, params, t.f, t.e_category);
    t.b_c = cmn.b_c;
    t.w_c = cmn.w_c;
    t.f_c = cmn.f_c;
    modulated = cmn.f_c;
  }
  if (ab.no_ucn) {
    t.f_uc = modulated;
  } else {
    auto ucn = ucn_forward(g, params, modulated, t.e_activeness);
    t.alpha_u = ucn.alpha_u;
    t.f_uc = ucn.f_uc;
  }

  t.y_hat = sigmoid(g, mlp_forward(g, params, "mlp_o", concat(g, {t.r_ui, t.f_uc}), false));
  t.y_f_hat = sigmoid(g, mlp_forward(g, params, "mlp_f", t.f_uc, false));
  return t;
}

double Prediction::fatigue_probability() const {
  if (!fatigue) throw ContractError("fatigue prediction requested from a model without the fatigue branch");
  return *fatigue;
}

Prediction predict(const TrainingSample& sample, const ParameterStore& params, const ModelConfig& config) {
  auto g = Graph::inference();
  const TrainingSample* one[] = {&sample};
  const auto batch = make_batch(std::span<const TrainingSample* const>(one), config);
  Prediction p;
  p.trace = forward(g, params, config, batch);
  p.click_probability = p.trace.y_hat.item();
  if (p.trace.y_f_hat.defined()) p.fatigue = p.trace.y_f_hat.item();
  return p;
}

std::vector<double> predict_clicks(std::span<const TrainingSample* const> samples, const ParameterStore& params,
                                   const ModelConfig& config, std::size_t batch_size) {
  std::vector<double> out;
  out.reserve(samples.size());
  for (std::size_t start = 0; start < samples.size(); start += batch_size) {
    const auto count = std::min(batch_size, samples.size() - start);
    auto g = Graph::inference();
    const auto batch = make_batch(samples.subspan(start, count), config);
    const auto trace = forward(g, params, config, batch);
    for (double v : trace.y_hat.values()) out.push_back(v);
  }
  return out;
}

}  // namespace fan
