#include <charconv>
#include <sstream>

#include "fan/errors.hpp"
#include "fan/model.hpp"
#include "fan/spectral.hpp"

namespace fan {

AblationFlags ablation_from_name(const std::string& name) {
  AblationFlags flags;
  if (name == "none") return flags;
  if (name == "no_frm") {
    flags.no_frm = true;
  } else if (name == "no_tftn") {
    flags.no_tftn = true;
  } else if (name == "no_cmn") {
    flags.no_cmn = true;
  } else if (name == "no_ucn") {
    flags.no_ucn = true;
  } else {
    throw ConfigError("unknown ablation '" + name + "' (expected none, no_frm, no_tftn, no_cmn or no_ucn)");
  }
  return flags;
}

std::string ablation_name(const AblationFlags& flags) {
  std::string out;
  auto append = [&out](bool on, const char* name) {
    if (!on) return;
    if (!out.empty()) out += '+';
    out += name;
  };
  append(flags.no_frm, "no_frm");
  append(flags.no_tftn, "no_tftn");
  append(flags.no_cmn, "no_cmn");
  append(flags.no_ucn, "no_ucn");
  return out.empty() ? "none" : out;
}

void ModelConfig::validate() const {
  if (!is_power_of_two(fft_points)) throw ConfigError("fft_points must be a power of two");
  if (heads == 0 || attn_hidden % heads != 0) throw ConfigError("heads must divide attn_hidden");
  if (emb_item == 0 || emb_category == 0 || emb_brand == 0 || emb_other == 0) {
    throw ConfigError("embedding sizes must be positive");
  }
  if (max_sequence == 0) throw ConfigError("max_sequence must be positive");
  for (const auto* layers : {&spectral_hidden, &modulation_hidden, &main_hidden, &bias_hidden, &output_hidden,
                             &fatigue_hidden}) {
    if (layers->empty()) throw ConfigError("every MLP needs at least one hidden layer");
    for (auto w : *layers) {
      if (w == 0) throw ConfigError("hidden layer widths must be positive");
    }
  }
}

namespace {

std::string join(const std::vector<std::size_t>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + std::to_string(v[i]);
  return out;
}

std::size_t to_size(const std::string& key, const std::string& text) {
  std::size_t value = 0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (text.empty() || ec != std::errc() || ptr != text.data() + text.size()) {
    throw ConfigError("model config '" + key + "': expected a non-negative integer, got '" + text + "'");
  }
  return value;
}

std::vector<std::size_t> to_sizes(const std::string& key, const std::string& text) {
  std::vector<std::size_t> out;
  std::stringstream in(text);
  std::string part;
  while (std::getline(in, part, ',')) out.push_back(to_size(key, part));
  return out;
}

bool to_bool(const std::string& key, const std::string& text) {
  if (text == "1" || text == "true") return true;
  if (text == "0" || text == "false") return false;
  throw ConfigError("model config '" + key + "': expected a boolean, got '" + text + "'");
}

struct SizeField {
  const char* key;
  std::size_t ModelConfig::*field;
};
constexpr SizeField kSizeFields[] = {
    {"fft_points", &ModelConfig::fft_points}, {"heads", &ModelConfig::heads},
    {"attn_hidden", &ModelConfig::attn_hidden}, {"emb_item", &ModelConfig::emb_item},
    {"emb_category", &ModelConfig::emb_category}, {"emb_brand", &ModelConfig::emb_brand},
    {"emb_other", &ModelConfig::emb_other}, {"max_sequence", &ModelConfig::max_sequence},
};

struct LayersField {
  const char* key;
  std::vector<std::size_t> ModelConfig::*field;
};
constexpr LayersField kLayerFields[] = {
    {"spectral_hidden", &ModelConfig::spectral_hidden}, {"modulation_hidden", &ModelConfig::modulation_hidden},
    {"main_hidden", &ModelConfig::main_hidden},         {"bias_hidden", &ModelConfig::bias_hidden},
    {"output_hidden", &ModelConfig::output_hidden},     {"fatigue_hidden", &ModelConfig::fatigue_hidden},
};

struct CardField {
  const char* key;
  std::size_t FeatureCardinalities::*field;
};
constexpr CardField kCardFields[] = {
    {"card.users", &FeatureCardinalities::users},
    {"card.items", &FeatureCardinalities::items},
    {"card.categories", &FeatureCardinalities::categories},
    {"card.brands", &FeatureCardinalities::brands},
    {"card.positions", &FeatureCardinalities::positions},
    {"card.hours", &FeatureCardinalities::hours},
    {"card.user_activeness", &FeatureCardinalities::user_activeness},
    {"card.user_exposure", &FeatureCardinalities::user_exposure},
    {"card.item_ctr", &FeatureCardinalities::item_ctr},
    {"card.item_exposure", &FeatureCardinalities::item_exposure},
    {"card.category_ctr", &FeatureCardinalities::category_ctr},
    {"card.category_exposure", &FeatureCardinalities::category_exposure},
};

}  // namespace

std::map<std::string, std::string> to_key_values(const ModelConfig& config) {
  std::map<std::string, std::string> out;
  for (const auto& f : kSizeFields) out[f.key] = std::to_string(config.*f.field);
  for (const auto& f : kLayerFields) out[f.key] = join(config.*f.field);
  for (const auto& f : kCardFields) out[f.key] = std::to_string(config.cardinalities.*f.field);
  out["ablation.no_frm"] = config.ablation.no_frm ? "1" : "0";
  out["ablation.no_tftn"] = config.ablation.no_tftn ? "1" : "0";
  out["ablation.no_cmn"] = config.ablation.no_cmn ? "1" : "0";
  out["ablation.no_ucn"] = config.ablation.no_ucn ? "1" : "0";
  return out;
}

ModelConfig model_config_from_key_values(const std::map<std::string, std::string>& values) {
  ModelConfig config;
  for (const auto& [key, text] : values) {
    bool known = false;
    for (const auto& f : kSizeFields) {
      if (key == f.key) {
        config.*f.field = to_size(key, text);
        known = true;
      }
    }
    for (const auto& f : kLayerFields) {
      if (key == f.key) {
        config.*f.field = to_sizes(key, text);
        known = true;
      }
    }
    for (const auto& f : kCardFields) {
      if (key == f.key) {
        config.cardinalities.*f.field = to_size(key, text);
        known = true;
      }
    }
    if (key == "ablation.no_frm") config.ablation.no_frm = to_bool(key, text), known = true;
    if (key == "ablation.no_tftn") config.ablation.no_tftn = to_bool(key, text), known = true;
    if (key == "ablation.no_cmn") config.ablation.no_cmn = to_bool(key, text), known = true;
    if (key == "ablation.no_ucn") config.ablation.no_ucn = to_bool(key, text), known = true;
    if (!known) throw ConfigError("unknown model config key '" + key + "'");
  }
  config.validate();
  return config;
}

}  // namespace fan
