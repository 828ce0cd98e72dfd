#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "fan/errors.hpp"
#include "fan/model.hpp"

namespace fan {

// Layout (host byte order, little-endian on every supported target):
//   "FANCKPT1" | u32 version | u64 n + config text (key=value lines)
//   u64 count | per tensor: u64 n + name, u64 rank, u64 dims[rank],
//                           f64 values[size], f64 accumulator[size]

namespace {

constexpr char kMagic[8] = {'F', 'A', 'N', 'C', 'K', 'P', 'T', '1'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void put(std::ostream& out, const T& value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

void put_string(std::ostream& out, const std::string& s) {
  put<std::uint64_t>(out, s.size());
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

void put_doubles(std::ostream& out, std::span<const double> values) {
  out.write(reinterpret_cast<const char*>(values.data()), static_cast<std::streamsize>(values.size() * sizeof(double)));
}

template <typename T>
T get(std::istream& in) {
  T value{};
  in.read(reinterpret_cast<char*>(&value), sizeof(T));
  if (!in) throw ParseError("checkpoint truncated");
  return value;
}

std::string get_string(std::istream& in) {
  const auto n = get<std::uint64_t>(in);
  if (n > (1u << 26)) throw ParseError("checkpoint string length implausible");
  std::string s(n, '\0');
  in.read(s.data(), static_cast<std::streamsize>(n));
  if (!in) throw ParseError("checkpoint truncated");
  return s;
}

void get_doubles(std::istream& in, std::span<double> out) {
  in.read(reinterpret_cast<char*>(out.data()), static_cast<std::streamsize>(out.size() * sizeof(double)));
  if (!in) throw ParseError("checkpoint truncated");
}

}  // namespace

void save_checkpoint(const std::string& path, const ModelConfig& config, const ParameterStore& params) {
  const std::filesystem::path target(path);
  const auto tmp = target.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw ParseError("cannot write checkpoint '" + path + "'");
    out.write(kMagic, sizeof(kMagic));
    put(out, kVersion);
    std::string text;
    for (const auto& [key, value] : to_key_values(config)) text += key + "=" + value + "\n";
    put_string(out, text);
    put<std::uint64_t>(out, params.entries().size());
    for (const auto& [name, entry] : params.entries()) {
      put_string(out, name);
      put<std::uint64_t>(out, entry.value.shape().size());
      for (auto d : entry.value.shape()) put<std::uint64_t>(out, d);
      put_doubles(out, entry.value.values());
      put_doubles(out, entry.accumulator);
    }
    if (!out) {
      out.close();
      std::filesystem::remove(tmp);
      throw ParseError("failed writing checkpoint '" + path + "'");
    }
  }
  std::filesystem::rename(tmp, target);
}

Checkpoint load_checkpoint(const std::string& path, const ModelConfig* expected) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open checkpoint '" + path + "'");
  char magic[sizeof(kMagic)];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) throw ParseError("'" + path + "' is not a checkpoint");
  if (get<std::uint32_t>(in) != kVersion) throw ParseError("unsupported checkpoint version");

  std::map<std::string, std::string> kv;
  std::istringstream text(get_string(in));
  std::string line;
  while (std::getline(text, line)) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ParseError("bad config line in checkpoint: " + line);
    kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  Checkpoint ck;
  ck.config = model_config_from_key_values(kv);
  if (expected != nullptr && !(*expected == ck.config)) {
    throw ConfigError("checkpoint '" + path + "' was written for a different model configuration");
  }

  const auto count = get<std::uint64_t>(in);
  for (std::uint64_t i = 0; i < count; ++i) {
    const auto name = get_string(in);
    const auto rank = get<std::uint64_t>(in);
    if (rank == 0 || rank > 4) throw ParseError("checkpoint tensor '" + name + "' has bad rank");
    Shape shape;
    std::size_t size = 1;
    for (std::uint64_t r = 0; r < rank; ++r) {
      shape.push_back(get<std::uint64_t>(in));
      size *= shape.back();
    }
    if (size == 0 || size > (std::size_t{1} << 32)) throw ParseError("checkpoint tensor '" + name + "' has bad size");
    std::vector<double> values(size);
    get_doubles(in, values);
    ck.params.add(name, Tensor(shape, std::move(values)));
    get_doubles(in, ck.params.accumulator(name));
  }

  // The stored tensors must be exactly the ones this config creates.
  const auto reference = init_params(ck.config, 0);
  if (reference.entries().size() != ck.params.entries().size()) {
    throw ConfigError("checkpoint tensor set does not match its configuration");
  }
  for (const auto& [name, entry] : reference.entries()) {
    if (!ck.params.contains(name) || ck.params.at(name).shape() != entry.value.shape()) {
      throw ConfigError("checkpoint tensor '" + name + "' missing or misshapen");
    }
  }
  return ck;
}

}  // namespace fan
