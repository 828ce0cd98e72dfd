#include <charconv>
#include <fstream>
#include <istream>
#include <ostream>
#include <string_view>

#include "fan/errors.hpp"
#include "fan/features.hpp"

namespace fan {

namespace {

constexpr std::string_view kMagic = "#fan-dataset\tv1";
constexpr std::string_view kColumns =
    "#columns\tsplit\trequest\tuser\ttimestamp\tuser_code\tuser_activeness\tuser_exposure\titem\tcategory\tbrand\t"
    "item_ctr\titem_exposure\tcategory_ctr\tcategory_exposure\tposition\thour\tclick\tfatigue_label\tsequence\t"
    "fatigue_series";
constexpr std::size_t kColumnCount = 20;

std::vector<std::string_view> split(std::string_view text, char sep) {
  std::vector<std::string_view> parts;
  std::size_t start = 0;
  while (true) {
    const auto pos = text.find(sep, start);
    if (pos == std::string_view::npos) {
      parts.push_back(text.substr(start));
      return parts;
    }
    parts.push_back(text.substr(start, pos - start));
    start = pos + 1;
  }
}

template <typename T>
T number(std::string_view field, std::size_t line) {
  T value{};
  const auto* end = field.data() + field.size();
  auto [ptr, ec] = std::from_chars(field.data(), end, value);
  if (field.empty() || ec != std::errc() || ptr != end) {
    throw ParseError("dataset line " + std::to_string(line) + ": bad number '" + std::string(field) + "'");
  }
  return value;
}

std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

struct NamedCardinality {
  const char* name;
  std::size_t FeatureCardinalities::*field;
};

constexpr NamedCardinality kCardinalities[] = {
    {"users", &FeatureCardinalities::users},
    {"items", &FeatureCardinalities::items},
    {"categories", &FeatureCardinalities::categories},
    {"brands", &FeatureCardinalities::brands},
    {"positions", &FeatureCardinalities::positions},
    {"hours", &FeatureCardinalities::hours},
    {"user_activeness", &FeatureCardinalities::user_activeness},
    {"user_exposure", &FeatureCardinalities::user_exposure},
    {"item_ctr", &FeatureCardinalities::item_ctr},
    {"item_exposure", &FeatureCardinalities::item_exposure},
    {"category_ctr", &FeatureCardinalities::category_ctr},
    {"category_exposure", &FeatureCardinalities::category_exposure},
};

struct NamedBoundaries {
  const char* name;
  std::vector<double> NumericBoundaries::*field;
};

constexpr NamedBoundaries kBoundaries[] = {
    {"user_activeness", &NumericBoundaries::user_activeness},
    {"user_exposure", &NumericBoundaries::user_exposure},
    {"item_ctr", &NumericBoundaries::item_ctr},
    {"item_exposure", &NumericBoundaries::item_exposure},
    {"category_ctr", &NumericBoundaries::category_ctr},
    {"category_exposure", &NumericBoundaries::category_exposure},
};

char label_char(FatigueLabel label) {
  switch (label) {
    case FatigueLabel::kNegative: return '0';
    case FatigueLabel::kPositive: return '1';
    case FatigueLabel::kAbsent: return '-';
  }
  return '-';
}

}  // namespace

void write_dataset(std::ostream& out, const Dataset& dataset) {
  out << kMagic << '\n';
  out << "#cardinalities";
  for (const auto& c : kCardinalities) out << '\t' << c.name << '=' << dataset.cardinalities.*c.field;
  out << '\n';
  for (const auto& b : kBoundaries) {
    out << "#boundaries\t" << b.name << '\t';
    const auto& values = dataset.boundaries.*b.field;
    if (values.empty()) out << '-';
    for (std::size_t i = 0; i < values.size(); ++i) out << (i ? "," : "") << format_double(values[i]);
    out << '\n';
  }
  out << kColumns << '\n';

  std::string line;
  for (const auto& s : dataset.samples) {
    line.clear();
    auto field = [&line](const auto& v) {
      line += std::to_string(v);
      line += '\t';
    };
    field(static_cast<int>(s.split));
    field(s.request_id);
    field(s.user_id);
    field(s.timestamp);
    field(s.user.user);
    field(s.user.activeness);
    field(s.user.exposure);
    field(s.item.item);
    field(s.item.category);
    field(s.item.brand);
    field(s.item.item_ctr);
    field(s.item.item_exposure);
    field(s.item.category_ctr);
    field(s.item.category_exposure);
    field(s.context.position);
    field(s.context.hour);
    field(static_cast<int>(s.click));
    line += label_char(s.fatigue_label);
    line += '\t';
    if (!s.behavior || s.behavior->empty()) {
      line += '-';
    } else {
      for (std::size_t i = 0; i < s.behavior->size(); ++i) {
        const auto& e = (*s.behavior)[i];
        if (i) line += ',';
        line += std::to_string(e.item) + ':' + std::to_string(e.category) + ':' + std::to_string(e.brand);
      }
    }
    line += '\t';
    if (s.fatigue_series.empty()) {
      line += '-';
    } else {
      for (std::size_t i = 0; i < s.fatigue_series.size(); ++i) {
        if (i) line += ',';
        line += std::to_string(s.fatigue_series[i]);
      }
    }
    out << line << '\n';
  }
}

void write_dataset_file(const std::string& path, const Dataset& dataset) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ParseError("cannot write dataset file '" + path + "'");
  write_dataset(out, dataset);
  if (!out) throw ParseError("failed writing dataset file '" + path + "'");
}

Dataset read_dataset(std::istream& in) {
  Dataset dataset;
  std::string raw;
  std::size_t line_no = 0;
  bool seen_magic = false;
  bool seen_columns = false;
  std::shared_ptr<const BehaviorSequence> previous = std::make_shared<BehaviorSequence>();
  std::uint64_t previous_user = 0;
  Timestamp previous_ts = 0;
  bool have_previous = false;

  while (std::getline(in, raw)) {
    ++line_no;
    std::string_view line(raw);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty()) continue;
    if (!seen_magic) {
      if (line != kMagic) throw ParseError("not a dataset file (missing '#fan-dataset' header)");
      seen_magic = true;
      continue;
    }
    if (line.front() == '#') {
      const auto parts = split(line, '\t');
      if (parts[0] == "#cardinalities") {
        for (std::size_t i = 1; i < parts.size(); ++i) {
          const auto eq = parts[i].find('=');
          if (eq == std::string_view::npos) throw ParseError("dataset line " + std::to_string(line_no) + ": bad entry");
          const auto key = parts[i].substr(0, eq);
          for (const auto& c : kCardinalities) {
            if (key == c.name) dataset.cardinalities.*c.field = number<std::size_t>(parts[i].substr(eq + 1), line_no);
          }
        }
      } else if (parts[0] == "#boundaries" && parts.size() == 3) {
        for (const auto& b : kBoundaries) {
          if (parts[1] != b.name) continue;
          auto& values = dataset.boundaries.*b.field;
          values.clear();
          if (parts[2] != "-") {
            for (auto v : split(parts[2], ',')) values.push_back(number<double>(v, line_no));
          }
        }
      } else if (parts[0] == "#columns") {
        if (line != kColumns) throw ParseError("dataset column schema does not match this version");
        seen_columns = true;
      }
      continue;
    }
    if (!seen_columns) throw ParseError("dataset line " + std::to_string(line_no) + ": sample before #columns");

    const auto f = split(line, '\t');
    if (f.size() != kColumnCount) {
      throw ParseError("dataset line " + std::to_string(line_no) + ": expected " + std::to_string(kColumnCount) +
                       " columns, found " + std::to_string(f.size()));
    }
    TrainingSample s;
    const auto split_code = number<int>(f[0], line_no);
    if (split_code != 0 && split_code != 1) throw ParseError("dataset line " + std::to_string(line_no) + ": bad split");
    s.split = static_cast<Split>(split_code);
    s.request_id = number<std::uint64_t>(f[1], line_no);
    s.user_id = number<std::uint64_t>(f[2], line_no);
    s.timestamp = number<Timestamp>(f[3], line_no);
    s.user.user = number<std::uint32_t>(f[4], line_no);
    s.user.activeness = number<std::uint32_t>(f[5], line_no);
    s.user.exposure = number<std::uint32_t>(f[6], line_no);
    s.item.item = number<std::uint32_t>(f[7], line_no);
    s.item.category = number<std::uint32_t>(f[8], line_no);
    s.item.brand = number<std::uint32_t>(f[9], line_no);
    s.item.item_ctr = number<std::uint32_t>(f[10], line_no);
    s.item.item_exposure = number<std::uint32_t>(f[11], line_no);
    s.item.category_ctr = number<std::uint32_t>(f[12], line_no);
    s.item.category_exposure = number<std::uint32_t>(f[13], line_no);
    s.context.position = number<std::uint32_t>(f[14], line_no);
    s.context.hour = number<std::uint32_t>(f[15], line_no);
    const auto click = number<int>(f[16], line_no);
    if (click != 0 && click != 1) throw ParseError("dataset line " + std::to_string(line_no) + ": bad click label");
    s.click = static_cast<std::uint8_t>(click);
    if (f[17] == "0") {
      s.fatigue_label = FatigueLabel::kNegative;
    } else if (f[17] == "1") {
      s.fatigue_label = FatigueLabel::kPositive;
    } else if (f[17] == "-") {
      s.fatigue_label = FatigueLabel::kAbsent;
    } else {
      throw ParseError("dataset line " + std::to_string(line_no) + ": bad fatigue label");
    }

    BehaviorSequence seq;
    if (f[18] != "-") {
      for (auto entry : split(f[18], ',')) {
        const auto parts = split(entry, ':');
        if (parts.size() != 3) throw ParseError("dataset line " + std::to_string(line_no) + ": bad sequence entry");
        seq.push_back({number<std::uint32_t>(parts[0], line_no), number<std::uint32_t>(parts[1], line_no),
                       number<std::uint32_t>(parts[2], line_no)});
      }
    }
    // Impressions of one request share a sequence; keep one copy.
    if (have_previous && previous_user == s.user_id && previous_ts == s.timestamp && *previous == seq) {
      s.behavior = previous;
    } else {
      previous = std::make_shared<const BehaviorSequence>(std::move(seq));
      s.behavior = previous;
    }
    previous_user = s.user_id;
    previous_ts = s.timestamp;
    have_previous = true;

    if (f[19] != "-") {
      for (auto v : split(f[19], ',')) s.fatigue_series.push_back(number<std::uint32_t>(v, line_no));
    }
    dataset.samples.push_back(std::move(s));
  }
  if (!seen_magic) throw ParseError("empty dataset file");
  return dataset;
}

Dataset read_dataset_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open dataset file '" + path + "'");
  return read_dataset(in);
}

}  // namespace fan
