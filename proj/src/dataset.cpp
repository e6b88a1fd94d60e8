#include "maskprivacy/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <random>
#include <sstream>

namespace maskprivacy {
namespace {

constexpr std::array<std::string_view, kSexClasses> kSexNames = {"male", "female"};
constexpr std::array<std::string_view, kRaceClasses> kRaceNames = {"white", "black", "asian", "indian",
                                                                   "other"};
constexpr std::array<std::string_view, kAgeBins> kAgeBinNames = {
    "baby", "child", "teenager", "young", "adult", "middle_aged", "senior"};

template <std::size_t N>
int find_name(const std::array<std::string_view, N>& names, std::string_view s, const char* what) {
  for (std::size_t i = 0; i < N; ++i)
    if (names[i] == s) return static_cast<int>(i);
  throw std::invalid_argument(std::string("unknown ") + what + " '" + std::string(s) + "'");
}

std::optional<int> to_int(std::string_view s) {
  int v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size() || s.empty()) return std::nullopt;
  return v;
}

bool is_image_file(const std::filesystem::path& p) {
  auto ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext == ".jpg" || ext == ".jpeg" || ext == ".png" || ext == ".ppm" || ext == ".bmp";
}

// Round-half-up sizes for 70/20/10 with the test partition taking the rest.
std::array<std::size_t, 3> split_sizes(std::size_t n) {
  auto train = static_cast<std::size_t>(std::llround(0.7 * static_cast<double>(n)));
  auto val = static_cast<std::size_t>(std::llround(0.2 * static_cast<double>(n)));
  if (train + val > n) val = n - train;
  return {train, val, n - train - val};
}

void sort_by_id(std::vector<AttributeLabel>& labels) {
  std::sort(labels.begin(), labels.end(),
            [](const AttributeLabel& a, const AttributeLabel& b) { return a.image_id < b.image_id; });
}

}  // namespace

const std::array<AgeBinRange, kAgeBins>& age_bin_table() {
  static const std::array<AgeBinRange, kAgeBins> table = {{
      {AgeBin::baby, 0, 3},
      {AgeBin::child, 4, 12},
      {AgeBin::teenager, 13, 19},
      {AgeBin::young, 20, 30},
      {AgeBin::adult, 31, 45},
      {AgeBin::middle_aged, 46, 60},
      {AgeBin::senior, 61, std::nullopt},
  }};
  return table;
}

std::string_view to_string(Sex s) { return kSexNames[static_cast<int>(s)]; }
std::string_view to_string(Race r) { return kRaceNames[static_cast<int>(r)]; }
std::string_view to_string(AgeBin b) { return kAgeBinNames[static_cast<int>(b)]; }
Sex parse_sex(std::string_view s) { return static_cast<Sex>(find_name(kSexNames, s, "sex")); }
Race parse_race(std::string_view s) { return static_cast<Race>(find_name(kRaceNames, s, "race")); }
AgeBin parse_age_bin(std::string_view s) {
  return static_cast<AgeBin>(find_name(kAgeBinNames, s, "age bin"));
}

AttributeLabel parse_label(std::string_view filename) {
  std::string_view name = filename;
  if (auto slash = name.find_last_of("/\\"); slash != std::string_view::npos) name.remove_prefix(slash + 1);

  std::array<std::string_view, 3> fields;
  std::string_view rest = name;
  for (int i = 0; i < 3; ++i) {
    auto us = rest.find('_');
    if (us == std::string_view::npos) {
      // The third field may end the stem directly: "25_0_1.jpg".
      if (i == 2) {
        auto dot = rest.find('.');
        fields[i] = rest.substr(0, dot);
        rest = {};
        break;
      }
      throw MalformedFilename("'" + std::string(name) + "': expected age_gender_race_... fields");
    }
    fields[i] = rest.substr(0, us);
    rest.remove_prefix(us + 1);
  }

  auto age = to_int(fields[0]);
  auto sex = to_int(fields[1]);
  auto race = to_int(fields[2]);
  if (!age || !sex || !race)
    throw MalformedFilename("'" + std::string(name) + "': non-integer label field");
  if (*age < 0) throw MalformedFilename("'" + std::string(name) + "': negative age");
  if (*sex < 0 || *sex >= kSexClasses)
    throw MalformedFilename("'" + std::string(name) + "': gender code out of range");
  if (*race < 0 || *race >= kRaceClasses)
    throw MalformedFilename("'" + std::string(name) + "': race code out of range");

  return {std::string(name), *age, static_cast<Sex>(*sex), static_cast<Race>(*race)};
}

std::string format_label(const AttributeLabel& label, std::string_view suffix) {
  std::ostringstream os;
  os << label.age_years << '_' << static_cast<int>(label.sex) << '_' << static_cast<int>(label.race) << '_'
     << suffix;
  return os.str();
}

AgeBin bin_age(int age_years) {
  if (age_years < 0) throw DomainError("age must be non-negative, got " + std::to_string(age_years));
  for (const auto& r : age_bin_table())
    if (age_years >= r.lower && (!r.upper || age_years <= *r.upper)) return r.bin;
  throw DomainError("unreachable: age bins do not cover " + std::to_string(age_years));
}

LabelScan scan_labels(const std::filesystem::path& dir) {
  LabelScan scan;
  std::vector<std::string> names;
  for (const auto& e : std::filesystem::directory_iterator(dir))
    if (e.is_regular_file() && is_image_file(e.path())) names.push_back(e.path().filename().string());
  std::sort(names.begin(), names.end());
  for (const auto& n : names) {
    try {
      scan.labels.push_back(parse_label(n));
    } catch (const MalformedFilename& e) {
      scan.skipped.emplace_back(n, e.what());
    }
  }
  return scan;
}

std::string_view to_string(SplitKind k) { return k == SplitKind::random ? "random" : "uniform"; }

std::string_view to_string(Partition p) {
  switch (p) {
    case Partition::train: return "train";
    case Partition::val: return "val";
    case Partition::test: return "test";
  }
  return "?";
}

std::string_view to_string(Attribute a) {
  switch (a) {
    case Attribute::sex: return "sex";
    case Attribute::race: return "race";
    case Attribute::age_bin: return "age_bin";
  }
  return "?";
}

Partition parse_partition(std::string_view s) {
  if (s == "train") return Partition::train;
  if (s == "val") return Partition::val;
  if (s == "test") return Partition::test;
  throw std::invalid_argument("unknown partition '" + std::string(s) + "'");
}

Attribute parse_attribute(std::string_view s) {
  if (s == "sex") return Attribute::sex;
  if (s == "race") return Attribute::race;
  if (s == "age_bin" || s == "age") return Attribute::age_bin;
  throw std::invalid_argument("unknown attribute '" + std::string(s) + "'");
}

int attribute_level(const AttributeLabel& label, Attribute a) {
  switch (a) {
    case Attribute::sex: return static_cast<int>(label.sex);
    case Attribute::race: return static_cast<int>(label.race);
    case Attribute::age_bin: return static_cast<int>(bin_age(label.age_years));
  }
  return 0;
}

int attribute_levels(Attribute a) {
  switch (a) {
    case Attribute::sex: return kSexClasses;
    case Attribute::race: return kRaceClasses;
    case Attribute::age_bin: return kAgeBins;
  }
  return 0;
}

std::string level_name(Attribute a, int level) {
  switch (a) {
    case Attribute::sex: return std::string(kSexNames.at(level));
    case Attribute::race: return std::string(kRaceNames.at(level));
    case Attribute::age_bin: return std::string(kAgeBinNames.at(level));
  }
  return {};
}

std::size_t SplitManifest::count(Partition p) const {
  return static_cast<std::size_t>(
      std::count_if(entries.begin(), entries.end(), [p](const SplitEntry& e) { return e.partition == p; }));
}

std::vector<AttributeLabel> SplitManifest::labels(Partition p) const {
  std::vector<AttributeLabel> out;
  for (const auto& e : entries)
    if (e.partition == p) out.push_back(e.label);
  return out;
}

SplitManifest make_random_split(std::vector<AttributeLabel> labels, std::uint64_t seed) {
  if (labels.size() < 10)
    throw TooFewItems("random split needs at least 10 labels, got " + std::to_string(labels.size()));
  sort_by_id(labels);
  std::vector<std::size_t> order(labels.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);

  auto [n_train, n_val, n_test] = split_sizes(labels.size());
  std::vector<Partition> part(labels.size());
  for (std::size_t k = 0; k < order.size(); ++k)
    part[order[k]] = k < n_train ? Partition::train : (k < n_train + n_val ? Partition::val : Partition::test);

  SplitManifest m;
  m.kind = SplitKind::random;
  m.seed = seed;
  m.entries.reserve(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) m.entries.push_back({std::move(labels[i]), part[i]});
  return m;
}

SplitManifest make_uniform_split(std::vector<AttributeLabel> labels, std::uint64_t seed,
                                 std::vector<Attribute> balance_on, std::size_t quota) {
  if (labels.empty()) throw TooFewItems("uniform split needs at least one label");
  if (balance_on.empty()) throw std::invalid_argument("uniform split needs at least one balance attribute");
  sort_by_id(labels);

  std::map<std::vector<int>, std::vector<std::size_t>> strata;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    std::vector<int> key;
    for (auto a : balance_on) key.push_back(attribute_level(labels[i], a));
    strata[key].push_back(i);
  }
  if (quota == 0) quota = std::max<std::size_t>(1, labels.size() / 10 / strata.size());

  SplitManifest m;
  m.kind = SplitKind::uniform;
  m.seed = seed;
  m.balance_on = balance_on;
  m.quota = quota;

  std::mt19937_64 rng(seed);
  std::vector<Partition> part(labels.size(), Partition::train);
  std::vector<std::size_t> remainder;
  for (auto& [key, idx] : strata) {
    std::shuffle(idx.begin(), idx.end(), rng);
    std::size_t take = std::min(quota, idx.size());
    for (std::size_t k = 0; k < idx.size(); ++k) {
      if (k < take)
        part[idx[k]] = Partition::test;
      else
        remainder.push_back(idx[k]);
    }
    if (take < quota) {
      std::string name;
      for (std::size_t j = 0; j < balance_on.size(); ++j) {
        if (j) name += ',';
        name += std::string(to_string(balance_on[j])) + "=" + level_name(balance_on[j], key[j]);
      }
      m.shortfalls.push_back({name, idx.size(), quota});
    }
  }

  // Remainder goes 7:2 to train/val in id order after a seeded shuffle.
  std::sort(remainder.begin(), remainder.end());
  std::shuffle(remainder.begin(), remainder.end(), rng);
  auto n_train = static_cast<std::size_t>(std::llround(remainder.size() * 7.0 / 9.0));
  for (std::size_t k = 0; k < remainder.size(); ++k)
    part[remainder[k]] = k < n_train ? Partition::train : Partition::val;

  m.entries.reserve(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) m.entries.push_back({std::move(labels[i]), part[i]});
  return m;
}

void write_manifest(const SplitManifest& m, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write manifest " + path.string());
  out << "# kind=" << to_string(m.kind) << '\n';
  out << "# seed=" << m.seed << '\n';
  out << "# counts train=" << m.count(Partition::train) << " val=" << m.count(Partition::val)
      << " test=" << m.count(Partition::test) << '\n';
  if (m.kind == SplitKind::uniform) {
    out << "# balance_on=";
    for (std::size_t i = 0; i < m.balance_on.size(); ++i) out << (i ? "," : "") << to_string(m.balance_on[i]);
    out << '\n' << "# quota=" << m.quota << '\n';
    for (const auto& s : m.shortfalls)
      out << "# shortfall " << s.stratum << " available=" << s.available << " quota=" << s.quota << '\n';
  }
  for (const auto& e : m.entries) {
    out << e.label.image_id << '\t' << to_string(e.partition) << '\t' << e.label.age_years << '\t'
        << to_string(e.label.sex) << '\t' << to_string(e.label.race) << '\t' << to_string(bin_age(e.label.age_years))
        << '\n';
  }
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

SplitManifest read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read manifest " + path.string());
  SplitManifest m;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (line[0] == '#') {
      std::istringstream hs(line.substr(1));
      std::string tok;
      hs >> tok;
      if (tok.starts_with("kind=")) {
        m.kind = tok.substr(5) == "uniform" ? SplitKind::uniform : SplitKind::random;
      } else if (tok.starts_with("seed=")) {
        m.seed = std::stoull(tok.substr(5));
      } else if (tok.starts_with("balance_on=")) {
        std::istringstream ls(tok.substr(11));
        std::string a;
        while (std::getline(ls, a, ',')) m.balance_on.push_back(parse_attribute(a));
      } else if (tok.starts_with("quota=")) {
        m.quota = std::stoull(tok.substr(6));
      } else if (tok == "shortfall") {
        StratumShortfall s;
        std::string av, q;
        hs >> s.stratum >> av >> q;
        s.available = std::stoull(av.substr(av.find('=') + 1));
        s.quota = std::stoull(q.substr(q.find('=') + 1));
        m.shortfalls.push_back(s);
      }
      continue;
    }
    std::istringstream ls(line);
    std::string id, part, age, sex, race, bin;
    if (!std::getline(ls, id, '\t') || !std::getline(ls, part, '\t') || !std::getline(ls, age, '\t') ||
        !std::getline(ls, sex, '\t') || !std::getline(ls, race, '\t'))
      throw std::runtime_error("malformed manifest line: " + line);
    AttributeLabel l{id, std::stoi(age), parse_sex(sex), parse_race(race)};
    m.entries.push_back({std::move(l), parse_partition(part)});
  }
  return m;
}

}  // namespace maskprivacy
