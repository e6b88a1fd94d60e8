#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace maskprivacy {

enum class Sex { male = 0, female = 1 };
enum class Race { white = 0, black = 1, asian = 2, indian = 3, other = 4 };
enum class AgeBin { baby = 0, child, teenager, young, adult, middle_aged, senior };

inline constexpr int kSexClasses = 2;
inline constexpr int kRaceClasses = 5;
inline constexpr int kAgeBins = 7;

struct MalformedFilename : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct DomainError : std::domain_error {
  using std::domain_error::domain_error;
};

struct TooFewItems : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Ground-truth soft-biometric labels for one face image.
struct AttributeLabel {
  std::string image_id;
  int age_years = 0;
  Sex sex = Sex::male;
  Race race = Race::white;

  bool operator==(const AttributeLabel&) const = default;
};

struct AgeBinRange {
  AgeBin bin;
  int lower;
  std::optional<int> upper;  // nullopt = open-ended
};

/// The seven age brackets, ordered, covering [0, inf).
const std::array<AgeBinRange, kAgeBins>& age_bin_table();

std::string_view to_string(Sex s);
std::string_view to_string(Race r);
std::string_view to_string(AgeBin b);
Sex parse_sex(std::string_view s);
Race parse_race(std::string_view s);
AgeBin parse_age_bin(std::string_view s);

/// Parses a UTK-style name `age_gender_race_anything.ext`. Fields after the
/// third are ignored. Throws MalformedFilename.
AttributeLabel parse_label(std::string_view filename);

/// Inverse of parse_label for the three label fields; `suffix` becomes the
/// trailing part (timestamp + extension).
std::string format_label(const AttributeLabel& label, std::string_view suffix = "0.jpg");

AgeBin bin_age(int age_years);

struct LabelScan {
  std::vector<AttributeLabel> labels;
  /// (filename, reason) for every file that failed to parse.
  std::vector<std::pair<std::string, std::string>> skipped;
};

/// Lists image files (jpg/jpeg/png/ppm/bmp) in `dir`, sorted by name, and
/// parses their labels. Malformed names are collected in `skipped`.
LabelScan scan_labels(const std::filesystem::path& dir);

enum class SplitKind { random, uniform };
enum class Partition { train, val, test };
enum class Attribute { sex, race, age_bin };

std::string_view to_string(SplitKind k);
std::string_view to_string(Partition p);
std::string_view to_string(Attribute a);
Partition parse_partition(std::string_view s);
Attribute parse_attribute(std::string_view s);

/// Integer level of `a` for a label (sex 0..1, race 0..4, age bin 0..6).
int attribute_level(const AttributeLabel& label, Attribute a);
int attribute_levels(Attribute a);
std::string level_name(Attribute a, int level);

struct SplitEntry {
  AttributeLabel label;
  Partition partition;
};

struct StratumShortfall {
  std::string stratum;  // e.g. "sex=female,race=other"
  std::size_t available = 0;
  std::size_t quota = 0;
};

struct SplitManifest {
  SplitKind kind = SplitKind::random;
  std::uint64_t seed = 0;
  std::vector<Attribute> balance_on;
  std::size_t quota = 0;  // uniform split: per-stratum test quota
  std::vector<StratumShortfall> shortfalls;
  std::vector<SplitEntry> entries;  // sorted by image_id

  std::size_t count(Partition p) const;
  std::vector<AttributeLabel> labels(Partition p) const;
};

/// 70/20/10 split after sorting ids; deterministic in (ids, seed).
SplitManifest make_random_split(std::vector<AttributeLabel> labels, std::uint64_t seed);

/// Balanced test partition over the cross product of `balance_on`. Each
/// stratum contributes min(quota, available) test items; the remainder is
/// divided 7:2 into train/val. `quota` 0 means "10% of the data divided
/// evenly across strata".
SplitManifest make_uniform_split(std::vector<AttributeLabel> labels, std::uint64_t seed,
                                 std::vector<Attribute> balance_on, std::size_t quota = 0);

void write_manifest(const SplitManifest& manifest, const std::filesystem::path& path);
SplitManifest read_manifest(const std::filesystem::path& path);

}  // namespace maskprivacy
