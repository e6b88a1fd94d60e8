#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace maskprivacy {

struct InvalidRanking : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct KeyMismatch : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct OutOfRangePredictability : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct WeightMismatch : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Attributes named in the sorting activity, in a fixed order.
inline const std::array<std::string, 3> kRankedAttributes = {"age", "race", "sex"};

struct SurveyResponse {
  std::string respondent_id;
  std::map<std::string, int> ranking;  // attribute -> rank, 1 = most important
  std::map<std::string, int> likert;   // question -> 1..3
  std::map<std::string, bool> yes_no;
};

/// Importance per attribute; normalised weights sum to 1.
using ImportanceWeights = std::map<std::string, double>;
using Predictability = std::map<std::string, double>;

/// RII with linear rank weights w = n - rank + 1 (3/2/1 for three
/// attributes), normalised by the grand total over all respondents.
ImportanceWeights compute_rii(const std::vector<SurveyResponse>& responses);

enum class Modality { face, masked_face };
std::string to_string(Modality m);

struct PviReport {
  Modality modality = Modality::face;
  Predictability p;
  ImportanceWeights s;
  double pvi = 0.0;
};

/// pvi = sum_i s_i p_i / sum_i s_i.
PviReport compute_pvi(const ImportanceWeights& s, const Predictability& p, Modality modality = Modality::face);

/// 100 * (high - low) / high between the two PVIs. Throws WeightMismatch
/// unless both reports carry the same weights.
double pvi_reduction(const PviReport& a, const PviReport& b);

/// Reference values printed in the source study.
namespace reference {
inline const ImportanceWeights kRii = {{"age", 0.3765}, {"race", 0.3353}, {"sex", 0.2882}};
/// Unmasked state-of-the-art accuracies (sex, race, age classification).
inline const Predictability kFaceSota = {{"age", 0.701}, {"race", 0.9123}, {"sex", 0.9823}};
/// Best masked-face accuracies on the uniform split.
inline const Predictability kMaskedBest = {{"age", 0.6794}, {"race", 0.8312}, {"sex", 0.9465}};
inline constexpr double kPrintedPviFace = 0.828;
inline constexpr double kPrintedPviMasked = 0.853;
}  // namespace reference

/// Survey CSV: respondent_id,rank_age,rank_race,rank_sex,likert_face,likert_masked,yesno_mask_private
std::vector<SurveyResponse> read_survey(const std::filesystem::path& path);

/// Numeric column from any CSV with a header row.
std::vector<double> read_csv_column(const std::filesystem::path& path, const std::string& column);

/// Predictability JSON: {"age": 0.70, "race": 0.91, "sex": 0.98}.
Predictability read_predictability(const std::filesystem::path& path);

}  // namespace maskprivacy
