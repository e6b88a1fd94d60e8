#include "maskprivacy/privacy.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

namespace maskprivacy {
namespace {

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::istringstream ls(line);
  std::string f;
  while (std::getline(ls, f, ',')) {
    while (!f.empty() && (f.back() == '\r' || f.back() == ' ')) f.pop_back();
    out.push_back(f);
  }
  return out;
}

void validate_ranking(const SurveyResponse& r) {
  const int n = static_cast<int>(kRankedAttributes.size());
  std::set<int> seen;
  for (const auto& attr : kRankedAttributes) {
    auto it = r.ranking.find(attr);
    if (it == r.ranking.end()) throw InvalidRanking(r.respondent_id + ": no rank for " + attr);
    if (it->second < 1 || it->second > n)
      throw InvalidRanking(r.respondent_id + ": rank for " + attr + " outside 1.." + std::to_string(n));
    seen.insert(it->second);
  }
  if (static_cast<int>(seen.size()) != n || r.ranking.size() != kRankedAttributes.size())
    throw InvalidRanking(r.respondent_id + ": ranking is not a permutation");
}

}  // namespace

ImportanceWeights compute_rii(const std::vector<SurveyResponse>& responses) {
  if (responses.empty()) throw InvalidRanking("RII needs at least one response");
  const int n = static_cast<int>(kRankedAttributes.size());
  ImportanceWeights totals;
  for (const auto& a : kRankedAttributes) totals[a] = 0.0;
  double grand = 0.0;
  for (const auto& r : responses) {
    validate_ranking(r);
    for (const auto& [attr, rank] : r.ranking) {
      const double w = n - rank + 1;
      totals[attr] += w;
      grand += w;
    }
  }
  for (auto& [attr, v] : totals) v /= grand;
  return totals;
}

std::string to_string(Modality m) { return m == Modality::face ? "face" : "masked_face"; }

PviReport compute_pvi(const ImportanceWeights& s, const Predictability& p, Modality modality) {
  if (s.size() != p.size() || !std::equal(s.begin(), s.end(), p.begin(),
                                          [](const auto& x, const auto& y) { return x.first == y.first; }))
    throw KeyMismatch("importance and predictability name different attributes");
  if (s.empty()) throw KeyMismatch("no attributes");
  double num = 0.0, den = 0.0;
  for (const auto& [attr, si] : s) {
    const double pi = p.at(attr);
    if (!(pi >= 0.0 && pi <= 1.0))
      throw OutOfRangePredictability(attr + ": predictability " + std::to_string(pi) + " outside [0, 1]");
    if (!(si > 0.0)) throw std::invalid_argument(attr + ": importance must be positive");
    num += si * pi;
    den += si;
  }
  return {modality, p, s, num / den};
}

double pvi_reduction(const PviReport& a, const PviReport& b) {
  if (a.s.size() != b.s.size()) throw WeightMismatch("reports use different importance weights");
  for (const auto& [attr, w] : a.s) {
    auto it = b.s.find(attr);
    if (it == b.s.end() || std::abs(it->second - w) > 1e-12)
      throw WeightMismatch("reports use different importance weights");
  }
  const double hi = std::max(a.pvi, b.pvi), lo = std::min(a.pvi, b.pvi);
  if (hi <= 0.0) return 0.0;
  return 100.0 * (hi - lo) / hi;
}

std::vector<SurveyResponse> read_survey(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read survey " + path.string());
  std::string line;
  std::getline(in, line);
  const auto cols = split_csv(line);
  auto col = [&](const std::string& name) -> std::size_t {
    auto it = std::find(cols.begin(), cols.end(), name);
    if (it == cols.end()) throw std::runtime_error(path.string() + ": missing column " + name);
    return static_cast<std::size_t>(it - cols.begin());
  };
  const auto c_id = col("respondent_id");
  const std::array<std::size_t, 3> c_rank = {col("rank_age"), col("rank_race"), col("rank_sex")};

  std::vector<SurveyResponse> out;
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    auto f = split_csv(line);
    if (f.size() < cols.size()) throw std::runtime_error(path.string() + ": short row '" + line + "'");
    SurveyResponse r;
    r.respondent_id = f[c_id];
    for (std::size_t k = 0; k < kRankedAttributes.size(); ++k) {
      try {
        r.ranking[kRankedAttributes[k]] = std::stoi(f[c_rank[k]]);
      } catch (const std::exception&) {
        throw InvalidRanking(r.respondent_id + ": rank is not an integer");
      }
    }
    for (std::size_t i = 0; i < cols.size(); ++i) {
      if (cols[i].starts_with("likert_") && !f[i].empty()) r.likert[cols[i].substr(7)] = std::stoi(f[i]);
      if (cols[i].starts_with("yesno_") && !f[i].empty()) {
        std::string v = f[i];
        std::transform(v.begin(), v.end(), v.begin(), [](unsigned char c) { return std::tolower(c); });
        r.yes_no[cols[i].substr(6)] = v == "yes" || v == "1" || v == "true";
      }
    }
    validate_ranking(r);
    out.push_back(std::move(r));
  }
  return out;
}

std::vector<double> read_csv_column(const std::filesystem::path& path, const std::string& column) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::string line;
  std::getline(in, line);
  const auto cols = split_csv(line);
  auto it = std::find(cols.begin(), cols.end(), column);
  if (it == cols.end()) throw std::runtime_error(path.string() + ": no column " + column);
  const auto idx = static_cast<std::size_t>(it - cols.begin());
  std::vector<double> out;
  while (std::getline(in, line)) {
    auto f = split_csv(line);
    if (idx < f.size() && !f[idx].empty()) out.push_back(std::stod(f[idx]));
  }
  return out;
}

Predictability read_predictability(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  auto j = nlohmann::json::parse(in);
  Predictability p;
  for (const auto& [k, v] : j.items()) p[k] = v.get<double>();
  return p;
}

}  // namespace maskprivacy
