#include "maskprivacy/stats.hpp"

#include <algorithm>
#include <map>
#include <numeric>

namespace maskprivacy {
namespace {

// Midranks (1-based) of the pooled sample.
std::vector<double> midranks(const std::vector<double>& pooled) {
  std::vector<std::size_t> order(pooled.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](auto i, auto j) { return pooled[i] < pooled[j]; });
  std::vector<double> ranks(pooled.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && pooled[order[j + 1]] == pooled[order[i]]) ++j;
    const double r = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
    i = j + 1;
  }
  return ranks;
}

void check_samples(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.empty() || b.empty()) throw std::invalid_argument("Mann-Whitney: both samples must be non-empty");
}

bool all_identical(const std::vector<double>& a, const std::vector<double>& b) {
  auto same = [v = a.front()](double x) { return x == v; };
  return std::all_of(a.begin(), a.end(), same) && std::all_of(b.begin(), b.end(), same);
}

}  // namespace

MannWhitneyResult mann_whitney_u(const std::vector<double>& a, const std::vector<double>& b) {
  check_samples(a, b);
  const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
  const double n = na + nb;
  std::vector<double> pooled(a);
  pooled.insert(pooled.end(), b.begin(), b.end());
  const auto ranks = midranks(pooled);

  const double rank_sum_a = std::accumulate(ranks.begin(), ranks.begin() + a.size(), 0.0);
  MannWhitneyResult r;
  r.u_a = rank_sum_a - na * (na + 1.0) / 2.0;
  r.u_b = na * nb - r.u_a;

  if (all_identical(a, b)) {
    r.degenerate = true;
    r.p_value = 1.0;
    return r;
  }

  std::map<double, double> tie_counts;
  for (double v : pooled) tie_counts[v] += 1.0;
  double tie_term = 0.0;
  for (const auto& [v, t] : tie_counts) tie_term += t * t * t - t;
  const double variance = na * nb / 12.0 * ((n + 1.0) - tie_term / (n * (n - 1.0)));
  const double mean = na * nb / 2.0;
  r.z = (r.u_a - mean - 0.5) / std::sqrt(variance);
  r.p_value = normal_sf(r.z);
  return r;
}

MannWhitneyResult mann_whitney_exact(const std::vector<double>& a, const std::vector<double>& b) {
  check_samples(a, b);
  const std::size_t na = a.size(), n = a.size() + b.size();
  if (n > 20) throw std::invalid_argument("Mann-Whitney exact mode supports at most 20 pooled values");
  std::vector<double> pooled(a);
  pooled.insert(pooled.end(), b.begin(), b.end());
  const auto ranks = midranks(pooled);
  const double offset = static_cast<double>(na) * (na + 1) / 2.0;

  MannWhitneyResult r;
  r.exact = true;
  r.u_a = std::accumulate(ranks.begin(), ranks.begin() + na, 0.0) - offset;
  r.u_b = static_cast<double>(na * (n - na)) - r.u_a;
  if (all_identical(a, b)) {
    r.degenerate = true;
    r.p_value = 1.0;
    return r;
  }

  // Walk all n-choose-na subsets as bitmasks (Gosper's hack).
  std::uint64_t total = 0, at_least = 0;
  const std::uint32_t limit = 1u << n;
  for (std::uint32_t mask = (1u << na) - 1; mask < limit;) {
    double rank_sum = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      if (mask & (1u << i)) rank_sum += ranks[i];
    ++total;
    if (rank_sum - offset >= r.u_a - 1e-9) ++at_least;
    const std::uint32_t c = mask & (~mask + 1u);
    const std::uint32_t s = mask + c;
    if (s == 0) break;
    mask = (((s ^ mask) >> 2) / c) | s;
  }
  r.p_value = static_cast<double>(at_least) / static_cast<double>(total);
  return r;
}

Eigen::MatrixXi confusion_matrix(const std::vector<PredictionRecord>& records) {
  if (records.empty()) throw EmptyInput("confusion_matrix: no records");
  const Task task = records.front().task;
  if (!is_classification(task)) throw std::invalid_argument("confusion_matrix: regression records");
  const int k = head_size(task);
  Eigen::MatrixXi m = Eigen::MatrixXi::Zero(k, k);
  for (const auto& r : records) {
    if (r.task != task) throw std::invalid_argument("confusion_matrix: mixed tasks");
    if (r.predicted_class < 0 || r.predicted_class >= k)
      throw std::out_of_range("confusion_matrix: predicted class out of range");
    ++m(r.true_class(), r.predicted_class);
  }
  return m;
}

SubgroupReport subgroup_accuracy(const std::vector<PredictionRecord>& records, Attribute group_by) {
  SubgroupReport rep;
  rep.group_by = group_by;
  const int levels = attribute_levels(group_by);
  std::vector<std::size_t> support(levels, 0), correct(levels, 0);
  for (const auto& r : records) {
    if (!is_classification(r.task)) throw std::invalid_argument("subgroup_accuracy: regression records");
    const int l = attribute_level(r.truth, group_by);
    ++support[l];
    correct[l] += r.correct();
  }
  for (int l = 0; l < levels; ++l) {
    if (support[l] == 0) {
      rep.empty_levels.push_back(level_name(group_by, l));
      continue;
    }
    rep.levels.push_back({l, level_name(group_by, l), support[l], correct[l],
                          static_cast<double>(correct[l]) / static_cast<double>(support[l])});
  }
  return rep;
}

Eigen::MatrixXd outcome_table(const std::vector<PredictionRecord>& records, Attribute group_by) {
  auto rep = subgroup_accuracy(records, group_by);
  Eigen::MatrixXd t(static_cast<Eigen::Index>(rep.levels.size()), 2);
  for (std::size_t i = 0; i < rep.levels.size(); ++i) {
    t(static_cast<Eigen::Index>(i), 0) = static_cast<double>(rep.levels[i].correct);
    t(static_cast<Eigen::Index>(i), 1) = static_cast<double>(rep.levels[i].support - rep.levels[i].correct);
  }
  return t;
}

}  // namespace maskprivacy
