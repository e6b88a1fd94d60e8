#pragma once

#include <cmath>
#include <limits>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "maskprivacy/records.hpp"

namespace maskprivacy {

struct ZeroMargin : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// ---- special functions ---------------------------------------------------------

namespace detail {

template <typename Scalar>
Scalar gamma_p_series(Scalar a, Scalar x) {
  Scalar term = Scalar(1) / a;
  Scalar sum = term;
  for (int n = 1; n < 1000; ++n) {
    term *= x / (a + n);
    sum += term;
    if (std::abs(term) < std::abs(sum) * std::numeric_limits<Scalar>::epsilon()) break;
  }
  return sum * std::exp(-x + a * std::log(x) - std::lgamma(a));
}

// Modified Lentz evaluation of the continued fraction for Q(a, x).
template <typename Scalar>
Scalar gamma_q_fraction(Scalar a, Scalar x) {
  const Scalar tiny = std::numeric_limits<Scalar>::min() / std::numeric_limits<Scalar>::epsilon();
  Scalar b = x + 1 - a;
  Scalar c = Scalar(1) / tiny;
  Scalar d = Scalar(1) / b;
  Scalar h = d;
  for (int i = 1; i < 1000; ++i) {
    const Scalar an = -i * (i - a);
    b += 2;
    d = an * d + b;
    if (std::abs(d) < tiny) d = tiny;
    c = b + an / c;
    if (std::abs(c) < tiny) c = tiny;
    d = Scalar(1) / d;
    const Scalar delta = d * c;
    h *= delta;
    if (std::abs(delta - 1) < std::numeric_limits<Scalar>::epsilon()) break;
  }
  return std::exp(-x + a * std::log(x) - std::lgamma(a)) * h;
}

}  // namespace detail

/// Regularized upper incomplete gamma Q(a, x) = Gamma(a, x) / Gamma(a).
/// Series for x < a + 1, continued fraction otherwise.
template <typename Scalar>
Scalar regularized_gamma_q(Scalar a, Scalar x) {
  if (!(a > 0)) throw std::domain_error("regularized_gamma_q: a must be positive");
  if (x < 0) throw std::domain_error("regularized_gamma_q: x must be non-negative");
  if (x == 0) return Scalar(1);
  if (x < a + 1) return Scalar(1) - detail::gamma_p_series(a, x);
  return detail::gamma_q_fraction(a, x);
}

/// Upper tail of the chi-square distribution.
template <typename Scalar>
Scalar chi_square_sf(Scalar statistic, int df) {
  return regularized_gamma_q(Scalar(df) / 2, statistic / 2);
}

/// Upper tail of the standard normal.
template <typename Scalar>
Scalar normal_sf(Scalar z) {
  return std::erfc(z / std::sqrt(Scalar(2))) / 2;
}

// ---- tests -----------------------------------------------------------------------

enum class Tail { one, two };

struct TestResult {
  double statistic = 0.0;
  int df = 0;
  double p_value = 1.0;
  Tail tail = Tail::two;
};

/// Pearson chi-square test of independence on an r x c table of counts.
/// Expected counts come from the margins; no continuity correction unless
/// `yates` is set (2x2 only). Throws ZeroMargin.
template <typename Derived>
TestResult chi_square_independence(const Eigen::MatrixBase<Derived>& table, bool yates = false) {
  using Scalar = typename Derived::Scalar;
  const Eigen::Index rows = table.rows(), cols = table.cols();
  if (rows < 2 || cols < 2) throw std::invalid_argument("chi-square needs at least a 2x2 table");
  if ((table.array() < Scalar(0)).any()) throw std::invalid_argument("chi-square: negative count");
  const auto row_sums = table.rowwise().sum().eval();
  const auto col_sums = table.colwise().sum().eval();
  if ((row_sums.array() <= Scalar(0)).any() || (col_sums.array() <= Scalar(0)).any())
    throw ZeroMargin("chi-square: a row or column margin is zero");
  const double total = static_cast<double>(row_sums.sum());
  const bool correct = yates && rows == 2 && cols == 2;

  double stat = 0.0;
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) {
      const double expected = static_cast<double>(row_sums(i)) * static_cast<double>(col_sums(j)) / total;
      double diff = std::abs(static_cast<double>(table(i, j)) - expected);
      if (correct) diff = std::max(0.0, diff - 0.5);
      stat += diff * diff / expected;
    }
  TestResult r;
  r.statistic = stat;
  r.df = static_cast<int>((rows - 1) * (cols - 1));
  r.p_value = chi_square_sf(stat, r.df);
  r.tail = Tail::one;
  return r;
}

struct MannWhitneyResult {
  double u_a = 0.0;  // pairs (a, b) with a > b, ties count one half
  double u_b = 0.0;
  double z = 0.0;
  double p_value = 1.0;  // one-tailed, alternative a > b
  bool degenerate = false;  // every value identical
  bool exact = false;
};

/// Mann-Whitney U from midranks; p from the normal approximation with the
/// tie-corrected variance and a 0.5 continuity correction, one-tailed in the
/// direction a > b.
MannWhitneyResult mann_whitney_u(const std::vector<double>& a, const std::vector<double>& b);

/// Exact one-tailed p = P(U >= U_obs) over all C(n_a + n_b, n_a) relabellings
/// of the pooled values. n_a + n_b must not exceed 20.
MannWhitneyResult mann_whitney_exact(const std::vector<double>& a, const std::vector<double>& b);

// ---- records ---------------------------------------------------------------------

/// counts(i, j) = number of records with true class i predicted as j.
Eigen::MatrixXi confusion_matrix(const std::vector<PredictionRecord>& records);

struct SubgroupStats {
  int level = 0;
  std::string name;
  std::size_t support = 0;
  std::size_t correct = 0;
  double accuracy = 0.0;
};

struct SubgroupReport {
  Attribute group_by = Attribute::sex;
  std::vector<SubgroupStats> levels;  // levels with support > 0
  std::vector<std::string> empty_levels;
};

SubgroupReport subgroup_accuracy(const std::vector<PredictionRecord>& records, Attribute group_by);

/// Rows: levels of `group_by` with support; columns: (correct, incorrect).
Eigen::MatrixXd outcome_table(const std::vector<PredictionRecord>& records, Attribute group_by);

}  // namespace maskprivacy
