#pragma once

#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

namespace medsafe {

using Matrix = std::vector<std::vector<double>>;

class SingularMatrix : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Pairwise summation, so the reduction order is fixed.
double pairwise_sum(std::span<const double> v);
double mean(std::span<const double> v);
/// Sample standard deviation (n - 1 denominator). Requires n >= 2.
double sample_sd(std::span<const double> v);
double median(std::vector<double> v);

/// Absent when either series is constant.
std::optional<double> pearson(std::span<const double> x, std::span<const double> y);
/// Two-sided p-value of a correlation coefficient via t with `df` degrees of freedom.
double correlation_p_value(double r, double df);

/// Gauss-Jordan with partial pivoting. Throws SingularMatrix.
Matrix invert(const Matrix& a);

struct OlsResult {
  std::vector<double> coefficients;  // intercept first
  std::vector<double> std_errors;
  std::vector<double> t_values;
  std::vector<double> p_values;
  double r_squared = 0.0;
  double f_statistic = 0.0;
  double f_p_value = 1.0;
  int df_residual = 0;
};

/// Ordinary least squares of y on the given predictor columns plus an intercept.
OlsResult ols(const std::vector<std::vector<double>>& predictors, std::span<const double> y);

struct PartialCorrelation {
  double r = 0.0;
  double p_value = 1.0;
  int df = 0;
};

/// Correlation of columns[i] and columns[j] controlling for every other column.
PartialCorrelation partial_correlation(const std::vector<std::vector<double>>& columns, std::size_t i, std::size_t j);

struct AnovaResult {
  double f = 0.0;
  double p = 1.0;
  int df_between = 0;
  int df_within = 0;
};

/// One-way ANOVA. Needs >= 2 groups, each with n >= 2.
AnovaResult one_way_anova(const std::vector<std::vector<double>>& groups);

enum class LeveneCenter { mean, median };

struct LeveneResult {
  double statistic = 0.0;
  double p = 1.0;
  int df_between = 0;
  int df_within = 0;
};

LeveneResult levene_test(const std::vector<std::vector<double>>& groups, LeveneCenter center = LeveneCenter::mean);

}  // namespace medsafe
