#include "medsafe/stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include <boost/math/distributions/fisher_f.hpp>
#include <boost/math/distributions/students_t.hpp>

namespace medsafe {

double pairwise_sum(std::span<const double> v) {
  if (v.size() <= 8) {
    double s = 0.0;
    for (double x : v) s += x;
    return s;
  }
  const auto half = v.size() / 2;
  return pairwise_sum(v.first(half)) + pairwise_sum(v.subspan(half));
}

double mean(std::span<const double> v) {
  if (v.empty()) throw std::invalid_argument("mean of empty series");
  return pairwise_sum(v) / static_cast<double>(v.size());
}

double sample_sd(std::span<const double> v) {
  if (v.size() < 2) throw std::invalid_argument("sample_sd needs at least 2 values");
  const double m = mean(v);
  std::vector<double> sq;
  sq.reserve(v.size());
  for (double x : v) sq.push_back((x - m) * (x - m));
  return std::sqrt(pairwise_sum(sq) / static_cast<double>(v.size() - 1));
}

double median(std::vector<double> v) {
  if (v.empty()) throw std::invalid_argument("median of empty series");
  std::sort(v.begin(), v.end());
  const auto n = v.size();
  return n % 2 ? v[n / 2] : (v[n / 2 - 1] + v[n / 2]) / 2.0;
}

std::optional<double> pearson(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw std::invalid_argument("pearson: series lengths differ");
  if (x.size() < 2) throw std::invalid_argument("pearson: need at least 2 pairs");
  const double mx = mean(x), my = mean(y);
  std::vector<double> sxy, sxx, syy;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy.push_back((x[i] - mx) * (y[i] - my));
    sxx.push_back((x[i] - mx) * (x[i] - mx));
    syy.push_back((y[i] - my) * (y[i] - my));
  }
  const double a = pairwise_sum(sxx), b = pairwise_sum(syy);
  if (a <= 0.0 || b <= 0.0) return std::nullopt;
  return std::clamp(pairwise_sum(sxy) / std::sqrt(a * b), -1.0, 1.0);
}

double correlation_p_value(double r, double df) {
  if (df <= 0) return std::numeric_limits<double>::quiet_NaN();
  if (std::abs(r) >= 1.0) return 0.0;
  const double t = r * std::sqrt(df / (1.0 - r * r));
  const boost::math::students_t dist(df);
  return 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(t)));
}

Matrix invert(const Matrix& a) {
  const auto n = a.size();
  Matrix m = a;
  Matrix inv(n, std::vector<double>(n, 0.0));
  double scale = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (m[i].size() != n) throw std::invalid_argument("invert: matrix not square");
    inv[i][i] = 1.0;
    for (double v : m[i]) scale = std::max(scale, std::abs(v));
  }
  const double eps = 1e-12 * std::max(scale, 1.0);
  for (std::size_t col = 0; col < n; ++col) {
    std::size_t pivot = col;
    for (std::size_t r = col + 1; r < n; ++r) {
      if (std::abs(m[r][col]) > std::abs(m[pivot][col])) pivot = r;
    }
    if (std::abs(m[pivot][col]) <= eps) throw SingularMatrix("matrix is singular");
    std::swap(m[col], m[pivot]);
    std::swap(inv[col], inv[pivot]);
    const double d = m[col][col];
    for (std::size_t k = 0; k < n; ++k) {
      m[col][k] /= d;
      inv[col][k] /= d;
    }
    for (std::size_t r = 0; r < n; ++r) {
      if (r == col || m[r][col] == 0.0) continue;
      const double f = m[r][col];
      for (std::size_t k = 0; k < n; ++k) {
        m[r][k] -= f * m[col][k];
        inv[r][k] -= f * inv[col][k];
      }
    }
  }
  return inv;
}

OlsResult ols(const std::vector<std::vector<double>>& predictors, std::span<const double> y) {
  const auto n = y.size();
  const auto p = predictors.size() + 1;
  for (const auto& c : predictors) {
    if (c.size() != n) throw std::invalid_argument("ols: column length differs from response");
  }
  if (n <= p) throw std::invalid_argument("ols: need more observations than parameters");
  const auto x = [&](std::size_t row, std::size_t col) { return col == 0 ? 1.0 : predictors[col - 1][row]; };
  Matrix xtx(p, std::vector<double>(p, 0.0));
  std::vector<double> xty(p, 0.0);
  for (std::size_t a = 0; a < p; ++a) {
    for (std::size_t b = 0; b < p; ++b) {
      std::vector<double> terms(n);
      for (std::size_t i = 0; i < n; ++i) terms[i] = x(i, a) * x(i, b);
      xtx[a][b] = pairwise_sum(terms);
    }
    std::vector<double> terms(n);
    for (std::size_t i = 0; i < n; ++i) terms[i] = x(i, a) * y[i];
    xty[a] = pairwise_sum(terms);
  }
  const auto inv = invert(xtx);
  OlsResult r;
  r.coefficients.assign(p, 0.0);
  for (std::size_t a = 0; a < p; ++a) {
    for (std::size_t b = 0; b < p; ++b) r.coefficients[a] += inv[a][b] * xty[b];
  }
  const double my = mean(y);
  std::vector<double> res2(n), tot2(n);
  for (std::size_t i = 0; i < n; ++i) {
    double fit = 0.0;
    for (std::size_t a = 0; a < p; ++a) fit += r.coefficients[a] * x(i, a);
    res2[i] = (y[i] - fit) * (y[i] - fit);
    tot2[i] = (y[i] - my) * (y[i] - my);
  }
  const double sse = pairwise_sum(res2), sst = pairwise_sum(tot2);
  if (sst <= 0.0) throw std::invalid_argument("ols: response is constant");
  r.df_residual = static_cast<int>(n - p);
  r.r_squared = std::clamp(1.0 - sse / sst, 0.0, 1.0);
  const double sigma2 = sse / r.df_residual;
  const boost::math::students_t tdist(r.df_residual);
  for (std::size_t a = 0; a < p; ++a) {
    const double se = std::sqrt(std::max(0.0, sigma2 * inv[a][a]));
    r.std_errors.push_back(se);
    if (se > 0) {
      const double t = r.coefficients[a] / se;
      r.t_values.push_back(t);
      r.p_values.push_back(2.0 * boost::math::cdf(boost::math::complement(tdist, std::abs(t))));
    } else {
      r.t_values.push_back(std::numeric_limits<double>::infinity());
      r.p_values.push_back(0.0);
    }
  }
  const auto k = static_cast<double>(p - 1);
  if (k > 0) {
    if (r.r_squared >= 1.0) {
      r.f_statistic = std::numeric_limits<double>::infinity();
      r.f_p_value = 0.0;
    } else {
      r.f_statistic = (r.r_squared / k) / ((1.0 - r.r_squared) / r.df_residual);
      const boost::math::fisher_f fdist(k, r.df_residual);
      r.f_p_value = boost::math::cdf(boost::math::complement(fdist, r.f_statistic));
    }
  }
  return r;
}

PartialCorrelation partial_correlation(const std::vector<std::vector<double>>& columns, std::size_t i, std::size_t j) {
  const auto k = columns.size();
  if (i >= k || j >= k || i == j) throw std::invalid_argument("partial_correlation: bad column indices");
  Matrix corr(k, std::vector<double>(k, 1.0));
  for (std::size_t a = 0; a < k; ++a) {
    for (std::size_t b = a + 1; b < k; ++b) {
      const auto r = pearson(columns[a], columns[b]);
      if (!r) throw SingularMatrix("partial_correlation: constant column");
      corr[a][b] = corr[b][a] = *r;
    }
  }
  const auto prec = invert(corr);
  PartialCorrelation out;
  out.r = std::clamp(-prec[i][j] / std::sqrt(prec[i][i] * prec[j][j]), -1.0, 1.0);
  out.df = static_cast<int>(columns[0].size()) - 2 - static_cast<int>(k - 2);
  out.p_value = correlation_p_value(out.r, out.df);
  return out;
}

AnovaResult one_way_anova(const std::vector<std::vector<double>>& groups) {
  if (groups.size() < 2) throw std::invalid_argument("anova: need at least 2 groups");
  std::vector<double> all;
  for (std::size_t g = 0; g < groups.size(); ++g) {
    if (groups[g].size() < 2) throw std::invalid_argument("anova: group " + std::to_string(g) + " has fewer than 2 values");
    all.insert(all.end(), groups[g].begin(), groups[g].end());
  }
  const double grand = mean(all);
  std::vector<double> between, within;
  for (const auto& g : groups) {
    const double m = mean(g);
    between.push_back(static_cast<double>(g.size()) * (m - grand) * (m - grand));
    for (double x : g) within.push_back((x - m) * (x - m));
  }
  AnovaResult r;
  r.df_between = static_cast<int>(groups.size()) - 1;
  r.df_within = static_cast<int>(all.size() - groups.size());
  const double ssb = pairwise_sum(between), ssw = pairwise_sum(within);
  if (ssw <= 0.0) {
    r.f = ssb > 0.0 ? std::numeric_limits<double>::infinity() : 0.0;
    r.p = ssb > 0.0 ? 0.0 : 1.0;
    return r;
  }
  r.f = (ssb / r.df_between) / (ssw / r.df_within);
  const boost::math::fisher_f dist(r.df_between, r.df_within);
  r.p = boost::math::cdf(boost::math::complement(dist, r.f));
  return r;
}

LeveneResult levene_test(const std::vector<std::vector<double>>& groups, LeveneCenter center) {
  std::vector<std::vector<double>> dev;
  for (const auto& g : groups) {
    if (g.size() < 2) throw std::invalid_argument("levene: every group needs at least 2 values");
    const double c = center == LeveneCenter::mean ? mean(g) : median(g);
    std::vector<double> d;
    for (double x : g) d.push_back(std::abs(x - c));
    dev.push_back(std::move(d));
  }
  const auto a = one_way_anova(dev);
  return {a.f, a.p, a.df_between, a.df_within};
}

}  // namespace medsafe
