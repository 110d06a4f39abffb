#include "medsafe/metrics.hpp"

#include <cmath>
#include <stdexcept>

#include <boost/math/distributions/normal.hpp>

namespace medsafe {

std::pair<double, double> wilson_interval(long successes, long n, double confidence) {
  if (n < 1) throw std::invalid_argument("wilson_interval: n must be at least 1");
  if (successes < 0 || successes > n) throw std::invalid_argument("wilson_interval: successes outside [0, n]");
  if (!(confidence > 0.0 && confidence < 1.0)) throw std::invalid_argument("wilson_interval: confidence outside (0, 1)");
  const double z = boost::math::quantile(boost::math::normal(), 0.5 + confidence / 2.0);
  const double nn = static_cast<double>(n);
  const double p = static_cast<double>(successes) / nn;
  const double z2 = z * z;
  const double denom = 1.0 + z2 / nn;
  const double centre = (p + z2 / (2.0 * nn)) / denom;
  const double half = z * std::sqrt(p * (1.0 - p) / nn + z2 / (4.0 * nn * nn)) / denom;
  double lo = centre - half, hi = centre + half;
  if (successes == 0) lo = 0.0;
  if (successes == n) hi = 1.0;
  return {std::max(0.0, lo), std::min(1.0, hi)};
}

namespace {

std::optional<Proportion> proportion(long k, long n, double confidence) {
  if (n == 0) return std::nullopt;
  const auto [lo, hi] = wilson_interval(k, n, confidence);
  return Proportion{k, n, static_cast<double>(k) / static_cast<double>(n), lo, hi};
}

}  // namespace

std::optional<double> cohen_kappa(double tp, double fp, double tn, double fn) {
  const double n = tp + fp + tn + fn;
  if (n <= 0) return std::nullopt;
  const double po = (tp + tn) / n;
  const double pe = ((tp + fp) * (tp + fn) + (fn + tn) * (fp + tn)) / (n * n);
  if (pe >= 1.0) return std::nullopt;
  return (po - pe) / (1.0 - pe);
}

BinaryMetrics binary_metrics(const BinaryCells& c, double confidence) {
  if (c.tp < 0 || c.fp < 0 || c.tn < 0 || c.fn < 0) throw std::invalid_argument("binary_metrics: negative cell");
  if (c.total() < 1) throw std::invalid_argument("binary_metrics: empty table");
  BinaryMetrics m;
  m.cells = c;
  m.sensitivity = proportion(c.tp, c.tp + c.fn, confidence);
  m.specificity = proportion(c.tn, c.tn + c.fp, confidence);
  m.ppv = proportion(c.tp, c.tp + c.fp, confidence);
  m.npv = proportion(c.tn, c.tn + c.fn, confidence);
  m.accuracy = proportion(c.tp + c.tn, c.total(), confidence);
  m.kappa = cohen_kappa(static_cast<double>(c.tp), static_cast<double>(c.fp), static_cast<double>(c.tn),
                        static_cast<double>(c.fn));
  if (m.ppv && m.sensitivity) {
    const double p = m.ppv->value, r = m.sensitivity->value;
    m.f1 = p + r > 0 ? 2 * p * r / (p + r) : 0.0;
  }
  return m;
}

void to_json(nlohmann::json& j, const Proportion& p) {
  j = nlohmann::json{{"value", p.value}, {"ci_low", p.ci_low}, {"ci_high", p.ci_high}, {"successes", p.successes}, {"n", p.n}};
}

void to_json(nlohmann::json& j, const BinaryMetrics& m) {
  const auto opt = [](const auto& v) { return v ? nlohmann::json(*v) : nlohmann::json(); };
  j = nlohmann::json{{"cells", {{"TP", m.cells.tp}, {"FP", m.cells.fp}, {"TN", m.cells.tn}, {"FN", m.cells.fn}}},
                     {"sensitivity", opt(m.sensitivity)},
                     {"specificity", opt(m.specificity)},
                     {"ppv", opt(m.ppv)},
                     {"npv", opt(m.npv)},
                     {"accuracy", opt(m.accuracy)},
                     {"kappa", opt(m.kappa)},
                     {"f1", opt(m.f1)}};
}

}  // namespace medsafe
