#pragma once

#include <optional>
#include <utility>

#include <nlohmann/json.hpp>

namespace medsafe {

/// Wilson score interval. Throws std::invalid_argument for n < 1 or
/// successes outside [0, n], or confidence outside (0, 1).
std::pair<double, double> wilson_interval(long successes, long n, double confidence = 0.95);

struct Proportion {
  long successes = 0;
  long n = 0;
  double value = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
};

struct BinaryCells {
  long tp = 0;
  long fp = 0;
  long tn = 0;
  long fn = 0;

  [[nodiscard]] long total() const { return tp + fp + tn + fn; }
  bool operator==(const BinaryCells&) const = default;
};

/// Metrics with a zero denominator are absent rather than 0.
struct BinaryMetrics {
  BinaryCells cells;
  std::optional<Proportion> sensitivity;
  std::optional<Proportion> specificity;
  std::optional<Proportion> ppv;
  std::optional<Proportion> npv;
  std::optional<Proportion> accuracy;
  std::optional<double> kappa;
  std::optional<double> f1;
};

BinaryMetrics binary_metrics(const BinaryCells& cells, double confidence = 0.95);

/// Cohen's kappa for a 2x2 table of (possibly fractional) cell weights.
/// Absent when expected agreement is 1.
std::optional<double> cohen_kappa(double tp, double fp, double tn, double fn);

void to_json(nlohmann::json& j, const Proportion& p);
void to_json(nlohmann::json& j, const BinaryMetrics& m);

}  // namespace medsafe
