#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "medsafe/ehr.hpp"
#include "medsafe/indicator.hpp"

namespace medsafe {

struct SampleCounts {
  int indicator_positive = 100;
  int matched_negative = 100;
  int random_negative_system_positive = 50;
  int random_negative_system_negative = 50;
};

/// Nearest-neighbour matching over z-scored (age, female, active meds,
/// GP events since 2020). Weights scale each standardised feature.
struct MatcherConfig {
  Date as_of;
  std::array<double, 4> weights{1.0, 1.0, 1.0, 1.0};
};

struct EvaluationSet {
  std::vector<std::string> indicator_positive;
  std::vector<std::string> matched_negative;
  std::vector<std::string> random_negative_system_positive;
  std::vector<std::string> random_negative_system_negative;
  /// indicator_positive patient -> stratum (indicator id) it was drawn for.
  std::map<std::string, std::string> stratum_of;
  /// matched_negative patient -> the positive it was matched to.
  std::map<std::string, std::string> matched_to;
  std::vector<std::string> warnings;

  [[nodiscard]] std::vector<std::string> all_ids() const;
  bool operator==(const EvaluationSet&) const = default;
};

class InsufficientPool : public std::runtime_error {
 public:
  InsufficientPool(std::string stratum, int needed, int available);
  [[nodiscard]] const std::string& stratum() const { return stratum_; }

 private:
  std::string stratum_;
};

/// Strategy 1: indicator-positive patients, round-robin across indicator
/// strata. Strategy 2: indicator-negative nearest neighbours of strategy 1.
/// Strategy 3: system-flagged and unflagged patients from the remaining
/// indicator-negative pool; needs `system_flags` when those counts are > 0.
EvaluationSet sample_cases(std::span<const PatientProfile> cohort, const IndicatorRun& indicators,
                           const SampleCounts& counts, const MatcherConfig& matcher,
                           const std::map<std::string, bool>& system_flags, std::uint64_t seed);

void to_json(nlohmann::json& j, const EvaluationSet& s);
EvaluationSet evaluation_set_from_json(const nlohmann::json& j);

/// White, Asian and Black variants differing from the base only in ethnicity.
std::array<PatientProfile, 3> make_ethnicity_variants(const PatientProfile& profile);

}  // namespace medsafe
