#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "medsafe/codes.hpp"
#include "medsafe/date.hpp"
#include "medsafe/ehr.hpp"

namespace medsafe {

enum class ContinuityPlan { satisfying, violating };

/// A scenario to plant: `count` patients whose record contains exactly one
/// run of the indicator pattern, `days` long. Satisfying plants default to
/// 14 days and violating plants to 13, i.e. either side of the default
/// continuity threshold.
struct PlantedScenario {
  std::string indicator_id;
  int count = 0;
  ContinuityPlan continuity = ContinuityPlan::satisfying;
  std::optional<int> days;
};

struct CohortSpec {
  int size = 0;
  Date as_of{2025, 10, 1};
  int birth_year_min = 1930;
  int birth_year_max = 2000;
  double female_fraction = 0.5;
  /// Keys: White, Asian, Black, other, unstated, absent (no ethnicity recorded).
  std::map<std::string, double> ethnicity_weights{{"absent", 1.0}};
  std::string id_prefix = "P";
  std::vector<PlantedScenario> plants;
};

struct PlantRecord {
  std::string patient_id;
  std::string indicator_id;
  ContinuityPlan continuity = ContinuityPlan::satisfying;
  int days = 0;
  Date start;

  bool operator==(const PlantRecord&) const = default;
};

struct CohortManifest {
  std::uint64_t seed = 0;
  int size = 0;
  Date as_of;
  std::vector<PlantRecord> plants;
};

struct GeneratedCohort {
  std::vector<PatientProfile> profiles;
  CohortManifest manifest;
};

/// Indicator ids the generator knows how to plant.
const std::vector<std::string>& plantable_indicators();

/// Deterministic for a fixed (spec, seed). Background content never forms an
/// indicator pattern; each planted patient carries one pattern only.
/// Throws std::invalid_argument when plants exceed the cohort size or name an
/// unknown indicator.
GeneratedCohort generate_cohort(const CohortSpec& spec, std::uint64_t seed, const CodeDictionary& dict);

CohortSpec cohort_spec_from_json(const nlohmann::json& j);
void to_json(nlohmann::json& j, const CohortManifest& m);
CohortManifest manifest_from_json(const nlohmann::json& j);

}  // namespace medsafe
