#include <gtest/gtest.h>

#include "fixtures.hpp"
#include "medsafe/cohort.hpp"
#include "medsafe/indicator.hpp"

using namespace medsafe;
using namespace medsafe::fixture;

namespace {

std::set<std::string> matched_by(const std::vector<PatientProfile>& cohort, const std::string& rule_id, Date horizon) {
  std::set<std::string> out;
  const auto run = run_indicators(cohort, shipped_rules(), shipped_codes(), horizon);
  for (const auto& [pid, ids] : run.matched_indicators()) {
    if (ids.contains(rule_id)) out.insert(pid);
  }
  return out;
}

}  // namespace

TEST(GenerateCohort, PlantedMethotrexatePatientsAreExactlyMatched) {
  CohortSpec spec;
  spec.size = 100;
  spec.plants = {{"filter_26", 2, ContinuityPlan::satisfying, std::nullopt}};
  const auto c = generate_cohort(spec, 42, shipped_codes());
  ASSERT_EQ(c.profiles.size(), 100u);
  ASSERT_EQ(c.manifest.plants.size(), 2u);
  std::set<std::string> planted;
  for (const auto& p : c.manifest.plants) planted.insert(p.patient_id);
  EXPECT_EQ(matched_by(c.profiles, "filter_26", spec.as_of), planted);
  const auto run = run_indicators(c.profiles, shipped_rules(), shipped_codes(), spec.as_of);
  for (const auto& [pid, ids] : run.matched_indicators()) {
    if (planted.contains(pid)) {
      EXPECT_EQ(ids, std::set<std::string>{"filter_26"});
    } else {
      EXPECT_TRUE(ids.empty()) << pid;
    }
  }
}

TEST(GenerateCohort, CleanCohortMatchesNothing) {
  CohortSpec spec;
  spec.size = 10;
  const auto c = generate_cohort(spec, 1, shipped_codes());
  const auto run = run_indicators(c.profiles, shipped_rules(), shipped_codes(), spec.as_of);
  for (const auto& [pid, ids] : run.matched_indicators()) EXPECT_TRUE(ids.empty()) << pid;
}

TEST(GenerateCohort, DeterministicForSeed) {
  CohortSpec spec;
  spec.size = 50;
  spec.plants = {{"filter_23", 3, ContinuityPlan::satisfying, std::nullopt}};
  const auto a = generate_cohort(spec, 5, shipped_codes());
  const auto b = generate_cohort(spec, 5, shipped_codes());
  EXPECT_EQ(a.profiles, b.profiles);
  EXPECT_EQ(a.manifest.plants, b.manifest.plants);
  EXPECT_NE(generate_cohort(spec, 6, shipped_codes()).profiles, a.profiles);
}

TEST(GenerateCohort, RejectsBadSpecs) {
  CohortSpec spec;
  spec.size = 3;
  spec.plants = {{"filter_26", 4, ContinuityPlan::satisfying, std::nullopt}};
  EXPECT_THROW((void)generate_cohort(spec, 1, shipped_codes()), std::invalid_argument);
  spec.plants = {{"filter_16", 1, ContinuityPlan::satisfying, std::nullopt}};
  EXPECT_THROW((void)generate_cohort(spec, 1, shipped_codes()), std::invalid_argument);
}

TEST(GenerateCohort, EveryPlantRecalledAndViolatorsOnlyRaw) {
  CohortSpec spec;
  spec.size = 200;
  for (const auto& id : plantable_indicators()) {
    spec.plants.push_back({id, 3, ContinuityPlan::satisfying, std::nullopt});
    spec.plants.push_back({id, 2, ContinuityPlan::violating, std::nullopt});
  }
  const auto c = generate_cohort(spec, 2024, shipped_codes());
  const auto run = run_indicators(c.profiles, shipped_rules(), shipped_codes(), spec.as_of);
  const auto matched = run.matched_indicators();
  std::map<std::string, const PlantRecord*> plant_of;
  for (const auto& p : c.manifest.plants) plant_of[p.patient_id] = &p;
  for (const auto& [pid, outcomes] : run.by_patient) {
    const auto it = plant_of.find(pid);
    for (const auto& o : outcomes) {
      const bool is_target = it != plant_of.end() && it->second->indicator_id == o.indicator_id;
      if (!is_target) {
        EXPECT_TRUE(o.raw.empty()) << pid << " " << o.indicator_id;
        continue;
      }
      ASSERT_EQ(o.raw.size(), 1u) << pid;
      EXPECT_EQ(o.raw[0].start, it->second->start);
      EXPECT_EQ(o.raw[0].length(), it->second->days);
      EXPECT_EQ(o.continuity.matched, it->second->continuity == ContinuityPlan::satisfying) << pid;
    }
  }
}

TEST(GenerateCohort, ProfilesSatisfyInvariants) {
  CohortSpec spec;
  spec.size = 100;
  spec.ethnicity_weights = {{"absent", 2}, {"White", 1}, {"Asian", 1}};
  spec.plants = {{"filter_55", 5, ContinuityPlan::satisfying, std::nullopt}};
  const auto c = generate_cohort(spec, 77, shipped_codes());
  std::set<std::string> ids;
  for (const auto& p : c.profiles) {
    EXPECT_NO_THROW(validate_profile(p, spec.as_of));
    EXPECT_TRUE(ids.insert(p.patient_id).second);
  }
}

TEST(CohortManifest, JsonRoundTrip) {
  CohortSpec spec;
  spec.size = 30;
  spec.plants = {{"filter_05", 2, ContinuityPlan::violating, std::nullopt}};
  const auto c = generate_cohort(spec, 9, shipped_codes());
  const nlohmann::json j = c.manifest;
  const auto back = manifest_from_json(j);
  EXPECT_EQ(back.plants, c.manifest.plants);
  EXPECT_EQ(back.seed, 9u);
}

TEST(CohortSpec, ParsesFromJson) {
  const auto s = cohort_spec_from_json(nlohmann::json::parse(
      R"({"size": 40, "as_of": "2025-06-01", "birth_year_range": [1940, 1990],
          "plants": [{"indicator": "filter_33", "count": 2, "continuity": "violating"}]})"));
  EXPECT_EQ(s.size, 40);
  EXPECT_EQ(s.as_of, D("2025-06-01"));
  ASSERT_EQ(s.plants.size(), 1u);
  EXPECT_EQ(s.plants[0].continuity, ContinuityPlan::violating);
  EXPECT_THROW((void)cohort_spec_from_json(nlohmann::json::parse(
                   R"({"size": 1, "plants": [{"indicator": "filter_33", "count": 1, "continuity": "maybe"}]})")),
               std::invalid_argument);
}
