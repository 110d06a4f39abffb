// One PASS/FAIL line per acceptance criterion; exit status 1 if any fails.

#include <chrono>
#include <cmath>
#include <functional>
#include <iostream>
#include <map>
#include <sstream>

#include "analysis_fixture.hpp"
#include "day_oracle.hpp"
#include "fixtures.hpp"
#include "medsafe/analysis.hpp"
#include "medsafe/cohort.hpp"
#include "medsafe/indicator.hpp"
#include "medsafe/metrics.hpp"
#include "medsafe/review.hpp"
#include "medsafe/stats.hpp"
#include "medsafe/stub_model.hpp"
#include "medsafe/util.hpp"
#include "pipeline_fixture.hpp"
#include "review_corpus.hpp"
#include "scoring_fixture.hpp"

using namespace medsafe;
using Clock = std::chrono::steady_clock;

namespace {

// Tolerances and limits.
constexpr double kScoreTol = 1e-9;
constexpr double kScoringLimitS = 1.0;
constexpr double kMetricsLimitS = 1.0;
constexpr double kCeilingTolPct = 0.05;
constexpr double kGapTolPct = 0.05;
constexpr double kKappaTol = 0.002;
constexpr double kF1Tol = 0.001;
constexpr double kAccuracyTolPct = 0.05;
constexpr double kMonteCarloTol = 0.003;
constexpr long kMonteCarloN = 2'000'000;
constexpr double kDeltaTolPct = 0.1;
constexpr double kIndicatorLimitS = 60.0;
constexpr double kStatsTol = 1e-6;
constexpr double kCorrelationTol = 0.02;
constexpr int kCorrelationN = 10'000;
constexpr double kSmokeLimitS = 300.0;

struct Result {
  bool pass = true;
  std::ostringstream detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail << " [failed: " << what << "]";
    }
  }
};

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string pct(double v, int places) { return format_fixed(100 * v, places); }

Result scoring_oracle() {
  Result r;
  const auto t0 = Clock::now();
  const auto& cases = fixture::clinician_cases();
  double worst = 0;
  bool has_reference = false;
  for (const auto& c : cases) {
    const double got = clinician_score(c.review, c.assessment);
    worst = std::max(worst, std::abs(got - c.expected));
    if (std::abs(c.expected - 0.5227272727272727) < 1e-12) has_reference = true;
  }
  const double dt = seconds_since(t0);
  r.require(cases.size() == 12, "12 cases");
  r.require(has_reference, "P=0.6/R=0.5/S_int=0.5 case present");
  r.require(worst <= kScoreTol, "max error <= 1e-9");
  r.require(dt < kScoringLimitS, "runtime < 1 s");
  r.detail << "12 cases, max |error| " << worst << " (tol " << kScoreTol << "), " << format_fixed(dt * 1e3, 2) << " ms";
  return r;
}

Result binary_metrics_oracle() {
  Result r;
  const auto t0 = Clock::now();
  const auto m = binary_metrics({206, 12, 59, 0});
  const double dt = seconds_since(t0);
  r.require(format_fixed(m.sensitivity->value, 3) == "1.000", "sensitivity 1.000");
  r.require(format_fixed(m.specificity->value, 3) == "0.831", "specificity 0.831");
  r.require(format_fixed(m.accuracy->value, 3) == "0.957", "accuracy 0.957");
  r.require(format_fixed(m.ppv->value, 3) == "0.945", "PPV 0.945");
  r.require(format_fixed(m.npv->value, 3) == "1.000", "NPV 1.000");
  r.require(pct(m.sensitivity->ci_low, 1) == "98.2" && pct(m.sensitivity->ci_high, 1) == "100.0", "sensitivity CI");
  r.require(pct(m.specificity->ci_low, 1) == "72.7" && pct(m.specificity->ci_high, 1) == "90.1", "specificity CI");
  r.require(dt < kMetricsLimitS, "runtime < 1 s");
  r.detail << "sensitivity " << format_fixed(m.sensitivity->value, 3) << " [" << pct(m.sensitivity->ci_low, 1) << ", "
           << pct(m.sensitivity->ci_high, 1) << "], specificity " << format_fixed(m.specificity->value, 3) << " ["
           << pct(m.specificity->ci_low, 1) << ", " << pct(m.specificity->ci_high, 1) << "], acc "
           << format_fixed(m.accuracy->value, 3) << ", PPV " << format_fixed(m.ppv->value, 3) << ", NPV "
           << format_fixed(m.npv->value, 3);
  return r;
}

Result fully_correct_identity() {
  Result r;
  std::vector<LevelOutcome> outcomes;
  for (const auto& g : fixture::outcome_table_fixture()) outcomes.push_back(classify_levels(g.review, g.assessment));
  const auto t = outcome_table(outcomes);
  const int l3 = t["level3"]["correct"].get<int>();
  const int tn = t["binary"]["TN"].get<int>();
  const int count = t["fully_correct"]["count"].get<int>();
  const int n = t["fully_correct"]["n"].get<int>();
  const double rate = t["fully_correct"]["rate"].get<double>();
  r.require(l3 == 71 && tn == 59, "71 level-3 correct and 59 TN");
  r.require(count == l3 + tn && count == 130 && n == 277, "130 of 277");
  r.require(pct(rate, 1) == "46.9", "46.9%");
  r.detail << l3 << " + " << tn << " = " << count << " of " << n << " = " << pct(rate, 1) << "%";
  return r;
}

Result consistency_ceiling_oracle() {
  Result r;
  const double ceiling = consistency_ceiling(0.964, 0.629, 206, 71);
  const double gap = 0.957 - ceiling;
  r.require(std::abs(100 * ceiling - 87.8) <= kCeilingTolPct, "ceiling 87.8 +/- 0.05");
  r.require(std::abs(100 * gap - 7.9) <= kGapTolPct, "gap 7.9 +/- 0.05");
  r.detail << "ceiling " << pct(ceiling, 3) << "% (87.8 +/- " << kCeilingTolPct << "), gap " << pct(gap, 3)
           << "% (7.9 +/- " << kGapTolPct << ")";
  return r;
}

Result reweighting_oracle() {
  Result r;
  const auto m = reweight_population(0.463, 0.902, 1.0);
  const double spec = 100 * *m.specificity;
  r.require(spec >= 92.2 && spec <= 92.3, "specificity in [92.2, 92.3]");
  r.require(std::abs(100 * *m.accuracy - 95.5) <= kAccuracyTolPct, "accuracy 95.5");
  r.require(std::abs(*m.kappa - 0.909) <= kKappaTol, "kappa 0.909 +/- 0.002");
  r.require(std::abs(*m.f1 - 0.948) <= kF1Tol, "F1 0.948 +/- 0.001");
  const auto s = fixture::simulate_population(0.463, 0.902, 1.0, kMonteCarloN, 20251014);
  double worst = 0;
  for (const auto& [a, b] : std::vector<std::pair<double, double>>{{*m.specificity, *s.specificity},
                                                                  {*m.sensitivity, *s.sensitivity},
                                                                  {*m.accuracy, *s.accuracy},
                                                                  {*m.kappa, *s.kappa},
                                                                  {*m.f1, *s.f1}}) {
    worst = std::max(worst, std::abs(a - b));
  }
  r.require(worst <= kMonteCarloTol, "Monte-Carlo within 0.003");
  r.detail << "specificity " << format_fixed(spec, 3) << "%, acc " << pct(*m.accuracy, 2) << "%, kappa "
           << format_fixed(*m.kappa, 4) << ", F1 " << format_fixed(*m.f1, 4) << ", Monte-Carlo max |diff| "
           << format_fixed(worst, 5) << " at n=" << kMonteCarloN;
  return r;
}

Result model_comparison_oracle() {
  Result r;
  const double delta = 100 * relative_delta(0.459, 0.334);
  r.require(std::abs(delta - 37.4) <= kDeltaTolPct, "delta 37.4 +/- 0.1");
  const ScoreTable table{{"a", {{0.2, 0.4}, {0.5, 0.7}, {0.3, 0.3}, {0.9, 0.1}}},
                         {"b", {{0.1, 0.1}, {0.2, 0.4}, {0.6, 0.6}}}};
  const auto c = model_comparison(table, {{"a", "b"}});
  bool sem_exact = true;
  for (const auto& m : c.models) {
    const double expected = sample_sd(m.epoch_means) / std::sqrt(static_cast<double>(m.epoch_means.size()));
    sem_exact = sem_exact && m.sem && *m.sem == expected;
  }
  r.require(sem_exact, "SEM equals sd/sqrt(k)");
  r.detail << "relative decrease " << format_fixed(delta, 3) << "% (37.4 +/- " << kDeltaTolPct
           << "), SEM exact on " << c.models.size() << " models";
  return r;
}

std::vector<DayInterval> as_days(const std::vector<MatchInterval>& v) {
  std::vector<DayInterval> out;
  for (const auto& m : v) out.push_back({m.start, m.end});
  return out;
}

Result indicator_suite() {
  Result r;
  const auto t0 = Clock::now();
  const auto& dict = fixture::shipped_codes();
  const auto& rules = fixture::shipped_rules();
  const auto& ids = plantable_indicators();
  CohortSpec spec;
  spec.size = 1000;
  spec.ethnicity_weights = {{"White", 0.7}, {"Asian", 0.1}, {"Black", 0.1}, {"absent", 0.1}};
  for (std::size_t i = 0; i < ids.size(); ++i) {
    spec.plants.push_back({ids[i], i < 2 ? 5 : 4, ContinuityPlan::satisfying, std::nullopt});
    spec.plants.push_back({ids[i], 2, ContinuityPlan::violating, std::nullopt});
  }
  const auto cohort = generate_cohort(spec, 20251001, dict);
  const auto run = run_indicators(cohort.profiles, rules, dict, spec.as_of);
  std::map<std::string, const PlantRecord*> plant_of;
  std::set<std::string> filters;
  for (const auto& p : cohort.manifest.plants) {
    plant_of[p.patient_id] = &p;
    filters.insert(p.indicator_id);
  }
  int recalled = 0, satisfying = 0, violating = 0, rejected = 0, false_positive = 0, boundary_ok = 0;
  for (const auto& [pid, outcomes] : run.by_patient) {
    const auto it = plant_of.find(pid);
    for (const auto& o : outcomes) {
      const bool target = it != plant_of.end() && it->second->indicator_id == o.indicator_id;
      if (!target) {
        if (o.continuity.matched) ++false_positive;
        continue;
      }
      const auto& plant = *it->second;
      if (plant.continuity == ContinuityPlan::satisfying) {
        ++satisfying;
        if (o.continuity.matched) ++recalled;
        if (plant.days == 14 && o.continuity.matched) ++boundary_ok;
      } else {
        ++violating;
        if (!o.continuity.matched && plant.days == 13 && !o.raw.empty()) ++rejected;
      }
    }
  }
  long compared = 0, mismatches = 0;
  for (const auto& rule : rules) {
    for (const auto& p : cohort.profiles) {
      ++compared;
      if (as_days(evaluate_rule(rule, p, dict, spec.as_of)) !=
          fixture::brute_force_days(rule.condition, p, dict, rule.since, spec.as_of)) {
        ++mismatches;
      }
    }
  }
  const double dt = seconds_since(t0);
  r.require(cohort.profiles.size() == 1000 && cohort.manifest.plants.size() == 50, "1000 patients, 50 plants");
  r.require(filters.size() == 8, "all 8 filters planted");
  r.require(satisfying > 0 && recalled == satisfying, "recall 100%");
  r.require(false_positive == 0, "no false-positive matches");
  r.require(violating > 0 && rejected == violating, "every 13-day plant rejected");
  r.require(boundary_ok == satisfying, "every 14-day plant accepted");
  r.require(mismatches == 0, "engine equals brute force");
  r.require(dt < kIndicatorLimitS, "runtime < 60 s");
  r.detail << "recall " << recalled << "/" << satisfying << ", false positives " << false_positive << ", 13-day rejected "
           << rejected << "/" << violating << ", 14-day accepted " << boundary_ok << "/" << satisfying
           << ", brute-force mismatches " << mismatches << "/" << compared << ", " << format_fixed(dt, 2) << " s";
  return r;
}

Result failure_tally_oracle() {
  Result r;
  const auto reasons = failure_tally(fixture::failure_reason_fixture());
  std::vector<int> counts;
  for (const auto& row : reasons.by_reason) counts.push_back(row.count);
  r.require(counts == std::vector<int>{51, 49, 30, 25, 23}, "reason counts");
  r.require(reasons.instances == 178, "178 instances");
  const auto harm = failure_tally(fixture::harm_fixture());
  const auto one = [&](int i) { return format_fixed(harm.by_harm[static_cast<std::size_t>(i)].percent, 1); };
  r.require(one(0) == "48.3" && one(1) == "43.5" && one(2) == "7.5", "harm 48.3/43.5/7.5");
  r.detail << "reasons 51/49/30/25/23 -> " << reasons.instances << " instances over " << reasons.patients
           << " patients; harm " << one(0) << "/" << one(1) << "/" << one(2) << "% of " << harm.instances;
  return r;
}

Result statistics_suite() {
  Result r;
  const std::vector<std::vector<double>> groups = {{4, 5, 6, 5, 4, 7}, {6, 7, 8, 7, 6}, {9, 8, 10, 9, 11, 12, 9}};
  // F = (82.576/2) / (25.14/15); Levene on absolute deviations from group means.
  const auto a = one_way_anova(groups);
  const auto l = levene_test(groups, LeveneCenter::mean);
  r.require(std::abs(a.f - 24.64729821388199) <= kStatsTol, "ANOVA F");
  r.require(std::abs(l.statistic - 0.8113175368629494) <= kStatsTol, "Levene W");
  const auto same = one_way_anova({{1, 2, 3}, {1, 2, 3}, {1, 2, 3}});
  r.require(same.f == 0.0, "identical groups F = 0");
  const auto fx = fixture::complexity_fixture(2024, kCorrelationN);
  const auto c = complexity_analysis(fx.features, fx.scores);
  const auto& target = fixture::complexity_target();
  double worst = 0;
  for (int i = 0; i < 4; ++i) {
    for (int j = 0; j < 4; ++j) worst = std::max(worst, std::abs(*c.pearson[i][j] - target[i][j]));
  }
  r.require(worst <= kCorrelationTol, "r within 0.02");
  r.detail << "F " << format_fixed(a.f, 8) << ", Levene " << format_fixed(l.statistic, 8) << ", identical F "
           << same.f << ", planted r max |err| " << format_fixed(worst, 4) << " at n=" << kCorrelationN;
  return r;
}

Result robustness() {
  Result r;
  int rejected = 0;
  for (const auto& c : fixture::malformed_corpus()) rejected += fixture::rejected_as(c) ? 1 : 0;
  Rng rng(20251001);
  int round_trips = 0;
  for (int i = 0; i < 1000; ++i) {
    const auto review = fixture::random_review(rng);
    if (parse_review_output(serialize_review_output(review), {.allow_fence = false}) == review) ++round_trips;
  }
  r.require(fixture::malformed_corpus().size() == 25 && rejected == 25, "25/25 rejected");
  r.require(round_trips == 1000, "1000/1000 round trips");
  r.detail << rejected << "/" << fixture::malformed_corpus().size() << " malformed rejected with the expected class, "
           << round_trips << "/1000 round trips";
  return r;
}

Result end_to_end_smoke() {
  Result r;
  const auto t0 = Clock::now();
  fixture::TempDir dir;
  Workspace ws(fixture::smoke_config(dir.path()));
  StubModel model(ws.dict, ws.assets, 0.1);
  StubServer server([&](const nlohmann::json& body) { return model.respond(body); });
  const auto run = fixture::offline_pipeline(ws, "smoke", "smoke", server.endpoint(), 3);
  const auto cohort = ws.store.load_cohort("smoke");
  const auto indicators = run_indicators(cohort.profiles, ws.rules, ws.dict, cohort.manifest.as_of);
  const auto prevalence = prevalence_stats(indicators, ws.rules, cohort.profiles.size());
  MechanicalJudge judge;
  const auto consistency = session_consistency(ws.store, "smoke", judge);
  const auto comparison = model_comparison(session_score_table(ws.store, {"smoke"}, judge), {});
  const auto complexity = session_complexity(ws.store, "smoke");
  const auto failures = session_failures(ws.store, "smoke");
  const auto reports = ws.store.session_dir("smoke") / "reports" / "analysis";
  write_file_atomic((reports / "consistency.json").string(), nlohmann::json(consistency).dump(2));
  write_file_atomic((reports / "comparison.json").string(), nlohmann::json(comparison).dump(2));
  write_file_atomic((reports / "complexity.json").string(), nlohmann::json(complexity).dump(2));
  write_file_atomic((reports / "failures.json").string(), nlohmann::json(failures).dump(2));
  const double dt = seconds_since(t0);
  const int n = static_cast<int>(run.session.patients.size());
  r.require(cohort.profiles.size() == 50, "50-patient cohort");
  r.require(prevalence.size() == ws.rules.size(), "prevalence row per rule");
  r.require(n > 0 && run.batch.failures.empty() && static_cast<int>(run.batch.runs.size()) == n, "all reviews complete");
  r.require(run.assessed == n && run.truths == n, "every patient assessed with ground truth");
  r.require(run.report.files.contains("metrics.json") && run.report.files.contains("cohort.csv"), "report bundle");
  r.require(consistency.patient_ids.size() == static_cast<std::size_t>(n), "consistency covers all patients");
  r.require(comparison.models.size() == 1 && comparison.models[0].epoch_means.size() == 3, "3 epochs scored");
  r.require(complexity.n == n, "complexity over all patients");
  r.require(server.request_count() == 3 * n, "offline stub served every request");
  r.require(dt < kSmokeLimitS, "runtime < 5 min");
  r.detail << "50 patients, " << n << " sampled, " << server.request_count() << " stub requests, "
           << run.report.files.size() << " report files, mean automated score "
           << format_fixed(comparison.models[0].mean, 3) << ", " << format_fixed(dt, 2) << " s";
  return r;
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Result()>>> criteria = {
      {"scoring-formula-oracle", scoring_oracle},
      {"binary-metrics-oracle", binary_metrics_oracle},
      {"fully-correct-identity", fully_correct_identity},
      {"consistency-ceiling-oracle", consistency_ceiling_oracle},
      {"population-reweighting-oracle", reweighting_oracle},
      {"model-comparison-oracle", model_comparison_oracle},
      {"indicator-engine-property-suite", indicator_suite},
      {"failure-tally-oracle", failure_tally_oracle},
      {"statistics-suite", statistics_suite},
      {"robustness", robustness},
      {"end-to-end-smoke", end_to_end_smoke},
  };
  int failed = 0;
  for (const auto& [name, check] : criteria) {
    Result r;
    try {
      r = check();
    } catch (const std::exception& e) {
      r.pass = false;
      r.detail << "threw: " << e.what();
    }
    if (!r.pass) ++failed;
    std::cout << (r.pass ? "PASS " : "FAIL ") << name << ": " << r.detail.str() << std::endl;
  }
  std::cout << (criteria.size() - static_cast<std::size_t>(failed)) << "/" << criteria.size() << " criteria passed"
            << std::endl;
  return failed == 0 ? 0 : 1;
}
