#include <cmath>

#include <gmock/gmock.h>
#include <gtest/gtest.h>

#include "analysis_fixture.hpp"
#include "medsafe/analysis.hpp"

namespace medsafe {
namespace {

TEST(Consistency, ReferenceCeilingAndGap) {
  const double ceiling = consistency_ceiling(0.964, 0.629, 206, 71);
  // (206 * 0.964 + 71 * 0.629) / 277 = 243.243 / 277
  EXPECT_NEAR(ceiling, 243.243 / 277.0, 1e-12);
  EXPECT_NEAR(100 * ceiling, 87.8, 0.05);
  EXPECT_NEAR(100 * (0.957 - ceiling), 7.9, 0.05);
}

TEST(Consistency, IdenticalEpochs) {
  std::vector<PatientEpochs> runs{{"A", {0.5, 0.5, 0.5}, {true, true, true}}, {"B", {1, 1, 1}, {false, false, false}}};
  const auto r = self_consistency(runs, {}, {}, 0.9);
  EXPECT_EQ(r.mean_sd, 0.0);
  EXPECT_EQ(*r.p_reflag_given_flagged, 1.0);
  EXPECT_EQ(*r.p_stay_negative_given_negative, 1.0);
  EXPECT_EQ(*r.ceiling_accuracy, 1.0);
  EXPECT_NEAR(*r.anchoring_gap, -0.1, 1e-12);
}

TEST(Consistency, CountingOracleOnRandomSequences) {
  Rng rng(4);
  for (int t = 0; t < 200; ++t) {
    std::vector<PatientEpochs> runs;
    const int epochs = static_cast<int>(rng.uniform_int(2, 10));
    long agree_pos = 0, total_pos = 0, agree_neg = 0, total_neg = 0;
    int n_pos = 0, n_neg = 0;
    for (int p = 0; p < 30; ++p) {
      PatientEpochs pe{"P" + std::to_string(p), {}, {}};
      const double bias = rng.uniform();
      for (int e = 0; e < epochs; ++e) {
        pe.flags.push_back(rng.bernoulli(bias));
        pe.scores.push_back(rng.uniform());
      }
      (pe.flags[0] ? n_pos : n_neg)++;
      for (int e = 1; e < epochs; ++e) {
        if (pe.flags[0]) {
          ++total_pos;
          agree_pos += pe.flags[static_cast<std::size_t>(e)] ? 1 : 0;
        } else {
          ++total_neg;
          agree_neg += pe.flags[static_cast<std::size_t>(e)] ? 0 : 1;
        }
      }
      runs.push_back(pe);
    }
    const auto r = self_consistency(runs);
    if (total_pos) ASSERT_DOUBLE_EQ(*r.p_reflag_given_flagged, static_cast<double>(agree_pos) / total_pos);
    if (total_neg) ASSERT_DOUBLE_EQ(*r.p_stay_negative_given_negative, static_cast<double>(agree_neg) / total_neg);
    ASSERT_EQ(r.initial_flagged_n, n_pos);
    if (r.ceiling_accuracy && r.p_reflag_given_flagged && r.p_stay_negative_given_negative) {
      const double lo = std::min(*r.p_reflag_given_flagged, *r.p_stay_negative_given_negative);
      const double hi = std::max(*r.p_reflag_given_flagged, *r.p_stay_negative_given_negative);
      ASSERT_GE(*r.ceiling_accuracy, lo - 1e-15);
      ASSERT_LE(*r.ceiling_accuracy, hi + 1e-15);
    }
  }
}

TEST(Consistency, SingleEpochRejected) {
  std::vector<PatientEpochs> runs{{"A", {0.5}, {true}}};
  EXPECT_THROW(self_consistency(runs), std::invalid_argument);
}

TEST(Reweight, ReferencePopulationEstimates) {
  const auto m = reweight_population(0.463, 0.902, 1.0);
  EXPECT_NEAR(m.tp, 0.417626, 1e-12);
  EXPECT_NEAR(m.fp, 0.045374, 1e-12);
  EXPECT_NEAR(m.tn, 0.537, 1e-12);
  EXPECT_EQ(m.fn, 0.0);
  EXPECT_NEAR(*m.prevalence, 0.418, 0.005);
  EXPECT_GE(100 * *m.specificity, 92.2);
  EXPECT_LE(100 * *m.specificity, 92.3);
  EXPECT_NEAR(100 * *m.accuracy, 95.5, 0.05);
  EXPECT_NEAR(*m.kappa, 0.909, 0.002);
  EXPECT_NEAR(*m.f1, 0.948, 0.001);
}

TEST(Reweight, PerfectStrata) {
  for (double f : {0.0, 0.1, 0.5, 0.9}) {
    const auto m = reweight_population(f, 1.0, 1.0);
    EXPECT_EQ(*m.accuracy, 1.0);
    if (f > 0) EXPECT_NEAR(*m.kappa, 1.0, 1e-12);
  }
}

TEST(Reweight, CellsSumToOne) {
  Rng rng(2);
  for (int t = 0; t < 1000; ++t) {
    const auto m = reweight_population(rng.uniform(), rng.uniform(), rng.uniform());
    ASSERT_NEAR(m.tp + m.fp + m.tn + m.fn, 1.0, 1e-12);
  }
  EXPECT_THROW(reweight_population(1.2, 0.5, 0.5), std::invalid_argument);
}

TEST(Reweight, MonteCarloAgrees) {
  Rng rng(9);
  for (int t = 0; t < 5; ++t) {
    const double f = 0.2 + 0.6 * rng.uniform(), ppv = 0.5 + 0.5 * rng.uniform(), npv = 0.5 + 0.5 * rng.uniform();
    const auto a = reweight_population(f, ppv, npv);
    const auto s = fixture::simulate_population(f, ppv, npv, 1'000'000, 100 + t);
    EXPECT_NEAR(*a.prevalence, *s.prevalence, 0.003);
    EXPECT_NEAR(*a.sensitivity, *s.sensitivity, 0.003);
    EXPECT_NEAR(*a.specificity, *s.specificity, 0.003);
    EXPECT_NEAR(*a.accuracy, *s.accuracy, 0.003);
    EXPECT_NEAR(*a.kappa, *s.kappa, 0.003);
    EXPECT_NEAR(*a.f1, *s.f1, 0.003);
  }
}

TEST(ModelComparison, ReferenceRelativeDecrease) {
  EXPECT_NEAR(100 * relative_delta(0.459, 0.334), 37.4, 0.1);
}

TEST(ModelComparison, SemIsSdOverRootK) {
  const ScoreTable table{{"a", {{0.2, 0.4}, {0.5, 0.7}, {0.3, 0.3}}}, {"b", {{0.2, 0.4}, {0.5, 0.7}, {0.3, 0.3}}}};
  const auto c = model_comparison(table, {{"a", "b"}});
  // Epoch means 0.3, 0.6, 0.3: mean 0.4, sd sqrt(0.03), sem 0.1.
  EXPECT_DOUBLE_EQ(c.models[0].mean, 0.4);
  EXPECT_DOUBLE_EQ(*c.models[0].sem, std::sqrt(0.03) / std::sqrt(3.0));
  EXPECT_EQ(c.deltas[0].delta, 0.0);
  EXPECT_THROW(model_comparison({{"a", {}}}, {}), std::invalid_argument);
  EXPECT_THROW(model_comparison(table, {{"a", "zzz"}}), std::invalid_argument);
}

TEST(Complexity, ExactLinearAge) {
  std::vector<ComplexityFeatures> f;
  std::vector<double> s;
  Rng rng(1);
  for (int i = 0; i < 50; ++i) {
    ComplexityFeatures c;
    c.age = 20 + i;
    c.active_med_count = static_cast<int>(rng.uniform_int(0, 10));
    c.qof_count = static_cast<int>(rng.uniform_int(0, 5));
    f.push_back(c);
    s.push_back(1.0 - 0.01 * c.age);
  }
  const auto r = complexity_analysis(f, s);
  EXPECT_NEAR(*r.pearson[0][3], -1.0, 1e-12);
  EXPECT_NEAR(*r.r_squared, 1.0, 1e-12);
  EXPECT_FALSE(r.partials[0].r);
}

TEST(Complexity, ConstantColumnLeavesStatisticsAbsent) {
  std::vector<ComplexityFeatures> f;
  std::vector<double> s;
  for (int i = 0; i < 10; ++i) {
    ComplexityFeatures c;
    c.age = 40 + i;
    c.active_med_count = i % 3;
    c.qof_count = 2;
    f.push_back(c);
    s.push_back(0.1 * (i % 4));
  }
  const auto r = complexity_analysis(f, s);
  EXPECT_FALSE(r.pearson[2][3]);
  EXPECT_FALSE(r.partials[2].r);
  EXPECT_TRUE(r.partials[0].r);
  EXPECT_TRUE(r.r_squared);
  EXPECT_THROW(complexity_analysis(std::span(f).first(3), std::span(s).first(3)), std::invalid_argument);
}

TEST(Complexity, MultivariateFixtureRecoversTargets) {
  const auto fx = fixture::complexity_fixture(2024, 10000);
  const auto r = complexity_analysis(fx.features, fx.scores);
  const auto& target = fixture::complexity_target();
  for (int a = 0; a < 4; ++a) {
    for (int b = 0; b < 4; ++b) EXPECT_NEAR(*r.pearson[a][b], target[a][b], 0.02) << a << "," << b;
  }
  EXPECT_NEAR(*r.r_squared, 0.0988, 0.02);
  for (int a = 0; a < 4; ++a) {
    for (int b = 0; b < 4; ++b) EXPECT_EQ(*r.pearson[a][b], *r.pearson[b][a]);
  }
}

TEST(Complexity, PearsonMatrixPositiveSemidefinite) {
  const auto fx = fixture::complexity_fixture(7, 500);
  const auto r = complexity_analysis(fx.features, fx.scores);
  Matrix m(4, std::vector<double>(4));
  for (int a = 0; a < 4; ++a) {
    for (int b = 0; b < 4; ++b) m[a][b] = *r.pearson[a][b];
  }
  // Positive leading principal minors via Cholesky.
  for (int i = 0; i < 4; ++i) {
    for (int j = 0; j <= i; ++j) {
      double s = m[i][j];
      for (int k = 0; k < j; ++k) s -= m[i][k] * m[j][k];
      if (i == j) {
        ASSERT_GT(s, -1e-12);
        m[i][i] = std::sqrt(std::max(s, 0.0));
      } else {
        m[i][j] = m[j][j] > 0 ? s / m[j][j] : 0.0;
      }
    }
  }
}

TEST(Complexity, PermutedScoresShowNoEffect) {
  auto fx = fixture::complexity_fixture(3, 400);
  Rng rng(77);
  int small = 0;
  for (int t = 0; t < 100; ++t) {
    rng.shuffle(fx.scores);
    const auto r = complexity_analysis(fx.features, fx.scores);
    bool ok = true;
    for (int a = 0; a < 3; ++a) ok = ok && std::abs(*r.pearson[a][3]) < 0.2;
    small += ok ? 1 : 0;
  }
  EXPECT_GE(small, 99);
}

TEST(Fairness, IdenticalGroups) {
  const auto r = fairness_analysis({{"White", {0.1, 0.5, 0.9}}, {"Asian", {0.1, 0.5, 0.9}}, {"Black", {0.1, 0.5, 0.9}}});
  EXPECT_EQ(r.anova.f, 0.0);
  EXPECT_EQ(r.anova.p, 1.0);
  ASSERT_EQ(r.groups.size(), 3u);
  EXPECT_DOUBLE_EQ(r.groups[0].mean, 0.5);
  EXPECT_DOUBLE_EQ(r.groups[0].sd, 0.4);
}

TEST(Fairness, TextbookFixture) {
  const auto r = fairness_analysis({{"a", {4, 5, 6, 5, 4, 7}}, {"b", {6, 7, 8, 7, 6}}, {"c", {9, 8, 10, 9, 11, 12, 9}}});
  EXPECT_NEAR(r.anova.f, 24.64729821388199, 1e-6);
  EXPECT_NEAR(r.levene.statistic, 0.8113175368629494, 1e-6);
  EXPECT_THROW(fairness_analysis({{"a", {1}}, {"b", {1, 2}}}), std::invalid_argument);
  EXPECT_THROW(fairness_analysis({{"a", {1, 2}}}), std::invalid_argument);
}

TEST(FailureTally, ReferenceReasonCounts) {
  const auto t = failure_tally(fixture::failure_reason_fixture());
  EXPECT_EQ(t.instances, 178);
  EXPECT_EQ(t.patients, 148);
  std::vector<int> counts;
  for (const auto& r : t.by_reason) counts.push_back(r.count);
  EXPECT_EQ(counts, (std::vector<int>{51, 49, 30, 25, 23}));
  EXPECT_EQ(t.by_reason[3].percent, 14.0);
}

TEST(FailureTally, ReferenceHarmDistribution) {
  const auto t = failure_tally(fixture::harm_fixture());
  EXPECT_EQ(t.by_harm[0].percent, 48.3);
  EXPECT_EQ(t.by_harm[1].percent, 43.5);
  EXPECT_EQ(t.by_harm[2].percent, 7.5);
  EXPECT_EQ(t.by_harm[3].count, 1);
  EXPECT_EQ(t.by_harm[4].count, 0);
}

TEST(FailureTally, Empty) {
  const auto t = failure_tally({});
  EXPECT_EQ(t.instances, 0);
  EXPECT_EQ(t.patients, 0);
  for (const auto& r : t.by_reason) EXPECT_EQ(r.count, 0);
  EXPECT_TRUE(t.by_mode.empty());
}

TEST(Exports, PlotCsvShapes) {
  const auto t = failure_tally(fixture::harm_fixture());
  const auto csv = tally_plot_csv(t);
  EXPECT_THAT(csv, ::testing::StartsWith("series,label,count,percent\n"));
  EXPECT_THAT(csv, ::testing::HasSubstr("harm,none,71,48.3\n"));
  const auto fx = fixture::complexity_fixture(1, 50);
  const auto heat = correlation_heatmap_csv(complexity_analysis(fx.features, fx.scores));
  EXPECT_EQ(std::count(heat.begin(), heat.end(), '\n'), 17);
  nlohmann::json j = t;
  EXPECT_EQ(j.at("instances"), 147);
}

}  // namespace
}  // namespace medsafe
