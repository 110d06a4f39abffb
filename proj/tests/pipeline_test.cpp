#include <gtest/gtest.h>

#include "fixtures.hpp"
#include "medsafe/stub_model.hpp"
#include "pipeline_fixture.hpp"

namespace medsafe {
namespace {

class PipelineTest : public ::testing::Test {
 protected:
  fixture::TempDir dir_;
  Workspace ws_{fixture::smoke_config(dir_.path())};
  StubModel model_{ws_.dict, ws_.assets, 0.1};
  StubServer server_{[this](const nlohmann::json& body) { return model_.respond(body); }};
};

TEST_F(PipelineTest, OfflineRunAssessesEveryPatient) {
  const auto run = fixture::offline_pipeline(ws_, "c", "s", server_.endpoint(), 3);
  EXPECT_EQ(run.session.patients.size(), 24u);
  EXPECT_TRUE(run.batch.failures.empty());
  EXPECT_EQ(run.assessed, 24);
  EXPECT_EQ(run.truths, 24);
  EXPECT_EQ(run.session.count(PatientStatus::assessed), 24);
  EXPECT_TRUE(run.report.files.contains("cohort.csv"));
  EXPECT_TRUE(run.report.files.contains("metrics.json"));
  for (const auto& pid : run.session.patients) {
    EXPECT_EQ(ws_.store.load_review("s", pid)->outputs.size(), 3u);
    EXPECT_TRUE(ws_.store.load_ground_truth("s", pid).has_value());
  }
}

TEST_F(PipelineTest, SimulatedClinicianAgreesWithPlants) {
  const auto run = fixture::offline_pipeline(ws_, "c", "s", server_.endpoint(), 1);
  const auto positives = fixture::planted_positives(ws_.store.load_cohort("c").manifest);
  for (const auto& pid : run.session.patients) {
    EXPECT_EQ(ws_.store.latest_assessment("s", pid)->clinician_flag, positives.contains(pid)) << pid;
  }
}

TEST_F(PipelineTest, AnalysesRunOnTheSession) {
  (void)fixture::offline_pipeline(ws_, "c", "s", server_.endpoint(), 3);
  MechanicalJudge judge;
  const auto consistency = session_consistency(ws_.store, "s", judge);
  EXPECT_EQ(consistency.patient_ids.size(), 24u);
  ASSERT_TRUE(consistency.ceiling_accuracy.has_value());
  EXPECT_GE(*consistency.ceiling_accuracy, 0.0);
  EXPECT_LE(*consistency.ceiling_accuracy, 1.0);
  EXPECT_TRUE(consistency.observed_accuracy.has_value());
  const auto scores = epoch_scores(ws_.store, "s", judge);
  EXPECT_EQ(scores.size(), 24u);
  for (const auto& pe : scores) {
    for (double s : pe.scores) {
      EXPECT_GE(s, 0.0);
      EXPECT_LE(s, 1.0);
    }
  }
  const auto table = session_score_table(ws_.store, {"s"}, judge);
  ASSERT_TRUE(table.contains("stub"));
  EXPECT_EQ(table.at("stub").size(), 3u);
}

TEST_F(PipelineTest, ReviewStepSkipsReviewedPatients) {
  (void)generate_step(ws_, "c");
  sample_step(ws_, "c", "s");
  auto writer = ws_.store.open_writer("s");
  ModelConfig cfg{.model_name = "stub", .endpoint = server_.endpoint()};
  HttpChatClient client(cfg);
  const auto first = review_step(ws_, *writer, cfg, client, 2, "t", 4);
  const int requests = server_.request_count();
  EXPECT_EQ(requests, 48);
  const auto second = review_step(ws_, *writer, cfg, client, 2, "t", 4);
  EXPECT_EQ(server_.request_count(), requests);
  EXPECT_TRUE(second.runs.empty());
  EXPECT_EQ(first.runs.size(), 24u);
}

TEST_F(PipelineTest, ReviewsAreReproducibleForFixedSeedTag) {
  (void)generate_step(ws_, "c");
  sample_step(ws_, "c", "a");
  sample_step(ws_, "c", "b");
  ModelConfig cfg{.model_name = "stub", .endpoint = server_.endpoint()};
  HttpChatClient client(cfg);
  for (const char* id : {"a", "b"}) {
    auto w = ws_.store.open_writer(id);
    review_step(ws_, *w, cfg, client, 2, "same", 3);
  }
  for (const auto& pid : ws_.store.load_session("a").patients) {
    EXPECT_EQ(ws_.store.load_review("a", pid)->outputs, ws_.store.load_review("b", pid)->outputs) << pid;
  }
}

TEST(PipelineErrors, UnknownCohortIsNotFound) {
  fixture::TempDir dir;
  Workspace ws(fixture::smoke_config(dir.path()));
  EXPECT_THROW(sample_step(ws, "missing", "s"), NotFound);
}

}  // namespace
}  // namespace medsafe
