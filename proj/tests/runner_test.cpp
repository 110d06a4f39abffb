#include <deque>
#include <mutex>
#include <set>

#include <gtest/gtest.h>

#include "fixtures.hpp"
#include "medsafe/prompt.hpp"
#include "medsafe/runner.hpp"
#include "medsafe/stub_model.hpp"

namespace medsafe {
namespace {

const char* kValid =
    R"({"patient_review":"ok","clinical_issues":[],"intervention":"","intervention_required":false,"intervention_probability":0.1})";

// Replays scripted replies; "!transport" throws TransportError. Repeats the last reply when exhausted.
class ScriptedClient : public ChatClient {
 public:
  explicit ScriptedClient(std::deque<std::string> replies) : replies_(std::move(replies)) {}
  std::string complete(const ChatRequest& r) override {
    std::lock_guard lock(mu_);
    requests.push_back(r);
    std::string next = replies_.front();
    if (replies_.size() > 1) replies_.pop_front();
    if (next == "!transport") throw TransportError("connection refused");
    return next;
  }
  std::vector<ChatRequest> requests;

 private:
  std::mutex mu_;
  std::deque<std::string> replies_;
};

ModelConfig config() { return {.model_name = "fake", .endpoint = "http://127.0.0.1:1/v1", .max_retries = 3}; }

PatientProfile profile() { return fixture::patient("P0001", {fixture::gp("2021-02-02")}); }

TEST(RunReview, TenEpochsGiveTenOutputs) {
  ScriptedClient client({kValid});
  const auto run = run_review(profile(), fixture::D("2025-01-01"), config(), client, "SYS", 10, "tag");
  EXPECT_EQ(run.outputs.size(), 10u);
  EXPECT_EQ(run.metadata.epochs.size(), 10u);
  EXPECT_EQ(run.metadata.total_retries(), 0);
  std::set<std::uint64_t> seeds;
  for (const auto& r : client.requests) seeds.insert(*r.seed);
  EXPECT_EQ(seeds.size(), 10u);
}

TEST(RunReview, MalformedThenValidRecordsOneRetry) {
  ScriptedClient client({"not json", kValid});
  std::vector<ReviewRun> persisted;
  const auto run = run_review(profile(), fixture::D("2025-01-01"), config(), client, "SYS", 1, "tag",
                              [&](const ReviewRun& r) { persisted.push_back(r); });
  ASSERT_EQ(run.outputs.size(), 1u);
  EXPECT_EQ(run.metadata.epochs[0].retries(), 1);
  EXPECT_EQ(run.metadata.epochs[0].attempts[0].error_kind, "malformed");
  EXPECT_EQ(run.metadata.epochs[0].attempts[0].raw_text, "not json");
  EXPECT_EQ(run.metadata.total_retries(), 1);
  EXPECT_EQ(persisted.size(), 1u);
}

TEST(RunReview, PromptIsSystemPlusRenderedProfile) {
  ScriptedClient client({kValid});
  const auto p = profile();
  (void)run_review(p, fixture::D("2025-01-01"), config(), client, "SYS", 1, "tag");
  ASSERT_EQ(client.requests.size(), 1u);
  EXPECT_EQ(client.requests[0].messages, build_prompt("SYS", render_profile(p, fixture::D("2025-01-01"))));
}

TEST(RunReview, FenceLeniencyCounted) {
  ScriptedClient client({std::string("```json\n") + kValid + "\n```", kValid});
  const auto run = run_review(profile(), fixture::D("2025-01-01"), config(), client, "SYS", 2, "tag");
  EXPECT_EQ(run.metadata.fence_leniency_count(), 1);
}

TEST(RunReview, PersistentlyMalformedRaisesWithRawText) {
  ScriptedClient client({kValid, "{\"oops\":1}"});
  std::optional<ReviewRun> persisted;
  try {
    (void)run_review(profile(), fixture::D("2025-01-01"), config(), client, "SYS", 3, "tag",
                     [&](const ReviewRun& r) { persisted = r; });
    FAIL() << "expected IncompleteRun";
  } catch (const IncompleteRun& e) {
    EXPECT_EQ(e.partial().outputs.size(), 1u);
    ASSERT_TRUE(persisted);
    EXPECT_EQ(persisted->metadata.epochs.size(), 3u);
    EXPECT_EQ(persisted->metadata.epochs[1].attempts.size(), 4u);
    EXPECT_EQ(persisted->metadata.epochs[1].raw_text(), "{\"oops\":1}");
    EXPECT_EQ(persisted->metadata.epochs[1].attempts[0].error_kind, "schema");
  }
}

TEST(RunReview, TransportFailureRaisesEndpointUnavailable) {
  ScriptedClient client({"!transport"});
  bool persisted = false;
  EXPECT_THROW((void)run_review(profile(), fixture::D("2025-01-01"), config(), client, "SYS", 2, "tag",
                                [&](const ReviewRun&) { persisted = true; }),
               EndpointUnavailable);
  EXPECT_TRUE(persisted);
  EXPECT_EQ(client.requests.size(), 4u);
}

TEST(RunReview, RecoversFromTransientTransportError) {
  ScriptedClient client({"!transport", "!transport", kValid});
  const auto run = run_review(profile(), fixture::D("2025-01-01"), config(), client, "SYS", 1, "tag");
  EXPECT_EQ(run.metadata.epochs[0].retries(), 2);
}

TEST(RunReview, RejectsZeroEpochs) {
  ScriptedClient client({kValid});
  EXPECT_THROW((void)run_review(profile(), fixture::D("2025-01-01"), config(), client, "SYS", 0, "tag"),
               std::invalid_argument);
}

TEST(EpochSeed, StableAndDistinct) {
  EXPECT_EQ(epoch_seed("a", "P1", 0), epoch_seed("a", "P1", 0));
  EXPECT_NE(epoch_seed("a", "P1", 0), epoch_seed("a", "P1", 1));
  EXPECT_NE(epoch_seed("a", "P1", 0), epoch_seed("b", "P1", 0));
  EXPECT_LT(epoch_seed("a", "P1", 0), 1ULL << 53);
}

TEST(ReviewRunJson, RoundTrip) {
  ScriptedClient client({"bad", kValid});
  const auto run = run_review(profile(), fixture::D("2025-01-01"), config(), client, "SYS", 2, "tag");
  nlohmann::json j = run;
  const auto back = review_run_from_json(j);
  nlohmann::json j2 = back;
  EXPECT_EQ(j, j2);
  EXPECT_EQ(back.outputs, run.outputs);
}

TEST(RunReviews, ParallelBatchInJobOrder) {
  ScriptedClient client({kValid});
  std::vector<PatientProfile> ps;
  for (int i = 0; i < 20; ++i) ps.push_back(fixture::patient("P" + std::to_string(100 + i), {}));
  std::vector<ReviewJob> jobs;
  for (const auto& p : ps) jobs.push_back({&p, fixture::D("2025-01-01")});
  int persisted = 0;
  const auto res = run_reviews(jobs, config(), client, "SYS", 2, "tag", 4, [&](const ReviewRun&) { ++persisted; });
  ASSERT_EQ(res.runs.size(), 20u);
  EXPECT_TRUE(res.failures.empty());
  for (int i = 0; i < 20; ++i) EXPECT_EQ(res.runs[static_cast<std::size_t>(i)].metadata.patient_id, ps[static_cast<std::size_t>(i)].patient_id);
  EXPECT_EQ(persisted, 20);
}

TEST(RunReview, StubServerFixtureRoundTrip) {
  StubServer server([](const nlohmann::json&) { return std::string(kValid); });
  ModelConfig cfg{.model_name = "stub", .endpoint = server.endpoint()};
  HttpChatClient client(cfg);
  const auto run = run_review(profile(), fixture::D("2025-01-01"), cfg, client, "SYS", 1, "tag");
  ASSERT_EQ(run.outputs.size(), 1u);
  EXPECT_EQ(run.outputs[0], parse_review_output(kValid));
}

}  // namespace
}  // namespace medsafe
