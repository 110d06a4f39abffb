#include <gtest/gtest.h>

#include "medsafe/review.hpp"
#include "review_corpus.hpp"

namespace medsafe {
namespace {

using fixture::malformed_corpus;

TEST(ParseReview, EmptyIssuesAndInterventionAccepted) {
  const auto r = parse_review_output(
      R"({"patient_review":"Stable.","clinical_issues":[],"intervention":"","intervention_required":false,"intervention_probability":0.05})");
  EXPECT_TRUE(r.clinical_issues.empty());
  EXPECT_EQ(r.intervention, "");
  EXPECT_FALSE(r.intervention_required);
  EXPECT_DOUBLE_EQ(r.intervention_probability, 0.05);
}

TEST(ParseReview, ProbabilityAboveOneIsRangeViolation) {
  const std::string raw =
      R"({"patient_review":"","clinical_issues":[],"intervention":"","intervention_required":false,"intervention_probability":1.5})";
  try {
    (void)parse_review_output(raw);
    FAIL() << "accepted probability 1.5";
  } catch (const RangeViolation& e) {
    EXPECT_EQ(e.raw(), raw);
  }
}

TEST(ParseReview, IssueWithoutFlagIsSchemaViolation) {
  EXPECT_THROW(
      (void)parse_review_output(
          R"({"patient_review":"","clinical_issues":[{"issue":"a","evidence":"b"}],"intervention":"x","intervention_required":true,"intervention_probability":0.9})"),
      SchemaViolation);
}

TEST(ParseReview, BoundaryProbabilitiesAccepted) {
  for (const char* p : {"0", "1", "0.0", "1.0", "1e-9"}) {
    const std::string raw = std::string(R"({"patient_review":"","clinical_issues":[],"intervention":"",)") +
                            R"("intervention_required":false,"intervention_probability":)" + p + "}";
    EXPECT_NO_THROW((void)parse_review_output(raw)) << p;
  }
}

TEST(ParseReview, FenceLeniencyIsReportedAndSwitchable) {
  const std::string body =
      R"({"patient_review":"","clinical_issues":[],"intervention":"","intervention_required":false,"intervention_probability":0})";
  for (const std::string fenced : {"```json\n" + body + "\n```", "```\n" + body + "\n```", "  ```JSON\n" + body + "```\n"}) {
    const auto parsed = parse_review(fenced);
    EXPECT_TRUE(parsed.fence_stripped) << fenced;
    EXPECT_THROW((void)parse_review(fenced, {.allow_fence = false}), MalformedOutput);
  }
  EXPECT_FALSE(parse_review(body).fence_stripped);
  EXPECT_THROW((void)parse_review("```python\n" + body + "\n```"), MalformedOutput);
}

TEST(ParseReview, ErrorFamilySharesBase) {
  for (const auto& c : malformed_corpus()) {
    EXPECT_THROW((void)parse_review_output(c.raw), OutputError) << c.name;
  }
}

TEST(MalformedCorpus, EveryCaseRejectedWithItsClass) {
  ASSERT_EQ(malformed_corpus().size(), 25u);
  for (const auto& c : malformed_corpus()) EXPECT_TRUE(fixture::rejected_as(c)) << c.name;
}

TEST(ReviewRoundTrip, RandomOutputs) {
  Rng rng(20251001);
  for (int i = 0; i < 1000; ++i) {
    const auto r = fixture::random_review(rng);
    const auto text = serialize_review_output(r);
    ASSERT_EQ(parse_review_output(text, {.allow_fence = false}), r) << text;
  }
}

TEST(ReviewRoundTrip, PreservesIssueOrder) {
  ReviewOutput r;
  for (int i = 0; i < 5; ++i) r.clinical_issues.push_back({"issue " + std::to_string(i), "e", i % 2 == 0});
  const auto back = parse_review_output(serialize_review_output(r));
  for (int i = 0; i < 5; ++i) EXPECT_EQ(back.clinical_issues[static_cast<std::size_t>(i)].issue, "issue " + std::to_string(i));
}

}  // namespace
}  // namespace medsafe
