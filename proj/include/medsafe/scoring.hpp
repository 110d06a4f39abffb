#pragma once

#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "medsafe/chat.hpp"
#include "medsafe/review.hpp"

namespace medsafe {

enum class IssueVerdict { correct, incorrect };
enum class InterventionVerdict { correct, partial, incorrect, not_applicable };

enum class FailureReason {
  overconfidence_in_uncertainty,
  protocol_vs_patient_gap,
  protocol_vs_practice_gap,
  coherent_but_factually_incorrect,
  process_blindness,
};

/// WHO harm categories.
enum class Harm { none, mild, moderate, severe, death };

std::string_view to_string(IssueVerdict v);
std::string_view to_string(InterventionVerdict v);
std::string_view to_string(FailureReason r);
std::string_view to_string(Harm h);
IssueVerdict parse_issue_verdict(std::string_view s);
InterventionVerdict parse_intervention_verdict(std::string_view s);
FailureReason parse_failure_reason(std::string_view s);
Harm parse_harm(std::string_view s);

struct FailureAnnotation {
  FailureReason reason = FailureReason::process_blindness;
  std::string mode;
  Harm harm = Harm::none;
  std::optional<std::string> vignette_ref;

  bool operator==(const FailureAnnotation&) const = default;
};

/// Clinician grading of one review.
struct AssessmentRecord {
  std::string patient_id;
  bool sufficient_information = true;
  bool clinician_flag = false;
  std::vector<IssueVerdict> issue_verdicts;
  std::vector<std::string> missed_issues;
  InterventionVerdict intervention_verdict = InterventionVerdict::not_applicable;
  std::vector<FailureAnnotation> failure_annotations;
  std::string notes;

  bool operator==(const AssessmentRecord&) const = default;
};

/// Grading inconsistent with the review it grades.
class AssessmentError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

void to_json(nlohmann::json& j, const FailureAnnotation& a);
void to_json(nlohmann::json& j, const AssessmentRecord& a);
/// Strict: unknown fields, wrong types and bad enum values are errors. Every
/// problem is listed in the thrown SchemaViolation message.
AssessmentRecord assessment_from_json(const nlohmann::json& j);

/// Problems with `a` as a grading of `review`; empty when consistent.
/// A true negative may be graded not_applicable or correct; not_applicable
/// is reserved for true negatives.
std::vector<std::string> assessment_problems(const ReviewOutput& review, const AssessmentRecord& a);

enum class Level1 { identified, not_identified, not_applicable };
enum class Level2 { all_correct, some_correct, none_correct, not_reached };
enum class Level3 { correct, partial, incorrect, not_reached };
enum class BinaryCell { TP, FP, TN, FN };

std::string_view to_string(Level1 v);
std::string_view to_string(Level2 v);
std::string_view to_string(Level3 v);
std::string_view to_string(BinaryCell v);

struct LevelOutcome {
  Level1 level1 = Level1::not_applicable;
  Level2 level2 = Level2::not_reached;
  Level3 level3 = Level3::not_reached;
  BinaryCell binary_cell = BinaryCell::TN;

  bool operator==(const LevelOutcome&) const = default;
};

/// System flag is review.intervention_required. Throws AssessmentError when
/// the verdict list does not align with the issues.
LevelOutcome classify_levels(const ReviewOutput& review, const AssessmentRecord& assessment);

struct ClinicianScore {
  std::optional<double> precision;  // absent when the system listed no issues
  std::optional<double> recall;
  std::optional<double> f1;
  double s_intervention = 0.0;
  double score = 0.0;
};

/// Composite clinician score. False positives score 0. Throws
/// AssessmentError for insufficient-information cases or misaligned input.
ClinicianScore clinician_score_detail(const ReviewOutput& review, const AssessmentRecord& assessment);
double clinician_score(const ReviewOutput& review, const AssessmentRecord& assessment);

/// Harmonic mean, 0 when both are 0.
double f1_score(double precision, double recall);

struct GroundTruth {
  std::string patient_id;
  std::vector<std::string> issues;
  std::vector<std::string> interventions;
  bool no_issue = false;

  bool operator==(const GroundTruth&) const = default;
};

void to_json(nlohmann::json& j, const GroundTruth& g);
/// Strict; no_issue with non-empty lists is a SchemaViolation.
GroundTruth ground_truth_from_json(const nlohmann::json& j, std::string_view raw = {});

/// Non-empty trimmed lines of the intervention text.
std::vector<std::string> split_interventions(std::string_view text);

class GroundTruthSynthesizer {
 public:
  virtual ~GroundTruthSynthesizer() = default;
  virtual GroundTruth synthesize(const ReviewOutput& review, const AssessmentRecord& assessment) = 0;
};

/// Builds ground truth from verdicts without a model: correct issues kept,
/// incorrect dropped, missed added; the system's interventions are kept when
/// graded correct or partial.
class MechanicalSynthesizer : public GroundTruthSynthesizer {
 public:
  GroundTruth synthesize(const ReviewOutput& review, const AssessmentRecord& assessment) override;
};

class LlmSynthesizer : public GroundTruthSynthesizer {
 public:
  LlmSynthesizer(ChatClient& client, std::string prompt, int max_retries = 2)
      : client_(client), prompt_(std::move(prompt)), max_retries_(max_retries) {}
  GroundTruth synthesize(const ReviewOutput& review, const AssessmentRecord& assessment) override;

 private:
  ChatClient& client_;
  std::string prompt_;
  int max_retries_;
};

struct MatchPair {
  int system = 0;
  int truth = 0;

  bool operator==(const MatchPair&) const = default;
};

struct JudgeResult {
  std::vector<MatchPair> issue_matches;
  std::vector<MatchPair> intervention_matches;
};

struct JudgeInput {
  std::vector<std::string> system_issues;
  std::vector<std::string> truth_issues;
  std::vector<std::string> system_interventions;
  std::vector<std::string> truth_interventions;
};

nlohmann::json judge_input_json(const JudgeInput& in);
/// Validates a judge reply against the input: indices in range, each used
/// at most once per side.
JudgeResult parse_judge_output(std::string_view raw, const JudgeInput& in);

class Judge {
 public:
  virtual ~Judge() = default;
  virtual JudgeResult judge(const JudgeInput& in) = 0;
};

/// Matches items whose normalised text (case, whitespace, trailing
/// punctuation) is identical; first unused truth item wins.
class MechanicalJudge : public Judge {
 public:
  JudgeResult judge(const JudgeInput& in) override;
};

class LlmJudge : public Judge {
 public:
  LlmJudge(ChatClient& client, std::string prompt, int max_retries = 2)
      : client_(client), prompt_(std::move(prompt)), max_retries_(max_retries) {}
  JudgeResult judge(const JudgeInput& in) override;

 private:
  ChatClient& client_;
  std::string prompt_;
  int max_retries_;
};

std::string normalize_statement(std::string_view s);

struct MatchReport {
  std::vector<std::pair<std::string, std::string>> matched_issues;  // system, truth
  std::vector<std::string> missed_issues;    // truth items not matched
  std::vector<std::string> spurious_issues;  // system items not matched
  std::vector<std::pair<std::string, std::string>> matched_interventions;
  std::vector<std::string> missed_interventions;
  std::vector<std::string> spurious_interventions;
  std::optional<double> f1_issue;
  std::optional<double> f1_intervention;
};

enum class AutomatedCase { true_negative, disagreement, both_flagged };
std::string_view to_string(AutomatedCase c);

struct AutomatedScore {
  double score = 0.0;
  AutomatedCase kind = AutomatedCase::true_negative;
  MatchReport report;
};

/// 1 when neither side has issues, 0 when exactly one does, otherwise the
/// mean of the issue and intervention F1 scores. The system side counts as
/// having issues when review.intervention_required is set.
AutomatedScore automated_score(const ReviewOutput& review, const GroundTruth& truth, Judge& judge);

void to_json(nlohmann::json& j, const MatchReport& r);

}  // namespace medsafe
