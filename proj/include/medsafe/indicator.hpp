#pragma once

#include <map>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "medsafe/codes.hpp"
#include "medsafe/date.hpp"
#include "medsafe/ehr.hpp"

namespace medsafe {

enum class ConditionKind {
  on_medication,
  has_diagnosis,
  observation_above,
  missing_coprescription,
  missing_monitoring,
  all_of,  // AND
  any_of,  // OR
  negation,  // NOT
};

/// Node of an indicator condition. Leaves name a code set from the
/// dictionary; composite nodes own their children.
///
/// Per-day leaf semantics (day d):
///   ON_MEDICATION(s)            some course in s is active on d
///   HAS_DIAGNOSIS(s)            a diagnosis in s is recorded on or before d
///   OBSERVATION_ABOVE(s, t u)   the latest reading in s (unit u) on or before d is >= t
///   MISSING_COPRESCRIPTION(s,L) no course in s active on any day of [d-L, d]
///   MISSING_MONITORING(s, W)    no lab result in s dated within [d-W, d]
struct Condition {
  ConditionKind kind = ConditionKind::on_medication;
  std::string code_set;
  double threshold = 0.0;
  std::string unit;
  int window_days = 0;
  std::vector<Condition> children;

  static Condition on_medication(std::string set);
  static Condition has_diagnosis(std::string set);
  static Condition observation_above(std::string set, double threshold, std::string unit);
  static Condition missing_coprescription(std::string set, int lookback_days);
  static Condition missing_monitoring(std::string set, int window_days);
  static Condition all_of(std::vector<Condition> children);
  static Condition any_of(std::vector<Condition> children);
  static Condition negation(Condition child);

  [[nodiscard]] bool is_leaf() const {
    return kind != ConditionKind::all_of && kind != ConditionKind::any_of && kind != ConditionKind::negation;
  }

  bool operator==(const Condition&) const = default;
};

struct IndicatorRule {
  std::string id;
  std::string title;
  Condition condition;
  int continuity_min_days = 14;
  Date since{2020, 1, 1};

  bool operator==(const IndicatorRule&) const = default;
};

struct MatchInterval {
  std::string patient_id;
  Date start;
  Date end;

  [[nodiscard]] std::int32_t length() const { return end - start + 1; }
  bool operator==(const MatchInterval&) const = default;
};

struct ContinuityResult {
  bool matched = false;
  std::vector<MatchInterval> qualifying;
};

struct PrevalenceRow {
  std::string indicator_id;
  int matched_patients = 0;
  double point_prevalence_per_million = 0.0;
  double pct_time_matching = 0.0;
};

class RuleSyntaxError : public std::runtime_error {
 public:
  RuleSyntaxError(const std::string& message, int line, int column, const std::string& source = "");
  [[nodiscard]] int line() const { return line_; }
  [[nodiscard]] int column() const { return column_; }
  [[nodiscard]] const std::string& message() const { return message_; }

 private:
  std::string message_;
  int line_;
  int column_;
};

/// Semantic problems in a syntactically valid rule (bad code sets, windows).
class RuleError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Parses rule source; see docs/rule_grammar.md. Syntax only.
IndicatorRule parse_rule(std::string_view text);
/// Parses and checks every code-set reference against `dict`.
IndicatorRule parse_rule(std::string_view text, const CodeDictionary& dict);
/// Throws RuleError for an unknown or empty code set, or a non-positive window.
void check_rule(const IndicatorRule& rule, const CodeDictionary& dict);

/// Canonical source text. parse_rule(to_source(r)) == r.
std::string to_source(const IndicatorRule& rule);
std::string to_expression(const Condition& condition);

/// Loads every `*.rule` file in `dir`, ordered by rule id.
std::vector<IndicatorRule> load_rules(const std::string& dir, const CodeDictionary& dict);

/// Day sets on which `condition` holds, clipped to `window`; sorted, disjoint, maximal.
std::vector<DayInterval> condition_days(const Condition& condition, const PatientProfile& profile,
                                        const CodeDictionary& dict, DayInterval window);

/// Maximal intervals where the rule condition holds within [rule.since, horizon].
std::vector<MatchInterval> evaluate_rule(const IndicatorRule& rule, const PatientProfile& profile,
                                         const CodeDictionary& dict, Date horizon);

/// Keeps intervals at least `min_days` long (both ends inclusive).
ContinuityResult apply_continuity(std::span<const MatchInterval> intervals, int min_days);

struct RuleOutcome {
  std::string indicator_id;
  std::vector<MatchInterval> raw;
  ContinuityResult continuity;
};

/// Per patient, per rule outcome for a cohort.
struct IndicatorRun {
  Date horizon;
  std::vector<std::string> rule_ids;
  std::map<std::string, std::vector<RuleOutcome>> by_patient;

  /// patient_id -> ids of rules the patient matched (after continuity).
  [[nodiscard]] std::map<std::string, std::set<std::string>> matched_indicators() const;
};

IndicatorRun run_indicators(std::span<const PatientProfile> cohort, std::span<const IndicatorRule> rules,
                            const CodeDictionary& dict, Date horizon);

/// Point prevalence and time-matching statistics. Throws std::invalid_argument
/// when the cohort is empty or horizon <= since for any rule.
std::vector<PrevalenceRow> prevalence_stats(std::span<const PatientProfile> cohort,
                                            std::span<const IndicatorRule> rules, const CodeDictionary& dict,
                                            Date horizon);
std::vector<PrevalenceRow> prevalence_stats(const IndicatorRun& run, std::span<const IndicatorRule> rules,
                                            std::size_t cohort_size);

std::string prevalence_csv(std::span<const PrevalenceRow> rows);

void to_json(nlohmann::json& j, const MatchInterval& m);
void to_json(nlohmann::json& j, const IndicatorRun& run);
IndicatorRun indicator_run_from_json(const nlohmann::json& j);

}  // namespace medsafe
