#include "medsafe/scoring.hpp"

#include <algorithm>
#include <cctype>
#include <set>

#include "medsafe/util.hpp"

namespace medsafe {

namespace {

template <typename E, std::size_t N>
E parse_enum(std::string_view s, const std::array<std::pair<E, std::string_view>, N>& table, const char* what) {
  for (const auto& [e, name] : table) {
    if (name == s) return e;
  }
  throw std::invalid_argument(std::string("unknown ") + what + " '" + std::string(s) + "'");
}

template <typename E, std::size_t N>
std::string_view name_of(E e, const std::array<std::pair<E, std::string_view>, N>& table) {
  for (const auto& [v, name] : table) {
    if (v == e) return name;
  }
  return "?";
}

constexpr std::array<std::pair<IssueVerdict, std::string_view>, 2> kIssueVerdicts{
    {{IssueVerdict::correct, "correct"}, {IssueVerdict::incorrect, "incorrect"}}};
constexpr std::array<std::pair<InterventionVerdict, std::string_view>, 4> kInterventionVerdicts{
    {{InterventionVerdict::correct, "correct"},
     {InterventionVerdict::partial, "partial"},
     {InterventionVerdict::incorrect, "incorrect"},
     {InterventionVerdict::not_applicable, "not_applicable"}}};
constexpr std::array<std::pair<FailureReason, std::string_view>, 5> kReasons{
    {{FailureReason::overconfidence_in_uncertainty, "overconfidence_in_uncertainty"},
     {FailureReason::protocol_vs_patient_gap, "protocol_vs_patient_gap"},
     {FailureReason::protocol_vs_practice_gap, "protocol_vs_practice_gap"},
     {FailureReason::coherent_but_factually_incorrect, "coherent_but_factually_incorrect"},
     {FailureReason::process_blindness, "process_blindness"}}};
constexpr std::array<std::pair<Harm, std::string_view>, 5> kHarms{{{Harm::none, "none"},
                                                                   {Harm::mild, "mild"},
                                                                   {Harm::moderate, "moderate"},
                                                                   {Harm::severe, "severe"},
                                                                   {Harm::death, "death"}}};

}  // namespace

std::string_view to_string(IssueVerdict v) { return name_of(v, kIssueVerdicts); }
std::string_view to_string(InterventionVerdict v) { return name_of(v, kInterventionVerdicts); }
std::string_view to_string(FailureReason r) { return name_of(r, kReasons); }
std::string_view to_string(Harm h) { return name_of(h, kHarms); }
IssueVerdict parse_issue_verdict(std::string_view s) { return parse_enum(s, kIssueVerdicts, "issue verdict"); }
InterventionVerdict parse_intervention_verdict(std::string_view s) {
  return parse_enum(s, kInterventionVerdicts, "intervention verdict");
}
FailureReason parse_failure_reason(std::string_view s) { return parse_enum(s, kReasons, "failure reason"); }
Harm parse_harm(std::string_view s) { return parse_enum(s, kHarms, "harm category"); }

std::string_view to_string(Level1 v) {
  switch (v) {
    case Level1::identified: return "identified";
    case Level1::not_identified: return "not_identified";
    case Level1::not_applicable: return "not_applicable";
  }
  return "?";
}
std::string_view to_string(Level2 v) {
  switch (v) {
    case Level2::all_correct: return "all_correct";
    case Level2::some_correct: return "some_correct";
    case Level2::none_correct: return "none_correct";
    case Level2::not_reached: return "not_reached";
  }
  return "?";
}
std::string_view to_string(Level3 v) {
  switch (v) {
    case Level3::correct: return "correct";
    case Level3::partial: return "partial";
    case Level3::incorrect: return "incorrect";
    case Level3::not_reached: return "not_reached";
  }
  return "?";
}
std::string_view to_string(BinaryCell v) {
  switch (v) {
    case BinaryCell::TP: return "TP";
    case BinaryCell::FP: return "FP";
    case BinaryCell::TN: return "TN";
    case BinaryCell::FN: return "FN";
  }
  return "?";
}
std::string_view to_string(AutomatedCase c) {
  switch (c) {
    case AutomatedCase::true_negative: return "true_negative";
    case AutomatedCase::disagreement: return "disagreement";
    case AutomatedCase::both_flagged: return "both_flagged";
  }
  return "?";
}

void to_json(nlohmann::json& j, const FailureAnnotation& a) {
  j = nlohmann::json{{"reason", to_string(a.reason)}, {"mode", a.mode}, {"harm", to_string(a.harm)}};
  j["vignette_ref"] = a.vignette_ref ? nlohmann::json(*a.vignette_ref) : nlohmann::json();
}

void to_json(nlohmann::json& j, const AssessmentRecord& a) {
  auto verdicts = nlohmann::json::array();
  for (auto v : a.issue_verdicts) verdicts.push_back(to_string(v));
  j = nlohmann::json{{"patient_id", a.patient_id},
                     {"sufficient_information", a.sufficient_information},
                     {"clinician_flag", a.clinician_flag},
                     {"issue_verdicts", verdicts},
                     {"missed_issues", a.missed_issues},
                     {"intervention_verdict", to_string(a.intervention_verdict)},
                     {"failure_annotations", a.failure_annotations},
                     {"notes", a.notes}};
}

AssessmentRecord assessment_from_json(const nlohmann::json& j) {
  std::vector<std::string> problems;
  AssessmentRecord a;
  if (!j.is_object()) throw SchemaViolation("assessment must be a JSON object", j.dump());
  static const std::set<std::string> known{"patient_id",    "sufficient_information", "clinician_flag",
                                           "issue_verdicts", "missed_issues",          "intervention_verdict",
                                           "failure_annotations", "notes"};
  for (const auto& [k, v] : j.items()) {
    if (!known.contains(k)) problems.push_back("unexpected field '" + k + "'");
  }
  const auto need = [&](const char* key, bool (nlohmann::json::*check)() const noexcept, const char* type) -> bool {
    if (!j.contains(key)) {
      problems.push_back(std::string("missing field '") + key + "'");
      return false;
    }
    if (!(j[key].*check)()) {
      problems.push_back(std::string("'") + key + "' must be " + type);
      return false;
    }
    return true;
  };
  if (need("patient_id", &nlohmann::json::is_string, "a string")) a.patient_id = j["patient_id"];
  if (need("sufficient_information", &nlohmann::json::is_boolean, "a boolean")) {
    a.sufficient_information = j["sufficient_information"];
  }
  if (need("clinician_flag", &nlohmann::json::is_boolean, "a boolean")) a.clinician_flag = j["clinician_flag"];
  if (need("issue_verdicts", &nlohmann::json::is_array, "an array")) {
    for (const auto& v : j["issue_verdicts"]) {
      try {
        a.issue_verdicts.push_back(parse_issue_verdict(v.is_string() ? v.get<std::string>() : v.dump()));
      } catch (const std::invalid_argument& e) {
        problems.emplace_back(e.what());
      }
    }
  }
  if (need("missed_issues", &nlohmann::json::is_array, "an array")) {
    for (const auto& v : j["missed_issues"]) {
      if (v.is_string()) {
        a.missed_issues.push_back(v);
      } else {
        problems.emplace_back("missed_issues entries must be strings");
      }
    }
  }
  if (need("intervention_verdict", &nlohmann::json::is_string, "a string")) {
    try {
      a.intervention_verdict = parse_intervention_verdict(j["intervention_verdict"].get<std::string>());
    } catch (const std::invalid_argument& e) {
      problems.emplace_back(e.what());
    }
  }
  if (j.contains("failure_annotations")) {
    if (!j["failure_annotations"].is_array()) {
      problems.emplace_back("'failure_annotations' must be an array");
    } else {
      for (const auto& fa : j["failure_annotations"]) {
        try {
          FailureAnnotation f;
          f.reason = parse_failure_reason(fa.at("reason").get<std::string>());
          f.mode = fa.value("mode", std::string());
          f.harm = parse_harm(fa.at("harm").get<std::string>());
          if (fa.contains("vignette_ref") && !fa["vignette_ref"].is_null()) f.vignette_ref = fa["vignette_ref"];
          a.failure_annotations.push_back(std::move(f));
        } catch (const std::exception& e) {
          problems.push_back(std::string("failure annotation: ") + e.what());
        }
      }
    }
  }
  if (j.contains("notes")) {
    if (j["notes"].is_string()) {
      a.notes = j["notes"];
    } else {
      problems.emplace_back("'notes' must be a string");
    }
  }
  if (!problems.empty()) throw SchemaViolation("invalid assessment: " + join(problems, "; "), j.dump());
  return a;
}

std::vector<std::string> assessment_problems(const ReviewOutput& review, const AssessmentRecord& a) {
  std::vector<std::string> out;
  if (a.issue_verdicts.size() != review.clinical_issues.size()) {
    out.push_back("issue_verdicts has " + std::to_string(a.issue_verdicts.size()) + " entries for " +
                  std::to_string(review.clinical_issues.size()) + " reviewed issues");
  }
  const bool tn = !a.clinician_flag && !review.intervention_required;
  if (a.intervention_verdict == InterventionVerdict::not_applicable && !tn) {
    out.emplace_back("intervention_verdict not_applicable is only valid when neither side flags an issue");
  }
  if (tn && a.intervention_verdict != InterventionVerdict::not_applicable &&
      a.intervention_verdict != InterventionVerdict::correct) {
    out.emplace_back("a true negative must grade the intervention not_applicable or correct");
  }
  return out;
}

LevelOutcome classify_levels(const ReviewOutput& review, const AssessmentRecord& a) {
  if (a.issue_verdicts.size() != review.clinical_issues.size()) {
    throw AssessmentError("patient " + a.patient_id + ": " + assessment_problems(review, a).front());
  }
  LevelOutcome o;
  const bool system = review.intervention_required;
  if (system && a.clinician_flag) {
    o.binary_cell = BinaryCell::TP;
  } else if (system) {
    o.binary_cell = BinaryCell::FP;
  } else if (a.clinician_flag) {
    o.binary_cell = BinaryCell::FN;
  } else {
    o.binary_cell = BinaryCell::TN;
  }
  if (o.binary_cell == BinaryCell::FN) o.level1 = Level1::not_identified;
  if (o.binary_cell != BinaryCell::TP) return o;

  o.level1 = Level1::identified;
  const auto correct = std::count(a.issue_verdicts.begin(), a.issue_verdicts.end(), IssueVerdict::correct);
  const auto total = static_cast<std::ptrdiff_t>(a.issue_verdicts.size());
  if (total > 0 && correct == total && a.missed_issues.empty()) {
    o.level2 = Level2::all_correct;
  } else if (correct > 0) {
    o.level2 = Level2::some_correct;
  } else {
    o.level2 = Level2::none_correct;
  }
  if (o.level2 == Level2::all_correct) {
    switch (a.intervention_verdict) {
      case InterventionVerdict::correct: o.level3 = Level3::correct; break;
      case InterventionVerdict::partial: o.level3 = Level3::partial; break;
      case InterventionVerdict::incorrect: o.level3 = Level3::incorrect; break;
      case InterventionVerdict::not_applicable:
        throw AssessmentError("patient " + a.patient_id + ": not_applicable intervention verdict on a flagged case");
    }
  }
  return o;
}

double f1_score(double precision, double recall) {
  return precision + recall > 0.0 ? 2.0 * precision * recall / (precision + recall) : 0.0;
}

ClinicianScore clinician_score_detail(const ReviewOutput& review, const AssessmentRecord& a) {
  if (!a.sufficient_information) {
    throw AssessmentError("patient " + a.patient_id + " was marked insufficient information and cannot be scored");
  }
  const auto outcome = classify_levels(review, a);
  ClinicianScore s;
  if (outcome.binary_cell == BinaryCell::FP) return s;

  switch (a.intervention_verdict) {
    case InterventionVerdict::correct:
    case InterventionVerdict::not_applicable: s.s_intervention = 1.0; break;
    case InterventionVerdict::partial: s.s_intervention = 0.5; break;
    case InterventionVerdict::incorrect: s.s_intervention = 0.0; break;
  }
  if (review.clinical_issues.empty()) {
    s.score = s.s_intervention;
    return s;
  }
  const auto correct =
      static_cast<double>(std::count(a.issue_verdicts.begin(), a.issue_verdicts.end(), IssueVerdict::correct));
  s.precision = correct / static_cast<double>(review.clinical_issues.size());
  s.recall = a.missed_issues.empty() ? 1.0 : (correct > 0 ? 0.5 : 0.0);
  s.f1 = f1_score(*s.precision, *s.recall);
  s.score = (*s.f1 + s.s_intervention) / 2.0;
  return s;
}

double clinician_score(const ReviewOutput& review, const AssessmentRecord& assessment) {
  return clinician_score_detail(review, assessment).score;
}

void to_json(nlohmann::json& j, const GroundTruth& g) {
  j = nlohmann::json{
      {"patient_id", g.patient_id}, {"issues", g.issues}, {"interventions", g.interventions}, {"no_issue", g.no_issue}};
}

GroundTruth ground_truth_from_json(const nlohmann::json& j, std::string_view raw) {
  const std::string raw_text = raw.empty() ? j.dump() : std::string(raw);
  if (!j.is_object()) throw SchemaViolation("ground truth must be an object", raw_text);
  static const std::set<std::string> known{"patient_id", "issues", "interventions", "no_issue"};
  for (const auto& [k, v] : j.items()) {
    if (!known.contains(k)) throw SchemaViolation("ground truth: unexpected field '" + k + "'", raw_text);
  }
  GroundTruth g;
  const auto list = [&](const char* key) {
    if (!j.contains(key) || !j[key].is_array()) {
      throw SchemaViolation(std::string("ground truth: '") + key + "' must be an array", raw_text);
    }
    std::vector<std::string> out;
    for (const auto& v : j[key]) {
      if (!v.is_string()) throw SchemaViolation(std::string("ground truth: '") + key + "' entries must be strings", raw_text);
      out.push_back(v);
    }
    return out;
  };
  g.issues = list("issues");
  g.interventions = list("interventions");
  if (!j.contains("no_issue") || !j["no_issue"].is_boolean()) {
    throw SchemaViolation("ground truth: 'no_issue' must be a boolean", raw_text);
  }
  g.no_issue = j["no_issue"];
  if (j.contains("patient_id")) {
    if (!j["patient_id"].is_string()) throw SchemaViolation("ground truth: 'patient_id' must be a string", raw_text);
    g.patient_id = j["patient_id"];
  }
  if (g.no_issue && (!g.issues.empty() || !g.interventions.empty())) {
    throw SchemaViolation("ground truth: no_issue with non-empty lists", raw_text);
  }
  return g;
}

std::vector<std::string> split_interventions(std::string_view text) {
  std::vector<std::string> out;
  for (const auto& line : split_lines(text)) {
    auto t = trim(line);
    if (!t.empty()) out.push_back(std::move(t));
  }
  return out;
}

GroundTruth MechanicalSynthesizer::synthesize(const ReviewOutput& review, const AssessmentRecord& a) {
  if (!a.sufficient_information) throw AssessmentError("patient " + a.patient_id + " has insufficient information");
  if (a.issue_verdicts.size() != review.clinical_issues.size()) {
    throw AssessmentError("patient " + a.patient_id + ": verdicts do not align with issues");
  }
  GroundTruth g;
  g.patient_id = a.patient_id;
  if (!a.clinician_flag) {
    g.no_issue = true;
    return g;
  }
  for (std::size_t i = 0; i < review.clinical_issues.size(); ++i) {
    if (a.issue_verdicts[i] == IssueVerdict::correct) g.issues.push_back(review.clinical_issues[i].issue);
  }
  g.issues.insert(g.issues.end(), a.missed_issues.begin(), a.missed_issues.end());
  if (a.intervention_verdict == InterventionVerdict::correct || a.intervention_verdict == InterventionVerdict::partial) {
    g.interventions = split_interventions(review.intervention);
  }
  return g;
}

namespace {

template <typename Parse>
auto ask_with_retries(ChatClient& client, const std::string& prompt, const nlohmann::json& payload, int max_retries,
                      Parse parse) -> decltype(parse(std::string_view{})) {
  ChatRequest req;
  req.messages = {{"system", prompt}, {"user", payload.dump(2)}};
  std::string last_error = "no attempt made";
  for (int attempt = 0; attempt <= max_retries; ++attempt) {
    std::string raw;
    try {
      raw = client.complete(req);
    } catch (const TransportError& e) {
      last_error = e.what();
      continue;
    }
    try {
      return parse(raw);
    } catch (const OutputError&) {
      if (attempt == max_retries) throw;
    }
  }
  throw EndpointUnavailable("scoring model unavailable: " + last_error);
}

}  // namespace

GroundTruth LlmSynthesizer::synthesize(const ReviewOutput& review, const AssessmentRecord& a) {
  if (!a.sufficient_information) throw AssessmentError("patient " + a.patient_id + " has insufficient information");
  nlohmann::json payload = review_to_json(review);
  nlohmann::json aj = a;
  payload["issue_verdicts"] = aj["issue_verdicts"];
  payload["missed_issues"] = aj["missed_issues"];
  payload["intervention_verdict"] = aj["intervention_verdict"];
  payload["clinician_flag"] = a.clinician_flag;
  payload["notes"] = a.notes;
  auto g = ask_with_retries(client_, prompt_, payload, max_retries_, [](std::string_view raw) {
    return ground_truth_from_json(parse_json_document(raw, true), raw);
  });
  g.patient_id = a.patient_id;
  if (!a.clinician_flag && !g.no_issue) {
    throw SchemaViolation("synthesizer reported issues for a case the clinician marked issue-free", "");
  }
  return g;
}

nlohmann::json judge_input_json(const JudgeInput& in) {
  return {{"system_issues", in.system_issues},
          {"truth_issues", in.truth_issues},
          {"system_interventions", in.system_interventions},
          {"truth_interventions", in.truth_interventions}};
}

JudgeResult parse_judge_output(std::string_view raw, const JudgeInput& in) {
  const auto j = parse_json_document(raw, true);
  const std::string r(raw);
  if (!j.is_object()) throw SchemaViolation("judge output must be an object", r);
  for (const auto& [k, v] : j.items()) {
    if (k != "issue_matches" && k != "intervention_matches") throw SchemaViolation("judge: unexpected field '" + k + "'", r);
  }
  const auto pairs = [&](const char* key, std::size_t n_sys, std::size_t n_truth) {
    if (!j.contains(key) || !j[key].is_array()) throw SchemaViolation(std::string("judge: '") + key + "' must be an array", r);
    std::vector<MatchPair> out;
    std::set<int> used_s, used_t;
    for (const auto& m : j[key]) {
      if (!m.is_object() || m.size() != 2 || !m.contains("system_index") || !m.contains("truth_index") ||
          !m["system_index"].is_number_integer() || !m["truth_index"].is_number_integer()) {
        throw SchemaViolation(std::string("judge: malformed entry in '") + key + "'", r);
      }
      const int s = m["system_index"], t = m["truth_index"];
      if (s < 0 || t < 0 || static_cast<std::size_t>(s) >= n_sys || static_cast<std::size_t>(t) >= n_truth) {
        throw RangeViolation(std::string("judge: index out of range in '") + key + "'", r);
      }
      if (!used_s.insert(s).second || !used_t.insert(t).second) {
        throw SchemaViolation(std::string("judge: index used twice in '") + key + "'", r);
      }
      out.push_back({s, t});
    }
    return out;
  };
  JudgeResult res;
  res.issue_matches = pairs("issue_matches", in.system_issues.size(), in.truth_issues.size());
  res.intervention_matches =
      pairs("intervention_matches", in.system_interventions.size(), in.truth_interventions.size());
  return res;
}

std::string normalize_statement(std::string_view s) {
  std::string out;
  bool space = false;
  for (char c : s) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      space = !out.empty();
      continue;
    }
    if (space) out += ' ';
    space = false;
    out += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  }
  while (!out.empty() && (out.back() == '.' || out.back() == ';' || out.back() == ',' || out.back() == '!')) out.pop_back();
  return out;
}

JudgeResult MechanicalJudge::judge(const JudgeInput& in) {
  const auto match = [](const std::vector<std::string>& sys, const std::vector<std::string>& truth) {
    std::vector<MatchPair> out;
    std::vector<bool> used(truth.size(), false);
    for (std::size_t s = 0; s < sys.size(); ++s) {
      const auto ns = normalize_statement(sys[s]);
      for (std::size_t t = 0; t < truth.size(); ++t) {
        if (!used[t] && normalize_statement(truth[t]) == ns) {
          used[t] = true;
          out.push_back({static_cast<int>(s), static_cast<int>(t)});
          break;
        }
      }
    }
    return out;
  };
  return {match(in.system_issues, in.truth_issues), match(in.system_interventions, in.truth_interventions)};
}

JudgeResult LlmJudge::judge(const JudgeInput& in) {
  return ask_with_retries(client_, prompt_, judge_input_json(in), max_retries_,
                          [&](std::string_view raw) { return parse_judge_output(raw, in); });
}

namespace {

// F1 over one list pair; both empty counts as full agreement.
double list_f1(std::size_t matched, std::size_t n_sys, std::size_t n_truth) {
  if (n_sys == 0 && n_truth == 0) return 1.0;
  if (n_sys == 0 || n_truth == 0) return 0.0;
  return f1_score(static_cast<double>(matched) / static_cast<double>(n_sys),
                  static_cast<double>(matched) / static_cast<double>(n_truth));
}

void fill(const std::vector<std::string>& sys, const std::vector<std::string>& truth, const std::vector<MatchPair>& m,
          std::vector<std::pair<std::string, std::string>>& matched, std::vector<std::string>& missed,
          std::vector<std::string>& spurious) {
  std::vector<bool> s_used(sys.size(), false), t_used(truth.size(), false);
  for (const auto& p : m) {
    s_used[static_cast<std::size_t>(p.system)] = true;
    t_used[static_cast<std::size_t>(p.truth)] = true;
    matched.emplace_back(sys[static_cast<std::size_t>(p.system)], truth[static_cast<std::size_t>(p.truth)]);
  }
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (!t_used[i]) missed.push_back(truth[i]);
  }
  for (std::size_t i = 0; i < sys.size(); ++i) {
    if (!s_used[i]) spurious.push_back(sys[i]);
  }
}

}  // namespace

AutomatedScore automated_score(const ReviewOutput& review, const GroundTruth& truth, Judge& judge) {
  AutomatedScore out;
  const bool system = review.intervention_required;
  const bool truth_flag = !truth.no_issue;
  if (!system && !truth_flag) {
    out.kind = AutomatedCase::true_negative;
    out.score = 1.0;
    return out;
  }
  if (system != truth_flag) {
    out.kind = AutomatedCase::disagreement;
    out.score = 0.0;
    return out;
  }
  out.kind = AutomatedCase::both_flagged;
  JudgeInput in;
  for (const auto& i : review.clinical_issues) in.system_issues.push_back(i.issue);
  in.truth_issues = truth.issues;
  in.system_interventions = split_interventions(review.intervention);
  in.truth_interventions = truth.interventions;
  const auto res = judge.judge(in);
  auto& r = out.report;
  fill(in.system_issues, in.truth_issues, res.issue_matches, r.matched_issues, r.missed_issues, r.spurious_issues);
  fill(in.system_interventions, in.truth_interventions, res.intervention_matches, r.matched_interventions,
       r.missed_interventions, r.spurious_interventions);
  r.f1_issue = list_f1(res.issue_matches.size(), in.system_issues.size(), in.truth_issues.size());
  r.f1_intervention =
      list_f1(res.intervention_matches.size(), in.system_interventions.size(), in.truth_interventions.size());
  out.score = (*r.f1_issue + *r.f1_intervention) / 2.0;
  return out;
}

void to_json(nlohmann::json& j, const MatchReport& r) {
  const auto pairs = [](const std::vector<std::pair<std::string, std::string>>& v) {
    auto a = nlohmann::json::array();
    for (const auto& [s, t] : v) a.push_back({{"system", s}, {"truth", t}});
    return a;
  };
  j = nlohmann::json{{"matched_issues", pairs(r.matched_issues)},
                     {"missed_issues", r.missed_issues},
                     {"spurious_issues", r.spurious_issues},
                     {"matched_interventions", pairs(r.matched_interventions)},
                     {"missed_interventions", r.missed_interventions},
                     {"spurious_interventions", r.spurious_interventions}};
  j["f1_issue"] = r.f1_issue ? nlohmann::json(*r.f1_issue) : nlohmann::json();
  j["f1_intervention"] = r.f1_intervention ? nlohmann::json(*r.f1_intervention) : nlohmann::json();
}

}  // namespace medsafe
