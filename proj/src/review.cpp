#include "medsafe/review.hpp"

#include <set>

#include "medsafe/util.hpp"

namespace medsafe {

namespace {

[[noreturn]] void schema(const std::string& msg, std::string_view raw) { throw SchemaViolation(msg, std::string(raw)); }

void require_exact_keys(const nlohmann::json& obj, const std::set<std::string>& keys, const std::string& where,
                        std::string_view raw) {
  if (!obj.is_object()) schema(where + " must be an object", raw);
  for (const auto& k : keys) {
    if (!obj.contains(k)) schema(where + ": missing field '" + k + "'", raw);
  }
  for (const auto& [k, v] : obj.items()) {
    if (!keys.contains(k)) schema(where + ": unexpected field '" + k + "'", raw);
  }
}

const std::string& string_field(const nlohmann::json& obj, const std::string& key, const std::string& where,
                                std::string_view raw) {
  const auto& v = obj.at(key);
  if (!v.is_string()) schema(where + ": '" + key + "' must be a string", raw);
  return v.get_ref<const std::string&>();
}

bool bool_field(const nlohmann::json& obj, const std::string& key, const std::string& where, std::string_view raw) {
  const auto& v = obj.at(key);
  if (!v.is_boolean()) schema(where + ": '" + key + "' must be a boolean", raw);
  return v.get<bool>();
}

}  // namespace

bool strip_code_fence(std::string& text) {
  const auto t = trim(text);
  if (t.size() < 6 || t.rfind("```", 0) != 0 || t.compare(t.size() - 3, 3, "```") != 0) return false;
  const auto first_nl = t.find('\n');
  if (first_nl == std::string::npos) return false;
  const auto tag = trim(std::string_view(t).substr(3, first_nl - 3));
  if (!tag.empty() && tag != "json" && tag != "JSON") return false;
  text = t.substr(first_nl + 1, t.size() - 3 - (first_nl + 1));
  return true;
}

nlohmann::json parse_json_document(std::string_view raw, bool allow_fence, bool* fence_stripped) {
  std::string text(raw);
  const bool stripped = allow_fence && strip_code_fence(text);
  if (fence_stripped) *fence_stripped = stripped;
  try {
    return nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw MalformedOutput(std::string("not a JSON document: ") + e.what(), std::string(raw));
  }
}

ReviewOutput review_from_json(const nlohmann::json& j, std::string_view raw) {
  static const std::set<std::string> top{"patient_review", "clinical_issues", "intervention", "intervention_required",
                                         "intervention_probability"};
  static const std::set<std::string> issue_keys{"issue", "evidence", "intervention_required"};
  require_exact_keys(j, top, "review", raw);
  ReviewOutput r;
  r.patient_review = string_field(j, "patient_review", "review", raw);
  r.intervention = string_field(j, "intervention", "review", raw);
  r.intervention_required = bool_field(j, "intervention_required", "review", raw);
  const auto& p = j.at("intervention_probability");
  if (!p.is_number()) schema("review: 'intervention_probability' must be a number", raw);
  r.intervention_probability = p.get<double>();
  if (!(r.intervention_probability >= 0.0 && r.intervention_probability <= 1.0)) {
    throw RangeViolation("review: intervention_probability " + format_number(r.intervention_probability) +
                             " outside [0, 1]",
                         std::string(raw));
  }
  const auto& issues = j.at("clinical_issues");
  if (!issues.is_array()) schema("review: 'clinical_issues' must be an array", raw);
  for (std::size_t i = 0; i < issues.size(); ++i) {
    const std::string where = "clinical_issues[" + std::to_string(i) + "]";
    require_exact_keys(issues[i], issue_keys, where, raw);
    r.clinical_issues.push_back({string_field(issues[i], "issue", where, raw),
                                 string_field(issues[i], "evidence", where, raw),
                                 bool_field(issues[i], "intervention_required", where, raw)});
  }
  return r;
}

ParsedReview parse_review(std::string_view raw, ParseOptions opts) {
  ParsedReview out;
  const auto j = parse_json_document(raw, opts.allow_fence, &out.fence_stripped);
  out.output = review_from_json(j, raw);
  return out;
}

ReviewOutput parse_review_output(std::string_view raw, ParseOptions opts) { return parse_review(raw, opts).output; }

nlohmann::json review_to_json(const ReviewOutput& r) {
  auto issues = nlohmann::json::array();
  for (const auto& i : r.clinical_issues) {
    issues.push_back({{"issue", i.issue}, {"evidence", i.evidence}, {"intervention_required", i.intervention_required}});
  }
  return {{"patient_review", r.patient_review},
          {"clinical_issues", issues},
          {"intervention", r.intervention},
          {"intervention_required", r.intervention_required},
          {"intervention_probability", r.intervention_probability}};
}

std::string serialize_review_output(const ReviewOutput& r) { return review_to_json(r).dump(); }

}  // namespace medsafe
