#pragma once

#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace medsafe {

struct ClinicalIssue {
  std::string issue;
  std::string evidence;
  bool intervention_required = false;

  bool operator==(const ClinicalIssue&) const = default;
};

/// Structured result of one review completion.
struct ReviewOutput {
  std::string patient_review;
  std::vector<ClinicalIssue> clinical_issues;
  std::string intervention;
  bool intervention_required = false;
  double intervention_probability = 0.0;

  bool operator==(const ReviewOutput&) const = default;
};

/// Base of the structured-output error family. Always carries the raw text.
class OutputError : public std::runtime_error {
 public:
  OutputError(const std::string& what, std::string raw) : std::runtime_error(what), raw_(std::move(raw)) {}
  [[nodiscard]] const std::string& raw() const { return raw_; }

 private:
  std::string raw_;
};

/// Not parseable as a single JSON document.
class MalformedOutput : public OutputError {
 public:
  using OutputError::OutputError;
};

/// JSON, but a field is missing, extra, or of the wrong type.
class SchemaViolation : public OutputError {
 public:
  using OutputError::OutputError;
};

/// A numeric field is outside its allowed range.
class RangeViolation : public OutputError {
 public:
  using OutputError::OutputError;
};

struct ParseOptions {
  /// Accept a completion wrapped in a ``` or ```json fence.
  bool allow_fence = true;
};

struct ParsedReview {
  ReviewOutput output;
  bool fence_stripped = false;
};

ParsedReview parse_review(std::string_view raw, ParseOptions opts = {});
ReviewOutput parse_review_output(std::string_view raw, ParseOptions opts = {});

/// Strips one surrounding markdown code fence if present; returns whether it did.
bool strip_code_fence(std::string& text);

/// Parses `text` as JSON (after optional fence stripping), MalformedOutput on failure.
nlohmann::json parse_json_document(std::string_view raw, bool allow_fence, bool* fence_stripped = nullptr);

nlohmann::json review_to_json(const ReviewOutput& r);
/// Strict: same checks as parse_review_output, on an already-parsed document.
ReviewOutput review_from_json(const nlohmann::json& j, std::string_view raw = {});
std::string serialize_review_output(const ReviewOutput& r);

}  // namespace medsafe
