#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "medsafe/chat.hpp"
#include "medsafe/ehr.hpp"
#include "medsafe/review.hpp"

namespace medsafe {

struct AttemptRecord {
  std::string raw_text;  // empty on transport failure
  std::string error;     // empty on success
  std::string error_kind;  // transport | malformed | schema | range
};

struct EpochRecord {
  int epoch = 0;
  std::uint64_t seed = 0;
  std::string started_at;
  std::string finished_at;
  std::vector<AttemptRecord> attempts;
  bool fence_stripped = false;
  std::optional<ReviewOutput> output;

  [[nodiscard]] int retries() const { return attempts.empty() ? 0 : static_cast<int>(attempts.size()) - 1; }
  /// Raw text of the final attempt that reached the model.
  [[nodiscard]] std::string raw_text() const;
};

struct RunMetadata {
  std::string patient_id;
  std::string model_name;
  std::string seed_tag;
  std::string prompt_sha256;
  nlohmann::json sampling = nlohmann::json::object();
  std::string started_at;
  std::string finished_at;
  std::vector<EpochRecord> epochs;

  [[nodiscard]] int total_retries() const;
  [[nodiscard]] int fence_leniency_count() const;
};

struct ReviewRun {
  std::vector<ReviewOutput> outputs;
  RunMetadata metadata;
};

/// An epoch still failed after all retries on output errors. The partial run
/// (with raw text) has already been persisted.
class IncompleteRun : public std::runtime_error {
 public:
  IncompleteRun(const std::string& what, ReviewRun partial) : std::runtime_error(what), partial_(std::move(partial)) {}
  [[nodiscard]] const ReviewRun& partial() const { return partial_; }

 private:
  ReviewRun partial_;
};

using PersistFn = std::function<void(const ReviewRun&)>;

struct ReviewJob {
  const PatientProfile* profile = nullptr;
  Date as_of;
};

/// Seed for one epoch: stable function of (seed_tag, patient, epoch).
std::uint64_t epoch_seed(const std::string& seed_tag, const std::string& patient_id, int epoch);

/// Runs `epochs` independent completions. Each attempt is retried up to
/// cfg.max_retries times on transport or output errors. `persist` is called
/// before returning or throwing. Throws EndpointUnavailable when transport
/// keeps failing and IncompleteRun when outputs stay invalid.
ReviewRun run_review(const PatientProfile& profile, Date as_of, const ModelConfig& cfg, ChatClient& client,
                     const std::string& system_prompt, int epochs, const std::string& seed_tag,
                     const PersistFn& persist = {});

struct BatchResult {
  std::vector<ReviewRun> runs;  // completed, in job order
  std::vector<std::pair<std::string, std::string>> failures;  // patient_id, error
};

/// Runs patients concurrently with at most `parallelism` in flight. `persist`
/// is serialised so it sees one run at a time.
BatchResult run_reviews(std::span<const ReviewJob> jobs, const ModelConfig& cfg, ChatClient& client,
                        const std::string& system_prompt, int epochs, const std::string& seed_tag, int parallelism,
                        const PersistFn& persist = {});

std::string utc_timestamp();

void to_json(nlohmann::json& j, const ReviewRun& run);
ReviewRun review_run_from_json(const nlohmann::json& j);

}  // namespace medsafe
