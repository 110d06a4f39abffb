#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "medsafe/cohort.hpp"
#include "medsafe/date.hpp"
#include "medsafe/ehr.hpp"
#include "medsafe/runner.hpp"
#include "medsafe/sampling.hpp"
#include "medsafe/scoring.hpp"

namespace medsafe {

enum class PatientStatus { pending, reviewed, assessed, excluded_insufficient };
std::string_view to_string(PatientStatus s);
PatientStatus parse_patient_status(std::string_view s);

/// Whether `from -> to` is a permitted transition.
bool transition_allowed(PatientStatus from, PatientStatus to);

struct SessionRecord {
  std::string session_id;
  std::string created_at;
  std::string cohort_ref;
  Date as_of;
  EvaluationSet evaluation_set;
  nlohmann::json model_configs = nlohmann::json::array();
  /// Review order; every id has an entry in `status`.
  std::vector<std::string> patients;
  std::map<std::string, PatientStatus> status;

  [[nodiscard]] int count(PatientStatus s) const;
  bool operator==(const SessionRecord&) const = default;
};

void to_json(nlohmann::json& j, const SessionRecord& s);
SessionRecord session_from_json(const nlohmann::json& j);

class StoreError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Unknown session, patient or cohort.
class NotFound : public StoreError {
 public:
  using StoreError::StoreError;
};

/// Operation not allowed from the patient's current status.
class StatusError : public StoreError {
 public:
  using StoreError::StoreError;
};

/// Another writer holds the session lock.
class LockConflict : public StoreError {
 public:
  using StoreError::StoreError;
};

/// Exclusive writer lease on one session, held through a lock file created
/// with O_EXCL. A lock left by a dead process is reclaimed.
class SessionLock {
 public:
  explicit SessionLock(std::filesystem::path path);
  ~SessionLock();
  SessionLock(const SessionLock&) = delete;
  SessionLock& operator=(const SessionLock&) = delete;

 private:
  std::filesystem::path path_;
};

struct StoredCohort {
  std::vector<PatientProfile> profiles;
  CohortManifest manifest;
};

struct ReportBundle {
  std::filesystem::path dir;
  /// Relative path -> content, in path order.
  std::map<std::string, std::string> files;
};

class SessionWriter;

/// Directory tree of JSON documents:
///   index.json
///   cohorts/<ref>.json
///   sessions/<id>/session.json
///   sessions/<id>/reviews/<patient>.json
///   sessions/<id>/assessments/<patient>/<version>.json
///   sessions/<id>/ground_truth/<patient>.json
///   sessions/<id>/reports/
class Store {
 public:
  explicit Store(std::filesystem::path root);

  [[nodiscard]] const std::filesystem::path& root() const { return root_; }
  [[nodiscard]] std::filesystem::path session_dir(const std::string& session_id) const;

  void save_cohort(const std::string& ref, const GeneratedCohort& cohort);
  [[nodiscard]] StoredCohort load_cohort(const std::string& ref) const;

  /// Fails with StoreError when the session exists.
  SessionRecord create_session(const std::string& session_id, const std::string& cohort_ref, Date as_of,
                               const EvaluationSet& set, const nlohmann::json& model_configs);
  [[nodiscard]] SessionRecord load_session(const std::string& session_id) const;
  [[nodiscard]] std::vector<std::string> list_sessions() const;

  [[nodiscard]] std::optional<ReviewRun> load_review(const std::string& session_id, const std::string& patient_id) const;
  /// All versions, oldest first.
  [[nodiscard]] std::vector<AssessmentRecord> assessment_versions(const std::string& session_id,
                                                                  const std::string& patient_id) const;
  [[nodiscard]] std::optional<AssessmentRecord> latest_assessment(const std::string& session_id,
                                                                  const std::string& patient_id) const;
  [[nodiscard]] std::optional<GroundTruth> load_ground_truth(const std::string& session_id,
                                                             const std::string& patient_id) const;

  /// Takes the single-writer lock; throws LockConflict when held elsewhere.
  [[nodiscard]] std::unique_ptr<SessionWriter> open_writer(const std::string& session_id);

 private:
  void update_index(const std::string& kind, const std::string& name);

  std::filesystem::path root_;
};

/// All mutations of one session. Thread-safe; calls are serialised.
class SessionWriter {
 public:
  SessionWriter(Store& store, const std::string& session_id);

  [[nodiscard]] SessionRecord session() const;

  /// Saves the run; a complete one (every epoch has an output) moves
  /// pending -> reviewed. Re-running a reviewed patient replaces the review;
  /// later statuses are a StatusError.
  SessionRecord save_review(const ReviewRun& run);
  /// Insufficient moves a pending or reviewed patient to excluded;
  /// sufficient requires a reviewed patient and changes nothing.
  SessionRecord mark_sufficiency(const std::string& patient_id, bool sufficient);
  /// Appends a new version. Allowed from reviewed, or from assessed as a
  /// re-assessment. Throws AssessmentError when the record does not fit the
  /// graded review (epoch 0).
  SessionRecord append_assessment(const std::string& patient_id, const AssessmentRecord& record);
  void save_ground_truth(const GroundTruth& truth);
  /// Appends `cfg` to the session's model configs unless already present.
  SessionRecord record_model_config(const nlohmann::json& cfg);

  /// Deterministic report over assessed patients; automated scores use
  /// `judge` (mechanical by default). Throws StoreError when none is assessed.
  ReportBundle export_report();
  ReportBundle export_report(Judge& judge);

 private:
  void require_patient(const std::string& patient_id) const;
  void persist_session();

  Store& store_;
  std::string session_id_;
  SessionLock lock_;
  mutable std::mutex mutex_;
  SessionRecord record_;
};

/// Level counts in the outcome-table layout, plus both level-3 rates.
nlohmann::json outcome_table(const std::vector<LevelOutcome>& outcomes);

}  // namespace medsafe
