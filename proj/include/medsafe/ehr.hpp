#pragma once

#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "medsafe/date.hpp"

namespace medsafe {

enum class Sex { male, female, unknown };
enum class Ethnicity { White, Asian, Black, other, unstated };

enum class EventKind {
  diagnosis,
  medication_start,
  medication_end,
  lab_result,
  observation,
  hospital_episode,
  gp_event,
  register_entry,
  review_note,
};

std::string_view to_string(Sex s);
std::string_view to_string(Ethnicity e);
std::string_view to_string(EventKind k);
Sex parse_sex(std::string_view s);
Ethnicity parse_ethnicity(std::string_view s);
EventKind parse_event_kind(std::string_view s);

struct Quantity {
  double value = 0.0;
  std::string unit;

  bool operator==(const Quantity&) const = default;
};

struct ClinicalEvent {
  Date date;
  EventKind kind = EventKind::gp_event;
  std::string code;
  std::string display;
  std::optional<Quantity> value;
  std::optional<std::string> dose;

  bool operator==(const ClinicalEvent&) const = default;
};

/// Longitudinal coded record of one patient. Events are kept in non-decreasing
/// date order; same-day events keep their recorded order.
struct PatientProfile {
  std::string patient_id;
  std::optional<int> birth_year;
  Sex sex = Sex::unknown;
  std::optional<Ethnicity> ethnicity;
  std::optional<int> imd_decile;
  std::vector<ClinicalEvent> events;
  std::set<std::string> registers;
  std::optional<Date> deceased;

  bool operator==(const PatientProfile&) const = default;
};

/// One prescription course derived from a medication_start event and its
/// matching medication_end (if any).
struct MedicationInterval {
  std::string code;
  std::string display;
  Date start;
  std::optional<Date> end;
  std::string dose_text;

  /// Closed start, open end: active on `d` iff start <= d and (no end or end > d).
  [[nodiscard]] bool active_on(Date d) const { return start <= d && (!end || *end > d); }

  bool operator==(const MedicationInterval&) const = default;
};

struct ComplexityFeatures {
  int age = 0;
  int active_med_count = 0;
  int qof_count = 0;
  int recent_gp_events = 0;

  bool operator==(const ComplexityFeatures&) const = default;
};

class ProfileError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// GP events on or after this date count as "recent".
inline const Date kRecentEventsSince{2020, 1, 1};

/// Stable-sorts events by date so the ordering invariant holds.
void sort_events(PatientProfile& profile);

/// Checks every profile invariant; throws ProfileError naming the first violation.
/// With `as_of`, also requires age >= 18 at that date.
void validate_profile(const PatientProfile& profile, std::optional<Date> as_of = std::nullopt);

/// Pairs medication events into courses. An end closes the earliest open start
/// with the same code. Throws ProfileError on an end with no open start.
std::vector<MedicationInterval> medication_intervals(const PatientProfile& profile);

/// Chronological markdown view of the profile as the reviewer model sees it.
std::string render_profile(const PatientProfile& profile, Date as_of);

ComplexityFeatures complexity_features(const PatientProfile& profile, Date as_of);

void to_json(nlohmann::json& j, const ClinicalEvent& e);
void from_json(const nlohmann::json& j, ClinicalEvent& e);
/// Deserialization sorts events and validates invariants (without the age check).
void to_json(nlohmann::json& j, const PatientProfile& p);
void from_json(const nlohmann::json& j, PatientProfile& p);
void to_json(nlohmann::json& j, const ComplexityFeatures& f);

PatientProfile load_profile(const std::string& path);
std::vector<PatientProfile> load_cohort(const std::string& path);
void save_cohort(const std::string& path, const std::vector<PatientProfile>& cohort);

}  // namespace medsafe
