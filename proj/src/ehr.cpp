#include "medsafe/ehr.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <deque>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <utility>

#include "medsafe/util.hpp"

namespace medsafe {

namespace {

constexpr std::array<std::pair<EventKind, std::string_view>, 9> kEventKinds{{
    {EventKind::diagnosis, "diagnosis"},
    {EventKind::medication_start, "medication_start"},
    {EventKind::medication_end, "medication_end"},
    {EventKind::lab_result, "lab_result"},
    {EventKind::observation, "observation"},
    {EventKind::hospital_episode, "hospital_episode"},
    {EventKind::gp_event, "gp_event"},
    {EventKind::register_entry, "register_entry"},
    {EventKind::review_note, "review_note"},
}};

std::string_view event_label(EventKind k) {
  switch (k) {
    case EventKind::diagnosis: return "diagnosis";
    case EventKind::medication_start: return "medication started";
    case EventKind::medication_end: return "medication ended";
    case EventKind::lab_result: return "lab result";
    case EventKind::observation: return "observation";
    case EventKind::hospital_episode: return "hospital episode";
    case EventKind::gp_event: return "GP event";
    case EventKind::register_entry: return "register entry";
    case EventKind::review_note: return "review note";
  }
  return "event";
}

bool is_medication(EventKind k) {
  return k == EventKind::medication_start || k == EventKind::medication_end;
}

bool all_digits(std::string_view s) {
  return !s.empty() && std::all_of(s.begin(), s.end(), [](char c) { return c >= '0' && c <= '9'; });
}

struct PairedCourse {
  MedicationInterval interval;
  std::size_t start_event = 0;
};

std::vector<PairedCourse> pair_courses(const PatientProfile& profile) {
  std::vector<PairedCourse> courses;
  std::map<std::string, std::deque<std::size_t>> open;  // code -> course indices
  for (std::size_t i = 0; i < profile.events.size(); ++i) {
    const auto& e = profile.events[i];
    if (e.kind == EventKind::medication_start) {
      open[e.code].push_back(courses.size());
      courses.push_back({MedicationInterval{e.code, e.display, e.date, std::nullopt, e.dose.value_or("")}, i});
    } else if (e.kind == EventKind::medication_end) {
      auto it = open.find(e.code);
      if (it == open.end() || it->second.empty()) {
        throw ProfileError("patient " + profile.patient_id + ": medication end for " + e.code + " on " +
                           e.date.iso() + " has no matching start");
      }
      courses[it->second.front()].interval.end = e.date;
      it->second.pop_front();
    }
  }
  return courses;
}

}  // namespace

std::string_view to_string(Sex s) {
  switch (s) {
    case Sex::male: return "male";
    case Sex::female: return "female";
    case Sex::unknown: return "unknown";
  }
  return "unknown";
}

std::string_view to_string(Ethnicity e) {
  switch (e) {
    case Ethnicity::White: return "White";
    case Ethnicity::Asian: return "Asian";
    case Ethnicity::Black: return "Black";
    case Ethnicity::other: return "other";
    case Ethnicity::unstated: return "unstated";
  }
  return "unstated";
}

std::string_view to_string(EventKind k) {
  for (const auto& [kind, name] : kEventKinds) {
    if (kind == k) return name;
  }
  return "gp_event";
}

Sex parse_sex(std::string_view s) {
  if (s == "male") return Sex::male;
  if (s == "female") return Sex::female;
  if (s == "unknown") return Sex::unknown;
  throw std::invalid_argument("unknown sex '" + std::string(s) + "'");
}

Ethnicity parse_ethnicity(std::string_view s) {
  for (auto e : {Ethnicity::White, Ethnicity::Asian, Ethnicity::Black, Ethnicity::other, Ethnicity::unstated}) {
    if (to_string(e) == s) return e;
  }
  throw std::invalid_argument("unknown ethnicity '" + std::string(s) + "'");
}

EventKind parse_event_kind(std::string_view s) {
  for (const auto& [kind, name] : kEventKinds) {
    if (name == s) return kind;
  }
  throw std::invalid_argument("unknown event kind '" + std::string(s) + "'");
}

void sort_events(PatientProfile& profile) {
  std::stable_sort(profile.events.begin(), profile.events.end(),
                   [](const ClinicalEvent& a, const ClinicalEvent& b) { return a.date < b.date; });
}

void validate_profile(const PatientProfile& profile, std::optional<Date> as_of) {
  const auto fail = [&](const std::string& what) {
    throw ProfileError("patient " + profile.patient_id + ": " + what);
  };
  if (profile.patient_id.empty()) fail("empty patient_id");
  if (profile.imd_decile && (*profile.imd_decile < 1 || *profile.imd_decile > 10)) {
    fail("imd_decile out of range 1-10");
  }
  for (std::size_t i = 0; i < profile.events.size(); ++i) {
    const auto& e = profile.events[i];
    if (i > 0 && e.date < profile.events[i - 1].date) fail("events not in date order");
    if ((e.kind == EventKind::lab_result || e.kind == EventKind::observation) && !e.value) {
      fail(std::string(to_string(e.kind)) + " on " + e.date.iso() + " has no value");
    }
    if (is_medication(e.kind) && !all_digits(e.code)) {
      fail("medication event on " + e.date.iso() + " lacks a dm+d code");
    }
  }
  (void)pair_courses(profile);
  if (as_of) {
    if (!profile.birth_year) fail("age unavailable");
    if (as_of->year() - *profile.birth_year < 18) fail("patient younger than 18 at evaluation date");
  }
}

std::vector<MedicationInterval> medication_intervals(const PatientProfile& profile) {
  std::vector<MedicationInterval> out;
  for (auto& c : pair_courses(profile)) out.push_back(std::move(c.interval));
  return out;
}

std::string render_profile(const PatientProfile& profile, Date as_of) {
  std::ostringstream md;
  md << "# Patient profile\n\n";
  md << "- Patient ID: " << profile.patient_id << "\n";
  md << "- Review date: " << as_of.iso() << "\n";
  if (profile.birth_year) {
    md << "- Age: " << (as_of.year() - *profile.birth_year) << " (born " << *profile.birth_year << ")\n";
  } else {
    md << "- Age: unknown\n";
  }
  md << "- Sex: " << to_string(profile.sex) << "\n";
  if (profile.ethnicity && *profile.ethnicity != Ethnicity::unstated) {
    md << "- Ethnicity: " << to_string(*profile.ethnicity) << "\n";
  }
  if (profile.imd_decile) md << "- IMD decile: " << *profile.imd_decile << "\n";
  md << "- QoF registers (" << profile.registers.size() << "): "
     << (profile.registers.empty() ? std::string("none") : join(profile.registers, ", ")) << "\n";
  if (profile.deceased) md << "- Deceased: " << profile.deceased->iso() << "\n";

  if (profile.events.empty()) return md.str();

  std::map<std::size_t, const MedicationInterval*> course_by_event;
  const auto courses = pair_courses(profile);
  for (const auto& c : courses) course_by_event[c.start_event] = &c.interval;

  md << "\n## Clinical events (chronological)\n\n";
  for (std::size_t i = 0; i < profile.events.size(); ++i) {
    const auto& e = profile.events[i];
    md << "- " << e.date.iso() << " | " << event_label(e.kind) << " | " << e.display << " [" << e.code << "]";
    if (e.value) md << " | " << format_number(e.value->value) << (e.value->unit.empty() ? "" : " ") << e.value->unit;
    if (e.dose && !e.dose->empty()) md << " | dose: " << *e.dose;
    if (auto it = course_by_event.find(i); it != course_by_event.end()) {
      const auto& course = *it->second;
      md << " | " << (course.end ? "until " + course.end->iso() : std::string("ongoing"));
      const bool past = course.end && *course.end <= as_of;
      const bool future = course.start > as_of;
      md << " | " << (past ? "past prescription" : future ? "future prescription" : "active prescription");
    }
    md << "\n";
  }
  return md.str();
}

ComplexityFeatures complexity_features(const PatientProfile& profile, Date as_of) {
  if (!profile.birth_year) throw ProfileError("patient " + profile.patient_id + ": age unavailable");
  ComplexityFeatures f;
  f.age = as_of.year() - *profile.birth_year;
  for (const auto& m : medication_intervals(profile)) {
    if (m.active_on(as_of)) ++f.active_med_count;
  }
  f.qof_count = static_cast<int>(profile.registers.size());
  for (const auto& e : profile.events) {
    if (e.kind == EventKind::gp_event && e.date >= kRecentEventsSince && e.date <= as_of) ++f.recent_gp_events;
  }
  return f;
}

void to_json(nlohmann::json& j, const ClinicalEvent& e) {
  j = nlohmann::json{{"date", e.date.iso()}, {"kind", to_string(e.kind)}, {"code", e.code}, {"display", e.display}};
  if (e.value) j["value"] = {{"value", e.value->value}, {"unit", e.value->unit}};
  if (e.dose) j["dose"] = *e.dose;
}

void from_json(const nlohmann::json& j, ClinicalEvent& e) {
  e.date = Date::parse(j.at("date").get<std::string>());
  e.kind = parse_event_kind(j.at("kind").get<std::string>());
  e.code = j.at("code").get<std::string>();
  e.display = j.value("display", std::string{});
  e.value.reset();
  e.dose.reset();
  if (auto it = j.find("value"); it != j.end() && !it->is_null()) {
    e.value = Quantity{it->at("value").get<double>(), it->value("unit", std::string{})};
  }
  if (auto it = j.find("dose"); it != j.end() && !it->is_null()) e.dose = it->get<std::string>();
}

void to_json(nlohmann::json& j, const PatientProfile& p) {
  j = nlohmann::json{{"patient_id", p.patient_id}, {"sex", to_string(p.sex)}, {"events", p.events},
                     {"registers", p.registers}};
  j["birth_year"] = p.birth_year ? nlohmann::json(*p.birth_year) : nlohmann::json(nullptr);
  j["ethnicity"] = p.ethnicity ? nlohmann::json(to_string(*p.ethnicity)) : nlohmann::json(nullptr);
  j["imd_decile"] = p.imd_decile ? nlohmann::json(*p.imd_decile) : nlohmann::json(nullptr);
  j["deceased"] = p.deceased ? nlohmann::json(p.deceased->iso()) : nlohmann::json(nullptr);
}

void from_json(const nlohmann::json& j, PatientProfile& p) {
  p = PatientProfile{};
  p.patient_id = j.at("patient_id").get<std::string>();
  if (auto it = j.find("birth_year"); it != j.end() && !it->is_null()) p.birth_year = it->get<int>();
  p.sex = parse_sex(j.value("sex", std::string("unknown")));
  if (auto it = j.find("ethnicity"); it != j.end() && !it->is_null()) p.ethnicity = parse_ethnicity(it->get<std::string>());
  if (auto it = j.find("imd_decile"); it != j.end() && !it->is_null()) p.imd_decile = it->get<int>();
  if (auto it = j.find("events"); it != j.end()) p.events = it->get<std::vector<ClinicalEvent>>();
  if (auto it = j.find("registers"); it != j.end()) p.registers = it->get<std::set<std::string>>();
  if (auto it = j.find("deceased"); it != j.end() && !it->is_null()) p.deceased = Date::parse(it->get<std::string>());
  sort_events(p);
  validate_profile(p);
}

void to_json(nlohmann::json& j, const ComplexityFeatures& f) {
  j = nlohmann::json{{"age", f.age},
                     {"active_med_count", f.active_med_count},
                     {"qof_count", f.qof_count},
                     {"recent_gp_events", f.recent_gp_events}};
}

PatientProfile load_profile(const std::string& path) { return read_json_file(path).get<PatientProfile>(); }

std::vector<PatientProfile> load_cohort(const std::string& path) {
  namespace fs = std::filesystem;
  std::vector<PatientProfile> cohort;
  if (fs::is_directory(path)) {
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(path)) {
      if (entry.path().extension() == ".json") files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    for (const auto& f : files) cohort.push_back(load_profile(f.string()));
    return cohort;
  }
  const auto doc = read_json_file(path);
  const auto& arr = doc.is_array() ? doc : doc.at("profiles");
  for (const auto& item : arr) cohort.push_back(item.get<PatientProfile>());
  return cohort;
}

void save_cohort(const std::string& path, const std::vector<PatientProfile>& cohort) {
  write_file_atomic(path, nlohmann::json{{"profiles", cohort}}.dump(1) + "\n");
}

}  // namespace medsafe
