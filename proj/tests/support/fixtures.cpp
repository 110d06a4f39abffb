#include "fixtures.hpp"

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <stdexcept>

namespace medsafe::fixture {

const CodeDictionary& shipped_codes() {
  static const CodeDictionary dict = CodeDictionary::load(std::string(MEDSAFE_ASSET_DIR) + "/codes.json");
  return dict;
}

const std::vector<IndicatorRule>& shipped_rules() {
  static const std::vector<IndicatorRule> rules = load_rules(MEDSAFE_RULE_DIR, shipped_codes());
  return rules;
}

const IndicatorRule& shipped_rule(const std::string& id) {
  const auto& rules = shipped_rules();
  const auto it = std::find_if(rules.begin(), rules.end(), [&](const auto& r) { return r.id == id; });
  if (it == rules.end()) throw std::out_of_range("no shipped rule " + id);
  return *it;
}

namespace {
ClinicalEvent make(const char* date, EventKind kind, const std::string& code) {
  const auto* entry = shipped_codes().find(code);
  return {Date::parse(date), kind, code, entry ? entry->display : code, std::nullopt, std::nullopt};
}
}  // namespace

ClinicalEvent med_start(const char* date, const std::string& code, const std::string& dose) {
  auto e = make(date, EventKind::medication_start, code);
  e.dose = dose;
  return e;
}
ClinicalEvent med_end(const char* date, const std::string& code) { return make(date, EventKind::medication_end, code); }
ClinicalEvent diagnosis(const char* date, const std::string& code) { return make(date, EventKind::diagnosis, code); }
ClinicalEvent lab(const char* date, const std::string& code, double value, const std::string& unit) {
  auto e = make(date, EventKind::lab_result, code);
  e.value = Quantity{value, unit};
  return e;
}
ClinicalEvent observation(const char* date, const std::string& code, double value, const std::string& unit) {
  auto e = make(date, EventKind::observation, code);
  e.value = Quantity{value, unit};
  return e;
}
ClinicalEvent gp(const char* date) { return make(date, EventKind::gp_event, "185317003"); }

PatientProfile patient(const std::string& id, std::vector<ClinicalEvent> events) {
  PatientProfile p;
  p.patient_id = id;
  p.birth_year = 1960;
  p.sex = Sex::female;
  p.events = std::move(events);
  sort_events(p);
  return p;
}

std::string code_in(const std::string& set) { return shipped_codes().set_members(set).front(); }

TempDir::TempDir() {
  std::string tmpl = (std::filesystem::temp_directory_path() / "medsafe-test-XXXXXX").string();
  if (!mkdtemp(tmpl.data())) throw std::runtime_error("mkdtemp failed");
  path_ = tmpl;
}

TempDir::~TempDir() {
  std::error_code ec;
  std::filesystem::remove_all(path_, ec);
}

}  // namespace medsafe::fixture
