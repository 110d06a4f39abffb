#pragma once

#include <string>
#include <vector>

#include "medsafe/codes.hpp"
#include "medsafe/ehr.hpp"
#include "medsafe/indicator.hpp"

namespace medsafe::fixture {

const CodeDictionary& shipped_codes();
const std::vector<IndicatorRule>& shipped_rules();
const IndicatorRule& shipped_rule(const std::string& id);

inline Date D(const char* iso) { return Date::parse(iso); }

ClinicalEvent med_start(const char* date, const std::string& code, const std::string& dose = "as directed");
ClinicalEvent med_end(const char* date, const std::string& code);
ClinicalEvent diagnosis(const char* date, const std::string& code);
ClinicalEvent lab(const char* date, const std::string& code, double value, const std::string& unit = "U/L");
ClinicalEvent observation(const char* date, const std::string& code, double value, const std::string& unit);
ClinicalEvent gp(const char* date);

/// Adult patient with the given events, sorted.
PatientProfile patient(const std::string& id, std::vector<ClinicalEvent> events);

/// First member of a named code set in the shipped dictionary.
std::string code_in(const std::string& set);

/// Temporary directory removed on destruction.
class TempDir {
 public:
  TempDir();
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  [[nodiscard]] const std::string& path() const { return path_; }
  [[nodiscard]] std::string file(const std::string& name) const { return path_ + "/" + name; }

 private:
  std::string path_;
};

}  // namespace medsafe::fixture
