#pragma once

#include <map>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include <nlohmann/json.hpp>

namespace medsafe {

struct CodeEntry {
  std::string code;
  std::string system;    // "snomed" or "dmd"
  std::string category;  // medication, diagnosis, observation, lab, ...
  std::string display;
};

class UnknownCodeSet : public std::runtime_error {
 public:
  explicit UnknownCodeSet(const std::string& name) : std::runtime_error("unknown code set '" + name + "'"), name_(name) {}
  [[nodiscard]] const std::string& name() const { return name_; }

 private:
  std::string name_;
};

/// Versioned vocabulary of coded concepts plus named code sets that rules
/// refer to. Hierarchy expansion is not modelled; a set is a flat list.
class CodeDictionary {
 public:
  CodeDictionary() = default;

  static CodeDictionary from_json(const nlohmann::json& doc);
  static CodeDictionary load(const std::string& path);

  [[nodiscard]] const std::string& version() const { return version_; }
  [[nodiscard]] const CodeEntry* find(std::string_view code) const;
  [[nodiscard]] bool has_set(std::string_view name) const;
  /// Throws UnknownCodeSet.
  [[nodiscard]] const std::unordered_set<std::string>& set(std::string_view name) const;
  /// Members in declaration order; throws UnknownCodeSet.
  [[nodiscard]] const std::vector<std::string>& set_members(std::string_view name) const;
  [[nodiscard]] std::vector<std::string> set_names() const;

 private:
  std::string version_;
  std::map<std::string, CodeEntry, std::less<>> codes_;
  std::map<std::string, std::vector<std::string>, std::less<>> ordered_sets_;
  std::map<std::string, std::unordered_set<std::string>, std::less<>> sets_;
};

}  // namespace medsafe
