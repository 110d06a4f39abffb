#include "medsafe/codes.hpp"

#include "medsafe/util.hpp"

namespace medsafe {

CodeDictionary CodeDictionary::from_json(const nlohmann::json& doc) {
  CodeDictionary dict;
  dict.version_ = doc.at("version").get<std::string>();
  for (const auto& c : doc.at("codes")) {
    CodeEntry e{c.at("code").get<std::string>(), c.value("system", std::string{}), c.value("category", std::string{}),
                c.value("display", std::string{})};
    dict.codes_.emplace(e.code, e);
  }
  for (const auto& [name, members] : doc.at("sets").items()) {
    auto list = members.get<std::vector<std::string>>();
    for (const auto& code : list) {
      if (!dict.codes_.contains(code)) {
        throw std::runtime_error("code set '" + name + "' references undeclared code " + code);
      }
    }
    dict.sets_.emplace(name, std::unordered_set<std::string>(list.begin(), list.end()));
    dict.ordered_sets_.emplace(name, std::move(list));
  }
  return dict;
}

CodeDictionary CodeDictionary::load(const std::string& path) { return from_json(read_json_file(path)); }

const CodeEntry* CodeDictionary::find(std::string_view code) const {
  auto it = codes_.find(code);
  return it == codes_.end() ? nullptr : &it->second;
}

bool CodeDictionary::has_set(std::string_view name) const { return sets_.find(name) != sets_.end(); }

const std::unordered_set<std::string>& CodeDictionary::set(std::string_view name) const {
  auto it = sets_.find(name);
  if (it == sets_.end()) throw UnknownCodeSet(std::string(name));
  return it->second;
}

const std::vector<std::string>& CodeDictionary::set_members(std::string_view name) const {
  auto it = ordered_sets_.find(name);
  if (it == ordered_sets_.end()) throw UnknownCodeSet(std::string(name));
  return it->second;
}

std::vector<std::string> CodeDictionary::set_names() const {
  std::vector<std::string> names;
  for (const auto& [name, _] : sets_) names.push_back(name);
  return names;
}

}  // namespace medsafe
