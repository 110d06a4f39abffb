#include "medsafe/service/config.hpp"

#include <set>

#include "medsafe/prompt.hpp"
#include "medsafe/util.hpp"

namespace medsafe {

namespace fs = std::filesystem;

namespace {

class Checker {
 public:
  explicit Checker(std::vector<std::string>& problems) : problems_(problems) {}

  void keys(const nlohmann::json& obj, const std::set<std::string>& known, const std::string& where) {
    for (const auto& [k, v] : obj.items()) {
      if (!known.contains(k)) problems_.push_back(where + ": unknown field '" + k + "'");
    }
  }

  bool object(const nlohmann::json& obj, const char* key, const std::string& where) {
    if (!obj.contains(key)) return false;
    if (obj[key].is_object()) return true;
    problems_.push_back(where + key + " must be an object");
    return false;
  }

  template <typename T>
  void number(const nlohmann::json& obj, const char* key, const std::string& where, T& out, double lo, double hi) {
    if (!obj.contains(key)) return;
    const auto& v = obj[key];
    if (!v.is_number() || (std::is_integral_v<T> && !v.is_number_integer())) {
      problems_.push_back(where + key + " must be " + (std::is_integral_v<T> ? "an integer" : "a number"));
      return;
    }
    const double d = v.get<double>();
    if (d < lo || d > hi) {
      problems_.push_back(where + key + " must be in [" + format_number(lo) + ", " + format_number(hi) + "]");
      return;
    }
    out = v.get<T>();
  }

  void string(const nlohmann::json& obj, const char* key, const std::string& where, std::string& out) {
    if (!obj.contains(key)) return;
    if (!obj[key].is_string() || obj[key].get<std::string>().empty()) {
      problems_.push_back(where + key + " must be a non-empty string");
      return;
    }
    out = obj[key].get<std::string>();
  }

  void add(std::string p) { problems_.push_back(std::move(p)); }

 private:
  std::vector<std::string>& problems_;
};

fs::path resolve(const fs::path& base, const std::string& p) {
  const fs::path path(p);
  return path.is_absolute() ? path : base / path;
}

}  // namespace

const ModelConfig& ServiceConfig::model(const std::string& name) const {
  for (const auto& m : models) {
    if (m.model_name == name) return m;
  }
  throw ConfigError({"no model named '" + name + "' in the config"});
}

bool is_loopback_host(const std::string& host) { return host == "127.0.0.1" || host == "localhost" || host == "::1"; }

ServiceConfig default_service_config(const fs::path& store_dir) {
  ServiceConfig c;
  c.store_dir = store_dir;
  c.asset_dir = default_asset_dir();
  c.rule_dir = MEDSAFE_RULE_DIR;
  c.codes_path = c.asset_dir / "codes.json";
  return c;
}

ServiceConfig parse_service_config(const nlohmann::json& j, const fs::path& base_dir) {
  std::vector<std::string> problems;
  Checker check(problems);
  if (!j.is_object()) throw ConfigError({"config must be a JSON object"});
  check.keys(j, {"store", "assets", "rules", "codes", "cohort", "sampling", "models", "review", "scoring", "server"},
             "config");

  ServiceConfig c = default_service_config({});
  const auto path_field = [&](const char* key, fs::path& out) {
    std::string p;
    check.string(j, key, "", p);
    if (!p.empty()) out = resolve(base_dir, p);
  };
  if (!j.contains("store")) problems.emplace_back("missing field 'store'");
  path_field("store", c.store_dir);
  path_field("assets", c.asset_dir);
  c.codes_path = c.asset_dir / "codes.json";
  path_field("rules", c.rule_dir);
  path_field("codes", c.codes_path);

  if (check.object(j, "cohort", "")) {
    auto spec = j["cohort"];
    check.number(spec, "seed", "cohort.", c.cohort_seed, 0, 1.8e19);
    spec.erase("seed");
    try {
      c.cohort = cohort_spec_from_json(spec);
      const auto& known = plantable_indicators();
      for (const auto& plant : c.cohort->plants) {
        if (std::find(known.begin(), known.end(), plant.indicator_id) == known.end()) {
          check.add("cohort: '" + plant.indicator_id + "' is not a plantable indicator");
        }
      }
    } catch (const std::exception& e) {
      check.add(std::string("cohort: ") + e.what());
    }
  }

  if (check.object(j, "sampling", "")) {
    const auto& s = j["sampling"];
    check.keys(s, {"seed", "indicator_positive", "matched_negative", "random_negative_system_positive",
                   "random_negative_system_negative", "weights"},
               "sampling");
    check.number(s, "seed", "sampling.", c.sampling_seed, 0, 1.8e19);
    auto& n = c.sample_counts;
    check.number(s, "indicator_positive", "sampling.", n.indicator_positive, 0, 1e7);
    check.number(s, "matched_negative", "sampling.", n.matched_negative, 0, 1e7);
    check.number(s, "random_negative_system_positive", "sampling.", n.random_negative_system_positive, 0, 1e7);
    check.number(s, "random_negative_system_negative", "sampling.", n.random_negative_system_negative, 0, 1e7);
    if (s.contains("weights")) {
      const auto& w = s["weights"];
      if (!w.is_array() || w.size() != 4 ||
          !std::all_of(w.begin(), w.end(), [](const auto& x) { return x.is_number() && x.template get<double>() >= 0; })) {
        check.add("sampling.weights must be 4 non-negative numbers (age, female, active meds, recent GP events)");
      } else {
        for (std::size_t i = 0; i < 4; ++i) c.matcher_weights[i] = w[i].get<double>();
      }
    }
  }

  if (j.contains("models")) {
    const auto& ms = j["models"];
    if (!ms.is_array()) {
      check.add("models must be an array");
    } else {
      std::set<std::string> names;
      for (std::size_t i = 0; i < ms.size(); ++i) {
        const std::string where = "models[" + std::to_string(i) + "]: ";
        try {
          auto m = model_config_from_json(ms[i]);
          if (!names.insert(m.model_name).second) check.add(where + "duplicate model_name '" + m.model_name + "'");
          c.models.push_back(std::move(m));
        } catch (const ConfigError& e) {
          for (const auto& p : e.problems()) check.add(where + p);
        }
      }
    }
  }

  if (check.object(j, "review", "")) {
    const auto& r = j["review"];
    check.keys(r, {"epochs", "parallelism", "seed_tag"}, "review");
    check.number(r, "epochs", "review.", c.review.epochs, 1, 1000);
    check.number(r, "parallelism", "review.", c.review.parallelism, 1, 256);
    check.string(r, "seed_tag", "review.", c.review.seed_tag);
  }

  if (check.object(j, "scoring", "")) {
    const auto& s = j["scoring"];
    check.keys(s, {"judge", "synthesizer"}, "scoring");
    check.string(s, "judge", "scoring.", c.judge);
    check.string(s, "synthesizer", "scoring.", c.synthesizer);
    for (const auto* name : {&c.judge, &c.synthesizer}) {
      if (*name == "mechanical") continue;
      if (std::none_of(c.models.begin(), c.models.end(), [&](const auto& m) { return m.model_name == *name; })) {
        check.add("scoring: '" + *name + "' is neither 'mechanical' nor a configured model");
      }
    }
  }

  if (check.object(j, "server", "")) {
    const auto& s = j["server"];
    check.keys(s, {"host", "port"}, "server");
    check.string(s, "host", "server.", c.server.host);
    check.number(s, "port", "server.", c.server.port, 0, 65535);
    if (!is_loopback_host(c.server.host)) check.add("server.host must be a loopback address (got '" + c.server.host + "')");
  }

  if (!problems.empty()) throw ConfigError(problems);
  return c;
}

ServiceConfig load_service_config(const fs::path& path) {
  nlohmann::json j;
  try {
    j = read_json_file(path.string());
  } catch (const std::exception& e) {
    throw ConfigError({std::string("cannot read config: ") + e.what()});
  }
  return parse_service_config(j, fs::absolute(path).parent_path());
}

}  // namespace medsafe
