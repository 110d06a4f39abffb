#include "medsafe/chat.hpp"

#include <cstdlib>
#include <regex>
#include <set>

#include <httplib.h>

#include "medsafe/util.hpp"

namespace medsafe {

ConfigError::ConfigError(std::vector<std::string> problems)
    : std::runtime_error("invalid configuration: " + join(problems, "; ")), problems_(std::move(problems)) {}

EndpointUrl parse_endpoint(const std::string& url) {
  static const std::regex re(R"(^(http)://([A-Za-z0-9.\-]+|\[[0-9A-Fa-f:]+\])(?::(\d{1,5}))?(/[^\s]*)?$)");
  std::smatch m;
  if (!std::regex_match(url, m, re)) throw std::invalid_argument("endpoint must be an http:// URL: '" + url + "'");
  EndpointUrl u;
  u.scheme = m[1];
  u.host = m[2];
  u.port = m[3].matched ? std::stoi(m[3]) : 80;
  u.path = m[4].matched ? m[4].str() : "/";
  if (u.port < 1 || u.port > 65535) throw std::invalid_argument("endpoint port out of range: '" + url + "'");
  return u;
}

std::vector<std::string> model_config_problems(const ModelConfig& cfg) {
  std::vector<std::string> out;
  if (cfg.model_name.empty()) out.emplace_back("model_name must not be empty");
  try {
    (void)parse_endpoint(cfg.endpoint);
  } catch (const std::invalid_argument& e) {
    out.emplace_back(e.what());
  }
  if (cfg.reasoning_effort && *cfg.reasoning_effort != "low" && *cfg.reasoning_effort != "medium" &&
      *cfg.reasoning_effort != "high") {
    out.push_back("reasoning_effort must be low, medium or high (got '" + *cfg.reasoning_effort + "')");
  }
  if (cfg.temperature && (*cfg.temperature < 0.0 || *cfg.temperature > 2.0)) {
    out.emplace_back("temperature must be in [0, 2]");
  }
  if (cfg.timeout.count() <= 0) out.emplace_back("timeout_ms must be positive");
  if (cfg.max_retries < 0) out.emplace_back("max_retries must be non-negative");
  return out;
}

void to_json(nlohmann::json& j, const ModelConfig& cfg) {
  j = nlohmann::json{{"model_name", cfg.model_name},
                     {"endpoint", cfg.endpoint},
                     {"timeout_ms", cfg.timeout.count()},
                     {"max_retries", cfg.max_retries},
                     {"send_seed", cfg.send_seed}};
  if (cfg.reasoning_effort) j["reasoning_effort"] = *cfg.reasoning_effort;
  if (cfg.temperature) j["temperature"] = *cfg.temperature;
}

ModelConfig model_config_from_json(const nlohmann::json& j) {
  std::vector<std::string> problems;
  ModelConfig cfg;
  if (!j.is_object()) throw ConfigError({"model config must be an object"});
  static const std::set<std::string> known{"model_name", "endpoint", "reasoning_effort", "temperature",
                                           "timeout_ms", "max_retries", "send_seed"};
  for (const auto& [k, v] : j.items()) {
    if (!known.contains(k)) problems.push_back("unknown field '" + k + "'");
  }
  const auto str = [&](const char* key, std::string& out, bool required) {
    if (!j.contains(key)) {
      if (required) problems.push_back(std::string("missing field '") + key + "'");
      return;
    }
    if (!j[key].is_string()) {
      problems.push_back(std::string("'") + key + "' must be a string");
      return;
    }
    out = j[key].get<std::string>();
  };
  str("model_name", cfg.model_name, true);
  str("endpoint", cfg.endpoint, true);
  if (j.contains("reasoning_effort")) {
    std::string effort;
    str("reasoning_effort", effort, false);
    cfg.reasoning_effort = effort;
  }
  if (j.contains("temperature")) {
    if (j["temperature"].is_number()) {
      cfg.temperature = j["temperature"].get<double>();
    } else {
      problems.emplace_back("'temperature' must be a number");
    }
  }
  if (j.contains("timeout_ms")) {
    if (j["timeout_ms"].is_number_integer()) {
      cfg.timeout = std::chrono::milliseconds(j["timeout_ms"].get<std::int64_t>());
    } else {
      problems.emplace_back("'timeout_ms' must be an integer");
    }
  }
  if (j.contains("max_retries")) {
    if (j["max_retries"].is_number_integer()) {
      cfg.max_retries = j["max_retries"].get<int>();
    } else {
      problems.emplace_back("'max_retries' must be an integer");
    }
  }
  if (j.contains("send_seed")) {
    if (j["send_seed"].is_boolean()) {
      cfg.send_seed = j["send_seed"].get<bool>();
    } else {
      problems.emplace_back("'send_seed' must be a boolean");
    }
  }
  for (auto& p : model_config_problems(cfg)) {
    // Missing fields were already reported.
    if ((p.starts_with("model_name") && !j.contains("model_name")) ||
        (p.starts_with("endpoint") && !j.contains("endpoint"))) {
      continue;
    }
    problems.push_back(std::move(p));
  }
  if (!problems.empty()) throw ConfigError(std::move(problems));
  return cfg;
}

nlohmann::json sampling_overrides(const ModelConfig& cfg) {
  nlohmann::json j = nlohmann::json::object();
  if (cfg.reasoning_effort) j["reasoning_effort"] = *cfg.reasoning_effort;
  if (cfg.temperature) j["temperature"] = *cfg.temperature;
  return j;
}

HttpChatClient::HttpChatClient(ModelConfig cfg, std::optional<std::string> api_key)
    : cfg_(std::move(cfg)), url_(parse_endpoint(cfg_.endpoint)), api_key_(std::move(api_key)) {}

nlohmann::json HttpChatClient::request_body(const ChatRequest& request) const {
  nlohmann::json body{{"model", cfg_.model_name}, {"messages", nlohmann::json::array()}};
  for (const auto& m : request.messages) body["messages"].push_back({{"role", m.role}, {"content", m.content}});
  const auto overrides = sampling_overrides(cfg_);
  for (const auto& [k, v] : overrides.items()) body[k] = v;
  if (cfg_.send_seed && request.seed) body["seed"] = *request.seed;
  return body;
}

namespace {

httplib::Client make_client(const EndpointUrl& url, std::chrono::milliseconds timeout) {
  httplib::Client cli(url.host, url.port);
  const auto secs = std::chrono::duration_cast<std::chrono::seconds>(timeout);
  const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(timeout - secs);
  cli.set_connection_timeout(secs.count(), usecs.count());
  cli.set_read_timeout(secs.count(), usecs.count());
  cli.set_write_timeout(secs.count(), usecs.count());
  return cli;
}

}  // namespace

std::string HttpChatClient::complete(const ChatRequest& request) {
  auto cli = make_client(url_, cfg_.timeout);
  httplib::Headers headers;
  if (api_key_) headers.emplace("Authorization", "Bearer " + *api_key_);
  const auto res = cli.Post(url_.path, headers, request_body(request).dump(), "application/json");
  if (!res) throw TransportError("request to " + cfg_.endpoint + " failed: " + httplib::to_string(res.error()));
  if (res->status != 200) {
    throw TransportError("endpoint returned HTTP " + std::to_string(res->status) + ": " + res->body.substr(0, 200));
  }
  try {
    const auto j = nlohmann::json::parse(res->body);
    return j.at("choices").at(0).at("message").at("content").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw TransportError(std::string("unexpected response shape: ") + e.what());
  }
}

void HttpChatClient::probe() const {
  auto cli = make_client(url_, cfg_.timeout);
  if (!cli.Get("/")) throw EndpointUnavailable("endpoint " + cfg_.endpoint + " is not reachable");
}

std::optional<std::string> api_key_from_env() {
  const char* v = std::getenv("MEDSAFE_API_KEY");
  if (!v || !*v) return std::nullopt;
  return std::string(v);
}

}  // namespace medsafe
