#pragma once

#include <chrono>
#include <cstdint>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace medsafe {

struct ChatMessage {
  std::string role;
  std::string content;

  bool operator==(const ChatMessage&) const = default;
};

struct ChatRequest {
  std::vector<ChatMessage> messages;
  /// Per-call seed forwarded to the provider when the config allows it.
  std::optional<std::uint64_t> seed;
};

/// Network or provider failure; retried by the runner.
class TransportError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// The endpoint could not be reached, or kept failing after all retries.
class EndpointUnavailable : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(std::vector<std::string> problems);
  [[nodiscard]] const std::vector<std::string>& problems() const { return problems_; }

 private:
  std::vector<std::string> problems_;
};

struct ModelConfig {
  std::string model_name;
  std::string endpoint;  // http://host:port/path
  std::optional<std::string> reasoning_effort;  // low | medium | high
  std::optional<double> temperature;
  std::chrono::milliseconds timeout{120000};
  int max_retries = 3;
  bool send_seed = true;

  bool operator==(const ModelConfig&) const = default;
};

/// Every problem with the config, empty when valid.
std::vector<std::string> model_config_problems(const ModelConfig& cfg);
void to_json(nlohmann::json& j, const ModelConfig& cfg);
/// Throws ConfigError listing all problems.
ModelConfig model_config_from_json(const nlohmann::json& j);

/// Request parameters that differ from provider defaults.
nlohmann::json sampling_overrides(const ModelConfig& cfg);

class ChatClient {
 public:
  virtual ~ChatClient() = default;
  /// Completion text. Throws TransportError on failure.
  virtual std::string complete(const ChatRequest& request) = 0;
};

struct EndpointUrl {
  std::string scheme;
  std::string host;
  int port = 80;
  std::string path;
};

/// Throws std::invalid_argument for anything but http://host[:port][/path].
EndpointUrl parse_endpoint(const std::string& url);

/// OpenAI-compatible chat-completions client. The reply is read from
/// choices[0].message.content. A bearer token is sent when given.
class HttpChatClient : public ChatClient {
 public:
  explicit HttpChatClient(ModelConfig cfg, std::optional<std::string> api_key = std::nullopt);
  std::string complete(const ChatRequest& request) override;
  /// Throws EndpointUnavailable unless the server answers at all.
  void probe() const;

  /// Request body as sent on the wire.
  [[nodiscard]] nlohmann::json request_body(const ChatRequest& request) const;

 private:
  ModelConfig cfg_;
  EndpointUrl url_;
  std::optional<std::string> api_key_;
};

/// Reads the credential from MEDSAFE_API_KEY, if set.
std::optional<std::string> api_key_from_env();

}  // namespace medsafe
