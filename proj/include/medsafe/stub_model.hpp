#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

#include "medsafe/codes.hpp"
#include "medsafe/prompt.hpp"

namespace medsafe {

/// Offline stand-in for a review model. Flags a profile when it lists any
/// prescription from a watched code set, then flips that decision with
/// probability `noise` per seed so repeated epochs disagree sometimes.
struct StubReviewer {
  const CodeDictionary* dict = nullptr;
  double noise = 0.1;

  [[nodiscard]] std::string complete(std::string_view profile_text, std::uint64_t seed) const;
};

/// Answers review, judge and synthesizer requests, routed by system prompt.
/// Judge and synthesizer replies are computed mechanically.
class StubModel {
 public:
  StubModel(const CodeDictionary& dict, PromptAssets assets, double noise = 0.1);
  /// Completion text for an OpenAI-style request body.
  [[nodiscard]] std::string respond(const nlohmann::json& body) const;

 private:
  StubReviewer reviewer_;
  PromptAssets assets_;
};

/// Chat-completions server on 127.0.0.1. The responder maps a request body to
/// completion text; an exception becomes HTTP 500. Port 0 picks a free port.
class StubServer {
 public:
  using Responder = std::function<std::string(const nlohmann::json& body)>;

  explicit StubServer(Responder responder, int port = 0);
  ~StubServer();
  StubServer(const StubServer&) = delete;
  StubServer& operator=(const StubServer&) = delete;

  [[nodiscard]] int port() const;
  [[nodiscard]] std::string endpoint() const;  // http://127.0.0.1:<port>/v1/chat/completions
  [[nodiscard]] int request_count() const;
  /// Blocks until stop() is called from another thread or a signal handler.
  void wait();
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace medsafe
