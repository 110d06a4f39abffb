#pragma once

#include <memory>
#include <string>

#include "medsafe/store.hpp"

namespace medsafe {

/// JSON API for the grading UI, versioned under /v1 and scoped to one
/// session. Holds the session's writer lock while alive; every mutation is
/// one store call. Errors are {"code", "message"} with 404, 409 or 422.
class ApiServer {
 public:
  ApiServer(Store& store, const std::string& session_id);
  ~ApiServer();
  ApiServer(const ApiServer&) = delete;
  ApiServer& operator=(const ApiServer&) = delete;

  /// Binds a loopback host; port 0 picks a free one. Returns the port.
  int bind(const std::string& host, int port);
  /// Serves until stop(). Requires bind().
  void listen();
  /// listen() on a background thread; returns once ready.
  void start();
  void stop();
  [[nodiscard]] int port() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace medsafe
