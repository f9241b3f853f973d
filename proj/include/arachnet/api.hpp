#pragma once

// JSON-over-HTTP interface to the orchestrator and the registry.

#include "arachnet/error.hpp"
#include "arachnet/orchestrator.hpp"

#include <memory>
#include <string>

namespace arachnet {

class ApiServer {
 public:
  ApiServer(Orchestrator& orchestrator, RegistryStore& registry);
  ~ApiServer();

  // Binds and returns the port (0 picks a free one). Errors: ConfigError.
  int bind(const std::string& host, int port = 0);
  // Serves until stop(); blocks.
  void serve();
  void stop();
  bool running() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

// HTTP status for an error code: 404 NotFound, 409 WrongState, 422 InvalidEdit,
// 400 for malformed requests, 500 otherwise.
int http_status(ErrorCode code);

}  // namespace arachnet
