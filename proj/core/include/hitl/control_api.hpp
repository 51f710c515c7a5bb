#pragma once

#include "hitl/run_manager.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <memory>
#include <string>
#include <string_view>

namespace hitl {

struct ApiResponse {
  int status = 200;
  nlohmann::json body;
};

// The versioned HTTP surface consumed by the CLI and the review UI:
//   GET  /api/v1/runs
//   GET  /api/v1/runs/{id}
//   GET  /api/v1/runs/{id}/checkpoints
//   GET  /api/v1/checkpoints
//   POST /api/v1/runs/{id}/decisions
//   GET  /api/v1/runs/{id}/audit?offset=N&limit=M
// Errors come back as {"error": {"code": ..., "message": ...}} with 400
// (malformed request), 404 (unknown run or route), 409 (not-awaiting) or 422
// (contract-violation, invalid-decision).
class ControlApi {
 public:
  explicit ControlApi(RunManager &runs);

  // Socket-free entry point; `target` is the request path plus query string.
  ApiResponse handle(std::string_view method, std::string_view target, std::string_view body);

  // One pending checkpoint with its artifacts and quote checks against the
  // run inputs.
  nlohmann::json checkpoint_view(const std::string &run_id, const std::string &stage_id);

 private:
  RunManager &runs_;
};

int http_status_for(Errc code) noexcept;

// Serves ControlApi over HTTP plus optional static assets at "/".
class ApiServer {
 public:
  ApiServer(ControlApi &api, std::filesystem::path static_dir = {});
  ~ApiServer();

  // Binds and starts listening on a background thread; port 0 picks a free
  // port. Returns the bound port.
  int start(const std::string &host, int port);
  // Blocks in the calling thread until stop().
  void listen(const std::string &host, int port);
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

} // namespace hitl
