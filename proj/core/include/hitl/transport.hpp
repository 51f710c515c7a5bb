#pragma once

#include <chrono>
#include <functional>
#include <string>
#include <utility>
#include <vector>

namespace hitl {

struct HttpRequest {
  std::string base_url; // scheme://host[:port]
  std::string path;
  std::vector<std::pair<std::string, std::string>> headers;
  std::string body;
  std::chrono::milliseconds timeout{120000};
};

struct HttpResponse {
  enum class Failure { none, timeout, connection };

  int status = 0;
  std::string body;
  Failure failure = Failure::none;
};

// One POST round-trip. Implementations report network failures through
// HttpResponse::failure instead of throwing.
class Transport {
 public:
  virtual ~Transport() = default;
  virtual HttpResponse post(const HttpRequest &request) = 0;
};

class HttplibTransport final : public Transport {
 public:
  HttpResponse post(const HttpRequest &request) override;
};

// Adapter for in-process providers (tests, fixture generation, demos).
class FunctionTransport final : public Transport {
 public:
  using Handler = std::function<HttpResponse(const HttpRequest &)>;

  explicit FunctionTransport(Handler handler) : handler_(std::move(handler)) {}
  HttpResponse post(const HttpRequest &request) override { return handler_(request); }

 private:
  Handler handler_;
};

} // namespace hitl
