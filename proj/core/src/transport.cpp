#include "hitl/transport.hpp"

#include <httplib.h>

namespace hitl {

HttpResponse HttplibTransport::post(const HttpRequest &request) {
  httplib::Client client(request.base_url);
  auto secs = std::chrono::duration_cast<std::chrono::seconds>(request.timeout);
  auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(
      request.timeout - secs);
  client.set_connection_timeout(10, 0);
  client.set_read_timeout(secs.count(), usecs.count());
  client.set_write_timeout(secs.count(), usecs.count());

  httplib::Headers headers;
  for (const auto &[k, v] : request.headers)
    headers.emplace(k, v);

  auto res = client.Post(request.path, headers, request.body, "application/json");
  HttpResponse out;
  if (!res) {
    auto err = res.error();
    out.failure = (err == httplib::Error::Read || err == httplib::Error::Write ||
                   err == httplib::Error::ConnectionTimeout)
                      ? HttpResponse::Failure::timeout
                      : HttpResponse::Failure::connection;
    out.body = httplib::to_string(err);
    return out;
  }
  out.status = res->status;
  out.body = res->body;
  return out;
}

} // namespace hitl
