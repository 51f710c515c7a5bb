#pragma once

#include <hitl/experiments.hpp>
#include <hitl/transport.hpp>

#include <map>
#include <mutex>
#include <string>

namespace hitl::fixturegen {

// Deterministic stand-in for a chat-completions endpoint. It recognizes the
// shipped prompts and answers them with canned, contract-conforming output;
// repeated identical prompts are told apart by call order.
class SyntheticProvider {
 public:
  explicit SyntheticProvider(ScoreTable scores);

  HttpResponse operator()(const HttpRequest &request);
  std::string respond(const std::string &prompt);

 private:
  std::string grid_response(const std::string &prompt, int call);
  std::string schema_response() const;
  std::string element_response(std::size_t index, bool two_stage) const;
  std::string coding_response(const std::string &prompt, int call) const;

  ScoreTable scores_;
  std::mutex mutex_;
  std::map<std::string, int> calls_;
};

} // namespace hitl::fixturegen
