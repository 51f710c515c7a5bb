#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace hitl {

enum class Errc {
  // core-model
  invalid_pipeline,
  missing_binding,
  unknown_binding,
  // llm-gateway
  replay_miss,
  provider_error,
  timeout,
  // tag-codec
  missing_explanation,
  missing_score,
  score_out_of_range,
  non_integer_score,
  missing_quotations,
  no_structured_region,
  malformed_structure,
  cardinality_violation,
  duplicate_key,
  // orchestrator
  stage_failed,
  contract_violation,
  not_awaiting,
  invalid_decision,
  corrupt_audit,
  digest_mismatch,
  unknown_run,
  // codebook
  pass_count_mismatch,
  no_generative_candidate,
  mixed_paper_ids,
  // indices / statistics
  unmapped_code,
  length_mismatch,
  empty_input,
  key_mismatch,
  // plumbing
  config_error,
  io_error,
};

// Stable kebab-case name, used in audit payloads, API bodies and CLI error lines.
std::string_view to_string(Errc code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string &message)
      : std::runtime_error(message), code_(code) {}

  Errc code() const noexcept { return code_; }
  std::string_view code_name() const noexcept { return to_string(code_); }

 private:
  Errc code_;
};

// Provider failure after the retry budget; keeps the HTTP status and body.
class ProviderError : public Error {
 public:
  ProviderError(int status, std::string body, const std::string &message)
      : Error(Errc::provider_error, message), status_(status),
        body_(std::move(body)) {}

  int status() const noexcept { return status_; }
  const std::string &body() const noexcept { return body_; }

 private:
  int status_;
  std::string body_;
};

} // namespace hitl
