#include "hitl/error.hpp"

namespace hitl {

std::string_view to_string(Errc code) noexcept {
  switch (code) {
  case Errc::invalid_pipeline: return "invalid-pipeline";
  case Errc::missing_binding: return "missing-binding";
  case Errc::unknown_binding: return "unknown-binding";
  case Errc::replay_miss: return "replay-miss";
  case Errc::provider_error: return "provider-error";
  case Errc::timeout: return "timeout";
  case Errc::missing_explanation: return "missing-explanation";
  case Errc::missing_score: return "missing-score";
  case Errc::score_out_of_range: return "score-out-of-range";
  case Errc::non_integer_score: return "non-integer-score";
  case Errc::missing_quotations: return "missing-quotations";
  case Errc::no_structured_region: return "no-structured-region";
  case Errc::malformed_structure: return "malformed-structure";
  case Errc::cardinality_violation: return "cardinality-violation";
  case Errc::duplicate_key: return "duplicate-key";
  case Errc::stage_failed: return "stage-failed";
  case Errc::contract_violation: return "contract-violation";
  case Errc::not_awaiting: return "not-awaiting";
  case Errc::invalid_decision: return "invalid-decision";
  case Errc::corrupt_audit: return "corrupt-audit";
  case Errc::digest_mismatch: return "digest-mismatch";
  case Errc::unknown_run: return "unknown-run";
  case Errc::pass_count_mismatch: return "pass-count-mismatch";
  case Errc::no_generative_candidate: return "no-generative-candidate";
  case Errc::mixed_paper_ids: return "mixed-paper-ids";
  case Errc::unmapped_code: return "unmapped-code";
  case Errc::length_mismatch: return "length-mismatch";
  case Errc::empty_input: return "empty-input";
  case Errc::key_mismatch: return "key-mismatch";
  case Errc::config_error: return "config-error";
  case Errc::io_error: return "io-error";
  }
  return "unknown";
}

} // namespace hitl
