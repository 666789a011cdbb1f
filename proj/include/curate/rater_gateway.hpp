#pragma once

#include <chrono>
#include <functional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "curate/annotation_schema.hpp"
#include "curate/corpus_store.hpp"
#include "curate/jsonl.hpp"

namespace curate {

struct RaterEndpoint {
  std::string base_url;  // "http://host:port[/prefix]"
  PromptMode mode = PromptMode::kAllRating;
  int max_in_flight = 4;
  int max_retries = 3;
  std::chrono::milliseconds timeout{30000};
  std::chrono::milliseconds backoff{200};  // first retry delay, doubled per retry
  double temperature = 0.0;
};

/// Throws CurateError when the endpoint breaks its invariants.
void check_endpoint(const RaterEndpoint& endpoint);

struct RaterFailure {
  enum class Kind { kTransport, kParse, kValidation };
  Kind kind = Kind::kTransport;
  std::string detail;
};

std::string_view failure_kind_name(RaterFailure::Kind kind) noexcept;

/// Result for one document. Narrow modes yield partial records: only the
/// overall score (score_only) or only the domain (domain_only) is set.
struct AnnotationOutcome {
  std::string doc_id;
  int attempts = 0;
  std::variant<AnnotationRecord, RaterFailure> result;

  bool ok() const noexcept { return std::holds_alternative<AnnotationRecord>(result); }
  const AnnotationRecord& record() const { return std::get<AnnotationRecord>(result); }
  const RaterFailure& failure() const { return std::get<RaterFailure>(result); }
};

/// failures.jsonl line object.
OrderedJson to_json(const AnnotationOutcome& failed);

/// Environment variables holding the API key header; the value is never logged.
inline constexpr const char* kApiKeyHeaderEnv = "CURATE_RATER_API_HEADER";  // default "Authorization"
inline constexpr const char* kApiKeyValueEnv = "CURATE_RATER_API_KEY";

/// Parses a rater output string for the given mode into an outcome body.
std::variant<AnnotationRecord, RaterFailure> interpret_output(PromptMode mode, std::string_view output,
                                                              std::string_view doc_id);

/// Rates every document against a remote service. Exactly one outcome per
/// document is delivered to `sink`, in completion order; `sink` is called
/// under a lock. 429, 5xx and transport errors are retried with exponential
/// backoff up to max_retries; other non-2xx statuses fail immediately.
void rate_batch(std::span<const Document> docs, const RaterEndpoint& endpoint,
                const std::function<void(AnnotationOutcome&&)>& sink);

/// Deterministic offline stand-in for a rater. Depends only on the id, the
/// source and the text length in bytes.
AnnotationRecord mock_rate(const Document& doc);

/// Streams validated records from annotations.jsonl; invalid lines are
/// tallied in the summary.
ReadSummary import_annotations(const std::string& path, const std::function<void(AnnotationRecord&&)>& sink);

}  // namespace curate
