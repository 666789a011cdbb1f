#include "curate/rater_gateway.hpp"

#include <algorithm>
#include <array>
#include <atomic>
#include <cstdlib>
#include <mutex>
#include <thread>

#include <httplib.h>

#include "curate/error.hpp"
#include "curate/hashing.hpp"

namespace curate {

void check_endpoint(const RaterEndpoint& e) {
  if (e.base_url.empty()) throw CurateError("rater endpoint needs a base URL");
  if (e.mode == PromptMode::kFull) throw CurateError("rater mode must be all_rating, score_only or domain_only");
  if (e.max_in_flight < 1) throw CurateError("max_in_flight must be at least 1");
  if (e.max_retries < 0) throw CurateError("max_retries must be nonnegative");
}

std::string_view failure_kind_name(RaterFailure::Kind kind) noexcept {
  switch (kind) {
    case RaterFailure::Kind::kTransport: return "transport";
    case RaterFailure::Kind::kParse: return "parse";
    case RaterFailure::Kind::kValidation: return "validation";
  }
  return "";
}

OrderedJson to_json(const AnnotationOutcome& o) {
  OrderedJson j;
  j["id"] = o.doc_id;
  j["attempts"] = o.attempts;
  if (o.ok()) {
    j["status"] = "ok";
  } else {
    j["kind"] = failure_kind_name(o.failure().kind);
    j["detail"] = o.failure().detail;
  }
  return j;
}

std::variant<AnnotationRecord, RaterFailure> interpret_output(PromptMode mode, std::string_view output,
                                                              std::string_view doc_id) {
  const auto failure_of = [](const ParseError& e) {
    const auto kind = e.kind == ParseError::Kind::kOutOfRange ? RaterFailure::Kind::kValidation
                                                              : RaterFailure::Kind::kParse;
    return RaterFailure{kind, e.message};
  };
  switch (mode) {
    case PromptMode::kFull:
    case PromptMode::kAllRating: {
      auto parsed = parse_all_rating(output, doc_id);
      if (!parsed) return failure_of(parsed.error);
      return std::move(*parsed.value);
    }
    case PromptMode::kScoreOnly: {
      const auto parsed = parse_score_only(output);
      if (!parsed) return failure_of(parsed.error);
      AnnotationRecord r;
      r.doc_id = std::string(doc_id);
      r.set(Criterion::kOverallScore, *parsed.value);
      return r;
    }
    case PromptMode::kDomainOnly: {
      const auto parsed = parse_domain_only(output);
      if (!parsed) return failure_of(parsed.error);
      AnnotationRecord r;
      r.doc_id = std::string(doc_id);
      r.domain = *parsed.value;
      return r;
    }
  }
  return RaterFailure{RaterFailure::Kind::kParse, "unsupported mode"};
}

namespace {

struct UrlParts {
  std::string origin;  // scheme://host[:port]
  std::string prefix;  // path without a trailing slash
};

UrlParts split_url(const std::string& url) {
  const auto scheme_end = url.find("://");
  const std::size_t host_start = scheme_end == std::string::npos ? 0 : scheme_end + 3;
  const auto slash = url.find('/', host_start);
  UrlParts p;
  p.origin = url.substr(0, slash);
  if (slash != std::string::npos) p.prefix = url.substr(slash);
  while (!p.prefix.empty() && p.prefix.back() == '/') p.prefix.pop_back();
  return p;
}

bool retryable_status(int status) { return status == 429 || status >= 500; }

AnnotationOutcome rate_one(httplib::Client& client, const std::string& path, const httplib::Headers& headers,
                           const Document& doc, const RaterEndpoint& e) {
  AnnotationOutcome out;
  out.doc_id = doc.id;
  OrderedJson body;
  body["id"] = doc.id;
  body["mode"] = prompt_mode_name(e.mode);
  body["prompt"] = render_prompt(e.mode, doc.text);
  body["temperature"] = e.temperature;
  const std::string payload = body.dump();

  auto delay = e.backoff;
  for (int attempt = 1;; ++attempt) {
    out.attempts = attempt;
    const auto res = client.Post(path, headers, payload, "application/json");
    std::string transient;
    if (!res) {
      transient = "transport error: " + httplib::to_string(res.error());
    } else if (retryable_status(res->status)) {
      transient = "HTTP " + std::to_string(res->status);
    } else if (res->status < 200 || res->status >= 300) {
      out.result = RaterFailure{RaterFailure::Kind::kParse, "HTTP " + std::to_string(res->status)};
      return out;
    } else {
      const Json reply = Json::parse(res->body, nullptr, false);
      if (reply.is_discarded() || !reply.is_object() || !reply.contains("output") || !reply["output"].is_string()) {
        out.result = RaterFailure{RaterFailure::Kind::kParse, "response is not {\"id\", \"output\"} JSON"};
        return out;
      }
      if (reply.contains("id") && reply["id"] != doc.id) {
        out.result = RaterFailure{RaterFailure::Kind::kValidation, "response id does not match the request"};
        return out;
      }
      out.result = interpret_output(e.mode, reply["output"].get<std::string>(), doc.id);
      return out;
    }
    if (attempt > e.max_retries) {
      out.result = RaterFailure{RaterFailure::Kind::kTransport, transient + " after " + std::to_string(attempt) + " attempt(s)"};
      return out;
    }
    std::this_thread::sleep_for(delay);
    delay *= 2;
  }
}

}  // namespace

void rate_batch(std::span<const Document> docs, const RaterEndpoint& endpoint,
                const std::function<void(AnnotationOutcome&&)>& sink) {
  check_endpoint(endpoint);
  const UrlParts url = split_url(endpoint.base_url);
  const std::string path = url.prefix + "/v1/rate";
  httplib::Headers headers;
  if (const char* key = std::getenv(kApiKeyValueEnv); key != nullptr && *key != '\0') {
    const char* name = std::getenv(kApiKeyHeaderEnv);
    headers.emplace(name != nullptr && *name != '\0' ? name : "Authorization", key);
  }

  std::atomic<std::size_t> next{0};
  std::mutex sink_mutex;
  const auto worker = [&] {
    httplib::Client client(url.origin);
    const auto secs = std::chrono::duration_cast<std::chrono::seconds>(endpoint.timeout);
    const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(endpoint.timeout - secs);
    client.set_connection_timeout(secs.count(), usecs.count());
    client.set_read_timeout(secs.count(), usecs.count());
    client.set_write_timeout(secs.count(), usecs.count());
    for (std::size_t i = next++; i < docs.size(); i = next++) {
      AnnotationOutcome outcome;
      try {
        outcome = rate_one(client, path, headers, docs[i], endpoint);
      } catch (const std::exception& ex) {
        outcome.doc_id = docs[i].id;
        outcome.attempts = std::max(outcome.attempts, 1);
        outcome.result = RaterFailure{RaterFailure::Kind::kTransport, ex.what()};
      }
      std::lock_guard lock(sink_mutex);
      sink(std::move(outcome));
    }
  };
  const std::size_t n = std::min<std::size_t>(static_cast<std::size_t>(endpoint.max_in_flight), docs.size());
  std::vector<std::thread> threads;
  threads.reserve(n);
  for (std::size_t t = 0; t < n; ++t) threads.emplace_back(worker);
  for (auto& t : threads) t.join();
}

namespace {

// Overall-score weights per level 1..5, scaled from a large web-corpus rating census.
constexpr std::array<std::uint64_t, 5> kLevelWeights = {3'681'879, 29'504'959, 36'156'824, 198'088'168, 169'558'482};

// Domain weights in letter order A..O.
constexpr std::array<std::uint64_t, kNumDomains> kDomainWeights = {
    30'021'105, 10'138'552, 19'463'871, 14'663'298, 44'947'278, 43'543'874, 20'108'505, 31'900'509,
    38'157'053, 64'774'739, 6'430'573, 5'355'667, 1'350'806, 5'739'330, 100'395'132};

template <std::size_t N>
std::size_t weighted_pick(std::uint64_t bits, const std::array<std::uint64_t, N>& weights) {
  std::uint64_t total = 0;
  for (auto w : weights) total += w;
  std::uint64_t r = bits % total;
  for (std::size_t i = 0; i < N; ++i) {
    if (r < weights[i]) return i;
    r -= weights[i];
  }
  return N - 1;
}

}  // namespace

AnnotationRecord mock_rate(const Document& doc) {
  const std::uint64_t h = mix64(mix64(fnv1a64(doc.id)) ^ mix64(fnv1a64(doc.source) + 1) ^
                                mix64(static_cast<std::uint64_t>(doc.text.size()) + 2));
  AnnotationRecord r;
  r.doc_id = doc.id;
  const int base = static_cast<int>(weighted_pick(mix64(h ^ 0x01), kLevelWeights)) + 1;
  for (Criterion c : kAllCriteria) {
    if (c == Criterion::kOverallScore) {
      r.set(c, base);
      continue;
    }
    // Criterion level: the base level moved by -1, 0 or +1 (1:3:1).
    const std::uint64_t draw = mix64(h ^ (0x100 + to_index(c))) % 5;
    const int noise = draw == 0 ? -1 : draw == 4 ? 1 : 0;
    r.set(c, std::clamp(base + noise, kMinLevel, kMaxLevel));
  }
  r.domain = static_cast<DomainType>(weighted_pick(mix64(h ^ 0x02), kDomainWeights));
  return r;
}

ReadSummary import_annotations(const std::string& path, const std::function<void(AnnotationRecord&&)>& sink) {
  return read_annotations(path, sink);
}

}  // namespace curate
