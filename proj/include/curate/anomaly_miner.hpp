#pragma once

#include <span>
#include <string>
#include <vector>

#include "curate/corpus_store.hpp"
#include "curate/jsonl.hpp"

namespace curate {

enum class AnomalyGrouping { kPerSource, kGlobal };

/// Extreme-perplexity tails of one group of documents.
struct AnomalySet {
  std::string source;  // "*" for the global grouping
  double fraction = 0.0;
  std::size_t population = 0;
  std::vector<std::string> high_tail;  // highest nll first
  std::vector<std::string> low_tail;   // lowest nll first
  bool overlap = false;                // a document sits in both tails

  OrderedJson to_json() const;
};

/// Selects ceil(fraction * n) documents at each end of the nll ranking per
/// group. Ties rank by ascending doc_id. Throws when fraction is outside
/// (0, 0.5] or any document lacks nll (the message lists them).
std::vector<AnomalySet> extract_anomalies(std::span<const Document> docs, double fraction,
                                          AnomalyGrouping grouping = AnomalyGrouping::kPerSource,
                                          unsigned workers = 1);

/// Prompt asking a model to explain why a document's perplexity is extreme.
std::string anomaly_analysis_prompt(const Document& doc, bool high);

}  // namespace curate
