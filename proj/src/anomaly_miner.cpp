#include "curate/anomaly_miner.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>
#include <thread>

#include "curate/error.hpp"

namespace curate {

OrderedJson AnomalySet::to_json() const {
  OrderedJson j;
  j["source"] = source;
  j["fraction"] = fraction;
  j["n"] = population;
  j["high"] = high_tail;
  j["low"] = low_tail;
  j["overlap"] = overlap;
  return j;
}

namespace {

struct Ranked {
  double nll;
  const std::string* id;
};

AnomalySet mine_group(const std::string& source, std::vector<Ranked> docs, double fraction) {
  std::sort(docs.begin(), docs.end(), [](const Ranked& a, const Ranked& b) {
    if (a.nll != b.nll) return a.nll < b.nll;
    return *a.id < *b.id;
  });
  AnomalySet set;
  set.source = source;
  set.fraction = fraction;
  set.population = docs.size();
  // Guard against fraction * n landing a hair above an integer.
  const double raw = fraction * static_cast<double>(docs.size());
  auto k = static_cast<std::size_t>(std::ceil(raw - 1e-9 * std::max(1.0, raw)));
  k = std::clamp<std::size_t>(k, docs.empty() ? 0 : 1, docs.size());
  for (std::size_t i = 0; i < k; ++i) set.low_tail.push_back(*docs[i].id);
  // High tail: descending nll, ties still by ascending id.
  std::vector<Ranked> high(docs.begin(), docs.end());
  std::stable_sort(high.begin(), high.end(), [](const Ranked& a, const Ranked& b) { return a.nll > b.nll; });
  for (std::size_t i = 0; i < k; ++i) set.high_tail.push_back(*high[i].id);
  set.overlap = 2 * k > docs.size();
  return set;
}

}  // namespace

std::vector<AnomalySet> extract_anomalies(std::span<const Document> docs, double fraction, AnomalyGrouping grouping,
                                          unsigned workers) {
  if (!(fraction > 0.0 && fraction <= 0.5)) {
    throw CurateError("anomaly fraction must lie in (0, 0.5], got " + std::to_string(fraction));
  }
  std::vector<std::string> missing;
  std::map<std::string, std::vector<Ranked>> groups;
  for (const auto& d : docs) {
    if (!d.nll) {
      missing.push_back(d.id);
      continue;
    }
    groups[grouping == AnomalyGrouping::kPerSource ? d.source : "*"].push_back({*d.nll, &d.id});
  }
  if (!missing.empty()) {
    std::sort(missing.begin(), missing.end());
    std::ostringstream msg;
    msg << missing.size() << " document(s) lack nll:";
    for (std::size_t i = 0; i < missing.size() && i < 20; ++i) msg << ' ' << missing[i];
    if (missing.size() > 20) msg << " ...";
    throw CurateError(msg.str());
  }

  std::vector<std::pair<std::string, std::vector<Ranked>>> work(groups.begin(), groups.end());
  std::vector<AnomalySet> out(work.size());
  const std::size_t w = std::max<std::size_t>(1, std::min<std::size_t>(workers, work.size()));
  std::vector<std::thread> threads;
  for (std::size_t t = 0; t < w; ++t) {
    threads.emplace_back([&, t] {
      for (std::size_t g = t; g < work.size(); g += w) out[g] = mine_group(work[g].first, std::move(work[g].second), fraction);
    });
  }
  for (auto& th : threads) th.join();
  return out;
}

std::string anomaly_analysis_prompt(const Document& doc, bool high) {
  if (!doc.nll) throw CurateError("document " + doc.id + " has no nll");
  std::ostringstream ppl;
  ppl.precision(6);
  ppl << std::exp(*doc.nll);
  return "Read the following document, which has a " + std::string(high ? "high" : "low") + " perplexity of " +
         ppl.str() + " for LLM inference. Please analyze the reasons for the PPL anomaly.\n\n" + doc.text;
}

}  // namespace curate
