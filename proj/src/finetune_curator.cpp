#include "curate/finetune_curator.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <tuple>

#include "curate/error.hpp"
#include "curate/hashing.hpp"

namespace curate {

namespace {

constexpr std::string_view kReplicaMarker = "~r";

}  // namespace

int BalancePolicy::fold_for(const std::string& source) const {
  const auto it = source_folds.find(source);
  return it == source_folds.end() ? fold : it->second;
}

void check_policy(const BalancePolicy& policy) {
  if (policy.low_threshold < 2 || policy.low_threshold > 5) {
    throw CurateError("low threshold must lie in 2..5, got " + std::to_string(policy.low_threshold));
  }
  if (policy.fold < 1) throw CurateError("fold must be at least 1");
  for (const auto& [source, f] : policy.source_folds) {
    if (f < 1) throw CurateError("fold for source " + source + " must be at least 1");
  }
}

std::string replica_id(std::string_view id, int k) {
  return std::string(id) + std::string(kReplicaMarker) + std::to_string(k);
}

std::string base_id(std::string_view id) {
  const auto pos = id.rfind(kReplicaMarker);
  if (pos == std::string_view::npos || pos + kReplicaMarker.size() == id.size()) return std::string(id);
  const auto digits = id.substr(pos + kReplicaMarker.size());
  if (!std::all_of(digits.begin(), digits.end(), [](char c) { return c >= '0' && c <= '9'; })) return std::string(id);
  return std::string(id.substr(0, pos));
}

std::vector<AnnotatedDocument> upsample_low(std::span<const AnnotatedDocument> records, const BalancePolicy& policy,
                                            std::uint64_t seed) {
  check_policy(policy);
  std::vector<AnnotatedDocument> out;
  out.reserve(records.size());
  for (const auto& r : records) {
    out.push_back(r);
    if (r.annotation.level(Criterion::kOverallScore) >= policy.low_threshold) continue;
    const int fold = policy.fold_for(r.doc.source);
    for (int k = 1; k < fold; ++k) {
      AnnotatedDocument copy = r;
      copy.doc.id = replica_id(r.doc.id, k);
      copy.annotation.doc_id = copy.doc.id;
      out.push_back(std::move(copy));
    }
  }
  std::vector<std::pair<std::uint64_t, std::size_t>> keys(out.size());
  for (std::size_t i = 0; i < out.size(); ++i) keys[i] = {Prf::bits(seed, 0, Prf::tag(out[i].doc.id)), i};
  std::sort(keys.begin(), keys.end(), [&](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first < b.first;
    return out[a.second].doc.id < out[b.second].doc.id;
  });
  std::vector<AnnotatedDocument> shuffled;
  shuffled.reserve(out.size());
  for (const auto& [k, i] : keys) shuffled.push_back(std::move(out[i]));
  return shuffled;
}

void check_split_spec(const SplitSpec& spec) {
  double sum = 0.0;
  for (double f : spec.fractions) {
    if (!(f >= 0.0 && f <= 1.0)) throw CurateError("split fractions must lie in [0, 1]");
    sum += f;
  }
  if (std::abs(sum - 1.0) > 1e-9) throw CurateError("split fractions must sum to 1");
}

SplitResult split(std::span<const AnnotatedDocument> records, const SplitSpec& spec) {
  check_split_spec(spec);
  using Key = std::tuple<int, int, std::string>;
  std::map<Key, std::vector<std::size_t>> strata;
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& a = records[i].annotation;
    Key k{spec.by_overall_score ? a.level(Criterion::kOverallScore) : 0,
          spec.by_domain ? static_cast<int>(*a.domain) : -1, spec.by_source ? records[i].doc.source : std::string()};
    if (spec.by_domain && !a.domain) throw CurateError("record " + a.doc_id + " has no domain");
    strata[k].push_back(i);
  }

  std::array<double, 3> ideal_total{};
  std::array<std::int64_t, 3> assigned_total{};
  SplitResult result;
  std::array<std::vector<AnnotatedDocument>*, 3> outs{&result.train, &result.val, &result.test};
  for (auto& [key, members] : strata) {
    std::vector<std::pair<std::uint64_t, std::size_t>> order;
    order.reserve(members.size());
    for (std::size_t i : members) order.emplace_back(Prf::bits(spec.seed, 0, Prf::tag(records[i].doc.id)), i);
    std::sort(order.begin(), order.end(), [&](const auto& a, const auto& b) {
      if (a.first != b.first) return a.first < b.first;
      return records[a.second].doc.id < records[b.second].doc.id;
    });

    const auto n = static_cast<double>(members.size());
    std::array<std::int64_t, 3> count{};
    std::array<bool, 3> fractional{};
    std::int64_t placed = 0;
    for (std::size_t s = 0; s < 3; ++s) {
      const double q = n * spec.fractions[s];
      count[s] = static_cast<std::int64_t>(std::floor(q + 1e-9));
      fractional[s] = q - static_cast<double>(count[s]) > 1e-9;
      placed += count[s];
      ideal_total[s] += q;
    }
    for (std::int64_t left = static_cast<std::int64_t>(members.size()) - placed; left > 0; --left) {
      std::size_t best = 3;
      double best_deficit = 0.0;
      for (std::size_t s = 0; s < 3; ++s) {
        if (!fractional[s]) continue;
        const double deficit = ideal_total[s] - static_cast<double>(assigned_total[s] + count[s]);
        if (best == 3 || deficit > best_deficit + 1e-12 ||
            (std::abs(deficit - best_deficit) <= 1e-12 && spec.fractions[s] > spec.fractions[best])) {
          best = s;
          best_deficit = deficit;
        }
      }
      ++count[best];
      fractional[best] = false;
    }
    std::size_t pos = 0;
    for (std::size_t s = 0; s < 3; ++s) {
      for (std::int64_t k = 0; k < count[s]; ++k) outs[s]->push_back(records[order[pos++].second]);
      assigned_total[s] += count[s];
    }
  }
  return result;
}

void CurationReport::add(const AnnotatedDocument& doc) {
  stats.add(doc);
  const DomainType d = *doc.annotation.domain;
  auto& sums = rating_sums[d];
  for (Criterion c : kAllCriteria) sums[to_index(c)] += static_cast<std::uint64_t>(doc.annotation.level(c));
  ++domain_counts[d];
}

double CurationReport::mean(DomainType d, Criterion c) const {
  const auto it = domain_counts.find(d);
  if (it == domain_counts.end() || it->second == 0) {
    throw UndefinedResult("no documents in domain " + std::string(domain_name(d)));
  }
  return static_cast<double>(rating_sums.at(d)[to_index(c)]) / static_cast<double>(it->second);
}

OrderedJson CurationReport::to_json() const {
  OrderedJson j;
  j["method"] = {{"proportions", "document counts over the table total"}, {"means", "arithmetic mean level per domain"}};
  j["composition"] = stats.to_json();
  OrderedJson means = OrderedJson::object();
  for (const auto& [d, n] : domain_counts) {
    OrderedJson row = OrderedJson::object();
    row["documents"] = n;
    for (Criterion c : kAllCriteria) row[std::string(criterion_key(c))] = mean(d, c);
    means[std::string(domain_name(d))] = std::move(row);
  }
  j["domain_means"] = std::move(means);
  return j;
}

std::string CurationReport::means_csv() const {
  std::ostringstream out;
  out.precision(17);
  out << "domain,documents";
  for (Criterion c : kAllCriteria) out << ',' << criterion_key(c);
  out << '\n';
  for (const auto& [d, n] : domain_counts) {
    out << domain_name(d) << ',' << n;
    for (Criterion c : kAllCriteria) out << ',' << mean(d, c);
    out << '\n';
  }
  return out.str();
}

CurationReport curation_report(std::span<const AnnotatedDocument> records) {
  CurationReport r;
  for (const auto& doc : records) r.add(doc);
  return r;
}

}  // namespace curate
