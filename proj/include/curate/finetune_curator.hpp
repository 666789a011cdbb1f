#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "curate/corpus_store.hpp"
#include "curate/jsonl.hpp"

namespace curate {

struct BalancePolicy {
  int low_threshold = 3;  // "low" means overall_score < low_threshold
  int fold = 4;           // total appearances of each low document
  std::map<std::string, int> source_folds;

  int fold_for(const std::string& source) const;
};

/// Throws CurateError unless 2 <= low_threshold <= 5 and every fold >= 1.
void check_policy(const BalancePolicy& policy);

/// Id of the k-th extra copy of a document (k >= 1); the original keeps its id.
std::string replica_id(std::string_view id, int k);
/// Strips a replica suffix, if any.
std::string base_id(std::string_view id);

/// Repeats every low document fold times and shuffles the result by seed.
std::vector<AnnotatedDocument> upsample_low(std::span<const AnnotatedDocument> records, const BalancePolicy& policy,
                                            std::uint64_t seed);

struct SplitSpec {
  std::array<double, 3> fractions{0.8, 0.1, 0.1};  // train, val, test
  bool by_overall_score = true;
  bool by_domain = false;
  bool by_source = false;
  std::uint64_t seed = 0;
};

void check_split_spec(const SplitSpec& spec);

struct SplitResult {
  std::vector<AnnotatedDocument> train;
  std::vector<AnnotatedDocument> val;
  std::vector<AnnotatedDocument> test;
};

/// Stratified partition. Within each stratum every split receives the floor
/// or ceiling of its ideal share; the leftover units go where the running
/// global deficit is largest, so totals track the fractions as well.
SplitResult split(std::span<const AnnotatedDocument> records, const SplitSpec& spec);

/// Composition of a fine-tuning set plus per-domain criterion means.
struct CurationReport {
  CorpusStats stats;
  std::map<DomainType, std::array<std::uint64_t, kNumCriteria>> rating_sums;
  std::map<DomainType, std::uint64_t> domain_counts;

  void add(const AnnotatedDocument& doc);
  /// Mean level of `c` over documents of `d`; throws when the domain is empty.
  double mean(DomainType d, Criterion c) const;
  OrderedJson to_json() const;
  std::string means_csv() const;
};

CurationReport curation_report(std::span<const AnnotatedDocument> records);

}  // namespace curate
