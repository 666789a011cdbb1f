#pragma once

#include <array>
#include <compare>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "curate/annotation_schema.hpp"
#include "curate/corpus_store.hpp"
#include "curate/jsonl.hpp"

namespace curate {

/// Compact, text-free view of one corpus document as the sampler needs it.
struct SampleUnit {
  std::string id;
  std::string source;
  std::int64_t token_count = 0;
  std::optional<double> nll;
  std::optional<DomainType> domain;
  std::optional<std::array<std::uint8_t, kNumCriteria>> ratings;

  int rating(Criterion c) const { return (*ratings)[to_index(c)]; }
};

/// Builds a unit from a document and (optionally) its validated annotation.
SampleUnit make_unit(const Document& doc, const AnnotationRecord* annotation);
std::vector<SampleUnit> make_units(std::span<const AnnotatedDocument> docs);

/// A (source, domain) cell. An absent domain marks unannotated documents or
/// a source-only stratum; an empty source with no domain is the single
/// stratum of unstratified sampling.
struct StratumKey {
  std::string source;
  std::optional<DomainType> domain;

  std::string label() const;
  friend auto operator<=>(const StratumKey&, const StratumKey&) = default;
  friend bool operator==(const StratumKey&, const StratumKey&) = default;
};

/// Token-mass distribution over (source, domain).
class JointDistribution {
 public:
  void add(const StratumKey& key, std::uint64_t tokens) { mass_[key] += tokens; total_ += tokens; }

  const std::map<StratumKey, std::uint64_t>& mass() const noexcept { return mass_; }
  std::uint64_t total() const noexcept { return total_; }
  double probability(const StratumKey& key) const;
  std::map<std::string, double> source_marginal() const;
  std::map<std::optional<DomainType>, double> domain_marginal() const;

  OrderedJson to_json() const;

 private:
  std::map<StratumKey, std::uint64_t> mass_;
  std::uint64_t total_ = 0;
};

/// P(s,q) = token mass of the stratum / total token mass. Throws on an empty corpus.
JointDistribution estimate_joint(std::span<const SampleUnit> corpus);

namespace strategy {

enum class WeightPool {
  kAllCandidates,  // weighted sampling without replacement over every candidate
  kTopLevels,      // restrict to the highest rating levels covering the stratum budget first
};

struct CriterionWeighted {
  Criterion criterion = Criterion::kOverallScore;
  WeightPool pool = WeightPool::kAllCandidates;
};
struct FixedLevel {
  int level = 5;
};
struct Temperature {
  Criterion criterion = Criterion::kOverallScore;
  double tau = 0.0;
};
struct Uniform {};
struct Perplexity {
  bool highest = false;
};
struct DomainFilter {
  std::vector<DomainType> domains;
  int min_level = 5;
};
/// Marks manifests produced by merge_subsets.
struct Merge {
  std::vector<std::string> parent_digests;
};

}  // namespace strategy

using Strategy = std::variant<strategy::CriterionWeighted, strategy::FixedLevel, strategy::Temperature,
                              strategy::Uniform, strategy::Perplexity, strategy::DomainFilter, strategy::Merge>;

enum class Stratify { kSourceAndDomain, kSourceOnly, kNone };
enum class Shortfall { kError, kRedistribute };

struct SampleSpec {
  Strategy strategy = strategy::Uniform{};
  std::int64_t token_budget = 1;
  std::uint64_t seed = 0;
  Stratify stratify = Stratify::kSourceAndDomain;
  Shortfall shortfall = Shortfall::kRedistribute;
};

std::string_view strategy_name(const Strategy& s) noexcept;
std::string_view stratify_name(Stratify s) noexcept;
std::optional<Stratify> stratify_from_name(std::string_view name) noexcept;
std::string_view shortfall_name(Shortfall s) noexcept;
std::optional<Shortfall> shortfall_from_name(std::string_view name) noexcept;

OrderedJson to_json(const SampleSpec& spec);
SampleSpec sample_spec_from_json(const Json& j);
/// Throws CurateError when the spec breaks its invariants.
void check_spec(const SampleSpec& spec);

/// Budget plan for one stratum.
struct StratumPlan {
  StratumKey key;
  std::uint64_t target_mass = 0;   // corpus token mass behind the target share
  double probability = 0.0;        // target share of the budget
  std::uint64_t candidate_tokens = 0;
  std::size_t candidate_count = 0;
  std::int64_t budget = 0;         // tokens after rounding and redistribution
};

struct ManifestRow {
  std::string doc_id;
  std::string source;
  std::optional<DomainType> domain;
  std::optional<int> overall_score;
  std::int64_t token_count = 0;
  double weight = 0.0;
  double key = 0.0;
};

/// Reproducible record of one sampling run.
struct SubsetManifest {
  SampleSpec spec;
  std::uint64_t seed = 0;
  std::string prf;
  std::vector<ManifestRow> rows;  // sorted by doc_id
  std::int64_t total_tokens = 0;
  std::string digest;
  std::vector<StratumPlan> strata;
  std::vector<std::string> warnings;

  std::int64_t max_row_tokens() const noexcept;
  std::vector<std::string> doc_ids() const;
};

/// Recomputes the content digest over spec, seed, PRF id and rows.
std::string manifest_digest(const SubsetManifest& m);

struct SampleOptions {
  unsigned workers = 1;
};

/// Candidate filtering, stratum budgets and shortfall handling for one
/// (corpus, spec, joint); select() then draws for any seed.
class PreparedSample {
 public:
  PreparedSample(std::span<const SampleUnit> corpus, const SampleSpec& spec, const JointDistribution& joint);

  const std::vector<StratumPlan>& strata() const noexcept { return plans_; }
  const std::vector<std::string>& warnings() const noexcept { return warnings_; }
  const SampleSpec& spec() const noexcept { return spec_; }

  /// Indices into the corpus of the documents selected under `seed`.
  void select(std::uint64_t seed, std::vector<std::size_t>& out, unsigned workers = 1) const;

  /// Selection key and row weight for candidate `i` under `seed`.
  double key(std::size_t candidate, std::uint64_t seed) const;

  SubsetManifest run(std::uint64_t seed, unsigned workers = 1) const;

 private:
  struct Candidate {
    std::size_t unit = 0;
    std::size_t stratum = 0;
    std::uint64_t doc_tag = 0;
    double weight = 0.0;  // rating level, standardized score, nll, or 1
  };

  enum class KeyKind { kWeightedPower, kUniform, kScore, kPerturbedScore, kNllAscending, kNllDescending };

  std::span<const SampleUnit> corpus_;
  SampleSpec spec_;
  KeyKind kind_ = KeyKind::kUniform;
  double tau_ = 0.0;
  std::vector<Candidate> candidates_;
  std::vector<std::vector<std::size_t>> by_stratum_;  // candidate indices per stratum
  std::vector<std::uint64_t> stratum_tags_;
  std::vector<StratumPlan> plans_;
  std::vector<std::string> warnings_;
};

/// Selects a token-budgeted subset under `spec`.
SubsetManifest sample(std::span<const SampleUnit> corpus, const SampleSpec& spec, const JointDistribution& joint,
                      const SampleOptions& options = {});

/// Union of manifests by doc_id (first occurrence wins), uniformly
/// subsampled back to `token_budget` with PRF keys.
SubsetManifest merge_subsets(std::span<const SubsetManifest> manifests, std::int64_t token_budget,
                             std::uint64_t seed, Shortfall shortfall = Shortfall::kRedistribute);

/// Exact inclusion probability per doc_id by enumerating every sequence of
/// without-replacement draws. Corpora above 10 documents are rejected.
std::map<std::string, double> inclusion_oracle(std::span<const SampleUnit> corpus, const SampleSpec& spec,
                                               const JointDistribution& joint);

/// Largest-remainder apportionment of `total` units in proportion to integer
/// `masses`, computed exactly; ties go to the lower index.
std::vector<std::int64_t> largest_remainder(std::int64_t total, std::span<const std::uint64_t> masses);

/// Stratum budgets from target token masses and candidate capacities, with
/// the shortfall rule applied. Throws in error mode when any stratum is short.
std::vector<std::int64_t> plan_budgets(std::int64_t token_budget, std::span<const std::uint64_t> masses,
                                       std::span<const std::uint64_t> capacities, Shortfall mode,
                                       std::vector<std::string>* warnings = nullptr);

OrderedJson manifest_header_json(const SubsetManifest& m);
OrderedJson to_json(const ManifestRow& row);
/// Writes manifest.jsonl; `extra` fields are merged into the header line.
void write_manifest(const std::string& path, const SubsetManifest& m, const OrderedJson& extra = OrderedJson::object());
SubsetManifest read_manifest(const std::string& path);

}  // namespace curate
