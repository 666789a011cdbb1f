#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "curate/corpus_store.hpp"
#include "curate/jsonl.hpp"

namespace curate {

/// Paired predictions and gold levels.
struct RatingVector {
  std::vector<double> predicted;
  std::vector<int> gold;
};

/// Throws CurateError unless the lengths match, n >= 1 and gold levels lie in 1..k.
void check_rating_vector(const RatingVector& v, int k = kMaxLevel);

struct NdcgConfig {
  int truncation = 10;  // M
};

/// Sum of squared residuals.
double pointwise_loss(const RatingVector& v);

/// Item order from sorting predictions descending; ties by ascending index.
std::vector<std::size_t> ranking(std::span<const double> predicted);

/// Discount 1/log2(1+z) at 1-based position z, zero past the truncation.
double ndcg_discount(std::size_t position, const NdcgConfig& cfg);
double ndcg_gain(int level);
/// Maximum DCG over permutations of the gold levels.
double ideal_dcg(std::span<const int> gold, const NdcgConfig& cfg);
double ndcg(const RatingVector& v, const NdcgConfig& cfg = {});

/// Right-hand side of the NDCG error bound for K = 5:
///   15*sqrt(2)/N * sqrt(sum D_i^2 - n * prod D_i^(2/n)) * sqrt(L)
/// with D_i the discount at item i's position under the predicted ranking.
double ndcg_bound_rhs(const RatingVector& v, const NdcgConfig& cfg = {});
/// The power-mean term sum D_i^2 - n * prod D_i^(2/n), unclamped.
double ndcg_power_mean_gap(const RatingVector& v, const NdcgConfig& cfg = {});

/// Product-moment correlation; UndefinedResult if either side is constant.
double pearson(std::span<const double> x, std::span<const double> y);
/// Average ranks (1-based); tied values share the mean of their block.
std::vector<double> average_ranks(std::span<const double> x);
double spearman(std::span<const double> x, std::span<const double> y);

double cohen_kappa(std::span<const int> a, std::span<const int> b);
/// Rows are items, columns categories; every row must sum to `raters`.
double fleiss_kappa(const std::vector<std::vector<int>>& counts, int raters);

double exact_agreement(std::span<const int> a, std::span<const int> b);
double within_one_agreement(std::span<const int> a, std::span<const int> b);

/// Error-rate cases, each count(gold condition and pred condition) / count(gold condition).
enum class ErrorCase {
  kExtremeFalseNegative,   // gold < 2, pred >= 3
  kFalseNegativeAbove,     // 2 <= gold < 3, pred > 3
  kFalseNegativeAtThree,   // 2 <= gold < 3, pred = 3
  kExtremeFalsePositive,   // gold >= 4, pred < 3
  kMarginalFalsePositive,  // 3 <= gold < 4, pred < 3
};

inline constexpr std::array<ErrorCase, 5> kAllErrorCases = {
    ErrorCase::kExtremeFalseNegative, ErrorCase::kFalseNegativeAbove, ErrorCase::kFalseNegativeAtThree,
    ErrorCase::kExtremeFalsePositive, ErrorCase::kMarginalFalsePositive};

std::string_view error_case_key(ErrorCase c) noexcept;
std::string_view error_case_condition(ErrorCase c) noexcept;
bool gold_condition(ErrorCase c, int gold) noexcept;
bool pred_condition(ErrorCase c, int pred) noexcept;

struct RateCell {
  std::uint64_t numerator = 0;
  std::uint64_t denominator = 0;
  /// Absent when the denominator is empty.
  std::optional<double> rate() const noexcept;
};

struct AccuracyReport {
  std::uint64_t n = 0;
  double five_level_acc = 0.0;
  double binary_acc = 0.0;
  RateCell positive;  // gold >= 3 predicted >= 3
  RateCell negative;  // gold < 3 predicted < 3
  std::array<RateCell, 5> errors;
  std::array<std::array<std::uint64_t, 5>, 5> confusion{};  // [gold-1][pred-1]

  const RateCell& error(ErrorCase c) const noexcept { return errors[static_cast<std::size_t>(c)]; }
  OrderedJson to_json() const;
};

/// Levels must lie in 1..5.
AccuracyReport accuracy_report(std::span<const int> gold, std::span<const int> pred);

/// Level histograms per (source, criterion) plus an all-sources row.
struct RatingDistribution {
  std::map<std::string, std::array<std::array<std::uint64_t, 5>, kNumCriteria>> by_source;
  std::array<std::array<std::uint64_t, 5>, kNumCriteria> overall{};

  void add(const std::string& source, const AnnotationRecord& annotation);
  void merge(const RatingDistribution& other);
  /// Level proportions of one histogram; zeros when empty.
  static std::array<double, 5> proportions(const std::array<std::uint64_t, 5>& counts);
  OrderedJson to_json() const;
  std::string to_csv() const;
};

RatingDistribution rating_distribution(std::span<const AnnotatedDocument> corpus);

struct CriterionCorrelation {
  Criterion criterion = Criterion::kOverallScore;
  std::uint64_t n = 0;
  std::optional<double> pearson;
  std::optional<double> spearman;
};

struct NllCorrelationReport {
  std::uint64_t excluded_missing_nll = 0;
  std::vector<CriterionCorrelation> rows;
  OrderedJson to_json() const;
  std::string to_csv() const;
};

NllCorrelationReport criterion_nll_correlation(std::span<const AnnotatedDocument> corpus);

/// Pearson matrix between the 14 criteria; absent cells are constant columns.
std::vector<std::vector<std::optional<double>>> criterion_correlation_matrix(
    std::span<const AnnotatedDocument> corpus);

}  // namespace curate
