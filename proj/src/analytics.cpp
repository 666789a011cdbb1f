#include "curate/analytics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "curate/error.hpp"

namespace curate {

namespace {

void check_pair(std::size_t a, std::size_t b, std::size_t min_n, const char* what) {
  if (a != b) {
    throw CurateError(std::string(what) + ": length mismatch (" + std::to_string(a) + " vs " + std::to_string(b) + ")");
  }
  if (a < min_n) throw CurateError(std::string(what) + ": need at least " + std::to_string(min_n) + " items");
}

void check_level(int level, const char* what) {
  if (level < kMinLevel || level > kMaxLevel) {
    throw CurateError(std::string(what) + ": level out of range: " + std::to_string(level));
  }
}

OrderedJson optional_json(const std::optional<double>& v) { return v ? OrderedJson(*v) : OrderedJson(nullptr); }

std::string csv_number(const std::optional<double>& v) {
  if (!v) return "";
  std::ostringstream out;
  out.precision(17);
  out << *v;
  return out.str();
}

}  // namespace

void check_rating_vector(const RatingVector& v, int k) {
  check_pair(v.predicted.size(), v.gold.size(), 1, "rating vector");
  for (int g : v.gold) {
    if (g < 1 || g > k) throw CurateError("rating vector: gold level out of range: " + std::to_string(g));
  }
}

double pointwise_loss(const RatingVector& v) {
  check_rating_vector(v);
  double loss = 0.0;
  for (std::size_t i = 0; i < v.gold.size(); ++i) {
    const double r = v.predicted[i] - v.gold[i];
    loss += r * r;
  }
  return loss;
}

std::vector<std::size_t> ranking(std::span<const double> predicted) {
  std::vector<std::size_t> order(predicted.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return predicted[a] > predicted[b]; });
  return order;
}

double ndcg_discount(std::size_t position, const NdcgConfig& cfg) {
  if (cfg.truncation < 1) throw CurateError("NDCG truncation M must be at least 1");
  if (position < 1 || position > static_cast<std::size_t>(cfg.truncation)) return 0.0;
  return 1.0 / std::log2(1.0 + static_cast<double>(position));
}

double ndcg_gain(int level) { return std::ldexp(1.0, level) - 1.0; }

double ideal_dcg(std::span<const int> gold, const NdcgConfig& cfg) {
  std::vector<int> sorted(gold.begin(), gold.end());
  std::sort(sorted.begin(), sorted.end(), std::greater<>());
  double dcg = 0.0;
  for (std::size_t p = 0; p < sorted.size(); ++p) dcg += ndcg_gain(sorted[p]) * ndcg_discount(p + 1, cfg);
  return dcg;
}

double ndcg(const RatingVector& v, const NdcgConfig& cfg) {
  check_rating_vector(v);
  const auto order = ranking(v.predicted);
  double dcg = 0.0;
  for (std::size_t p = 0; p < order.size(); ++p) dcg += ndcg_gain(v.gold[order[p]]) * ndcg_discount(p + 1, cfg);
  return dcg / ideal_dcg(v.gold, cfg);
}

double ndcg_power_mean_gap(const RatingVector& v, const NdcgConfig& cfg) {
  check_rating_vector(v);
  const auto order = ranking(v.predicted);
  const auto n = static_cast<double>(order.size());
  double sum_sq = 0.0;
  double sum_log = 0.0;
  bool any_zero = false;
  for (std::size_t p = 0; p < order.size(); ++p) {
    const double d = ndcg_discount(p + 1, cfg);
    sum_sq += d * d;
    if (d == 0.0) {
      any_zero = true;
    } else {
      sum_log += std::log(d);
    }
  }
  // A zero discount zeroes the geometric mean.
  const double geometric = any_zero ? 0.0 : n * std::exp(2.0 / n * sum_log);
  return sum_sq - geometric;
}

double ndcg_bound_rhs(const RatingVector& v, const NdcgConfig& cfg) {
  const double gap = std::max(0.0, ndcg_power_mean_gap(v, cfg));
  const double loss = pointwise_loss(v);
  return 15.0 * std::sqrt(2.0) / ideal_dcg(v.gold, cfg) * std::sqrt(gap) * std::sqrt(loss);
}

double pearson(std::span<const double> x, std::span<const double> y) {
  check_pair(x.size(), y.size(), 2, "pearson");
  const auto n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxx = 0.0, syy = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = x[i] - mx;
    const double dy = y[i] - my;
    sxx += dx * dx;
    syy += dy * dy;
    sxy += dx * dy;
  }
  if (sxx == 0.0 || syy == 0.0) throw UndefinedResult("correlation is undefined for a constant input");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

std::vector<double> average_ranks(std::span<const double> x) {
  std::vector<std::size_t> order(x.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
  std::vector<double> ranks(x.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && x[order[j + 1]] == x[order[i]]) ++j;
    const double r = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
    i = j + 1;
  }
  return ranks;
}

double spearman(std::span<const double> x, std::span<const double> y) {
  check_pair(x.size(), y.size(), 2, "spearman");
  const auto rx = average_ranks(x);
  const auto ry = average_ranks(y);
  return pearson(rx, ry);
}

double cohen_kappa(std::span<const int> a, std::span<const int> b) {
  check_pair(a.size(), b.size(), 1, "cohen_kappa");
  std::map<int, std::pair<std::uint64_t, std::uint64_t>> marginals;
  std::uint64_t agree = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ++marginals[a[i]].first;
    ++marginals[b[i]].second;
    if (a[i] == b[i]) ++agree;
  }
  const auto n = static_cast<double>(a.size());
  double pe = 0.0;
  std::size_t used_a = 0, used_b = 0;
  for (const auto& [label, m] : marginals) {
    pe += (static_cast<double>(m.first) / n) * (static_cast<double>(m.second) / n);
    used_a += m.first > 0;
    used_b += m.second > 0;
  }
  const double po = static_cast<double>(agree) / n;
  if (used_a == 1 && used_b == 1) {
    if (agree == a.size()) return 1.0;
    throw UndefinedResult("cohen_kappa: both raters are constant and disagree");
  }
  if (pe >= 1.0) return 1.0;
  return (po - pe) / (1.0 - pe);
}

double fleiss_kappa(const std::vector<std::vector<int>>& counts, int raters) {
  if (raters < 2) throw CurateError("fleiss_kappa: need at least 2 raters per item");
  if (counts.empty()) throw CurateError("fleiss_kappa: no items");
  const std::size_t k = counts.front().size();
  std::vector<double> column(k, 0.0);
  double p_bar = 0.0;
  const double m = raters;
  for (std::size_t i = 0; i < counts.size(); ++i) {
    const auto& row = counts[i];
    if (row.size() != k) throw CurateError("fleiss_kappa: row " + std::to_string(i) + " has the wrong number of categories");
    long long sum = 0, sum_sq = 0;
    for (std::size_t j = 0; j < k; ++j) {
      if (row[j] < 0) throw CurateError("fleiss_kappa: negative count in row " + std::to_string(i));
      sum += row[j];
      sum_sq += static_cast<long long>(row[j]) * row[j];
      column[j] += row[j];
    }
    if (sum != raters) {
      throw CurateError("fleiss_kappa: row " + std::to_string(i) + " sums to " + std::to_string(sum) + ", expected " +
                        std::to_string(raters));
    }
    p_bar += (static_cast<double>(sum_sq) - m) / (m * (m - 1.0));
  }
  const auto n_items = static_cast<double>(counts.size());
  p_bar /= n_items;
  double pe = 0.0;
  for (double c : column) {
    const double p = c / (n_items * m);
    pe += p * p;
  }
  if (pe >= 1.0) return 1.0;
  return (p_bar - pe) / (1.0 - pe);
}

double exact_agreement(std::span<const int> a, std::span<const int> b) {
  check_pair(a.size(), b.size(), 1, "agreement");
  std::size_t same = 0;
  for (std::size_t i = 0; i < a.size(); ++i) same += a[i] == b[i];
  return static_cast<double>(same) / static_cast<double>(a.size());
}

double within_one_agreement(std::span<const int> a, std::span<const int> b) {
  check_pair(a.size(), b.size(), 1, "agreement");
  std::size_t close = 0;
  for (std::size_t i = 0; i < a.size(); ++i) close += std::abs(a[i] - b[i]) <= 1;
  return static_cast<double>(close) / static_cast<double>(a.size());
}

std::string_view error_case_key(ErrorCase c) noexcept {
  switch (c) {
    case ErrorCase::kExtremeFalseNegative: return "extreme_false_negative";
    case ErrorCase::kFalseNegativeAbove: return "false_negative_above_3";
    case ErrorCase::kFalseNegativeAtThree: return "false_negative_at_3";
    case ErrorCase::kExtremeFalsePositive: return "extreme_false_positive";
    case ErrorCase::kMarginalFalsePositive: return "marginal_false_positive";
  }
  return "";
}

std::string_view error_case_condition(ErrorCase c) noexcept {
  switch (c) {
    case ErrorCase::kExtremeFalseNegative: return "gold<2 & pred>=3";
    case ErrorCase::kFalseNegativeAbove: return "2<=gold<3 & pred>3";
    case ErrorCase::kFalseNegativeAtThree: return "2<=gold<3 & pred=3";
    case ErrorCase::kExtremeFalsePositive: return "gold>=4 & pred<3";
    case ErrorCase::kMarginalFalsePositive: return "3<=gold<4 & pred<3";
  }
  return "";
}

bool gold_condition(ErrorCase c, int g) noexcept {
  switch (c) {
    case ErrorCase::kExtremeFalseNegative: return g < 2;
    case ErrorCase::kFalseNegativeAbove:
    case ErrorCase::kFalseNegativeAtThree: return g >= 2 && g < 3;
    case ErrorCase::kExtremeFalsePositive: return g >= 4;
    case ErrorCase::kMarginalFalsePositive: return g >= 3 && g < 4;
  }
  return false;
}

bool pred_condition(ErrorCase c, int p) noexcept {
  switch (c) {
    case ErrorCase::kExtremeFalseNegative: return p >= 3;
    case ErrorCase::kFalseNegativeAbove: return p > 3;
    case ErrorCase::kFalseNegativeAtThree: return p == 3;
    case ErrorCase::kExtremeFalsePositive:
    case ErrorCase::kMarginalFalsePositive: return p < 3;
  }
  return false;
}

std::optional<double> RateCell::rate() const noexcept {
  if (denominator == 0) return std::nullopt;
  return static_cast<double>(numerator) / static_cast<double>(denominator);
}

AccuracyReport accuracy_report(std::span<const int> gold, std::span<const int> pred) {
  check_pair(gold.size(), pred.size(), 1, "accuracy_report");
  AccuracyReport r;
  r.n = gold.size();
  std::uint64_t exact = 0, binary = 0;
  for (std::size_t i = 0; i < gold.size(); ++i) {
    const int g = gold[i];
    const int p = pred[i];
    check_level(g, "accuracy_report gold");
    check_level(p, "accuracy_report pred");
    ++r.confusion[static_cast<std::size_t>(g - 1)][static_cast<std::size_t>(p - 1)];
    exact += g == p;
    const bool gpos = g >= 3;
    const bool ppos = p >= 3;
    binary += gpos == ppos;
    RateCell& cls = gpos ? r.positive : r.negative;
    ++cls.denominator;
    cls.numerator += gpos == ppos;
    for (ErrorCase c : kAllErrorCases) {
      if (!gold_condition(c, g)) continue;
      RateCell& cell = r.errors[static_cast<std::size_t>(c)];
      ++cell.denominator;
      cell.numerator += pred_condition(c, p);
    }
  }
  r.five_level_acc = static_cast<double>(exact) / static_cast<double>(r.n);
  r.binary_acc = static_cast<double>(binary) / static_cast<double>(r.n);
  return r;
}

OrderedJson AccuracyReport::to_json() const {
  OrderedJson j;
  j["method"] = {{"binary_threshold", 3},
                 {"positive_acc", "recall on gold>=3"},
                 {"negative_acc", "recall on gold<3"},
                 {"error_rate_denominator", "count of the gold condition"},
                 {"absent", "null when the gold condition has no items"}};
  j["n"] = n;
  j["five_level_acc"] = five_level_acc;
  j["binary_acc"] = binary_acc;
  j["positive_acc"] = optional_json(positive.rate());
  j["negative_acc"] = optional_json(negative.rate());
  OrderedJson errs = OrderedJson::object();
  for (ErrorCase c : kAllErrorCases) {
    const RateCell& cell = error(c);
    errs[std::string(error_case_key(c))] = {{"condition", error_case_condition(c)},
                                             {"numerator", cell.numerator},
                                             {"denominator", cell.denominator},
                                             {"rate", optional_json(cell.rate())}};
  }
  j["error_rates"] = std::move(errs);
  OrderedJson rows = OrderedJson::array();
  for (const auto& row : confusion) rows.push_back(row);
  j["confusion"] = {{"rows", "gold level 1..5"}, {"columns", "predicted level 1..5"}, {"counts", std::move(rows)}};
  return j;
}

void RatingDistribution::add(const std::string& source, const AnnotationRecord& annotation) {
  auto& hist = by_source[source];
  for (Criterion c : kAllCriteria) {
    const int l = annotation.level(c);
    check_level(l, "rating_distribution");
    ++hist[to_index(c)][static_cast<std::size_t>(l - 1)];
    ++overall[to_index(c)][static_cast<std::size_t>(l - 1)];
  }
}

void RatingDistribution::merge(const RatingDistribution& other) {
  for (const auto& [source, hist] : other.by_source) {
    auto& mine = by_source[source];
    for (std::size_t c = 0; c < kNumCriteria; ++c) {
      for (std::size_t l = 0; l < 5; ++l) mine[c][l] += hist[c][l];
    }
  }
  for (std::size_t c = 0; c < kNumCriteria; ++c) {
    for (std::size_t l = 0; l < 5; ++l) overall[c][l] += other.overall[c][l];
  }
}

std::array<double, 5> RatingDistribution::proportions(const std::array<std::uint64_t, 5>& counts) {
  std::array<double, 5> p{};
  const std::uint64_t total = std::accumulate(counts.begin(), counts.end(), std::uint64_t{0});
  if (total == 0) return p;
  for (std::size_t l = 0; l < 5; ++l) p[l] = static_cast<double>(counts[l]) / static_cast<double>(total);
  return p;
}

OrderedJson RatingDistribution::to_json() const {
  const auto table = [](const std::array<std::array<std::uint64_t, 5>, kNumCriteria>& hist) {
    OrderedJson out = OrderedJson::object();
    for (Criterion c : kAllCriteria) {
      const auto& counts = hist[to_index(c)];
      out[std::string(criterion_key(c))] = {{"counts", counts}, {"proportions", proportions(counts)}};
    }
    return out;
  };
  OrderedJson j;
  j["method"] = {{"levels", {1, 2, 3, 4, 5}}, {"unit", "documents"}};
  OrderedJson sources = OrderedJson::object();
  for (const auto& [source, hist] : by_source) sources[source] = table(hist);
  j["sources"] = std::move(sources);
  j["all"] = table(overall);
  return j;
}

std::string RatingDistribution::to_csv() const {
  std::ostringstream out;
  out.precision(17);
  out << "source,criterion,level,count,proportion\n";
  const auto emit = [&](const std::string& source, const std::array<std::array<std::uint64_t, 5>, kNumCriteria>& hist) {
    for (Criterion c : kAllCriteria) {
      const auto& counts = hist[to_index(c)];
      const auto props = proportions(counts);
      for (std::size_t l = 0; l < 5; ++l) {
        out << source << ',' << criterion_key(c) << ',' << l + 1 << ',' << counts[l] << ',' << props[l] << '\n';
      }
    }
  };
  for (const auto& [source, hist] : by_source) emit(source, hist);
  emit("*", overall);
  return out.str();
}

RatingDistribution rating_distribution(std::span<const AnnotatedDocument> corpus) {
  RatingDistribution d;
  for (const auto& doc : corpus) d.add(doc.doc.source, doc.annotation);
  return d;
}

NllCorrelationReport criterion_nll_correlation(std::span<const AnnotatedDocument> corpus) {
  NllCorrelationReport report;
  std::vector<double> nll;
  std::array<std::vector<double>, kNumCriteria> ratings;
  for (const auto& d : corpus) {
    if (!d.doc.nll) {
      ++report.excluded_missing_nll;
      continue;
    }
    nll.push_back(*d.doc.nll);
    for (Criterion c : kAllCriteria) ratings[to_index(c)].push_back(d.annotation.level(c));
  }
  for (Criterion c : kAllCriteria) {
    CriterionCorrelation row;
    row.criterion = c;
    row.n = nll.size();
    try {
      row.pearson = pearson(ratings[to_index(c)], nll);
      row.spearman = spearman(ratings[to_index(c)], nll);
    } catch (const CurateError&) {
      row.pearson.reset();
      row.spearman.reset();
    }
    report.rows.push_back(row);
  }
  return report;
}

OrderedJson NllCorrelationReport::to_json() const {
  OrderedJson j;
  j["method"] = {{"pearson", "product-moment"},
                 {"spearman", "pearson of average ranks"},
                 {"absent", "null when either side is constant or n < 2"},
                 {"missing_nll", "document excluded and counted"}};
  j["excluded_missing_nll"] = excluded_missing_nll;
  OrderedJson rows_json = OrderedJson::object();
  for (const auto& r : rows) {
    rows_json[std::string(criterion_key(r.criterion))] = {
        {"n", r.n}, {"pearson", optional_json(r.pearson)}, {"spearman", optional_json(r.spearman)}};
  }
  j["criteria"] = std::move(rows_json);
  return j;
}

std::string NllCorrelationReport::to_csv() const {
  std::ostringstream out;
  out << "criterion,n,pearson,spearman\n";
  for (const auto& r : rows) {
    out << criterion_key(r.criterion) << ',' << r.n << ',' << csv_number(r.pearson) << ',' << csv_number(r.spearman)
        << '\n';
  }
  return out.str();
}

std::vector<std::vector<std::optional<double>>> criterion_correlation_matrix(
    std::span<const AnnotatedDocument> corpus) {
  std::array<std::vector<double>, kNumCriteria> cols;
  for (const auto& d : corpus) {
    for (Criterion c : kAllCriteria) cols[to_index(c)].push_back(d.annotation.level(c));
  }
  std::vector<std::vector<std::optional<double>>> m(kNumCriteria, std::vector<std::optional<double>>(kNumCriteria));
  for (std::size_t a = 0; a < kNumCriteria; ++a) {
    for (std::size_t b = a; b < kNumCriteria; ++b) {
      try {
        m[a][b] = m[b][a] = pearson(cols[a], cols[b]);
      } catch (const CurateError&) {
      }
    }
  }
  return m;
}

}  // namespace curate
