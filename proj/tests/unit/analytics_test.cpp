#include <doctest.h>

#include <cmath>
#include <random>

#include "curate/analytics.hpp"
#include "curate/error.hpp"
#include "test_support.hpp"

using namespace curate;

namespace {

double dcg_by_hand(const std::vector<int>& gold_in_rank_order, int m) {
  double s = 0;
  for (std::size_t i = 0; i < gold_in_rank_order.size(); ++i) {
    if (static_cast<int>(i) + 1 > m) break;
    s += (std::pow(2.0, gold_in_rank_order[i]) - 1) / std::log2(2.0 + static_cast<double>(i));
  }
  return s;
}

AnnotatedDocument annotated(const std::string& id, const std::string& source, int overall,
                            std::optional<double> nll = std::nullopt) {
  return {{id, source, "", 1, nll}, testing::uniform_record(id, overall, DomainType::kOther)};
}

}  // namespace

TEST_SUITE("analytics") {
  TEST_CASE("pointwise loss") {
    CHECK(pointwise_loss({{1, 2, 3}, {1, 2, 3}}) == 0.0);
    CHECK(pointwise_loss({{2, 3}, {1, 5}}) == 5.0);
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> u(0, 6);
    for (int t = 0; t < 100; ++t) {
      RatingVector v;
      const int n = 1 + static_cast<int>(rng() % 30);
      for (int i = 0; i < n; ++i) {
        v.predicted.push_back(u(rng));
        v.gold.push_back(1 + static_cast<int>(rng() % 5));
      }
      double ref = 0;
      std::size_t i = 0;
      while (i < v.gold.size()) {
        const double r = v.predicted[i] - v.gold[i];
        ref += r * r;
        ++i;
      }
      CHECK(pointwise_loss(v) == doctest::Approx(ref).epsilon(1e-12));
    }
    CHECK_THROWS_AS(check_rating_vector({{1.0}, {1, 2}}), CurateError);
    CHECK_THROWS_AS(check_rating_vector({{1.0}, {6}}), CurateError);
    CHECK_THROWS_AS(check_rating_vector({{}, {}}), CurateError);
  }

  TEST_CASE("ndcg: ideal order, hand-computed case, single item") {
    CHECK(ndcg({{3, 2, 1}, {5, 3, 1}}) == doctest::Approx(1.0));
    const double want = dcg_by_hand({3, 1, 2}, 10) / dcg_by_hand({3, 2, 1}, 10);
    CHECK(want == doctest::Approx(0.9721).epsilon(1e-4));
    CHECK(ndcg({{2.5, 2.1, 1.2}, {3, 1, 2}}) == doctest::Approx(want).epsilon(1e-12));
    CHECK(std::abs(ndcg({{2.5, 2.1, 1.2}, {3, 1, 2}}) - 0.9721) < 5e-5);
    // These predictions sort to the ideal order.
    CHECK(ndcg({{2.5, 1.2, 2.1}, {3, 1, 2}}) == doctest::Approx(1.0));
    CHECK(ndcg({{0.3}, {4}}) == 1.0);
  }

  TEST_CASE("ndcg: ties by index and truncation") {
    CHECK(ranking(std::vector<double>{1, 2, 2, 0}) == std::vector<std::size_t>{1, 2, 0, 3});
    CHECK(ndcg_discount(1, {}) == 1.0);
    CHECK(ndcg_discount(3, {2}) == 0.0);
    CHECK(ndcg_gain(3) == 7.0);
    const RatingVector v{{5, 4, 3, 2, 1}, {1, 2, 3, 4, 5}};
    const double m2 = dcg_by_hand({1, 2}, 2) / dcg_by_hand({5, 4}, 2);
    CHECK(ndcg(v, {2}) == doctest::Approx(m2));
    CHECK(ideal_dcg(std::vector<int>{1, 5}, {1}) == 31.0);
  }

  TEST_CASE("ndcg bound: zero loss and single item give zero") {
    const RatingVector exact{{5, 3, 1}, {5, 3, 1}};
    CHECK(ndcg_bound_rhs(exact) == 0.0);
    CHECK(1.0 - ndcg(exact) == 0.0);
    const RatingVector one{{2.2}, {4}};
    CHECK(ndcg_power_mean_gap(one) == doctest::Approx(0.0).epsilon(1e-15));
    CHECK(ndcg_bound_rhs(one) == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(ndcg(one) == 1.0);
  }

  TEST_CASE("ndcg bound: the power-mean gap is never negative") {
    std::mt19937_64 rng(44);
    std::uniform_real_distribution<double> u(0, 6);
    for (int t = 0; t < 5000; ++t) {
      RatingVector v;
      const int n = 1 + static_cast<int>(rng() % 20);
      for (int i = 0; i < n; ++i) {
        v.predicted.push_back(u(rng));
        v.gold.push_back(1 + static_cast<int>(rng() % 5));
      }
      for (int m : {5, 10, n}) CHECK(ndcg_power_mean_gap(v, {m}) >= -1e-12);
    }
  }

  TEST_CASE("ndcg bound: seeded sweep of one thousand instances") {
    std::mt19937_64 rng(20240601);
    std::uniform_real_distribution<double> u(0.5, 5.5);
    int checked = 0;
    for (int t = 0; t < 1000; ++t) {
      RatingVector v;
      const int n = 1 + static_cast<int>(rng() % 20);
      for (int i = 0; i < n; ++i) {
        v.predicted.push_back(u(rng));
        v.gold.push_back(1 + static_cast<int>(rng() % 5));
      }
      const int ms[] = {5, 10, n};
      const int m = ms[t % 3];
      const double lhs = 1.0 - ndcg(v, {m});
      CHECK(lhs <= ndcg_bound_rhs(v, {m}) + 1e-9);
      ++checked;
    }
    CHECK(checked == 1000);
  }

  TEST_CASE("ndcg bound: near-tied predictions can exceed the stated constant") {
    // Two items whose predictions straddle the midpoint in the wrong order.
    const RatingVector v{{4.49, 4.51}, {5, 4}};
    const double lhs = 1.0 - ndcg(v);
    const double rhs = ndcg_bound_rhs(v);
    CHECK(lhs > 0.0);
    CHECK(lhs > rhs);
    CHECK(lhs - rhs < 0.01);
  }

  TEST_CASE("pearson") {
    const std::vector<double> x{1, 2, 3, 4}, y{1, 3, 2, 4}, neg{-1, -2, -3, -4};
    CHECK(pearson(x, x) == doctest::Approx(1.0));
    CHECK(pearson(x, neg) == doctest::Approx(-1.0));
    CHECK(pearson(x, y) == doctest::Approx(0.8).epsilon(1e-12));
    CHECK(pearson(y, x) == pearson(x, y));
    std::vector<double> affine;
    for (double v : y) affine.push_back(3.5 * v - 7);
    CHECK(pearson(x, affine) == doctest::Approx(0.8).epsilon(1e-12));
    const std::vector<double> flat{2, 2, 2, 2};
    CHECK_THROWS_AS(pearson(x, flat), UndefinedResult);
    CHECK_THROWS_AS(pearson(std::vector<double>{1}, std::vector<double>{2}), CurateError);
  }

  TEST_CASE("spearman") {
    const std::vector<double> a{1, 2, 3}, b{9, 9, 10};
    CHECK(average_ranks(b) == std::vector<double>{1.5, 1.5, 3});
    CHECK(spearman(a, b) == doctest::Approx(std::sqrt(3.0) / 2).epsilon(1e-12));
    CHECK(std::abs(spearman(a, b) - 0.866) < 5e-4);
    const std::vector<double> up{1, 5, 7, 100}, x{0, 1, 2, 3}, down{3, 2, 1, 0};
    CHECK(spearman(x, up) == doctest::Approx(1.0));
    CHECK(spearman(x, down) == doctest::Approx(-1.0));
    std::mt19937_64 rng(3);
    for (int t = 0; t < 50; ++t) {
      std::vector<double> p, q;
      for (int i = 0; i < 20; ++i) {
        p.push_back(static_cast<double>(rng() % 6));
        q.push_back(static_cast<double>(rng() % 6));
      }
      CHECK(spearman(p, q) == doctest::Approx(pearson(average_ranks(p), average_ranks(q))).epsilon(1e-12));
      CHECK(spearman(p, q) == doctest::Approx(spearman(q, p)).epsilon(1e-12));
    }
  }

  TEST_CASE("cohen kappa") {
    const std::vector<int> same{1, 2, 3, 1, 2};
    CHECK(cohen_kappa(same, same) == doctest::Approx(1.0));
    CHECK(cohen_kappa(std::vector<int>{1, 1, 2, 2}, std::vector<int>{1, 2, 1, 2}) == doctest::Approx(0.0));
    // Disjoint: a = [1,1,2,2], b = [2,2,1,1]; p_o = 0, p_e = 0.5.
    CHECK(cohen_kappa(std::vector<int>{1, 1, 2, 2}, std::vector<int>{2, 2, 1, 1}) == doctest::Approx(-1.0));
    // a = [1,2,3], b = [2,3,1]; p_o = 0, p_e = 1/3 -> -0.5.
    CHECK(cohen_kappa(std::vector<int>{1, 2, 3}, std::vector<int>{2, 3, 1}) == doctest::Approx(-0.5));
    CHECK(cohen_kappa(std::vector<int>{4, 4}, std::vector<int>{4, 4}) == 1.0);
    CHECK_THROWS_AS(cohen_kappa(std::vector<int>{4, 4}, std::vector<int>{3, 3}), UndefinedResult);
    std::vector<int> changed = same;
    changed[2] = 1;
    CHECK(cohen_kappa(same, changed) < 1.0);
  }

  TEST_CASE("fleiss kappa") {
    const std::vector<std::vector<int>> agree{{5, 0, 0}, {0, 5, 0}, {0, 0, 5}, {5, 0, 0}};
    CHECK(fleiss_kappa(agree, 5) == doctest::Approx(1.0));
    CHECK(fleiss_kappa({{1, 1}, {1, 1}}, 2) == doctest::Approx(-1.0));
    try {
      fleiss_kappa({{1, 1}, {2, 1}}, 2);
      FAIL("expected an error");
    } catch (const CurateError& e) {
      CHECK(std::string(e.what()).find("row 1") != std::string::npos);
    }
    CHECK_THROWS_AS(fleiss_kappa({{1}}, 1), CurateError);

    std::mt19937_64 rng(77);
    std::vector<std::vector<int>> random(20000, std::vector<int>(5, 0));
    for (auto& row : random) {
      for (int r = 0; r < 5; ++r) ++row[rng() % 5];
    }
    CHECK(std::abs(fleiss_kappa(random, 5)) < 0.01);
  }

  TEST_CASE("agreement variants") {
    const std::vector<int> a{1, 2, 3, 4}, b{1, 3, 5, 4};
    CHECK(exact_agreement(a, b) == 0.5);
    CHECK(within_one_agreement(a, b) == 0.75);
  }

  TEST_CASE("accuracy report: hand-counted fixture") {
    const std::vector<int> gold{5, 4, 3, 2, 1}, pred{5, 4, 3, 3, 1};
    const auto r = accuracy_report(gold, pred);
    CHECK(r.five_level_acc == doctest::Approx(0.8));
    CHECK(r.binary_acc == doctest::Approx(0.8));
    CHECK(r.error(ErrorCase::kFalseNegativeAtThree).rate() == 1.0);
    CHECK(r.error(ErrorCase::kMarginalFalsePositive).rate() == 0.0);
    CHECK(r.error(ErrorCase::kExtremeFalseNegative).rate() == 0.0);
    CHECK(r.confusion[1][2] == 1);
    CHECK(r.positive.rate() == 1.0);
    CHECK(r.negative.rate() == 0.5);
  }

  TEST_CASE("accuracy report: perfect predictions and all-wrong positives") {
    const std::vector<int> gold{5, 4, 3, 2, 1, 3};
    const auto perfect = accuracy_report(gold, gold);
    CHECK(perfect.five_level_acc == 1.0);
    CHECK(perfect.binary_acc == 1.0);
    for (auto c : kAllErrorCases) {
      const auto rate = perfect.error(c).rate();
      CHECK((!rate || *rate == 0.0));
    }
    const std::vector<int> high{5, 4, 3, 4}, low{1, 2, 2, 1};
    const auto wrong = accuracy_report(high, low);
    CHECK(wrong.positive.rate() == 0.0);
    CHECK_FALSE(wrong.negative.rate());
    CHECK(wrong.error(ErrorCase::kExtremeFalsePositive).rate() == 1.0);
    CHECK(wrong.error(ErrorCase::kExtremeFalsePositive).denominator == 3);
    CHECK(wrong.error(ErrorCase::kMarginalFalsePositive).rate() == 1.0);
    CHECK_FALSE(wrong.error(ErrorCase::kExtremeFalseNegative).rate());
    const auto j = wrong.to_json();
    CHECK(j.contains("method"));
    CHECK(j.contains("confusion"));
  }

  TEST_CASE("accuracy report: class recalls combine into binary accuracy; rates partition errors") {
    std::mt19937_64 rng(8);
    for (int t = 0; t < 50; ++t) {
      std::vector<int> g, p;
      for (int i = 0; i < 200; ++i) {
        g.push_back(1 + static_cast<int>(rng() % 5));
        p.push_back(1 + static_cast<int>(rng() % 5));
      }
      const auto r = accuracy_report(g, p);
      const double weighted = (static_cast<double>(r.positive.numerator) + static_cast<double>(r.negative.numerator)) /
                              static_cast<double>(r.n);
      CHECK(weighted == doctest::Approx(r.binary_acc));
      // Among gold level 2, wrong-side predictions split into "= 3" and "> 3".
      std::uint64_t gold2_pos = 0;
      for (std::size_t i = 0; i < g.size(); ++i) gold2_pos += g[i] == 2 && p[i] >= 3;
      CHECK(r.error(ErrorCase::kFalseNegativeAbove).numerator + r.error(ErrorCase::kFalseNegativeAtThree).numerator ==
            gold2_pos);
      // Among gold >= 3, extreme plus marginal false positives give the positive-class misses.
      CHECK(r.error(ErrorCase::kExtremeFalsePositive).numerator + r.error(ErrorCase::kMarginalFalsePositive).numerator ==
            r.positive.denominator - r.positive.numerator);
      for (auto c : kAllErrorCases) {
        if (const auto rate = r.error(c).rate()) CHECK((*rate >= 0.0 && *rate <= 1.0));
      }
    }
  }

  TEST_CASE("rating distribution") {
    std::vector<AnnotatedDocument> docs{annotated("a", "A", 5), annotated("b", "A", 5), annotated("c", "B", 4),
                                        annotated("d", "B", 5)};
    const auto d = rating_distribution(docs);
    const auto all5 = RatingDistribution::proportions(d.by_source.at("A")[to_index(Criterion::kOverallScore)]);
    CHECK(all5 == std::array<double, 5>{0, 0, 0, 0, 1.0});
    const auto mix = RatingDistribution::proportions(d.by_source.at("B")[to_index(Criterion::kOverallScore)]);
    CHECK(mix == std::array<double, 5>{0, 0, 0, 0.5, 0.5});
    CHECK(RatingDistribution::proportions({}) == std::array<double, 5>{0, 0, 0, 0, 0});

    RatingDistribution census;
    const std::array<std::uint64_t, 5> counts{3'681'879, 29'504'959, 36'156'824, 198'088'168, 169'558'482};
    census.overall[to_index(Criterion::kOverallScore)] = counts;
    const auto p = RatingDistribution::proportions(census.overall[to_index(Criterion::kOverallScore)]);
    const std::array<double, 5> want{0.84, 6.75, 8.27, 45.33, 38.80};
    for (std::size_t i = 0; i < 5; ++i) CHECK(std::abs(100 * p[i] - want[i]) <= 0.005);

    RatingDistribution a = rating_distribution(std::span(docs).subspan(0, 2));
    a.merge(rating_distribution(std::span(docs).subspan(2)));
    CHECK(a.overall == d.overall);
    CHECK(a.by_source == d.by_source);
    CHECK(d.to_csv().find("overall_score") != std::string::npos);
  }

  TEST_CASE("nll correlation") {
    std::vector<AnnotatedDocument> mono;
    for (int i = 0; i < 50; ++i) mono.push_back(annotated("m" + std::to_string(i), "s", 1 + i / 10, -0.1 * i));
    const auto r = criterion_nll_correlation(mono);
    CHECK(r.rows.size() == 14);
    for (const auto& row : r.rows) {
      REQUIRE(row.spearman);
      CHECK(*row.spearman < -0.9);
    }

    // Ratings as a monotone function of nll give spearman exactly 1.
    std::vector<AnnotatedDocument> inc;
    for (int i = 0; i < 5; ++i) inc.push_back(annotated("i" + std::to_string(i), "s", i + 1, std::exp(0.3 * i)));
    for (const auto& row : criterion_nll_correlation(inc).rows) CHECK(*row.spearman == doctest::Approx(1.0));

    std::mt19937_64 rng(99);
    std::vector<AnnotatedDocument> indep;
    for (int i = 0; i < 10000; ++i) {
      const auto id = "r" + std::to_string(i);
      indep.push_back({{id, "s", "", 1, std::uniform_real_distribution<double>(0, 5)(rng)}, testing::random_record(rng, id)});
    }
    for (const auto& row : criterion_nll_correlation(indep).rows) {
      CHECK(std::abs(*row.pearson) < 0.05);
      CHECK(std::abs(*row.spearman) < 0.05);
    }

    std::vector<AnnotatedDocument> flat{annotated("f0", "s", 3, 1.0), annotated("f1", "s", 3, 2.0),
                                        annotated("f2", "s", 3, std::nullopt)};
    const auto fr = criterion_nll_correlation(flat);
    CHECK(fr.excluded_missing_nll == 1);
    for (const auto& row : fr.rows) {
      CHECK(row.n == 2);
      CHECK_FALSE(row.pearson);
      CHECK_FALSE(row.spearman);
    }
  }

  TEST_CASE("criterion correlation matrix") {
    std::mt19937_64 rng(5);
    std::vector<AnnotatedDocument> docs;
    for (int i = 0; i < 100; ++i) {
      const auto id = "c" + std::to_string(i);
      docs.push_back({{id, "s", "", 1, {}}, testing::random_record(rng, id)});
    }
    const auto m = criterion_correlation_matrix(docs);
    REQUIRE(m.size() == 14);
    for (std::size_t i = 0; i < 14; ++i) {
      CHECK(*m[i][i] == doctest::Approx(1.0));
      for (std::size_t j = 0; j < 14; ++j) CHECK(*m[i][j] == doctest::Approx(*m[j][i]));
    }
  }
}
