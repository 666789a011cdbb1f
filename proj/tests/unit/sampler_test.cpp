#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <random>
#include <set>

#include "curate/error.hpp"
#include "curate/sampler.hpp"
#include "test_support.hpp"

using namespace curate;
using testing::unit;

namespace {

SampleSpec spec_of(Strategy s, std::int64_t budget, Stratify stratify = Stratify::kNone, std::uint64_t seed = 1) {
  SampleSpec spec;
  spec.strategy = std::move(s);
  spec.token_budget = budget;
  spec.seed = seed;
  spec.stratify = stratify;
  return spec;
}

std::set<std::string> ids(const SubsetManifest& m) {
  const auto v = m.doc_ids();
  return {v.begin(), v.end()};
}

std::map<std::string, double> empirical(std::span<const SampleUnit> corpus, const SampleSpec& spec, int runs) {
  const auto joint = estimate_joint(corpus);
  const PreparedSample prepared(corpus, spec, joint);
  std::map<std::string, double> freq;
  for (const auto& u : corpus) freq[u.id] = 0.0;
  std::vector<std::size_t> out;
  for (int r = 0; r < runs; ++r) {
    prepared.select(static_cast<std::uint64_t>(r) * 0x9e3779b97f4a7c15ULL + 12345, out);
    for (std::size_t i : out) freq[corpus[i].id] += 1.0;
  }
  for (auto& [k, v] : freq) v /= runs;
  return freq;
}

std::vector<SampleUnit> big_corpus(int n, std::uint64_t seed, std::int64_t tokens = 0) {
  std::mt19937_64 rng(seed);
  std::vector<SampleUnit> c;
  for (int i = 0; i < n; ++i) {
    const std::int64_t t = tokens > 0 ? tokens : 1 + static_cast<std::int64_t>(rng() % 200);
    auto u = unit("doc" + std::to_string(i), "src" + std::to_string(rng() % 3), t, 1 + static_cast<int>(rng() % 5),
                  static_cast<DomainType>(rng() % 4));
    u.nll = 0.5 + static_cast<double>(rng() % 1000) / 250.0;
    (*u.ratings)[to_index(Criterion::kCoherence)] = static_cast<std::uint8_t>(1 + rng() % 5);
    c.push_back(std::move(u));
  }
  return c;
}

}  // namespace

TEST_SUITE("sampler") {
  TEST_CASE("joint: two strata with masses 600 and 400") {
    const std::vector<SampleUnit> c{unit("a", "x", 600, 3), unit("b", "y", 400, 3)};
    const auto j = estimate_joint(c);
    CHECK(j.probability({"x", DomainType::kOther}) == doctest::Approx(0.6));
    CHECK(j.probability({"y", DomainType::kOther}) == doctest::Approx(0.4));
    CHECK(j.source_marginal().at("x") == doctest::Approx(0.6));
    CHECK(j.domain_marginal().at(DomainType::kOther) == doctest::Approx(1.0));
  }

  TEST_CASE("joint: single stratum, empty corpus, count proportions") {
    const std::vector<SampleUnit> one{unit("a", "x", 5, 3)};
    CHECK(estimate_joint(one).probability({"x", DomainType::kOther}) == 1.0);
    CHECK_THROWS_AS(estimate_joint(std::vector<SampleUnit>{}), CurateError);
    std::vector<SampleUnit> c;
    for (int i = 0; i < 3; ++i) c.push_back(unit("p" + std::to_string(i), "x", 10, 3, DomainType::kLaw));
    for (int i = 0; i < 3; ++i) c.push_back(unit("q" + std::to_string(i), "y", 10, 3, DomainType::kLaw));
    c.push_back(unit("r", "y", 10, 3, DomainType::kMedicine));
    const auto j = estimate_joint(c);
    CHECK(j.probability({"x", DomainType::kLaw}) == doctest::Approx(3.0 / 7));
    CHECK(j.probability({"y", DomainType::kMedicine}) == doctest::Approx(1.0 / 7));
    double sum = 0;
    for (const auto& [k, v] : j.mass()) sum += j.probability(k);
    CHECK(std::abs(sum - 1.0) < 1e-9);
  }

  TEST_CASE("temperature zero picks the top scores deterministically") {
    const std::vector<SampleUnit> c{unit("A", "s", 10, 5), unit("B", "s", 10, 3), unit("C", "s", 10, 1)};
    for (std::uint64_t seed : {1ULL, 2ULL, 99ULL}) {
      const auto m = sample(c, spec_of(strategy::Temperature{Criterion::kOverallScore, 0.0}, 20, Stratify::kNone, seed),
                            estimate_joint(c));
      CHECK(ids(m) == std::set<std::string>{"A", "B"});
    }
  }

  TEST_CASE("temperature zero equals a sorted top-k reference with id tie-break") {
    auto c = big_corpus(500, 4, 10);
    const auto m = sample(c, spec_of(strategy::Temperature{Criterion::kCoherence, 0.0}, 1000), estimate_joint(c));
    auto ref = c;
    std::sort(ref.begin(), ref.end(), [](const SampleUnit& a, const SampleUnit& b) {
      if (a.rating(Criterion::kCoherence) != b.rating(Criterion::kCoherence))
        return a.rating(Criterion::kCoherence) > b.rating(Criterion::kCoherence);
      return a.id < b.id;
    });
    std::set<std::string> want;
    for (int i = 0; i < 100; ++i) want.insert(ref[static_cast<std::size_t>(i)].id);
    CHECK(ids(m) == want);
  }

  TEST_CASE("temperature with constant ratings falls back to uniform with a warning") {
    std::vector<SampleUnit> c;
    for (int i = 0; i < 6; ++i) c.push_back(unit("f" + std::to_string(i), "s", 1, 3));
    const PreparedSample p(c, spec_of(strategy::Temperature{Criterion::kOverallScore, 2.0}, 2), estimate_joint(c));
    CHECK_FALSE(p.warnings().empty());
  }

  TEST_CASE("oracle: weights 1,2,2 picking two of three") {
    const std::vector<SampleUnit> c{unit("a", "s", 1, 1), unit("b", "s", 1, 2), unit("c", "s", 1, 2)};
    const auto spec = spec_of(strategy::CriterionWeighted{}, 2);
    const auto p = inclusion_oracle(c, spec, estimate_joint(c));
    CHECK(p.at("a") == doctest::Approx(7.0 / 15).epsilon(1e-12));
    CHECK(p.at("b") == doctest::Approx(23.0 / 30).epsilon(1e-12));
    CHECK(p.at("c") == doctest::Approx(23.0 / 30).epsilon(1e-12));
    CHECK(std::abs(p.at("a") - 0.4667) < 5e-5);
  }

  TEST_CASE("oracle: uniform one of four, single fixed-level document, equal weights") {
    std::vector<SampleUnit> c;
    for (int i = 0; i < 4; ++i) c.push_back(unit("u" + std::to_string(i), "s", 1, 2 + i % 2));
    for (const auto& [id, p] : inclusion_oracle(c, spec_of(strategy::Uniform{}, 1), estimate_joint(c))) {
      CHECK(p == doctest::Approx(0.25));
    }
    c[2] = unit("u2", "s", 1, 5);
    const auto fixed = inclusion_oracle(c, spec_of(strategy::FixedLevel{5}, 1), estimate_joint(c));
    CHECK(fixed.at("u2") == doctest::Approx(1.0));
    CHECK(fixed.at("u0") == 0.0);
    std::vector<SampleUnit> eq;
    for (int i = 0; i < 5; ++i) eq.push_back(unit("e" + std::to_string(i), "s", 1, 4));
    for (const auto& [id, p] : inclusion_oracle(eq, spec_of(strategy::CriterionWeighted{}, 2), estimate_joint(eq))) {
      CHECK(p == doctest::Approx(0.4));
    }
    std::vector<SampleUnit> eleven;
    for (int i = 0; i < 11; ++i) eleven.push_back(unit("x" + std::to_string(i), "s", 1, 4));
    CHECK_THROWS_AS(inclusion_oracle(eleven, spec_of(strategy::Uniform{}, 2), estimate_joint(eleven)), CurateError);
  }

  TEST_CASE("oracle probabilities stay inside [0, 1]") {
    std::mt19937_64 rng(99);
    for (int k = 0; k < 200; ++k) {
      std::vector<SampleUnit> c;
      std::int64_t total = 0;
      const int n = 2 + static_cast<int>(rng() % 5);
      for (int i = 0; i < n; ++i) {
        c.push_back(unit("d" + std::to_string(i), rng() % 2 ? "s" : "t", 1 + static_cast<std::int64_t>(rng() % 3),
                         1 + static_cast<int>(rng() % 5)));
        total += c.back().token_count;
      }
      const std::int64_t budget = 1 + static_cast<std::int64_t>(rng() % static_cast<std::uint64_t>(total));
      for (Strategy s : {Strategy{strategy::CriterionWeighted{}}, Strategy{strategy::Temperature{Criterion::kOverallScore, 0.5}},
                         Strategy{strategy::Uniform{}}}) {
        for (const auto& [id, p] : inclusion_oracle(c, spec_of(s, budget, Stratify::kSourceOnly), estimate_joint(c))) {
          CHECK(p >= 0.0);
          CHECK(p <= 1.0);
        }
      }
    }
  }

  TEST_CASE("sampler frequencies agree with the oracle") {
    const std::vector<SampleUnit> c{unit("a", "s", 3, 1), unit("b", "s", 1, 2), unit("c", "t", 2, 5),
                                    unit("d", "t", 1, 3), unit("e", "s", 2, 4)};
    const int runs = 20000;
    for (const auto& spec : {spec_of(strategy::CriterionWeighted{}, 3), spec_of(strategy::CriterionWeighted{}, 4, Stratify::kSourceOnly),
                             spec_of(strategy::Uniform{}, 2), spec_of(strategy::Temperature{Criterion::kOverallScore, 2.0}, 3)}) {
      const auto want = inclusion_oracle(c, spec, estimate_joint(c));
      const auto got = empirical(c, spec, runs);
      for (const auto& [id, p] : want) {
        const double sd = std::sqrt(std::max(p * (1 - p), 1e-12) / runs);
        CHECK_MESSAGE(std::abs(got.at(id) - p) <= 5 * sd + 1e-12, strategy_name(spec.strategy), " ", id);
      }
    }
  }

  TEST_CASE("raising one rating never lowers its inclusion probability") {
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 30; ++trial) {
      std::vector<SampleUnit> c;
      const int n = 3 + static_cast<int>(rng() % 4);
      for (int i = 0; i < n; ++i) {
        c.push_back(unit("m" + std::to_string(i), "s", 1 + static_cast<std::int64_t>(rng() % 3), 1 + static_cast<int>(rng() % 5)));
      }
      const auto spec = spec_of(strategy::CriterionWeighted{}, 1 + static_cast<std::int64_t>(rng() % 4));
      const auto before = inclusion_oracle(c, spec, estimate_joint(c));
      const std::size_t k = rng() % c.size();
      const int level = c[k].rating(Criterion::kOverallScore);
      if (level == 5) continue;
      auto raised = c;
      (*raised[k].ratings)[to_index(Criterion::kOverallScore)] = static_cast<std::uint8_t>(level + 1);
      const auto after = inclusion_oracle(raised, spec, estimate_joint(raised));
      CHECK(after.at(c[k].id) >= before.at(c[k].id) - 1e-12);
    }
  }

  TEST_CASE("manifests: unique rows, budget bracket, determinism across workers") {
    auto c = big_corpus(3000, 8);
    const auto joint = estimate_joint(c);
    const std::vector<SampleSpec> specs{
        spec_of(strategy::CriterionWeighted{}, 40000, Stratify::kSourceAndDomain, 3),
        spec_of(strategy::CriterionWeighted{Criterion::kCoherence, strategy::WeightPool::kTopLevels}, 40000,
                Stratify::kSourceAndDomain, 3),
        spec_of(strategy::Uniform{}, 25000, Stratify::kSourceOnly, 4),
        spec_of(strategy::Temperature{Criterion::kOverallScore, 2.0}, 30000, Stratify::kNone, 5),
        spec_of(strategy::Perplexity{false}, 30000, Stratify::kSourceOnly, 6),
        spec_of(strategy::FixedLevel{4}, 15000, Stratify::kSourceOnly, 7),
    };
    for (const auto& spec : specs) {
      const auto m = sample(c, spec, joint);
      CHECK(ids(m).size() == m.rows.size());
      CHECK(m.total_tokens > spec.token_budget - m.max_row_tokens());
      CHECK(m.total_tokens < spec.token_budget + m.max_row_tokens());
      CHECK(m.digest == manifest_digest(m));
      CHECK(sample(c, spec, joint, {8}).digest == m.digest);
      auto shuffled = c;
      std::shuffle(shuffled.begin(), shuffled.end(), std::mt19937_64(1));
      CHECK(sample(shuffled, spec, estimate_joint(shuffled), {3}).digest == m.digest);
    }
  }

  TEST_CASE("stratified mass tracks budget times P within one document") {
    const std::int64_t len = 7;
    auto c = big_corpus(12000, 21, len);
    const auto joint = estimate_joint(c);
    const std::int64_t budget = 30000;
    const auto m = sample(c, spec_of(strategy::CriterionWeighted{}, budget, Stratify::kSourceAndDomain, 11), joint);
    std::map<StratumKey, std::int64_t> taken;
    for (const auto& r : m.rows) taken[{r.source, r.domain}] += r.token_count;
    for (const auto& [k, mass] : joint.mass()) {
      const double ideal = static_cast<double>(budget) * joint.probability(k);
      CHECK(std::abs(static_cast<double>(taken[k]) - ideal) <= static_cast<double>(len) + 1.0);
    }
  }

  TEST_CASE("fixed level selects only that level and keeps source proportions") {
    auto c = big_corpus(2000, 13, 5);
    const auto joint = estimate_joint(c);
    const auto m = sample(c, spec_of(strategy::FixedLevel{5}, 1000, Stratify::kSourceOnly), joint);
    for (const auto& r : m.rows) CHECK(r.overall_score == 5);
    std::map<std::string, std::int64_t> by_source;
    for (const auto& r : m.rows) by_source[r.source] += r.token_count;
    for (const auto& [s, p] : joint.source_marginal()) CHECK(std::abs(by_source[s] - 1000 * p) <= 6.0);
  }

  TEST_CASE("perplexity strategy sorts by nll") {
    std::vector<SampleUnit> c;
    for (int i = 0; i < 10; ++i) {
      auto u = unit("n" + std::to_string(i), "s", 1, 3);
      u.nll = 0.1 * (i + 1);
      c.push_back(u);
    }
    const auto joint = estimate_joint(c);
    CHECK(ids(sample(c, spec_of(strategy::Perplexity{false}, 3), joint)) == std::set<std::string>{"n0", "n1", "n2"});
    CHECK(ids(sample(c, spec_of(strategy::Perplexity{true}, 2), joint)) == std::set<std::string>{"n9", "n8"});
    c[4].nll.reset();
    CHECK_THROWS_AS(sample(c, spec_of(strategy::Perplexity{false}, 3), estimate_joint(c)), CurateError);
  }

  TEST_CASE("domain filter keeps requested domains at or above the level") {
    auto c = big_corpus(1500, 17, 3);
    const auto joint = estimate_joint(c);
    strategy::DomainFilter f{{DomainType::kMedicine, DomainType::kLaw}, 4};
    const auto m = sample(c, spec_of(f, 600, Stratify::kNone), joint);
    CHECK(m.total_tokens >= 600);
    for (const auto& r : m.rows) {
      CHECK((r.domain == DomainType::kMedicine || r.domain == DomainType::kLaw));
      CHECK(*r.overall_score >= 4);
    }
  }

  TEST_CASE("shortfall: error mode aborts, redistribute mode fills elsewhere") {
    std::vector<SampleUnit> c;
    for (int i = 0; i < 10; ++i) c.push_back(unit("a" + std::to_string(i), "A", 10, 5));
    for (int i = 0; i < 10; ++i) c.push_back(unit("b" + std::to_string(i), "B", 10, i == 0 ? 5 : 2));
    const auto joint = estimate_joint(c);
    auto spec = spec_of(strategy::FixedLevel{5}, 60, Stratify::kSourceOnly);
    spec.shortfall = Shortfall::kError;
    CHECK_THROWS_AS(sample(c, spec, joint), CurateError);
    spec.shortfall = Shortfall::kRedistribute;
    const auto m = sample(c, spec, joint);
    CHECK(m.total_tokens == 60);
    CHECK(ids(m).count("b0") == 1);
    CHECK_FALSE(m.warnings.empty());
    spec.token_budget = 500;
    CHECK(sample(c, spec, joint).total_tokens == 110);
  }

  TEST_CASE("largest remainder and budget planning") {
    const std::vector<std::uint64_t> m{1, 1, 1};
    CHECK(largest_remainder(10, m) == std::vector<std::int64_t>{4, 3, 3});
    const std::vector<std::uint64_t> m2{600, 400};
    CHECK(largest_remainder(7, m2) == std::vector<std::int64_t>{4, 3});
    CHECK(plan_budgets(10, m, std::vector<std::uint64_t>{100, 1, 100}, Shortfall::kRedistribute) ==
          std::vector<std::int64_t>{5, 1, 4});
    CHECK_THROWS_AS(plan_budgets(10, m, std::vector<std::uint64_t>{100, 1, 100}, Shortfall::kError), CurateError);
    const std::vector<std::uint64_t> zero{0, 0};
    CHECK_THROWS_AS(largest_remainder(3, zero), CurateError);
  }

  TEST_CASE("merge: disjoint, identical and overlapping manifests") {
    std::vector<SampleUnit> c;
    for (int i = 0; i < 30; ++i) c.push_back(unit("d" + std::to_string(i), "s", 1, 1 + i % 5));
    const auto make = [&](int from, int to) {
      std::vector<SampleUnit> part(c.begin() + from, c.begin() + to);
      auto m = sample(part, spec_of(strategy::Uniform{}, to - from), estimate_joint(part));
      return m;
    };
    const auto a = make(0, 10), b = make(10, 20), overlap = make(5, 15);
    REQUIRE(a.rows.size() == 10);
    const std::vector<SubsetManifest> disjoint{a, b};
    const auto m1 = merge_subsets(disjoint, 20, 1);
    CHECK(m1.rows.size() == 20);
    const auto* merge = std::get_if<strategy::Merge>(&m1.spec.strategy);
    REQUIRE(merge != nullptr);
    CHECK(merge->parent_digests == std::vector<std::string>{a.digest, b.digest});

    const std::vector<SubsetManifest> same{a, a};
    CHECK(merge_subsets(same, 100, 1).rows.size() == 10);

    const std::vector<SubsetManifest> ov{a, overlap};
    const auto full = merge_subsets(ov, 15, 1);
    CHECK(full.rows.size() == 15);
    const auto sub = merge_subsets(ov, 8, 1);
    CHECK(sub.rows.size() == 8);
    for (const auto& id : sub.doc_ids()) CHECK(ids(full).count(id) == 1);
    CHECK_THROWS_AS(merge_subsets(ov, 16, 1, Shortfall::kError), CurateError);
  }

  TEST_CASE("manifest file round trip preserves digest") {
    auto c = big_corpus(200, 2);
    const auto m = sample(c, spec_of(strategy::CriterionWeighted{}, 3000, Stratify::kSourceAndDomain, 77), estimate_joint(c));
    testing::TempDir dir("manifest");
    write_manifest(dir.file("m.jsonl"), m, OrderedJson{{"provenance", {{"note", "x"}}}});
    const auto back = read_manifest(dir.file("m.jsonl"));
    CHECK(back.digest == m.digest);
    CHECK(back.rows.size() == m.rows.size());
    CHECK(back.total_tokens == m.total_tokens);
    auto text = testing::read_file(dir.file("m.jsonl"));
    const auto pos = text.find("\"doc_id\"");
    text.insert(text.find('\n', pos), " ");
    text.replace(text.rfind("\"token_count\":"), 14, "\"token_count\": ");
    testing::write_file(dir.file("n.jsonl"), text);
    CHECK_NOTHROW(read_manifest(dir.file("n.jsonl")));
    std::string tampered = testing::read_file(dir.file("m.jsonl"));
    tampered.erase(tampered.rfind('\n', tampered.size() - 2) + 1);
    testing::write_file(dir.file("t.jsonl"), tampered);
    CHECK_THROWS_AS(read_manifest(dir.file("t.jsonl")), CurateError);
  }

  TEST_CASE("spec json round trip and invariants") {
    const std::vector<SampleSpec> specs{
        spec_of(strategy::CriterionWeighted{Criterion::kCreativity, strategy::WeightPool::kTopLevels}, 5),
        spec_of(strategy::FixedLevel{2}, 9, Stratify::kSourceOnly),
        spec_of(strategy::Temperature{Criterion::kSensitivity, 2.0}, 9),
        spec_of(strategy::Perplexity{true}, 3),
        spec_of(strategy::DomainFilter{{DomainType::kCoding}, 4}, 3),
    };
    for (const auto& s : specs) {
      const auto back = sample_spec_from_json(Json::parse(to_json(s).dump()));
      CHECK(to_json(back) == to_json(s));
    }
    CHECK_THROWS_AS(check_spec(spec_of(strategy::FixedLevel{6}, 5)), CurateError);
    CHECK_THROWS_AS(check_spec(spec_of(strategy::Temperature{Criterion::kOverallScore, -1.0}, 5)), CurateError);
    CHECK_THROWS_AS(check_spec(spec_of(strategy::Uniform{}, 0)), CurateError);
  }

  TEST_CASE("missing annotations are rejected for rating strategies") {
    std::vector<SampleUnit> c{unit("a", "s", 1, 3)};
    c[0].ratings.reset();
    c[0].domain.reset();
    CHECK_THROWS_AS(sample(c, spec_of(strategy::CriterionWeighted{}, 1), estimate_joint(c)), CurateError);
    CHECK_NOTHROW(sample(c, spec_of(strategy::Uniform{}, 1), estimate_joint(c)));
  }
}
