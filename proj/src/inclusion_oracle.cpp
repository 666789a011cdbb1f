// Exact inclusion probabilities by enumerating sequential draws without
// replacement. Deliberately shares no selection code with PreparedSample:
// the sampler realizes draws through per-document keys, this file through
// explicit draw sequences.
#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "curate/error.hpp"
#include "curate/sampler.hpp"

namespace curate {

namespace {

constexpr std::size_t kMaxOracleDocs = 10;

struct OracleDoc {
  std::size_t unit = 0;
  std::size_t stratum = 0;
  double weight = 1.0;
  std::int64_t tokens = 0;
};

using Mask = std::uint32_t;

// Distribution over (selected set, tokens taken) for one stratum when drawing
// members in proportion to weight until `target` tokens are reached.
void enumerate_draws(const std::vector<OracleDoc>& docs, const std::vector<std::size_t>& members, Mask taken,
                     std::int64_t tokens, std::int64_t target, double prob, std::map<std::pair<Mask, std::int64_t>, double>& out) {
  double total_w = 0.0;
  for (std::size_t m : members) {
    if (!(taken & (Mask{1} << m))) total_w += docs[m].weight;
  }
  if (tokens >= target || total_w <= 0.0) {
    out[{taken, tokens}] += prob;
    return;
  }
  for (std::size_t m : members) {
    if (taken & (Mask{1} << m)) continue;
    enumerate_draws(docs, members, taken | (Mask{1} << m), tokens + docs[m].tokens, target,
                    prob * docs[m].weight / total_w, out);
  }
}

}  // namespace

std::map<std::string, double> inclusion_oracle(std::span<const SampleUnit> corpus, const SampleSpec& spec,
                                               const JointDistribution& joint) {
  check_spec(spec);
  if (corpus.size() > kMaxOracleDocs) {
    throw CurateError("inclusion oracle supports at most " + std::to_string(kMaxOracleDocs) + " documents, got " +
                      std::to_string(corpus.size()));
  }

  std::vector<OracleDoc> docs;
  bool deterministic = false;
  std::vector<double> score(corpus.size(), 0.0);
  std::optional<int> pool_levels;

  if (const auto* s = std::get_if<strategy::CriterionWeighted>(&spec.strategy)) {
    for (std::size_t i = 0; i < corpus.size(); ++i) docs.push_back({i, 0, double(corpus[i].rating(s->criterion)), 0});
    if (s->pool == strategy::WeightPool::kTopLevels) pool_levels = 1;
  } else if (const auto* s = std::get_if<strategy::FixedLevel>(&spec.strategy)) {
    for (std::size_t i = 0; i < corpus.size(); ++i) {
      if (corpus[i].rating(Criterion::kOverallScore) == s->level) docs.push_back({i, 0, 1.0, 0});
    }
  } else if (const auto* s = std::get_if<strategy::Temperature>(&spec.strategy)) {
    double mean = 0.0;
    for (const auto& u : corpus) mean += u.rating(s->criterion);
    mean /= static_cast<double>(corpus.size());
    double var = 0.0;
    for (const auto& u : corpus) var += (u.rating(s->criterion) - mean) * (u.rating(s->criterion) - mean);
    var /= static_cast<double>(corpus.size());
    const bool flat = var <= 1e-15;
    double zmax = -1e300;
    for (std::size_t i = 0; i < corpus.size(); ++i) {
      score[i] = flat ? 0.0 : (corpus[i].rating(s->criterion) - mean) / std::sqrt(var);
      zmax = std::max(zmax, score[i]);
    }
    deterministic = !flat && s->tau == 0.0;
    for (std::size_t i = 0; i < corpus.size(); ++i) {
      const double w = (flat || deterministic) ? 1.0 : std::exp((score[i] - zmax) / s->tau);
      docs.push_back({i, 0, w, 0});
    }
  } else if (std::holds_alternative<strategy::Uniform>(spec.strategy)) {
    for (std::size_t i = 0; i < corpus.size(); ++i) docs.push_back({i, 0, 1.0, 0});
  } else {
    throw CurateError("inclusion oracle supports criterion_weighted, fixed_level, temperature and uniform");
  }
  if (docs.empty()) throw CurateError("empty candidate set");
  for (auto& d : docs) d.tokens = corpus[d.unit].token_count;

  // Strata and their shares, straight from the joint.
  const auto key_of = [&](const std::string& source, std::optional<DomainType> domain) -> StratumKey {
    switch (spec.stratify) {
      case Stratify::kSourceAndDomain: return {source, domain};
      case Stratify::kSourceOnly: return {source, std::nullopt};
      case Stratify::kNone: return {};
    }
    return {};
  };
  std::map<StratumKey, std::uint64_t> share;
  for (const auto& [k, v] : joint.mass()) share[key_of(k.source, k.domain)] += v;
  std::vector<StratumKey> keys;
  std::vector<std::uint64_t> shares;
  for (const auto& [k, v] : share) {
    keys.push_back(k);
    shares.push_back(v);
  }
  std::vector<std::uint64_t> caps(keys.size(), 0);
  for (auto& d : docs) {
    const StratumKey k = key_of(corpus[d.unit].source, corpus[d.unit].domain);
    d.stratum = static_cast<std::size_t>(std::lower_bound(keys.begin(), keys.end(), k) - keys.begin());
    if (d.stratum >= keys.size() || !(keys[d.stratum] == k)) throw CurateError("document outside joint strata");
    caps[d.stratum] += static_cast<std::uint64_t>(d.tokens);
  }
  const auto budgets = plan_budgets(spec.token_budget, shares, caps, spec.shortfall);

  std::vector<std::vector<std::size_t>> members(keys.size());
  for (std::size_t i = 0; i < docs.size(); ++i) members[docs[i].stratum].push_back(i);

  if (pool_levels) {
    for (std::size_t s = 0; s < keys.size(); ++s) {
      auto& m = members[s];
      std::sort(m.begin(), m.end(), [&](std::size_t a, std::size_t b) { return docs[a].weight > docs[b].weight; });
      std::int64_t covered = 0;
      double floor_w = 0.0;
      for (std::size_t k = 0; k < m.size(); ++k) {
        covered += docs[m[k]].tokens;
        const bool level_ends = k + 1 == m.size() || docs[m[k + 1]].weight != docs[m[k]].weight;
        if (level_ends && covered >= budgets[s]) {
          floor_w = docs[m[k]].weight;
          break;
        }
      }
      std::erase_if(m, [&](std::size_t a) { return docs[a].weight < floor_w; });
    }
  }

  if (deterministic) {
    for (auto& m : members) {
      std::sort(m.begin(), m.end(), [&](std::size_t a, std::size_t b) {
        if (score[docs[a].unit] != score[docs[b].unit]) return score[docs[a].unit] > score[docs[b].unit];
        return corpus[docs[a].unit].id < corpus[docs[b].unit].id;
      });
    }
  }

  // State: (selected mask, carried overshoot) -> probability.
  std::map<std::pair<Mask, std::int64_t>, double> state{{{0, 0}, 1.0}};
  for (std::size_t s = 0; s < keys.size(); ++s) {
    std::map<std::pair<Mask, std::int64_t>, double> next;
    for (const auto& [st, p] : state) {
      const std::int64_t target = budgets[s] - st.second;
      std::map<std::pair<Mask, std::int64_t>, double> local;
      if (deterministic) {
        Mask taken = 0;
        std::int64_t tokens = 0;
        for (std::size_t m : members[s]) {
          if (tokens >= target) break;
          taken |= Mask{1} << m;
          tokens += docs[m].tokens;
        }
        local[{taken, tokens}] = 1.0;
      } else {
        enumerate_draws(docs, members[s], 0, 0, target, 1.0, local);
      }
      for (const auto& [lt, lp] : local) {
        next[{st.first | lt.first, st.second + lt.second - budgets[s]}] += p * lp;
      }
    }
    state = std::move(next);
  }

  std::map<std::string, double> out;
  for (const auto& u : corpus) out[u.id] = 0.0;
  for (const auto& [st, p] : state) {
    for (std::size_t i = 0; i < docs.size(); ++i) {
      if (st.first & (Mask{1} << i)) out[corpus[docs[i].unit].id] += p;
    }
  }
  // Summing branch probabilities can overshoot 1 by an ulp or two.
  for (auto& [id, p] : out) p = std::clamp(p, 0.0, 1.0);
  return out;
}

}  // namespace curate
