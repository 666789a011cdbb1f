#include "curate/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <thread>
#include <unordered_set>

#include "curate/error.hpp"
#include "curate/hashing.hpp"

namespace curate {

namespace {

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

// Runs fn(begin, end) over [0, n) split into at most `workers` contiguous
// ranges. Each range writes disjoint outputs, so results do not depend on
// the worker count.
template <class Fn>
void parallel_ranges(std::size_t n, unsigned workers, Fn&& fn) {
  const std::size_t w = std::max<std::size_t>(1, std::min<std::size_t>(workers, n));
  if (w <= 1) {
    fn(std::size_t{0}, n);
    return;
  }
  std::vector<std::thread> threads;
  threads.reserve(w);
  const std::size_t step = (n + w - 1) / w;
  for (std::size_t b = 0; b < n; b += step) {
    threads.emplace_back([&fn, b, e = std::min(n, b + step)] { fn(b, e); });
  }
  for (auto& t : threads) t.join();
}

StratumKey stratum_of(const SampleUnit& u, Stratify mode) {
  switch (mode) {
    case Stratify::kSourceAndDomain:
      if (!u.domain) throw CurateError("document " + u.id + " has no domain; source_and_domain stratification needs annotations");
      return {u.source, u.domain};
    case Stratify::kSourceOnly: return {u.source, std::nullopt};
    case Stratify::kNone: return {};
  }
  return {};
}

StratumKey project(const StratumKey& joint_key, Stratify mode) {
  switch (mode) {
    case Stratify::kSourceAndDomain: return joint_key;
    case Stratify::kSourceOnly: return {joint_key.source, std::nullopt};
    case Stratify::kNone: return {};
  }
  return {};
}

std::string criterion_json(Criterion c) { return std::string(criterion_key(c)); }

Criterion criterion_from_json(const Json& j, const char* field) {
  const auto it = j.find(field);
  if (it == j.end()) return Criterion::kOverallScore;
  if (!it->is_string()) throw CurateError(std::string("spec field ") + field + " must be a string");
  const auto c = criterion_from_key(it->get<std::string>());
  if (!c) throw CurateError("unknown criterion: " + it->get<std::string>());
  return *c;
}

}  // namespace

SampleUnit make_unit(const Document& doc, const AnnotationRecord* annotation) {
  SampleUnit u;
  u.id = doc.id;
  u.source = doc.source;
  u.token_count = doc.token_count;
  u.nll = doc.nll;
  if (annotation != nullptr) {
    const auto violations = validate(*annotation);
    if (!violations.empty()) throw CurateError("invalid annotation for " + doc.id + ": " + violations.front());
    u.domain = annotation->domain;
    std::array<std::uint8_t, kNumCriteria> r{};
    for (Criterion c : kAllCriteria) r[to_index(c)] = static_cast<std::uint8_t>(annotation->level(c));
    u.ratings = r;
  }
  return u;
}

std::vector<SampleUnit> make_units(std::span<const AnnotatedDocument> docs) {
  std::vector<SampleUnit> out;
  out.reserve(docs.size());
  for (const auto& d : docs) out.push_back(make_unit(d.doc, &d.annotation));
  return out;
}

std::string StratumKey::label() const {
  if (source.empty() && !domain) return "*";
  if (!domain) return source;
  return source + "/" + std::string(domain_name(*domain));
}

double JointDistribution::probability(const StratumKey& key) const {
  if (total_ == 0) return 0.0;
  const auto it = mass_.find(key);
  return it == mass_.end() ? 0.0 : static_cast<double>(it->second) / static_cast<double>(total_);
}

std::map<std::string, double> JointDistribution::source_marginal() const {
  std::map<std::string, std::uint64_t> m;
  for (const auto& [k, v] : mass_) m[k.source] += v;
  std::map<std::string, double> out;
  for (const auto& [k, v] : m) out[k] = static_cast<double>(v) / static_cast<double>(total_);
  return out;
}

std::map<std::optional<DomainType>, double> JointDistribution::domain_marginal() const {
  std::map<std::optional<DomainType>, std::uint64_t> m;
  for (const auto& [k, v] : mass_) m[k.domain] += v;
  std::map<std::optional<DomainType>, double> out;
  for (const auto& [k, v] : m) out[k] = static_cast<double>(v) / static_cast<double>(total_);
  return out;
}

OrderedJson JointDistribution::to_json() const {
  OrderedJson j;
  j["total_tokens"] = total_;
  OrderedJson cells = OrderedJson::array();
  for (const auto& [k, v] : mass_) {
    cells.push_back({{"source", k.source},
                     {"domain", k.domain ? OrderedJson(std::string(domain_name(*k.domain))) : OrderedJson(nullptr)},
                     {"tokens", v},
                     {"probability", probability(k)}});
  }
  j["cells"] = std::move(cells);
  return j;
}

JointDistribution estimate_joint(std::span<const SampleUnit> corpus) {
  if (corpus.empty()) throw CurateError("cannot estimate a joint distribution from an empty corpus");
  JointDistribution joint;
  for (const auto& u : corpus) joint.add({u.source, u.domain}, static_cast<std::uint64_t>(u.token_count));
  if (joint.total() == 0) throw CurateError("corpus has zero token mass");
  return joint;
}

std::string_view strategy_name(const Strategy& s) noexcept {
  return std::visit(Overloaded{
                        [](const strategy::CriterionWeighted&) { return std::string_view("criterion_weighted"); },
                        [](const strategy::FixedLevel&) { return std::string_view("fixed_level"); },
                        [](const strategy::Temperature&) { return std::string_view("temperature"); },
                        [](const strategy::Uniform&) { return std::string_view("uniform"); },
                        [](const strategy::Perplexity&) { return std::string_view("perplexity"); },
                        [](const strategy::DomainFilter&) { return std::string_view("domain_filter"); },
                        [](const strategy::Merge&) { return std::string_view("merge"); },
                    },
                    s);
}

std::string_view stratify_name(Stratify s) noexcept {
  switch (s) {
    case Stratify::kSourceAndDomain: return "source_and_domain";
    case Stratify::kSourceOnly: return "source_only";
    case Stratify::kNone: return "none";
  }
  return "";
}

std::optional<Stratify> stratify_from_name(std::string_view name) noexcept {
  if (name == "source_and_domain" || name == "source-and-domain") return Stratify::kSourceAndDomain;
  if (name == "source_only" || name == "source-only" || name == "source") return Stratify::kSourceOnly;
  if (name == "none") return Stratify::kNone;
  return std::nullopt;
}

std::string_view shortfall_name(Shortfall s) noexcept { return s == Shortfall::kError ? "error" : "redistribute"; }

std::optional<Shortfall> shortfall_from_name(std::string_view name) noexcept {
  if (name == "error") return Shortfall::kError;
  if (name == "redistribute") return Shortfall::kRedistribute;
  return std::nullopt;
}

OrderedJson to_json(const SampleSpec& spec) {
  OrderedJson j;
  j["strategy"] = std::string(strategy_name(spec.strategy));
  std::visit(Overloaded{
                 [&](const strategy::CriterionWeighted& s) {
                   j["criterion"] = criterion_json(s.criterion);
                   j["pool"] = s.pool == strategy::WeightPool::kAllCandidates ? "all" : "top_levels";
                 },
                 [&](const strategy::FixedLevel& s) { j["level"] = s.level; },
                 [&](const strategy::Temperature& s) {
                   j["criterion"] = criterion_json(s.criterion);
                   j["tau"] = s.tau;
                 },
                 [&](const strategy::Uniform&) {},
                 [&](const strategy::Perplexity& s) { j["order"] = s.highest ? "highest" : "lowest"; },
                 [&](const strategy::DomainFilter& s) {
                   OrderedJson d = OrderedJson::array();
                   for (DomainType t : s.domains) d.push_back(domain_key(t));
                   j["domains"] = std::move(d);
                   j["min_level"] = s.min_level;
                 },
                 [&](const strategy::Merge& s) { j["parents"] = s.parent_digests; },
             },
             spec.strategy);
  j["token_budget"] = spec.token_budget;
  j["seed"] = spec.seed;
  j["stratify"] = std::string(stratify_name(spec.stratify));
  j["shortfall"] = std::string(shortfall_name(spec.shortfall));
  return j;
}

SampleSpec sample_spec_from_json(const Json& j) {
  if (!j.is_object()) throw CurateError("sample spec must be a JSON object");
  SampleSpec spec;
  const std::string name = j.value("strategy", std::string("uniform"));
  if (name == "criterion_weighted") {
    strategy::CriterionWeighted s;
    s.criterion = criterion_from_json(j, "criterion");
    const std::string pool = j.value("pool", std::string("all"));
    if (pool == "all") s.pool = strategy::WeightPool::kAllCandidates;
    else if (pool == "top_levels") s.pool = strategy::WeightPool::kTopLevels;
    else throw CurateError("unknown pool: " + pool);
    spec.strategy = s;
  } else if (name == "fixed_level") {
    spec.strategy = strategy::FixedLevel{j.value("level", 5)};
  } else if (name == "temperature") {
    spec.strategy = strategy::Temperature{criterion_from_json(j, "criterion"), j.value("tau", 0.0)};
  } else if (name == "uniform") {
    spec.strategy = strategy::Uniform{};
  } else if (name == "perplexity") {
    const std::string order = j.value("order", std::string("lowest"));
    if (order != "lowest" && order != "highest") throw CurateError("unknown perplexity order: " + order);
    spec.strategy = strategy::Perplexity{order == "highest"};
  } else if (name == "domain_filter") {
    strategy::DomainFilter s;
    for (const auto& d : j.value("domains", Json::array())) {
      const auto t = parse_domain(d.get<std::string>());
      if (!t) throw CurateError("unknown domain: " + d.get<std::string>());
      s.domains.push_back(*t);
    }
    s.min_level = j.value("min_level", 5);
    spec.strategy = s;
  } else if (name == "merge") {
    spec.strategy = strategy::Merge{j.value("parents", std::vector<std::string>{})};
  } else {
    throw CurateError("unknown strategy: " + name);
  }
  spec.token_budget = j.value("token_budget", std::int64_t{1});
  spec.seed = j.value("seed", std::uint64_t{0});
  const auto strat = stratify_from_name(j.value("stratify", std::string("source_and_domain")));
  if (!strat) throw CurateError("unknown stratify mode: " + j.value("stratify", std::string()));
  spec.stratify = *strat;
  const auto sf = shortfall_from_name(j.value("shortfall", std::string("redistribute")));
  if (!sf) throw CurateError("unknown shortfall mode: " + j.value("shortfall", std::string()));
  spec.shortfall = *sf;
  check_spec(spec);
  return spec;
}

void check_spec(const SampleSpec& spec) {
  if (spec.token_budget < 1) throw CurateError("token budget must be at least 1");
  std::visit(Overloaded{
                 [](const strategy::FixedLevel& s) {
                   if (s.level < kMinLevel || s.level > kMaxLevel) {
                     throw CurateError("level must be in 1..5, got " + std::to_string(s.level));
                   }
                 },
                 [](const strategy::Temperature& s) {
                   if (!(s.tau >= 0.0) || !std::isfinite(s.tau)) throw CurateError("tau must be finite and >= 0");
                 },
                 [](const strategy::DomainFilter& s) {
                   if (s.domains.empty()) throw CurateError("domain_filter needs at least one domain");
                   if (s.min_level < kMinLevel || s.min_level > kMaxLevel) {
                     throw CurateError("min_level must be in 1..5, got " + std::to_string(s.min_level));
                   }
                 },
                 [](const auto&) {},
             },
             spec.strategy);
}

std::vector<std::int64_t> largest_remainder(std::int64_t total, std::span<const std::uint64_t> masses) {
  std::vector<std::int64_t> out(masses.size(), 0);
  if (masses.empty() || total <= 0) return out;
  unsigned __int128 sum = 0;
  for (auto m : masses) sum += m;
  if (sum == 0) throw CurateError("largest remainder: masses sum to zero");
  std::vector<unsigned __int128> rem(masses.size());
  std::int64_t assigned = 0;
  for (std::size_t i = 0; i < masses.size(); ++i) {
    const unsigned __int128 scaled = static_cast<unsigned __int128>(total) * masses[i];
    out[i] = static_cast<std::int64_t>(scaled / sum);
    rem[i] = scaled % sum;
    assigned += out[i];
  }
  std::vector<std::size_t> order(masses.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return rem[a] > rem[b]; });
  // Exact arithmetic leaves fewer leftover units than parts.
  for (std::int64_t left = total - assigned, k = 0; left > 0; --left, ++k) ++out[order[static_cast<std::size_t>(k)]];
  return out;
}

std::vector<std::int64_t> plan_budgets(std::int64_t token_budget, std::span<const std::uint64_t> masses,
                                       std::span<const std::uint64_t> capacities, Shortfall mode,
                                       std::vector<std::string>* warnings) {
  const std::size_t n = masses.size();
  std::vector<std::int64_t> budget = largest_remainder(token_budget, masses);
  std::vector<bool> saturated(n, false);
  while (true) {
    std::int64_t deficit = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const auto cap = static_cast<std::int64_t>(capacities[i]);
      if (budget[i] > cap) {
        if (mode == Shortfall::kError) {
          throw CurateError("stratum " + std::to_string(i) + " has " + std::to_string(cap) +
                            " candidate tokens but a budget of " + std::to_string(budget[i]) + " (shortfall=error)");
        }
        deficit += budget[i] - cap;
        budget[i] = cap;
        saturated[i] = true;
      }
    }
    if (deficit == 0) break;
    std::vector<std::size_t> open;
    std::vector<std::uint64_t> open_masses;
    for (std::size_t i = 0; i < n; ++i) {
      if (!saturated[i] && static_cast<std::int64_t>(capacities[i]) > budget[i]) {
        open.push_back(i);
        open_masses.push_back(masses[i]);
      }
    }
    if (open.empty()) {
      if (warnings) warnings->push_back("candidates exhausted: " + std::to_string(deficit) + " tokens short of budget");
      break;
    }
    if (std::accumulate(open_masses.begin(), open_masses.end(), std::uint64_t{0}) == 0) {
      for (std::size_t k = 0; k < open.size(); ++k) {
        open_masses[k] = capacities[open[k]] - static_cast<std::uint64_t>(budget[open[k]]);
      }
    }
    const auto extra = largest_remainder(deficit, open_masses);
    for (std::size_t k = 0; k < open.size(); ++k) budget[open[k]] += extra[k];
    if (warnings) warnings->push_back("redistributed " + std::to_string(deficit) + " tokens from short strata");
  }
  return budget;
}

PreparedSample::PreparedSample(std::span<const SampleUnit> corpus, const SampleSpec& spec,
                               const JointDistribution& joint)
    : corpus_(corpus), spec_(spec) {
  check_spec(spec_);
  if (std::holds_alternative<strategy::Merge>(spec_.strategy)) {
    throw CurateError("merge manifests with merge_subsets, not sample");
  }
  if (corpus.empty()) throw CurateError("empty corpus");

  const auto need_ratings = [&](const SampleUnit& u) {
    if (!u.ratings) throw CurateError("document " + u.id + " has no annotation; strategy " +
                                      std::string(strategy_name(spec_.strategy)) + " needs ratings");
  };

  // Candidate filter and base weight per unit.
  std::vector<std::pair<std::size_t, double>> picked;
  std::optional<std::vector<DomainType>> domain_restriction;
  std::visit(Overloaded{
                 [&](const strategy::CriterionWeighted& s) {
                   kind_ = KeyKind::kWeightedPower;
                   for (std::size_t i = 0; i < corpus.size(); ++i) {
                     need_ratings(corpus[i]);
                     picked.emplace_back(i, corpus[i].rating(s.criterion));
                   }
                 },
                 [&](const strategy::FixedLevel& s) {
                   kind_ = KeyKind::kUniform;
                   for (std::size_t i = 0; i < corpus.size(); ++i) {
                     need_ratings(corpus[i]);
                     if (corpus[i].rating(Criterion::kOverallScore) == s.level) picked.emplace_back(i, 1.0);
                   }
                 },
                 [&](const strategy::Temperature& s) {
                   // Population standardization from exact integer sums.
                   std::uint64_t s1 = 0, s2 = 0;
                   for (const auto& u : corpus) {
                     need_ratings(u);
                     const auto r = static_cast<std::uint64_t>(u.rating(s.criterion));
                     s1 += r;
                     s2 += r * r;
                   }
                   const auto n = static_cast<long double>(corpus.size());
                   const long double mean = static_cast<long double>(s1) / n;
                   const long double var =
                       (static_cast<long double>(s2) * n - static_cast<long double>(s1) * static_cast<long double>(s1)) /
                       (n * n);
                   if (var <= 0.0L) {
                     warnings_.push_back("criterion " + std::string(criterion_key(s.criterion)) +
                                         " has zero variance; falling back to uniform keys");
                     kind_ = KeyKind::kUniform;
                     for (std::size_t i = 0; i < corpus.size(); ++i) picked.emplace_back(i, 0.0);
                     return;
                   }
                   const long double sd = std::sqrt(var);
                   kind_ = s.tau == 0.0 ? KeyKind::kScore : KeyKind::kPerturbedScore;
                   tau_ = s.tau;
                   for (std::size_t i = 0; i < corpus.size(); ++i) {
                     const long double z = (static_cast<long double>(corpus[i].rating(s.criterion)) - mean) / sd;
                     picked.emplace_back(i, static_cast<double>(z));
                   }
                 },
                 [&](const strategy::Uniform&) {
                   kind_ = KeyKind::kUniform;
                   for (std::size_t i = 0; i < corpus.size(); ++i) picked.emplace_back(i, 1.0);
                 },
                 [&](const strategy::Perplexity& s) {
                   kind_ = s.highest ? KeyKind::kNllDescending : KeyKind::kNllAscending;
                   for (std::size_t i = 0; i < corpus.size(); ++i) {
                     if (!corpus[i].nll) throw CurateError("document " + corpus[i].id + " has no nll");
                     picked.emplace_back(i, *corpus[i].nll);
                   }
                 },
                 [&](const strategy::DomainFilter& s) {
                   kind_ = KeyKind::kUniform;
                   domain_restriction = s.domains;
                   for (std::size_t i = 0; i < corpus.size(); ++i) {
                     need_ratings(corpus[i]);
                     const auto& u = corpus[i];
                     if (std::find(s.domains.begin(), s.domains.end(), *u.domain) != s.domains.end() &&
                         u.rating(Criterion::kOverallScore) >= s.min_level) {
                       picked.emplace_back(i, 1.0);
                     }
                   }
                 },
                 [&](const strategy::Merge&) {},
             },
             spec_.strategy);
  if (picked.empty()) throw CurateError("empty candidate set for strategy " + std::string(strategy_name(spec_.strategy)));

  // Target strata from the joint distribution, projected onto the chosen
  // stratification; domain_filter only targets the requested domains.
  std::map<StratumKey, std::uint64_t> target_mass;
  for (const auto& [k, v] : joint.mass()) {
    if (domain_restriction) {
      if (!k.domain || std::find(domain_restriction->begin(), domain_restriction->end(), *k.domain) ==
                           domain_restriction->end()) {
        continue;
      }
    }
    if (spec_.stratify == Stratify::kSourceAndDomain && !k.domain) {
      throw CurateError("joint distribution has unannotated mass; source_and_domain stratification needs domains");
    }
    target_mass[project(k, spec_.stratify)] += v;
  }
  std::map<StratumKey, std::size_t> stratum_index;
  for (const auto& [k, v] : target_mass) {
    stratum_index.emplace(k, plans_.size());
    StratumPlan p;
    p.key = k;
    plans_.push_back(std::move(p));
  }
  std::uint64_t target_total = 0;
  for (const auto& [k, v] : target_mass) target_total += v;
  if (target_total == 0) throw CurateError("joint distribution has no mass for the requested strata");
  for (const auto& [k, v] : target_mass) {
    plans_[stratum_index[k]].target_mass = v;
    plans_[stratum_index[k]].probability = static_cast<double>(v) / static_cast<double>(target_total);
  }

  candidates_.reserve(picked.size());
  for (const auto& [unit, weight] : picked) {
    const StratumKey key = stratum_of(corpus[unit], spec_.stratify);
    const auto it = stratum_index.find(key);
    if (it == stratum_index.end()) {
      throw CurateError("document " + corpus[unit].id + " falls in stratum " + key.label() +
                        " which the joint distribution does not contain");
    }
    Candidate c;
    c.unit = unit;
    c.stratum = it->second;
    c.doc_tag = Prf::tag(corpus[unit].id);
    c.weight = weight;
    candidates_.push_back(c);
    plans_[c.stratum].candidate_tokens += static_cast<std::uint64_t>(corpus[unit].token_count);
    ++plans_[c.stratum].candidate_count;
  }

  std::vector<std::uint64_t> shares;
  std::vector<std::uint64_t> caps;
  for (const auto& p : plans_) {
    shares.push_back(p.target_mass);
    caps.push_back(p.candidate_tokens);
  }
  if (spec_.shortfall == Shortfall::kError) {
    const auto initial = largest_remainder(spec_.token_budget, shares);
    for (std::size_t i = 0; i < plans_.size(); ++i) {
      if (static_cast<std::int64_t>(caps[i]) < initial[i]) {
        throw CurateError("stratum " + plans_[i].key.label() + " has " + std::to_string(caps[i]) +
                          " candidate tokens, short of its budget " + std::to_string(initial[i]) +
                          " (shortfall=error)");
      }
    }
  }
  const auto budgets = plan_budgets(spec_.token_budget, shares, caps, spec_.shortfall, &warnings_);
  for (std::size_t i = 0; i < plans_.size(); ++i) plans_[i].budget = budgets[i];

  by_stratum_.assign(plans_.size(), {});
  for (std::size_t c = 0; c < candidates_.size(); ++c) by_stratum_[candidates_[c].stratum].push_back(c);
  stratum_tags_.resize(plans_.size(), 0);
  if (kind_ == KeyKind::kWeightedPower) {
    for (std::size_t s = 0; s < plans_.size(); ++s) stratum_tags_[s] = Prf::tag(plans_[s].key.label());
  }

  // Optional restriction of weighted sampling to the top rating levels that
  // cover each stratum's budget.
  if (const auto* cw = std::get_if<strategy::CriterionWeighted>(&spec_.strategy);
      cw != nullptr && cw->pool == strategy::WeightPool::kTopLevels) {
    for (std::size_t s = 0; s < plans_.size(); ++s) {
      auto& members = by_stratum_[s];
      std::array<std::uint64_t, kMaxLevel + 1> level_tokens{};
      for (std::size_t c : members) {
        level_tokens[static_cast<std::size_t>(candidates_[c].weight)] +=
            static_cast<std::uint64_t>(corpus_[candidates_[c].unit].token_count);
      }
      int floor_level = kMinLevel;
      std::uint64_t covered = 0;
      for (int l = kMaxLevel; l >= kMinLevel; --l) {
        covered += level_tokens[static_cast<std::size_t>(l)];
        if (static_cast<std::int64_t>(covered) >= plans_[s].budget) {
          floor_level = l;
          break;
        }
      }
      std::erase_if(members, [&](std::size_t c) { return candidates_[c].weight < floor_level; });
    }
  }
}

double PreparedSample::key(std::size_t candidate, std::uint64_t seed) const {
  const Candidate& c = candidates_[candidate];
  switch (kind_) {
    case KeyKind::kWeightedPower: {
      const double u = Prf::uniform(seed, stratum_tags_[c.stratum], c.doc_tag);
      return std::pow(u, 1.0 / c.weight);
    }
    case KeyKind::kUniform: return Prf::uniform(seed, 0, c.doc_tag);
    case KeyKind::kScore: return c.weight;
    case KeyKind::kPerturbedScore: {
      const double u = Prf::uniform(seed, 0, c.doc_tag);
      return c.weight / tau_ - std::log(-std::log(u));
    }
    case KeyKind::kNllAscending: return -c.weight;
    case KeyKind::kNllDescending: return c.weight;
  }
  return 0.0;
}

void PreparedSample::select(std::uint64_t seed, std::vector<std::size_t>& out, unsigned workers) const {
  out.clear();
  std::vector<double> keys(candidates_.size());
  parallel_ranges(candidates_.size(), workers, [&](std::size_t b, std::size_t e) {
    for (std::size_t i = b; i < e; ++i) keys[i] = key(i, seed);
  });

  std::vector<std::vector<std::size_t>> order(by_stratum_.size());
  parallel_ranges(by_stratum_.size(), workers, [&](std::size_t b, std::size_t e) {
    for (std::size_t s = b; s < e; ++s) {
      order[s] = by_stratum_[s];
      std::sort(order[s].begin(), order[s].end(), [&](std::size_t x, std::size_t y) {
        if (keys[x] != keys[y]) return keys[x] > keys[y];
        return corpus_[candidates_[x].unit].id < corpus_[candidates_[y].unit].id;
      });
    }
  });

  // Strata fill in order; each stratum's overshoot past its budget is
  // charged to the next, which keeps the total within one document of the
  // overall budget.
  std::int64_t carry = 0;
  for (std::size_t s = 0; s < order.size(); ++s) {
    const std::int64_t target = plans_[s].budget - carry;
    std::int64_t taken = 0;
    for (std::size_t c : order[s]) {
      if (taken >= target) break;
      out.push_back(candidates_[c].unit);
      taken += corpus_[candidates_[c].unit].token_count;
    }
    carry += taken - plans_[s].budget;
  }
}

SubsetManifest PreparedSample::run(std::uint64_t seed, unsigned workers) const {
  std::vector<std::size_t> chosen;
  select(seed, chosen, workers);
  std::unordered_map<std::size_t, std::size_t> cand_of_unit;
  cand_of_unit.reserve(candidates_.size());
  for (std::size_t c = 0; c < candidates_.size(); ++c) cand_of_unit.emplace(candidates_[c].unit, c);

  SubsetManifest m;
  m.spec = spec_;
  m.spec.seed = seed;
  m.seed = seed;
  m.prf = std::string(Prf::kName);
  m.strata = plans_;
  m.warnings = warnings_;
  m.rows.reserve(chosen.size());
  for (std::size_t unit : chosen) {
    const SampleUnit& u = corpus_[unit];
    const std::size_t c = cand_of_unit.at(unit);
    ManifestRow r;
    r.doc_id = u.id;
    r.source = u.source;
    r.domain = u.domain;
    if (u.ratings) r.overall_score = u.rating(Criterion::kOverallScore);
    r.token_count = u.token_count;
    r.weight = candidates_[c].weight;
    r.key = key(c, seed);
    m.total_tokens += u.token_count;
    m.rows.push_back(std::move(r));
  }
  std::sort(m.rows.begin(), m.rows.end(), [](const ManifestRow& a, const ManifestRow& b) { return a.doc_id < b.doc_id; });
  m.digest = manifest_digest(m);
  return m;
}

SubsetManifest sample(std::span<const SampleUnit> corpus, const SampleSpec& spec, const JointDistribution& joint,
                      const SampleOptions& options) {
  PreparedSample prepared(corpus, spec, joint);
  return prepared.run(spec.seed, options.workers);
}

std::int64_t SubsetManifest::max_row_tokens() const noexcept {
  std::int64_t m = 0;
  for (const auto& r : rows) m = std::max(m, r.token_count);
  return m;
}

std::vector<std::string> SubsetManifest::doc_ids() const {
  std::vector<std::string> out;
  out.reserve(rows.size());
  for (const auto& r : rows) out.push_back(r.doc_id);
  return out;
}

OrderedJson to_json(const ManifestRow& row) {
  OrderedJson j;
  j["doc_id"] = row.doc_id;
  j["source"] = row.source;
  j["domain"] = row.domain ? OrderedJson(domain_key(*row.domain)) : OrderedJson(nullptr);
  j["overall_score"] = row.overall_score ? OrderedJson(*row.overall_score) : OrderedJson(nullptr);
  j["token_count"] = row.token_count;
  j["weight"] = row.weight;
  j["key"] = row.key;
  return j;
}

std::string manifest_digest(const SubsetManifest& m) {
  Sha256 h;
  OrderedJson head;
  head["spec"] = to_json(m.spec);
  head["seed"] = m.seed;
  head["prf"] = m.prf;
  h.update(head.dump());
  h.update("\n");
  for (const auto& r : m.rows) {
    h.update(to_json(r).dump());
    h.update("\n");
  }
  return h.hex_digest();
}

SubsetManifest merge_subsets(std::span<const SubsetManifest> manifests, std::int64_t token_budget,
                             std::uint64_t seed, Shortfall shortfall) {
  if (token_budget < 1) throw CurateError("token budget must be at least 1");
  std::vector<ManifestRow> pool;
  std::unordered_set<std::string> seen;
  strategy::Merge merge;
  for (const auto& m : manifests) {
    merge.parent_digests.push_back(m.digest);
    for (const auto& r : m.rows) {
      if (seen.insert(r.doc_id).second) pool.push_back(r);
    }
  }
  if (pool.empty()) throw CurateError("merge: union of manifests is empty");

  SubsetManifest out;
  out.spec.strategy = merge;
  out.spec.token_budget = token_budget;
  out.spec.seed = seed;
  out.spec.stratify = Stratify::kNone;
  out.spec.shortfall = shortfall;
  out.seed = seed;
  out.prf = std::string(Prf::kName);

  std::int64_t union_tokens = 0;
  for (auto& r : pool) {
    r.weight = 1.0;
    r.key = Prf::uniform(seed, 0, Prf::tag(r.doc_id));
    union_tokens += r.token_count;
  }
  if (union_tokens < token_budget) {
    if (shortfall == Shortfall::kError) {
      throw CurateError("merge: union has " + std::to_string(union_tokens) + " tokens, below budget " +
                        std::to_string(token_budget));
    }
    out.warnings.push_back("union below budget; keeping every document");
  }
  std::sort(pool.begin(), pool.end(), [](const ManifestRow& a, const ManifestRow& b) {
    if (a.key != b.key) return a.key > b.key;
    return a.doc_id < b.doc_id;
  });
  for (auto& r : pool) {
    if (out.total_tokens >= token_budget) break;
    out.total_tokens += r.token_count;
    out.rows.push_back(std::move(r));
  }
  std::sort(out.rows.begin(), out.rows.end(),
            [](const ManifestRow& a, const ManifestRow& b) { return a.doc_id < b.doc_id; });
  StratumPlan all;
  all.probability = 1.0;
  all.target_mass = static_cast<std::uint64_t>(union_tokens);
  all.candidate_tokens = static_cast<std::uint64_t>(union_tokens);
  all.candidate_count = seen.size();
  all.budget = std::min(token_budget, union_tokens);
  out.strata.push_back(all);
  out.digest = manifest_digest(out);
  return out;
}

OrderedJson manifest_header_json(const SubsetManifest& m) {
  OrderedJson j;
  j["spec"] = to_json(m.spec);
  j["seed"] = m.seed;
  j["prf"] = m.prf;
  j["total_tokens"] = m.total_tokens;
  j["rows"] = m.rows.size();
  j["digest"] = m.digest;
  if (const auto* merge = std::get_if<strategy::Merge>(&m.spec.strategy)) j["parents"] = merge->parent_digests;
  OrderedJson strata = OrderedJson::array();
  for (const auto& p : m.strata) {
    strata.push_back({{"stratum", p.key.label()},
                      {"target_mass", p.target_mass},
                      {"probability", p.probability},
                      {"candidate_tokens", p.candidate_tokens},
                      {"candidates", p.candidate_count},
                      {"budget", p.budget}});
  }
  j["strata"] = std::move(strata);
  j["warnings"] = m.warnings;
  return j;
}

void write_manifest(const std::string& path, const SubsetManifest& m, const OrderedJson& extra) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw CurateError("cannot write manifest: " + path);
  OrderedJson head = manifest_header_json(m);
  for (const auto& [k, v] : extra.items()) head[k] = v;
  out << head.dump() << '\n';
  for (const auto& r : m.rows) out << to_json(r).dump() << '\n';
  if (!out) throw CurateError("write failed: " + path);
}

SubsetManifest read_manifest(const std::string& path) {
  LineReader reader(path);
  std::string line;
  if (!reader.next(line)) throw CurateError("empty manifest: " + path);
  const Json head = Json::parse(line, nullptr, false);
  if (head.is_discarded() || !head.is_object() || !head.contains("spec")) {
    throw CurateError("manifest header is malformed: " + path);
  }
  SubsetManifest m;
  m.spec = sample_spec_from_json(head["spec"]);
  m.seed = head.value("seed", std::uint64_t{0});
  m.prf = head.value("prf", std::string());
  m.digest = head.value("digest", std::string());
  m.warnings = head.value("warnings", std::vector<std::string>{});
  while (reader.next(line)) {
    if (is_blank(line)) continue;
    const Json j = Json::parse(line, nullptr, false);
    if (j.is_discarded()) throw CurateError(path + ":" + std::to_string(reader.line_number()) + ": invalid JSON");
    ManifestRow r;
    r.doc_id = j.at("doc_id").get<std::string>();
    r.source = j.value("source", std::string());
    if (j.contains("domain") && j["domain"].is_string()) r.domain = parse_domain(j["domain"].get<std::string>());
    if (j.contains("overall_score") && j["overall_score"].is_number_integer()) r.overall_score = j["overall_score"].get<int>();
    r.token_count = j.at("token_count").get<std::int64_t>();
    r.weight = j.value("weight", 0.0);
    r.key = j.value("key", 0.0);
    m.total_tokens += r.token_count;
    m.rows.push_back(std::move(r));
  }
  if (manifest_digest(m) != m.digest) throw CurateError("manifest digest mismatch: " + path);
  return m;
}

}  // namespace curate
