#include <algorithm>
#include <filesystem>
#include <iostream>
#include <memory>

#include "cli_common.hpp"
#include "curate/error.hpp"

namespace curate::cli {

namespace fs = std::filesystem;

namespace {

struct SampleArgs {
  std::string documents;
  std::string annotations;
  std::string strategy;
  std::string criterion = "overall_score";
  int level = 5;
  double tau = 0.0;
  std::string order = "lowest";
  std::vector<std::string> domains;
  int min_level = 5;
  std::string pool = "all";
  std::int64_t budget_tokens = 0;
  std::uint64_t seed = 0;
  std::string stratify;
  std::string shortfall = "redistribute";
  std::vector<std::string> merge;
  std::string out = "manifest.jsonl";
};

std::string underscored(std::string s) {
  std::replace(s.begin(), s.end(), '-', '_');
  return s;
}

// Stratification used when --stratify is not given.
std::string default_stratify(const std::string& strategy) {
  if (strategy == "criterion_weighted") return "source_and_domain";
  if (strategy == "domain_filter") return "none";
  return "source_only";
}

SampleSpec resolve_spec(const SampleArgs& a) {
  const std::string name = underscored(a.strategy);
  Json j;
  j["strategy"] = name;
  if (name == "criterion_weighted" || name == "temperature") j["criterion"] = underscored(a.criterion);
  if (name == "criterion_weighted") j["pool"] = underscored(a.pool);
  if (name == "fixed_level") j["level"] = a.level;
  if (name == "temperature") j["tau"] = a.tau;
  if (name == "perplexity") j["order"] = a.order;
  if (name == "domain_filter") {
    j["domains"] = a.domains;
    j["min_level"] = a.min_level;
  }
  j["token_budget"] = a.budget_tokens;
  j["seed"] = a.seed;
  j["stratify"] = underscored(a.stratify.empty() ? default_stratify(name) : a.stratify);
  j["shortfall"] = a.shortfall;
  try {
    return sample_spec_from_json(j);
  } catch (const CurateError& e) {
    throw UsageError(e.what());
  }
}

void run_sample(const SampleArgs& a, const GlobalOptions& global) {
  if (a.budget_tokens < 1) throw UsageError("--budget-tokens must be at least 1");
  const auto shortfall = shortfall_from_name(a.shortfall);
  if (!shortfall) throw UsageError("--shortfall must be error or redistribute");
  Provenance prov;
  prov.command = "sample";
  prov.seed = a.seed;

  if (!a.merge.empty()) {
    if (!a.strategy.empty()) throw UsageError("--merge cannot be combined with --strategy");
    OrderedJson config{{"merge", a.merge}, {"token_budget", a.budget_tokens}, {"seed", a.seed},
                       {"shortfall", a.shortfall}, {"out", a.out}};
    if (global.dry_run) {
      std::cout << OrderedJson{{"command", "sample"}, {"config", config}}.dump(2) << '\n';
      return;
    }
    std::vector<SubsetManifest> parents;
    for (const auto& p : a.merge) {
      parents.push_back(read_manifest(p));
      prov.add_input(p);
    }
    const SubsetManifest m = merge_subsets(parents, a.budget_tokens, a.seed, *shortfall);
    prov.spec = to_json(m.spec);
    for (const auto& w : m.warnings) diag("warn", "sample_warning", {{"message", w}});
    write_manifest(a.out, m, {{"provenance", prov.to_json()}});
    diag("info", "sample_done", {{"rows", m.rows.size()}, {"tokens", m.total_tokens}, {"out", a.out}});
    std::cout << m.digest << '\n';
    return;
  }

  if (a.strategy.empty()) throw UsageError("--strategy is required unless --merge is given");
  if (a.documents.empty()) throw UsageError("--documents is required");
  const SampleSpec spec = resolve_spec(a);
  const bool needs_ratings = !std::holds_alternative<strategy::Uniform>(spec.strategy) &&
                             !std::holds_alternative<strategy::Perplexity>(spec.strategy);
  if ((needs_ratings || spec.stratify == Stratify::kSourceAndDomain) && a.annotations.empty()) {
    throw UsageError("--annotations is required for strategy " + std::string(strategy_name(spec.strategy)) +
                     " with stratify " + std::string(stratify_name(spec.stratify)));
  }
  prov.spec = to_json(spec);

  const LoadedCorpus corpus = load_corpus(a.documents, a.annotations, /*keep_text=*/false);
  std::vector<SampleUnit> units;
  if (corpus.has_annotations) {
    units = make_units(corpus.annotated);
  } else {
    units.reserve(corpus.documents.size());
    for (const auto& d : corpus.documents) units.push_back(make_unit(d, nullptr));
  }
  const JointDistribution joint = estimate_joint(units);
  const PreparedSample prepared(units, spec, joint);
  for (const auto& w : prepared.warnings()) diag("warn", "sample_warning", {{"message", w}});

  if (global.dry_run) {
    OrderedJson plan = OrderedJson::array();
    for (const auto& p : prepared.strata()) {
      plan.push_back({{"stratum", p.key.label()}, {"probability", p.probability}, {"candidates", p.candidate_count},
                      {"candidate_tokens", p.candidate_tokens}, {"budget", p.budget}});
    }
    std::cout << OrderedJson{{"command", "sample"}, {"spec", to_json(spec)}, {"workers", global.workers},
                             {"documents", units.size()}, {"strata", std::move(plan)}}
                     .dump(2)
              << '\n';
    return;
  }

  const SubsetManifest m = prepared.run(spec.seed, global.workers);
  prov.add_input(a.documents);
  if (!a.annotations.empty()) prov.add_input(a.annotations);
  if (const auto parent = fs::path(a.out).parent_path(); !parent.empty()) ensure_dir(parent.string());
  write_manifest(a.out, m, {{"provenance", prov.to_json()}});
  diag("info", "sample_done", {{"rows", m.rows.size()}, {"tokens", m.total_tokens}, {"out", a.out}});
  std::cout << m.digest << '\n';
}

}  // namespace

void add_sample(CLI::App& app, GlobalOptions& global) {
  auto args = std::make_shared<SampleArgs>();
  CLI::App* cmd = app.add_subcommand("sample", "Select a token-budgeted subset and write its manifest");
  cmd->add_option("--documents", args->documents, "Document store directory or documents.jsonl");
  cmd->add_option("--annotations", args->annotations, "annotations.jsonl");
  cmd->add_option("--strategy", args->strategy,
                  "criterion-weighted, fixed-level, temperature, uniform, perplexity or domain-filter");
  cmd->add_option("--criterion", args->criterion, "Rating criterion")->capture_default_str();
  cmd->add_option("--level", args->level, "Overall score for fixed-level")->capture_default_str();
  cmd->add_option("--tau", args->tau, "Temperature; 0 selects the top standardized scores")->capture_default_str();
  cmd->add_option("--order", args->order, "Perplexity order: lowest or highest")
      ->check(CLI::IsMember({"lowest", "highest"}))
      ->capture_default_str();
  cmd->add_option("--domains", args->domains, "Domains for domain-filter (letters or names)");
  cmd->add_option("--min-level", args->min_level, "Minimum overall score for domain-filter")->capture_default_str();
  cmd->add_option("--pool", args->pool, "criterion-weighted pool: all or top-levels")->capture_default_str();
  cmd->add_option("--budget-tokens", args->budget_tokens, "Token budget")->required();
  cmd->add_option("--seed", args->seed, "Seed")->capture_default_str();
  cmd->add_option("--stratify", args->stratify, "source-and-domain, source-only or none");
  cmd->add_option("--shortfall", args->shortfall, "error or redistribute")->capture_default_str();
  cmd->add_option("--merge", args->merge, "Manifests to union and subsample back to the budget");
  cmd->add_option("--out", args->out, "Manifest path")->capture_default_str();
  cmd->callback([args, &global] { run_sample(*args, global); });
}

}  // namespace curate::cli
