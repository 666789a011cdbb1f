#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>

#include "cli_common.hpp"
#include "curate/error.hpp"
#include "curate/finetune_curator.hpp"

namespace curate::cli {

namespace fs = std::filesystem;

namespace {

struct FinetuneArgs {
  std::string documents;
  std::string annotations;
  int threshold = 3;
  int fold = 4;
  std::vector<std::string> source_folds;
  std::vector<double> fractions{0.8, 0.1, 0.1};
  std::vector<std::string> stratify_by{"overall_score"};
  std::uint64_t seed = 0;
  std::string out;
};

void write_split(const std::string& dir, const std::vector<AnnotatedDocument>& docs) {
  ensure_dir(dir);
  std::ofstream d(fs::path(dir) / "documents.jsonl", std::ios::binary | std::ios::trunc);
  std::ofstream a(fs::path(dir) / "annotations.jsonl", std::ios::binary | std::ios::trunc);
  if (!d || !a) throw CurateError("cannot write split in " + dir);
  for (const auto& x : docs) {
    d << to_json(x.doc).dump() << '\n';
    a << to_json(x.annotation).dump() << '\n';
  }
  if (!d || !a) throw CurateError("write failed in " + dir);
}

void run_finetune(const FinetuneArgs& a, const GlobalOptions& global) {
  BalancePolicy policy;
  policy.low_threshold = a.threshold;
  policy.fold = a.fold;
  for (const auto& entry : a.source_folds) {
    const auto eq = entry.rfind('=');
    if (eq == std::string::npos || eq == 0) throw UsageError("--source-fold expects source=fold, got " + entry);
    try {
      policy.source_folds[entry.substr(0, eq)] = std::stoi(entry.substr(eq + 1));
    } catch (const std::exception&) {
      throw UsageError("--source-fold expects an integer fold, got " + entry);
    }
  }
  SplitSpec split_spec;
  if (a.fractions.size() != 3) throw UsageError("--fractions expects three values (train val test)");
  std::copy(a.fractions.begin(), a.fractions.end(), split_spec.fractions.begin());
  split_spec.by_overall_score = false;
  for (const auto& s : a.stratify_by) {
    if (s == "overall_score") split_spec.by_overall_score = true;
    else if (s == "domain") split_spec.by_domain = true;
    else if (s == "source") split_spec.by_source = true;
    else throw UsageError("--stratify-by accepts overall_score, domain, source; got " + s);
  }
  split_spec.seed = a.seed;
  try {
    check_policy(policy);
    check_split_spec(split_spec);
  } catch (const CurateError& e) {
    throw UsageError(e.what());
  }

  OrderedJson config;
  config["low_threshold"] = policy.low_threshold;
  config["fold"] = policy.fold;
  config["source_folds"] = policy.source_folds;
  config["fractions"] = split_spec.fractions;
  config["stratify_by"] = a.stratify_by;
  config["seed"] = a.seed;
  config["upsampled_splits"] = {"train"};
  if (global.dry_run) {
    std::cout << OrderedJson{{"command", "finetune"}, {"config", config}}.dump(2) << '\n';
    return;
  }

  const LoadedCorpus corpus = load_corpus(a.documents, a.annotations, /*keep_text=*/true);
  SplitResult parts = split(corpus.annotated, split_spec);
  // Replicas stay inside the training split so no document leaks across splits.
  parts.train = upsample_low(parts.train, policy, a.seed);

  ensure_dir(a.out);
  write_split((fs::path(a.out) / "train").string(), parts.train);
  write_split((fs::path(a.out) / "val").string(), parts.val);
  write_split((fs::path(a.out) / "test").string(), parts.test);

  Provenance prov;
  prov.command = "finetune";
  prov.seed = a.seed;
  prov.spec = config;
  prov.add_input(a.documents);
  prov.add_input(a.annotations);
  OrderedJson payload;
  payload["input_documents"] = corpus.annotated.size();
  payload["splits"] = {{"train", parts.train.size()}, {"val", parts.val.size()}, {"test", parts.test.size()}};
  payload["train_report"] = curation_report(parts.train).to_json();
  write_json_file((fs::path(a.out) / "finetune.json").string(), wrap_artifact(prov, payload));
  diag("info", "finetune_done", {{"train", parts.train.size()}, {"val", parts.val.size()},
                                  {"test", parts.test.size()}, {"out", a.out}});
}

}  // namespace

void add_finetune(CLI::App& app, GlobalOptions& global) {
  auto args = std::make_shared<FinetuneArgs>();
  CLI::App* cmd = app.add_subcommand("finetune", "Build a balanced rater fine-tuning dataset");
  cmd->add_option("--documents", args->documents, "Document store directory or documents.jsonl")->required();
  cmd->add_option("--annotations", args->annotations, "annotations.jsonl")->required();
  cmd->add_option("--threshold", args->threshold, "Overall scores below this are low")->capture_default_str();
  cmd->add_option("--fold", args->fold, "Total copies of each low document")->capture_default_str();
  cmd->add_option("--source-fold", args->source_folds, "Per-source fold override, source=fold");
  cmd->add_option("--fractions", args->fractions, "train val test fractions")->expected(3)->capture_default_str();
  cmd->add_option("--stratify-by", args->stratify_by, "overall_score, domain and/or source")->capture_default_str();
  cmd->add_option("--seed", args->seed, "Seed")->capture_default_str();
  cmd->add_option("--out", args->out, "Output directory")->required();
  cmd->callback([args, &global] { run_finetune(*args, global); });
}

}  // namespace curate::cli
