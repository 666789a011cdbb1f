#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>

#include "cli_common.hpp"
#include "curate/error.hpp"
#include "curate/rater_gateway.hpp"

namespace curate::cli {

namespace fs = std::filesystem;

namespace {

struct AnnotateArgs {
  std::string documents;
  std::string endpoint;
  std::string import_path;
  bool mock = false;
  std::string mode = "all_rating";
  int max_in_flight = 4;
  int max_retries = 3;
  int timeout_ms = 30000;
  int backoff_ms = 200;
  double temperature = 0.0;
  std::size_t batch = 1024;
  std::string out;
};

AnnotationRecord narrow(const AnnotationRecord& full, PromptMode mode) {
  if (mode == PromptMode::kAllRating) return full;
  AnnotationRecord r;
  r.doc_id = full.doc_id;
  if (mode == PromptMode::kScoreOnly) r.set(Criterion::kOverallScore, full.level(Criterion::kOverallScore));
  if (mode == PromptMode::kDomainOnly) r.domain = full.domain;
  return r;
}

void run_annotate(const AnnotateArgs& a, const GlobalOptions& global) {
  const int sources = int(!a.endpoint.empty()) + int(!a.import_path.empty()) + int(a.mock);
  if (sources != 1) throw UsageError("give exactly one of --endpoint, --import, --mock");
  if (a.import_path.empty() && a.documents.empty()) throw UsageError("--documents is required with --endpoint or --mock");
  const auto mode = prompt_mode_from_name(a.mode);
  if (!mode || *mode == PromptMode::kFull) throw UsageError("--mode must be all_rating, score_only or domain_only");

  RaterEndpoint endpoint;
  endpoint.base_url = a.endpoint;
  endpoint.mode = *mode;
  endpoint.max_in_flight = a.max_in_flight;
  endpoint.max_retries = a.max_retries;
  endpoint.timeout = std::chrono::milliseconds(a.timeout_ms);
  endpoint.backoff = std::chrono::milliseconds(a.backoff_ms);
  endpoint.temperature = a.temperature;
  if (!a.endpoint.empty()) {
    try {
      check_endpoint(endpoint);
    } catch (const CurateError& e) {
      throw UsageError(e.what());
    }
  }

  OrderedJson config;
  config["documents"] = a.documents;
  config["rater"] = a.mock ? "mock" : !a.endpoint.empty() ? "endpoint" : "import";
  if (!a.endpoint.empty()) {
    config["endpoint"] = a.endpoint;
    config["max_in_flight"] = a.max_in_flight;
    config["max_retries"] = a.max_retries;
    config["timeout_ms"] = a.timeout_ms;
    config["temperature"] = a.temperature;
  }
  if (!a.import_path.empty()) config["import"] = a.import_path;
  config["mode"] = prompt_mode_name(*mode);
  config["out"] = a.out;
  if (global.dry_run) {
    std::cout << OrderedJson{{"command", "annotate"}, {"config", config}}.dump(2) << '\n';
    return;
  }

  ensure_dir(a.out);
  std::ofstream ann(fs::path(a.out) / "annotations.jsonl", std::ios::binary | std::ios::trunc);
  std::ofstream fail(fs::path(a.out) / "failures.jsonl", std::ios::binary | std::ios::trunc);
  if (!ann || !fail) throw CurateError("cannot write outputs in " + a.out);

  Provenance prov;
  prov.command = "annotate";
  prov.spec = config;
  std::uint64_t records = 0;
  std::map<std::string, std::uint64_t> failures;
  std::uint64_t requests = 0;

  if (a.mock) {
    report_read(a.documents, read_documents(a.documents, [&](Document&& d) {
      ann << to_json(narrow(mock_rate(d), *mode)).dump() << '\n';
      ++records;
    }));
    prov.add_input(a.documents);
  } else if (!a.endpoint.empty()) {
    std::vector<Document> batch;
    const auto flush = [&] {
      std::vector<AnnotationOutcome> outcomes;
      rate_batch(batch, endpoint, [&](AnnotationOutcome&& o) { outcomes.push_back(std::move(o)); });
      std::sort(outcomes.begin(), outcomes.end(),
                [](const AnnotationOutcome& x, const AnnotationOutcome& y) { return x.doc_id < y.doc_id; });
      for (const auto& o : outcomes) {
        requests += static_cast<std::uint64_t>(o.attempts);
        if (o.ok()) {
          ann << to_json(o.record()).dump() << '\n';
          ++records;
        } else {
          fail << to_json(o).dump() << '\n';
          ++failures[std::string(failure_kind_name(o.failure().kind))];
        }
      }
      batch.clear();
    };
    report_read(a.documents, read_documents(a.documents, [&](Document&& d) {
      batch.push_back(std::move(d));
      if (batch.size() >= a.batch) flush();
    }));
    if (!batch.empty()) flush();
    prov.add_input(a.documents);
  } else {
    const ReadSummary summary = import_annotations(a.import_path, [&](AnnotationRecord&& r) {
      ann << to_json(narrow(r, *mode)).dump() << '\n';
      ++records;
    });
    report_read(a.import_path, summary);
    for (const auto& d : summary.diagnostics) {
      fail << OrderedJson{{"line", d.line}, {"kind", "validation"}, {"detail", d.message}}.dump() << '\n';
      ++failures["validation"];
    }
    prov.add_input(a.import_path);
  }
  ann.close();
  fail.close();
  if (!ann || !fail) throw CurateError("write failed in " + a.out);

  OrderedJson payload;
  payload["records"] = records;
  std::uint64_t failed = 0;
  OrderedJson by_kind = OrderedJson::object();
  for (const auto& [k, v] : failures) {
    by_kind[k] = v;
    failed += v;
  }
  payload["failures"] = failed;
  payload["failures_by_kind"] = std::move(by_kind);
  if (!a.endpoint.empty()) payload["requests"] = requests;
  write_json_file((fs::path(a.out) / "annotate.json").string(), wrap_artifact(prov, payload));
  diag("info", "annotate_done", {{"records", records}, {"failures", failed}, {"out", a.out}});
}

}  // namespace

void add_annotate(CLI::App& app, GlobalOptions& global) {
  auto args = std::make_shared<AnnotateArgs>();
  CLI::App* cmd = app.add_subcommand("annotate", "Rate documents with a remote rater, an import file, or the mock rater");
  cmd->add_option("--documents", args->documents, "Document store directory or documents.jsonl");
  cmd->add_option("--endpoint", args->endpoint, "Rater service base URL");
  cmd->add_option("--import", args->import_path, "Existing annotations.jsonl to validate and copy");
  cmd->add_flag("--mock", args->mock, "Use the deterministic offline rater");
  cmd->add_option("--mode", args->mode, "all_rating, score_only or domain_only")->capture_default_str();
  cmd->add_option("--max-in-flight", args->max_in_flight, "Concurrent requests")->capture_default_str();
  cmd->add_option("--max-retries", args->max_retries, "Retries per document on transient errors")->capture_default_str();
  cmd->add_option("--timeout-ms", args->timeout_ms, "Per-request timeout")->capture_default_str();
  cmd->add_option("--backoff-ms", args->backoff_ms, "First retry delay; doubles per retry")->capture_default_str();
  cmd->add_option("--temperature", args->temperature, "Forwarded to the rater")->capture_default_str();
  cmd->add_option("--batch", args->batch, "Documents held in memory per request window")->capture_default_str();
  cmd->add_option("--out", args->out, "Output directory")->required();
  cmd->callback([args, &global] { run_annotate(*args, global); });
}

}  // namespace curate::cli
