#include <filesystem>
#include <iostream>
#include <memory>
#include <unordered_map>
#include <unordered_set>

#include "cli_common.hpp"
#include "curate/analytics.hpp"
#include "curate/anomaly_miner.hpp"
#include "curate/error.hpp"
#include "curate/finetune_curator.hpp"

namespace curate::cli {

namespace fs = std::filesystem;

namespace {

struct ReportArgs {
  std::string report;
  std::string documents;
  std::string annotations;
  std::string manifest;
  std::string gold;
  std::string pred;
  std::string criterion = "overall_score";
  double fraction = 0.02;
  std::string group_by = "source";
  std::string prompts_dir;
  std::string format = "json";
  std::string out;
};

void emit(const ReportArgs& a, const std::string& text) {
  if (a.out.empty()) {
    std::cout << text;
    return;
  }
  if (const auto parent = fs::path(a.out).parent_path(); !parent.empty()) ensure_dir(parent.string());
  write_text_file(a.out, text);
  diag("info", "report_written", {{"report", a.report}, {"out", a.out}});
}

std::vector<AnnotatedDocument> restrict_to_manifest(std::vector<AnnotatedDocument> docs, const std::string& manifest) {
  if (manifest.empty()) return docs;
  const SubsetManifest m = read_manifest(manifest);
  const auto ids = m.doc_ids();
  const std::unordered_set<std::string> keep(ids.begin(), ids.end());
  std::erase_if(docs, [&](const AnnotatedDocument& d) { return !keep.count(d.doc.id); });
  return docs;
}

std::string emit_accuracy(const ReportArgs& a, Provenance& prov, OrderedJson& payload) {
  if (a.gold.empty() || a.pred.empty()) throw UsageError("--report accuracy needs --gold and --pred");
  const auto criterion = criterion_from_key(a.criterion);
  if (!criterion) throw UsageError("unknown criterion: " + a.criterion);
  std::unordered_map<std::string, int> gold;
  for (const auto& r : load_annotations(a.gold)) gold[r.doc_id] = r.level(*criterion);
  std::vector<int> g, p;
  std::vector<std::string> ids;
  std::uint64_t unmatched = 0;
  for (const auto& r : load_annotations(a.pred)) {
    const auto it = gold.find(r.doc_id);
    if (it == gold.end()) {
      ++unmatched;
      continue;
    }
    ids.push_back(r.doc_id);
    g.push_back(it->second);
    p.push_back(r.level(*criterion));
  }
  if (unmatched > 0) diag("warn", "unmatched_predictions", {{"count", unmatched}});
  if (g.empty()) throw CurateError("no document has both a gold and a predicted rating");
  const AccuracyReport report = accuracy_report(g, p);
  prov.add_input(a.gold);
  prov.add_input(a.pred);
  payload = report.to_json();
  payload["criterion"] = criterion_key(*criterion);
  payload["exact_agreement"] = exact_agreement(g, p);
  payload["within_one_agreement"] = within_one_agreement(g, p);
  try {
    payload["cohen_kappa"] = cohen_kappa(g, p);
  } catch (const CurateError&) {
    payload["cohen_kappa"] = nullptr;
  }
  if (a.format == "csv") {
    std::string csv = "gold_level,pred_1,pred_2,pred_3,pred_4,pred_5\n";
    for (std::size_t i = 0; i < 5; ++i) {
      csv += std::to_string(i + 1);
      for (auto v : report.confusion[i]) csv += "," + std::to_string(v);
      csv += "\n";
    }
    return csv;
  }
  return {};
}

void run_report(const ReportArgs& a, const GlobalOptions& global) {
  Provenance prov;
  prov.command = "report";
  prov.spec = {{"report", a.report}, {"format", a.format}};
  if (global.dry_run) {
    OrderedJson config{{"report", a.report}, {"documents", a.documents}, {"annotations", a.annotations},
                       {"manifest", a.manifest}, {"format", a.format}, {"out", a.out}};
    std::cout << OrderedJson{{"command", "report"}, {"config", config}}.dump(2) << '\n';
    return;
  }
  OrderedJson payload;
  std::string csv;

  if (a.report == "accuracy") {
    csv = emit_accuracy(a, prov, payload);
  } else if (a.report == "anomalies") {
    if (a.documents.empty()) throw UsageError("--report anomalies needs --documents");
    if (!(a.fraction > 0.0 && a.fraction <= 0.5)) throw UsageError("--fraction must lie in (0, 0.5]");
    const bool need_text = !a.prompts_dir.empty();
    std::vector<Document> docs;
    report_read(a.documents, read_documents(a.documents, [&](Document&& d) { docs.push_back(std::move(d)); }, need_text));
    const auto grouping = a.group_by == "global" ? AnomalyGrouping::kGlobal : AnomalyGrouping::kPerSource;
    const auto sets = extract_anomalies(docs, a.fraction, grouping, global.workers);
    prov.add_input(a.documents);
    prov.spec["fraction"] = a.fraction;
    prov.spec["group_by"] = a.group_by;
    payload = OrderedJson::object();
    payload["method"] = {{"rank", "nll, ties by ascending doc_id"}, {"tail_size", "ceil(fraction * n)"}};
    payload["sets"] = OrderedJson::array();
    for (const auto& s : sets) {
      payload["sets"].push_back(s.to_json());
      if (s.overlap) diag("warn", "anomaly_overlap", {{"source", s.source}, {"n", s.population}});
    }
    if (need_text) {
      ensure_dir(a.prompts_dir);
      std::unordered_map<std::string, const Document*> by_id;
      for (const auto& d : docs) by_id[d.id] = &d;
      std::size_t written = 0;
      for (const auto& s : sets) {
        for (const auto* tail : {&s.high_tail, &s.low_tail}) {
          const bool high = tail == &s.high_tail;
          for (const auto& id : *tail) {
            std::string file = std::string(high ? "high_" : "low_") + id + ".txt";
            for (char& c : file) {
              if (c == '/' || c == '\\') c = '_';
            }
            write_text_file((fs::path(a.prompts_dir) / file).string(), anomaly_analysis_prompt(*by_id.at(id), high));
            ++written;
          }
        }
      }
      diag("info", "anomaly_prompts", {{"dir", a.prompts_dir}, {"files", written}});
    }
    if (a.format == "csv") {
      csv = "source,tail,rank,doc_id\n";
      for (const auto& s : sets) {
        for (std::size_t i = 0; i < s.high_tail.size(); ++i) {
          csv += csv_field(s.source) + ",high," + std::to_string(i + 1) + "," + csv_field(s.high_tail[i]) + "\n";
        }
        for (std::size_t i = 0; i < s.low_tail.size(); ++i) {
          csv += csv_field(s.source) + ",low," + std::to_string(i + 1) + "," + csv_field(s.low_tail[i]) + "\n";
        }
      }
    }
  } else {
    if (a.documents.empty() || a.annotations.empty()) {
      throw UsageError("--report " + a.report + " needs --documents and --annotations");
    }
    const LoadedCorpus corpus = load_corpus(a.documents, a.annotations, /*keep_text=*/false);
    const auto docs = restrict_to_manifest(corpus.annotated, a.manifest);
    prov.add_input(a.documents);
    prov.add_input(a.annotations);
    if (!a.manifest.empty()) prov.add_input(a.manifest);
    if (a.report == "summary") {
      const CorpusStats stats = corpus_summary(docs);
      payload = stats.to_json();
      if (a.format == "csv") csv = stats.to_csv();
    } else if (a.report == "distribution") {
      const RatingDistribution dist = rating_distribution(docs);
      payload = dist.to_json();
      if (a.format == "csv") csv = dist.to_csv();
    } else if (a.report == "nll-correlation") {
      const NllCorrelationReport r = criterion_nll_correlation(docs);
      payload = r.to_json();
      if (a.format == "csv") csv = r.to_csv();
    } else if (a.report == "criterion-correlation") {
      const auto m = criterion_correlation_matrix(docs);
      payload = OrderedJson::object();
      payload["method"] = {{"statistic", "pearson"}, {"absent", "null for constant criteria"}};
      OrderedJson rows = OrderedJson::object();
      for (Criterion r : kAllCriteria) {
        OrderedJson row = OrderedJson::object();
        for (Criterion c : kAllCriteria) {
          const auto& v = m[to_index(r)][to_index(c)];
          row[std::string(criterion_key(c))] = v ? OrderedJson(*v) : OrderedJson(nullptr);
        }
        rows[std::string(criterion_key(r))] = std::move(row);
      }
      payload["matrix"] = std::move(rows);
    } else if (a.report == "curation") {
      const CurationReport r = curation_report(docs);
      payload = r.to_json();
      if (a.format == "csv") csv = r.means_csv();
    } else {
      throw UsageError("unknown report: " + a.report);
    }
    if (a.format == "csv" && csv.empty()) throw UsageError("--format csv is not available for " + a.report);
  }

  if (a.format == "csv") {
    emit(a, csv);
  } else {
    emit(a, wrap_artifact(prov, std::move(payload)).dump(2) + "\n");
  }
}

}  // namespace

void add_report(CLI::App& app, GlobalOptions& global) {
  auto args = std::make_shared<ReportArgs>();
  CLI::App* cmd = app.add_subcommand("report", "Corpus statistics, rating studies, rater accuracy, anomaly tails");
  cmd->add_option("--report", args->report, "Report kind")
      ->required()
      ->check(CLI::IsMember({"summary", "distribution", "nll-correlation", "criterion-correlation", "accuracy",
                             "curation", "anomalies"}));
  cmd->add_option("--documents", args->documents, "Document store directory or documents.jsonl");
  cmd->add_option("--annotations", args->annotations, "annotations.jsonl");
  cmd->add_option("--manifest", args->manifest, "Restrict to the documents of a sample manifest");
  cmd->add_option("--gold", args->gold, "Gold annotations.jsonl (accuracy)");
  cmd->add_option("--pred", args->pred, "Predicted annotations.jsonl (accuracy)");
  cmd->add_option("--criterion", args->criterion, "Criterion compared by the accuracy report")->capture_default_str();
  cmd->add_option("--fraction", args->fraction, "Tail fraction for anomalies")->capture_default_str();
  cmd->add_option("--group-by", args->group_by, "Anomaly grouping: source or global")
      ->check(CLI::IsMember({"source", "global"}))
      ->capture_default_str();
  cmd->add_option("--prompts-dir", args->prompts_dir, "Write one analysis prompt per anomalous document here");
  cmd->add_option("--format", args->format, "json or csv")->check(CLI::IsMember({"json", "csv"}))->capture_default_str();
  cmd->add_option("--out", args->out, "Output file (default: stdout)");
  cmd->callback([args, &global] { run_report(*args, global); });
}

}  // namespace curate::cli
