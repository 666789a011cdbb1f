#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <memory>
#include <sstream>
#include <unordered_set>

#include "cli_common.hpp"
#include "curate/error.hpp"
#include "curate/tokenizer.hpp"

namespace curate::cli {

namespace fs = std::filesystem;

namespace {

struct IngestArgs {
  std::vector<std::string> inputs;
  std::string source;
  std::int64_t chunk_budget = 1024;
  std::string tokenizer = "whitespace";
  std::string out;
  std::uint64_t shard_docs = 0;
};

std::string source_from_path(const std::string& path) {
  std::string name = fs::path(path).filename().string();
  for (const char* ext : {".gz", ".jsonl", ".json"}) {
    if (name.size() > std::string_view(ext).size() && name.ends_with(ext)) name.resize(name.size() - std::string_view(ext).size());
  }
  return name;
}

class ShardWriter {
 public:
  ShardWriter(std::string dir, std::uint64_t per_shard) : dir_(std::move(dir)), per_shard_(per_shard) {}

  void write(const Document& d) {
    if (!out_.is_open() || (per_shard_ > 0 && in_shard_ == per_shard_)) open_next();
    out_ << to_json(d).dump() << '\n';
    ++in_shard_;
  }

  void close() {
    if (!out_.is_open()) open_next();
    out_.close();
    if (!out_) throw CurateError("write failed in " + dir_);
  }

 private:
  void open_next() {
    if (out_.is_open()) out_.close();
    std::string name = "documents.jsonl";
    if (per_shard_ > 0) {
      std::ostringstream n;
      n << "documents-" << std::setw(5) << std::setfill('0') << shard_++ << ".jsonl";
      name = n.str();
    }
    out_.open(fs::path(dir_) / name, std::ios::binary | std::ios::trunc);
    if (!out_) throw CurateError("cannot write " + (fs::path(dir_) / name).string());
    in_shard_ = 0;
  }

  std::string dir_;
  std::uint64_t per_shard_;
  std::uint64_t shard_ = 0;
  std::uint64_t in_shard_ = 0;
  std::ofstream out_;
};

void run_ingest(const IngestArgs& a, const GlobalOptions& global) {
  const auto tokenizer = make_tokenizer(a.tokenizer);
  if (a.chunk_budget < 1) throw UsageError("--chunk-budget must be at least 1");
  OrderedJson config;
  config["inputs"] = a.inputs;
  config["source"] = a.source.empty() ? OrderedJson(nullptr) : OrderedJson(a.source);
  config["chunk_budget"] = a.chunk_budget;
  config["tokenizer"] = tokenizer->name();
  config["out"] = a.out;
  config["shard_docs"] = a.shard_docs;
  if (global.dry_run) {
    std::cout << OrderedJson{{"command", "ingest"}, {"config", config}}.dump(2) << '\n';
    return;
  }
  for (const auto& in : a.inputs) {
    if (!fs::exists(in)) throw CurateError("no such input: " + in);
  }
  ensure_dir(a.out);
  for (const auto& stale : DocumentStore::shard_files(a.out)) fs::remove(fs::path(a.out) / stale);

  ShardWriter writer(a.out, a.shard_docs);
  std::unordered_set<std::string> seen;
  std::uint64_t raw_docs = 0, chunks = 0, tokens = 0, duplicates = 0, empty = 0, skipped = 0;
  Provenance prov;
  prov.command = "ingest";
  prov.spec = config;
  for (const auto& in : a.inputs) {
    const std::string source = a.source.empty() ? source_from_path(in) : a.source;
    const ReadSummary summary = ingest_jsonl(in, source, [&](RawDocument&& raw) {
      ++raw_docs;
      if (!seen.insert(raw.id).second) {
        ++duplicates;
        diag("warn", "duplicate_id", {{"path", in}, {"id", raw.id}});
        return;
      }
      const auto docs = chunk(raw, *tokenizer, a.chunk_budget);
      if (docs.empty()) ++empty;
      for (const auto& d : docs) {
        writer.write(d);
        ++chunks;
        tokens += static_cast<std::uint64_t>(d.token_count);
      }
    });
    report_read(in, summary);
    skipped += summary.skipped;
    prov.add_input(in);
  }
  writer.close();
  DocumentStore::build_index(a.out);

  OrderedJson payload;
  payload["raw_documents"] = raw_docs;
  payload["skipped_lines"] = skipped;
  payload["duplicate_ids"] = duplicates;
  payload["empty_documents"] = empty;
  payload["documents"] = chunks;
  payload["tokens"] = tokens;
  write_json_file((fs::path(a.out) / "ingest.json").string(), wrap_artifact(prov, payload));
  diag("info", "ingest_done", {{"documents", chunks}, {"tokens", tokens}, {"skipped", skipped}, {"out", a.out}});
}

}  // namespace

void add_ingest(CLI::App& app, GlobalOptions& global) {
  auto args = std::make_shared<IngestArgs>();
  CLI::App* cmd = app.add_subcommand("ingest", "Chunk raw JSONL shards into fixed-token documents");
  cmd->add_option("--input", args->inputs, "Raw JSONL shard(s), plain or .gz")->required();
  cmd->add_option("--source", args->source, "Source name (default: input file stem)");
  cmd->add_option("--chunk-budget", args->chunk_budget, "Tokens per document")->capture_default_str();
  cmd->add_option("--tokenizer", args->tokenizer, "whitespace or byte")
      ->check(CLI::IsMember({"whitespace", "byte"}))
      ->capture_default_str();
  cmd->add_option("--out", args->out, "Output store directory")->required();
  cmd->add_option("--shard-docs", args->shard_docs, "Documents per shard file (0 = single file)")->capture_default_str();
  cmd->callback([args, &global] { run_ingest(*args, global); });
}

}  // namespace curate::cli
