#include "curate/corpus_store.hpp"

#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "curate/error.hpp"

namespace curate {

namespace fs = std::filesystem;

std::string chunk_id(std::string_view raw_id, std::size_t chunk_index) {
  std::string id(raw_id);
  id += '#';
  id += std::to_string(chunk_index);
  return id;
}

std::optional<std::pair<std::string, std::size_t>> split_chunk_id(std::string_view id) {
  const std::size_t hash = id.rfind('#');
  if (hash == std::string_view::npos || hash + 1 >= id.size()) return std::nullopt;
  const std::string_view digits = id.substr(hash + 1);
  if (!std::all_of(digits.begin(), digits.end(), [](char c) { return c >= '0' && c <= '9'; })) return std::nullopt;
  return std::make_pair(std::string(id.substr(0, hash)), static_cast<std::size_t>(std::stoull(std::string(digits))));
}

ReadSummary ingest_jsonl(const std::string& path, std::string_view source,
                         const std::function<void(RawDocument&&)>& sink) {
  ReadSummary summary;
  LineReader reader(path);
  std::string line;
  while (reader.next(line)) {
    ++summary.lines_read;
    if (is_blank(line)) continue;
    const auto fail = [&](std::string message) {
      ++summary.skipped;
      summary.diagnostics.push_back({path, reader.line_number(), std::move(message)});
    };
    Json j = Json::parse(line, nullptr, /*allow_exceptions=*/false);
    if (j.is_discarded()) {
      fail("invalid JSON");
      continue;
    }
    if (!j.is_object()) {
      fail("line is not a JSON object");
      continue;
    }
    const auto text = j.find("text");
    if (text == j.end() || !text->is_string()) {
      fail("missing string field: text");
      continue;
    }
    RawDocument raw;
    raw.source = std::string(source);
    const auto id = j.find("id");
    if (id != j.end() && id->is_string() && !id->get_ref<const std::string&>().empty()) {
      raw.id = id->get<std::string>();
    } else if (id != j.end() && id->is_number_integer()) {
      raw.id = std::to_string(id->get<std::int64_t>());
    } else if (id == j.end() || id->is_null()) {
      raw.id = std::string(source) + ":" + std::to_string(reader.line_number());
    } else {
      fail("id is neither a non-empty string nor an integer");
      continue;
    }
    raw.text = text->get<std::string>();
    ++summary.records;
    sink(std::move(raw));
  }
  return summary;
}

std::vector<Document> chunk(const RawDocument& raw, const Tokenizer& tokenizer, std::int64_t chunk_budget) {
  if (chunk_budget < 1) throw CurateError("chunk budget must be at least 1");
  std::vector<Document> out;
  const std::vector<TokenSpan> tokens = tokenizer.tokenize(raw.text);
  if (tokens.empty()) return out;
  const auto budget = static_cast<std::size_t>(chunk_budget);
  const std::size_t n_chunks = (tokens.size() + budget - 1) / budget;
  out.reserve(n_chunks);
  for (std::size_t c = 0; c < n_chunks; ++c) {
    const std::size_t first = c * budget;
    const std::size_t last = std::min(tokens.size(), first + budget);
    const std::size_t begin = c == 0 ? 0 : tokens[first].begin;
    const std::size_t end = last < tokens.size() ? tokens[last].begin : raw.text.size();
    Document d;
    d.id = chunk_id(raw.id, c);
    d.source = raw.source;
    d.text = raw.text.substr(begin, end - begin);
    d.token_count = static_cast<std::int64_t>(last - first);
    out.push_back(std::move(d));
  }
  return out;
}

OrderedJson to_json(const Document& doc) {
  OrderedJson j;
  j["id"] = doc.id;
  j["source"] = doc.source;
  j["text"] = doc.text;
  j["token_count"] = doc.token_count;
  j["nll"] = doc.nll ? OrderedJson(*doc.nll) : OrderedJson(nullptr);
  return j;
}

Document document_from_json(const Json& j) {
  if (!j.is_object()) throw CurateError("document line is not a JSON object");
  Document d;
  const auto id = j.find("id");
  if (id == j.end() || !id->is_string() || id->get_ref<const std::string&>().empty()) {
    throw CurateError("document has no non-empty string id");
  }
  d.id = id->get<std::string>();
  const auto source = j.find("source");
  if (source != j.end() && source->is_string()) d.source = source->get<std::string>();
  const auto text = j.find("text");
  if (text != j.end() && text->is_string()) d.text = text->get<std::string>();
  const auto tc = j.find("token_count");
  if (tc == j.end() || !tc->is_number_integer() || tc->get<std::int64_t>() < 1) {
    throw CurateError("document " + d.id + " has no positive integer token_count");
  }
  d.token_count = tc->get<std::int64_t>();
  const auto nll = j.find("nll");
  if (nll != j.end() && !nll->is_null()) {
    if (!nll->is_number()) throw CurateError("document " + d.id + " has non-numeric nll");
    const double v = nll->get<double>();
    if (!std::isfinite(v) || v < 0.0) throw CurateError("document " + d.id + " has nll outside [0, inf)");
    d.nll = v;
  }
  return d;
}

AnnotationIndex::AnnotationIndex(std::vector<AnnotationRecord> records) : records_(std::move(records)) {
  taken_.assign(records_.size(), false);
  by_id_.reserve(records_.size());
  for (std::size_t i = 0; i < records_.size(); ++i) {
    if (!by_id_.emplace(records_[i].doc_id, i).second) {
      throw CurateError("duplicate annotation for id: " + records_[i].doc_id);
    }
  }
}

const AnnotationRecord* AnnotationIndex::find(std::string_view id) const {
  const auto it = by_id_.find(std::string(id));
  return it == by_id_.end() ? nullptr : &records_[it->second];
}

const AnnotationRecord* AnnotationIndex::take(std::string_view id) {
  const auto it = by_id_.find(std::string(id));
  if (it == by_id_.end()) return nullptr;
  taken_[it->second] = true;
  return &records_[it->second];
}

std::vector<std::string> AnnotationIndex::untaken() const {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < records_.size(); ++i) {
    if (!taken_[i]) out.push_back(records_[i].doc_id);
  }
  std::sort(out.begin(), out.end());
  return out;
}

JoinResult attach_annotations(std::vector<Document> docs, std::vector<AnnotationRecord> annotations) {
  AnnotationIndex index(std::move(annotations));
  JoinResult result;
  for (Document& d : docs) {
    if (const AnnotationRecord* rec = index.take(d.id)) {
      result.annotated.push_back({std::move(d), *rec});
    } else {
      result.unmatched_documents.push_back(d.id);
    }
  }
  result.unmatched_annotations = index.untaken();
  return result;
}

void CorpusStats::add(std::string_view source, DomainType domain, int overall_level, std::uint64_t documents,
                      std::uint64_t tokens) {
  const Tally t{documents, tokens};
  by_source_[std::string(source)] += t;
  by_domain_[domain] += t;
  joint_[{std::string(source), domain}] += t;
  by_level_[overall_level] += t;
  total_ += t;
}

void CorpusStats::add(const AnnotatedDocument& doc) {
  const auto& a = doc.annotation;
  if (!a.domain) throw CurateError("annotation for " + a.doc_id + " has no domain");
  add(doc.doc.source, *a.domain, a.level(Criterion::kOverallScore), 1,
      static_cast<std::uint64_t>(doc.doc.token_count));
}

void CorpusStats::merge(const CorpusStats& other) {
  for (const auto& [k, v] : other.by_source_) by_source_[k] += v;
  for (const auto& [k, v] : other.by_domain_) by_domain_[k] += v;
  for (const auto& [k, v] : other.joint_) joint_[k] += v;
  for (const auto& [k, v] : other.by_level_) by_level_[k] += v;
  total_ += other.total_;
}

double CorpusStats::document_share(const Tally& cell) const noexcept {
  return total_.documents == 0 ? 0.0 : static_cast<double>(cell.documents) / static_cast<double>(total_.documents);
}

double CorpusStats::token_share(const Tally& cell) const noexcept {
  return total_.tokens == 0 ? 0.0 : static_cast<double>(cell.tokens) / static_cast<double>(total_.tokens);
}

namespace {

template <class Map, class KeyFn>
OrderedJson table_json(const CorpusStats& s, const Map& m, KeyFn key) {
  OrderedJson rows = OrderedJson::array();
  for (const auto& [k, v] : m) {
    OrderedJson r;
    r["key"] = key(k);
    r["documents"] = v.documents;
    r["doc_proportion"] = s.document_share(v);
    r["tokens"] = v.tokens;
    r["token_proportion"] = s.token_share(v);
    rows.push_back(std::move(r));
  }
  return rows;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

}  // namespace

OrderedJson CorpusStats::to_json() const {
  OrderedJson j;
  j["total"] = {{"documents", total_.documents}, {"tokens", total_.tokens}};
  j["by_source"] = table_json(*this, by_source_, [](const std::string& k) { return k; });
  j["by_domain"] = table_json(*this, by_domain_, [](DomainType d) { return std::string(domain_name(d)); });
  j["by_source_domain"] = table_json(*this, joint_, [](const std::pair<std::string, DomainType>& k) {
    return k.first + "/" + std::string(domain_name(k.second));
  });
  j["by_overall_score"] = table_json(*this, by_level_, [](int l) { return std::to_string(l); });
  return j;
}

std::string CorpusStats::to_csv() const {
  std::ostringstream out;
  out.precision(17);
  out << "table,key,documents,doc_proportion,tokens,token_proportion\n";
  const auto emit = [&](const char* table, const std::string& key, const Tally& t) {
    out << table << ',' << csv_field(key) << ',' << t.documents << ',' << document_share(t) << ',' << t.tokens
        << ',' << token_share(t) << '\n';
  };
  for (const auto& [k, v] : by_source_) emit("source", k, v);
  for (const auto& [k, v] : by_domain_) emit("domain", std::string(domain_name(k)), v);
  for (const auto& [k, v] : joint_) emit("source_domain", k.first + "/" + std::string(domain_name(k.second)), v);
  for (const auto& [k, v] : by_level_) emit("overall_score", std::to_string(k), v);
  return out.str();
}

CorpusStats corpus_summary(std::span<const AnnotatedDocument> docs) {
  CorpusStats stats;
  for (const auto& d : docs) stats.add(d);
  return stats;
}

std::vector<std::string> DocumentStore::shard_files(const std::string& dir) {
  std::vector<std::string> out;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    const std::string name = entry.path().filename().string();
    const bool plain = name == "documents.jsonl";
    const bool sharded = name.rfind("documents-", 0) == 0 &&
                         (name.ends_with(".jsonl") || name.ends_with(".jsonl.gz"));
    if (plain || sharded || name == "documents.jsonl.gz") out.push_back(name);
  }
  std::sort(out.begin(), out.end());
  return out;
}

void DocumentStore::build_index(const std::string& dir) {
  const std::string tmp = (fs::path(dir) / "documents.idx.tmp").string();
  {
    std::ofstream idx(tmp, std::ios::binary | std::ios::trunc);
    if (!idx) throw CurateError("cannot write index in " + dir);
    for (const std::string& shard : shard_files(dir)) {
      LineReader reader((fs::path(dir) / shard).string());
      std::string line;
      while (reader.next(line)) {
        if (is_blank(line)) continue;
        Json j = Json::parse(line, nullptr, false);
        if (j.is_discarded() || !j.is_object() || !j.contains("id") || !j["id"].is_string()) continue;
        idx << j["id"].get<std::string>() << '\t' << shard << '\t' << reader.line_offset() << '\n';
      }
    }
  }
  fs::rename(tmp, fs::path(dir) / "documents.idx");
}

DocumentStore::DocumentStore(std::string dir) : dir_(std::move(dir)) {
  const fs::path idx_path = fs::path(dir_) / "documents.idx";
  if (!fs::exists(idx_path)) build_index(dir_);
  std::ifstream idx(idx_path);
  if (!idx) throw CurateError("cannot read index: " + idx_path.string());
  std::string line;
  while (std::getline(idx, line)) {
    const std::size_t t1 = line.rfind('\t');
    const std::size_t t0 = t1 == std::string::npos ? std::string::npos : line.rfind('\t', t1 - 1);
    if (t0 == std::string::npos) throw CurateError("corrupt index line: " + line);
    index_[line.substr(0, t0)] = {line.substr(t0 + 1, t1 - t0 - 1), std::stoull(line.substr(t1 + 1))};
  }
}

std::optional<Document> DocumentStore::get(std::string_view id) const {
  const auto it = index_.find(std::string(id));
  if (it == index_.end()) return std::nullopt;
  const std::string path = (fs::path(dir_) / it->second.shard).string();
  gzFile f = gzopen(path.c_str(), "rb");
  if (f == nullptr) throw CurateError("cannot open shard: " + path);
  std::string line;
  if (gzseek(f, static_cast<z_off_t>(it->second.offset), SEEK_SET) >= 0) {
    char buf[1 << 14];
    while (gzgets(f, buf, sizeof buf) != nullptr) {
      line += buf;
      if (!line.empty() && line.back() == '\n') break;
    }
  }
  gzclose(f);
  Json j = Json::parse(line, nullptr, false);
  if (j.is_discarded()) throw CurateError("index points at a malformed line for id " + std::string(id));
  return document_from_json(j);
}

namespace {

ReadSummary read_document_file(const std::string& path, const std::function<void(Document&&)>& sink, bool keep_text,
                               ReadSummary summary) {
  LineReader reader(path);
  std::string line;
  while (reader.next(line)) {
    ++summary.lines_read;
    if (is_blank(line)) continue;
    Json j = Json::parse(line, nullptr, false);
    if (j.is_discarded()) {
      ++summary.skipped;
      summary.diagnostics.push_back({path, reader.line_number(), "invalid JSON"});
      continue;
    }
    try {
      if (!keep_text) j.erase("text");
      Document d = document_from_json(j);
      ++summary.records;
      sink(std::move(d));
    } catch (const CurateError& e) {
      ++summary.skipped;
      summary.diagnostics.push_back({path, reader.line_number(), e.what()});
    }
  }
  return summary;
}

}  // namespace

ReadSummary read_documents(const std::string& path, const std::function<void(Document&&)>& sink, bool keep_text) {
  if (!fs::exists(path)) throw CurateError("no such file or directory: " + path);
  ReadSummary summary;
  if (fs::is_directory(path)) {
    const auto shards = DocumentStore::shard_files(path);
    for (const auto& shard : shards) {
      summary = read_document_file((fs::path(path) / shard).string(), sink, keep_text, std::move(summary));
    }
    return summary;
  }
  return read_document_file(path, sink, keep_text, std::move(summary));
}

ReadSummary read_annotations(const std::string& path, const std::function<void(AnnotationRecord&&)>& sink) {
  ReadSummary summary;
  LineReader reader(path);
  std::string line;
  while (reader.next(line)) {
    ++summary.lines_read;
    if (is_blank(line)) continue;
    const auto fail = [&](std::string message) {
      ++summary.skipped;
      summary.diagnostics.push_back({path, reader.line_number(), std::move(message)});
    };
    Json j = Json::parse(line, nullptr, false);
    if (j.is_discarded()) {
      fail("invalid JSON");
      continue;
    }
    AnnotationRecord rec;
    try {
      rec = annotation_from_json(j);
    } catch (const CurateError& e) {
      fail(e.what());
      continue;
    }
    const auto violations = validate(rec);
    if (!violations.empty()) {
      std::string msg;
      for (const auto& v : violations) msg += (msg.empty() ? "" : "; ") + v;
      fail(msg);
      continue;
    }
    ++summary.records;
    sink(std::move(rec));
  }
  return summary;
}

}  // namespace curate
