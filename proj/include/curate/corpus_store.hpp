#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <tuple>
#include <unordered_map>
#include <vector>

#include "curate/annotation_schema.hpp"
#include "curate/jsonl.hpp"
#include "curate/tokenizer.hpp"

namespace curate {

struct RawDocument {
  std::string id;
  std::string source;
  std::string text;
};

/// A fixed-token-budget unit of text. Immutable once built.
struct Document {
  std::string id;
  std::string source;
  std::string text;
  std::int64_t token_count = 0;
  std::optional<double> nll;  // nats per token

  friend bool operator==(const Document&, const Document&) = default;
};

struct AnnotatedDocument {
  Document doc;
  AnnotationRecord annotation;
};

/// Chunk ids are "<raw id>#<chunk index>"; the index follows the last '#'.
std::string chunk_id(std::string_view raw_id, std::size_t chunk_index);
std::optional<std::pair<std::string, std::size_t>> split_chunk_id(std::string_view id);

/// Streams RawDocuments from a JSONL shard (plain or gzip). Each non-blank
/// line must be an object with a string "text"; "id" is optional and is
/// generated as "<source>:<line>" when absent. Malformed lines are tallied
/// in the returned summary, never fatal. Unreadable file throws.
ReadSummary ingest_jsonl(const std::string& path, std::string_view source,
                         const std::function<void(RawDocument&&)>& sink);

/// Splits a raw document into chunks of exactly `chunk_budget` tokens (the
/// last one may be shorter). Chunk texts concatenate back to the original
/// text; inter-token whitespace stays with the preceding chunk.
std::vector<Document> chunk(const RawDocument& raw, const Tokenizer& tokenizer, std::int64_t chunk_budget);

OrderedJson to_json(const Document& doc);
/// Parses a documents.jsonl object; throws CurateError on schema violations.
Document document_from_json(const Json& j);

/// Result of an inner join between documents and annotations.
struct JoinResult {
  std::vector<AnnotatedDocument> annotated;
  std::vector<std::string> unmatched_documents;
  std::vector<std::string> unmatched_annotations;
};

/// Annotations indexed by id. Duplicate ids are fatal.
class AnnotationIndex {
 public:
  explicit AnnotationIndex(std::vector<AnnotationRecord> records);

  const AnnotationRecord* find(std::string_view id) const;
  /// Marks `id` as matched and returns its record (nullptr when absent).
  const AnnotationRecord* take(std::string_view id);
  /// Ids never returned by take(), sorted.
  std::vector<std::string> untaken() const;
  std::size_t size() const noexcept { return records_.size(); }

 private:
  std::vector<AnnotationRecord> records_;
  std::vector<bool> taken_;
  std::unordered_map<std::string, std::size_t> by_id_;
};

JoinResult attach_annotations(std::vector<Document> docs, std::vector<AnnotationRecord> annotations);

/// Document and token tallies for one table cell.
struct Tally {
  std::uint64_t documents = 0;
  std::uint64_t tokens = 0;

  Tally& operator+=(const Tally& o) noexcept {
    documents += o.documents;
    tokens += o.tokens;
    return *this;
  }
  friend bool operator==(const Tally&, const Tally&) = default;
};

/// Corpus composition tables. Merging is a commutative monoid, so partial
/// stats from independent shards combine in any order.
class CorpusStats {
 public:
  /// Adds `documents` documents totalling `tokens` tokens to one cell.
  void add(std::string_view source, DomainType domain, int overall_level, std::uint64_t documents,
           std::uint64_t tokens);
  void add(const AnnotatedDocument& doc);
  void merge(const CorpusStats& other);

  const std::map<std::string, Tally>& by_source() const noexcept { return by_source_; }
  const std::map<DomainType, Tally>& by_domain() const noexcept { return by_domain_; }
  const std::map<std::pair<std::string, DomainType>, Tally>& by_source_domain() const noexcept { return joint_; }
  const std::map<int, Tally>& by_level() const noexcept { return by_level_; }
  const Tally& total() const noexcept { return total_; }

  double document_share(const Tally& cell) const noexcept;
  double token_share(const Tally& cell) const noexcept;

  OrderedJson to_json() const;
  /// One CSV per table: "table,key,documents,doc_proportion,tokens,token_proportion".
  std::string to_csv() const;

  friend bool operator==(const CorpusStats&, const CorpusStats&) = default;

 private:
  std::map<std::string, Tally> by_source_;
  std::map<DomainType, Tally> by_domain_;
  std::map<std::pair<std::string, DomainType>, Tally> joint_;
  std::map<int, Tally> by_level_;
  Tally total_;
};

CorpusStats corpus_summary(std::span<const AnnotatedDocument> docs);

/// Sharded documents.jsonl store with a sidecar id -> (shard, offset) index.
///
/// Layout of a store directory:
///   documents.jsonl or documents-00000.jsonl, documents-00001.jsonl, ...
///   documents.idx   lines of "<id>\t<shard file>\t<byte offset>"
class DocumentStore {
 public:
  struct Location {
    std::string shard;
    std::uint64_t offset = 0;
  };

  /// Opens an existing store directory (reads the index).
  explicit DocumentStore(std::string dir);

  /// Shard files in the store, sorted.
  static std::vector<std::string> shard_files(const std::string& dir);
  /// Rebuilds documents.idx by scanning every shard.
  static void build_index(const std::string& dir);

  std::optional<Document> get(std::string_view id) const;
  std::size_t size() const noexcept { return index_.size(); }
  const std::string& dir() const noexcept { return dir_; }

 private:
  std::string dir_;
  std::unordered_map<std::string, Location> index_;
};

/// Reads every document from a store directory or a single documents.jsonl
/// file, in shard then line order. Malformed lines are tallied.
ReadSummary read_documents(const std::string& path, const std::function<void(Document&&)>& sink,
                           bool keep_text = true);

/// Reads annotations.jsonl; invalid lines are tallied and skipped.
ReadSummary read_annotations(const std::string& path, const std::function<void(AnnotationRecord&&)>& sink);

}  // namespace curate
