#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "curate/corpus_store.hpp"
#include "curate/jsonl.hpp"
#include "curate/report.hpp"
#include "curate/sampler.hpp"

namespace curate::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFatal = 1;
inline constexpr int kExitUsage = 2;

/// Bad flag combinations found after CLI11 parsing; maps to exit code 2.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Reads --config files: a JSON object whose keys are long flag names,
/// with one nested object per subcommand.
class JsonConfig : public CLI::Config {
 public:
  std::string to_config(const CLI::App* app, bool default_also, bool write_description,
                        std::string prefix) const override;
  std::vector<CLI::ConfigItem> from_config(std::istream& input) const override;
};

/// One structured diagnostic line on stderr.
void diag(std::string_view level, std::string_view event, OrderedJson fields = OrderedJson::object());
void report_read(const std::string& path, const ReadSummary& summary);

struct GlobalOptions {
  unsigned workers = 1;
  bool dry_run = false;
};

/// Documents joined with their annotations; documents without one are
/// dropped (and reported) when annotations are given.
struct LoadedCorpus {
  std::vector<Document> documents;             // used when no annotations are given
  std::vector<AnnotatedDocument> annotated;
  bool has_annotations = false;
};

LoadedCorpus load_corpus(const std::string& documents, const std::string& annotations, bool keep_text);
std::vector<AnnotationRecord> load_annotations(const std::string& path);

void ensure_dir(const std::string& dir);

void add_ingest(CLI::App& app, GlobalOptions& global);
void add_annotate(CLI::App& app, GlobalOptions& global);
void add_sample(CLI::App& app, GlobalOptions& global);
void add_report(CLI::App& app, GlobalOptions& global);
void add_finetune(CLI::App& app, GlobalOptions& global);

}  // namespace curate::cli
