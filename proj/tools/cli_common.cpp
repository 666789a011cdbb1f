#include "cli_common.hpp"

#include <filesystem>
#include <iostream>
#include <sstream>

#include "curate/error.hpp"

namespace curate::cli {

namespace {

void flatten(const Json& j, std::vector<std::string>& parents, std::vector<CLI::ConfigItem>& out) {
  for (const auto& [key, value] : j.items()) {
    if (value.is_object()) {
      parents.push_back(key);
      flatten(value, parents, out);
      parents.pop_back();
      continue;
    }
    CLI::ConfigItem item;
    item.parents = parents;
    item.name = key;
    const auto scalar = [](const Json& v) { return v.is_string() ? v.get<std::string>() : v.dump(); };
    if (value.is_array()) {
      for (const auto& v : value) item.inputs.push_back(scalar(v));
    } else if (value.is_boolean()) {
      item.inputs.push_back(value.get<bool>() ? "true" : "false");
    } else {
      item.inputs.push_back(scalar(value));
    }
    out.push_back(std::move(item));
  }
}

}  // namespace

std::string JsonConfig::to_config(const CLI::App* app, bool default_also, bool, std::string) const {
  OrderedJson j;
  for (const CLI::Option* opt : app->get_options({})) {
    if (opt->get_lnames().empty() || !opt->get_configurable()) continue;
    const std::string name = opt->get_lnames().front();
    if (opt->count() > 0) {
      const auto& res = opt->results();
      j[name] = res.size() == 1 ? OrderedJson(res.front()) : OrderedJson(res);
    } else if (default_also && !opt->get_default_str().empty()) {
      j[name] = opt->get_default_str();
    }
  }
  return j.dump(2);
}

std::vector<CLI::ConfigItem> JsonConfig::from_config(std::istream& input) const {
  std::stringstream buffer;
  buffer << input.rdbuf();
  const Json j = Json::parse(buffer.str(), nullptr, false);
  if (j.is_discarded() || !j.is_object()) throw CLI::ConversionError("--config", "config file must be a JSON object");
  std::vector<CLI::ConfigItem> items;
  std::vector<std::string> parents;
  flatten(j, parents, items);
  return items;
}

void diag(std::string_view level, std::string_view event, OrderedJson fields) {
  OrderedJson j;
  j["level"] = level;
  j["event"] = event;
  for (auto& [k, v] : fields.items()) j[k] = v;
  std::cerr << j.dump() << '\n';
}

void report_read(const std::string& path, const ReadSummary& summary) {
  for (std::size_t i = 0; i < summary.diagnostics.size() && i < 20; ++i) {
    const auto& d = summary.diagnostics[i];
    diag("warn", "skipped_line", {{"path", d.path}, {"line", d.line}, {"message", d.message}});
  }
  diag("info", "read", {{"path", path}, {"lines", summary.lines_read}, {"records", summary.records},
                         {"skipped", summary.skipped}});
}

std::vector<AnnotationRecord> load_annotations(const std::string& path) {
  std::vector<AnnotationRecord> out;
  report_read(path, read_annotations(path, [&](AnnotationRecord&& r) { out.push_back(std::move(r)); }));
  return out;
}

LoadedCorpus load_corpus(const std::string& documents, const std::string& annotations, bool keep_text) {
  LoadedCorpus c;
  std::vector<Document> docs;
  report_read(documents, read_documents(documents, [&](Document&& d) { docs.push_back(std::move(d)); }, keep_text));
  if (annotations.empty()) {
    c.documents = std::move(docs);
    return c;
  }
  c.has_annotations = true;
  auto join = attach_annotations(std::move(docs), load_annotations(annotations));
  if (!join.unmatched_documents.empty() || !join.unmatched_annotations.empty()) {
    OrderedJson f;
    f["documents_without_annotation"] = join.unmatched_documents.size();
    f["annotations_without_document"] = join.unmatched_annotations.size();
    if (!join.unmatched_documents.empty()) f["example_document"] = join.unmatched_documents.front();
    if (!join.unmatched_annotations.empty()) f["example_annotation"] = join.unmatched_annotations.front();
    diag("warn", "unmatched_join", std::move(f));
  }
  c.annotated = std::move(join.annotated);
  for (auto& a : c.annotated) c.documents.push_back(a.doc);
  return c;
}

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec || !std::filesystem::is_directory(dir)) throw CurateError("cannot create output directory " + dir);
}

}  // namespace curate::cli
