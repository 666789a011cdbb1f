#include "curate/report.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>

#include "curate/error.hpp"
#include "curate/hashing.hpp"

namespace curate {

namespace fs = std::filesystem;

std::string digest_path(const std::string& path) {
  if (!fs::is_directory(path)) return sha256_file(path);
  std::vector<fs::path> files;
  for (const auto& entry : fs::recursive_directory_iterator(path)) {
    if (entry.is_regular_file()) files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  Sha256 h;
  for (const auto& f : files) {
    h.update(fs::relative(f, path).generic_string());
    h.update("\t");
    h.update(sha256_file(f.string()));
    h.update("\n");
  }
  return h.hex_digest();
}

void Provenance::add_input(const std::string& path) { input_digests[path] = digest_path(path); }

OrderedJson Provenance::to_json() const {
  OrderedJson j;
  j["tool"] = "curate";
  j["tool_version"] = kToolVersion;
  j["command"] = command;
  j["seed"] = seed ? OrderedJson(*seed) : OrderedJson(nullptr);
  j["spec"] = spec;
  OrderedJson inputs = OrderedJson::object();
  for (const auto& [p, d] : input_digests) inputs[p] = d;
  j["input_digests"] = std::move(inputs);
  return j;
}

OrderedJson wrap_artifact(const Provenance& provenance, OrderedJson payload) {
  OrderedJson j;
  j["provenance"] = provenance.to_json();
  j["payload_digest"] = sha256_hex(payload.dump());
  j["payload"] = std::move(payload);
  return j;
}

void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw CurateError("cannot write " + path);
  out << content;
  if (!out) throw CurateError("write failed: " + path);
}

void write_json_file(const std::string& path, const OrderedJson& j) { write_text_file(path, j.dump(2) + "\n"); }

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

}  // namespace curate
