#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "curate/jsonl.hpp"

namespace curate {

inline constexpr std::string_view kToolVersion = "0.1.0";

/// What every emitted artifact records about how it was made.
struct Provenance {
  std::string command;
  std::optional<std::uint64_t> seed;
  OrderedJson spec = OrderedJson::object();
  std::map<std::string, std::string> input_digests;  // path -> sha256

  /// Hashes `path` (a file, or every regular file under a directory) and records it.
  void add_input(const std::string& path);
  OrderedJson to_json() const;
};

/// {"provenance": ..., "payload_digest": sha256 of the payload dump, "payload": ...}
OrderedJson wrap_artifact(const Provenance& provenance, OrderedJson payload);

/// Digest of a file or, for a directory, of "<relative path>\t<file digest>\n"
/// lines over its regular files in sorted order.
std::string digest_path(const std::string& path);

void write_text_file(const std::string& path, const std::string& content);
void write_json_file(const std::string& path, const OrderedJson& j);

/// Quotes a CSV field when it holds a comma, quote or newline.
std::string csv_field(const std::string& s);

}  // namespace curate
