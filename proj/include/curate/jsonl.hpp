#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

namespace curate {

using Json = nlohmann::json;
using OrderedJson = nlohmann::ordered_json;

/// Reads a text file line by line, transparently decompressing `.gz` input.
class LineReader {
 public:
  explicit LineReader(const std::string& path);
  ~LineReader();
  LineReader(LineReader&&) noexcept;
  LineReader& operator=(LineReader&&) noexcept;

  /// Next line without its terminator; false at end of file.
  bool next(std::string& line);
  /// 1-based number of the line last returned.
  std::uint64_t line_number() const noexcept { return line_no_; }
  /// Byte offset (in the decompressed stream) where the last line began.
  std::uint64_t line_offset() const noexcept { return line_offset_; }

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
  std::uint64_t line_no_ = 0;
  std::uint64_t line_offset_ = 0;
  std::uint64_t next_offset_ = 0;
};

/// One per-line problem found while reading an input file.
struct Diagnostic {
  std::string path;
  std::uint64_t line = 0;
  std::string message;
};

struct ReadSummary {
  std::uint64_t lines_read = 0;
  std::uint64_t records = 0;
  std::uint64_t skipped = 0;
  std::vector<Diagnostic> diagnostics;
};

bool is_blank(const std::string& line) noexcept;

}  // namespace curate
