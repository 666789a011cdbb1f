#include "curate/jsonl.hpp"

#include <zlib.h>

#include <array>
#include <cstring>

#include "curate/error.hpp"

namespace curate {

struct LineReader::Impl {
  gzFile file = nullptr;
  std::array<char, 1 << 16> buf{};
  std::size_t pos = 0;
  std::size_t len = 0;
  bool eof = false;

  bool fill() {
    if (eof) return false;
    const int n = gzread(file, buf.data(), static_cast<unsigned>(buf.size()));
    if (n < 0) {
      int err = 0;
      throw CurateError(std::string("read error: ") + gzerror(file, &err));
    }
    if (n == 0) {
      eof = true;
      return false;
    }
    pos = 0;
    len = static_cast<std::size_t>(n);
    return true;
  }
};

// gzopen reads uncompressed files transparently, so one code path covers both.
LineReader::LineReader(const std::string& path) : impl_(std::make_unique<Impl>()) {
  impl_->file = gzopen(path.c_str(), "rb");
  if (impl_->file == nullptr) throw CurateError("cannot open file: " + path);
  gzbuffer(impl_->file, 1 << 17);
}

LineReader::~LineReader() {
  if (impl_ && impl_->file != nullptr) gzclose(impl_->file);
}

LineReader::LineReader(LineReader&&) noexcept = default;
LineReader& LineReader::operator=(LineReader&&) noexcept = default;

bool LineReader::next(std::string& line) {
  line.clear();
  bool any = false;
  line_offset_ = next_offset_;
  while (true) {
    if (impl_->pos >= impl_->len && !impl_->fill()) break;
    any = true;
    const char* begin = impl_->buf.data() + impl_->pos;
    const std::size_t avail = impl_->len - impl_->pos;
    const void* nl = std::memchr(begin, '\n', avail);
    if (nl != nullptr) {
      const auto n = static_cast<std::size_t>(static_cast<const char*>(nl) - begin);
      line.append(begin, n);
      impl_->pos += n + 1;
      next_offset_ += n + 1;
      ++line_no_;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      return true;
    }
    line.append(begin, avail);
    impl_->pos = impl_->len;
    next_offset_ += avail;
  }
  if (!any && line.empty()) return false;
  ++line_no_;
  if (!line.empty() && line.back() == '\r') line.pop_back();
  return true;
}

bool is_blank(const std::string& line) noexcept {
  for (char c : line) {
    if (c != ' ' && c != '\t' && c != '\r' && c != '\n') return false;
  }
  return true;
}

}  // namespace curate
