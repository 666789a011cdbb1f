#include "curate/tokenizer.hpp"

#include "curate/error.hpp"

namespace curate {

namespace {

enum class ByteClass { kSpace, kPunct, kWord };

ByteClass classify(unsigned char c) noexcept {
  if (c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\v' || c == '\f') return ByteClass::kSpace;
  if (c >= 0x80) return ByteClass::kWord;
  if ((c >= '0' && c <= '9') || (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || c == '_') return ByteClass::kWord;
  if (c < 0x20 || c == 0x7f) return ByteClass::kSpace;
  return ByteClass::kPunct;
}

}  // namespace

std::vector<TokenSpan> WhitespacePunctTokenizer::tokenize(std::string_view text) const {
  std::vector<TokenSpan> out;
  std::size_t i = 0;
  const std::size_t n = text.size();
  while (i < n) {
    const ByteClass cls = classify(static_cast<unsigned char>(text[i]));
    if (cls == ByteClass::kSpace) {
      ++i;
    } else if (cls == ByteClass::kPunct) {
      out.push_back({i, i + 1});
      ++i;
    } else {
      const std::size_t start = i;
      while (i < n && classify(static_cast<unsigned char>(text[i])) == ByteClass::kWord) ++i;
      out.push_back({start, i});
    }
  }
  return out;
}

std::vector<TokenSpan> ByteTokenizer::tokenize(std::string_view text) const {
  std::vector<TokenSpan> out(text.size());
  for (std::size_t i = 0; i < text.size(); ++i) out[i] = {i, i + 1};
  return out;
}

std::unique_ptr<Tokenizer> make_tokenizer(std::string_view name) {
  if (name == "whitespace") return std::make_unique<WhitespacePunctTokenizer>();
  if (name == "byte") return std::make_unique<ByteTokenizer>();
  throw CurateError("unknown tokenizer: " + std::string(name));
}

}  // namespace curate
