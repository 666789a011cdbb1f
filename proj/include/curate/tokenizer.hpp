#pragma once

#include <cstddef>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

namespace curate {

/// Byte range [begin, end) of one token inside the tokenized text.
struct TokenSpan {
  std::size_t begin = 0;
  std::size_t end = 0;

  friend bool operator==(const TokenSpan&, const TokenSpan&) = default;
};

/// Deterministic text tokenizer. Implementations must be stateless after
/// construction so one instance can be shared across worker threads, and
/// must satisfy: tokenizing any substring cut at token boundaries yields
/// exactly the corresponding sub-sequence of tokens.
class Tokenizer {
 public:
  virtual ~Tokenizer() = default;
  virtual std::string name() const = 0;
  virtual std::vector<TokenSpan> tokenize(std::string_view text) const = 0;
};

/// Maximal runs of word bytes (ASCII alphanumerics, '_' and all non-ASCII
/// UTF-8 bytes) form one token; every ASCII punctuation byte is its own
/// token; whitespace separates tokens and is never part of one.
class WhitespacePunctTokenizer final : public Tokenizer {
 public:
  std::string name() const override { return "whitespace"; }
  std::vector<TokenSpan> tokenize(std::string_view text) const override;
};

/// Every byte is a token (including whitespace).
class ByteTokenizer final : public Tokenizer {
 public:
  std::string name() const override { return "byte"; }
  std::vector<TokenSpan> tokenize(std::string_view text) const override;
};

/// Looks up a built-in tokenizer by name ("whitespace", "byte").
std::unique_ptr<Tokenizer> make_tokenizer(std::string_view name);

}  // namespace curate
