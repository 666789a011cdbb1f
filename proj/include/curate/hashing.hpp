#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace curate {

// 64-bit FNV-1a over raw bytes.
std::uint64_t fnv1a64(std::string_view bytes) noexcept;

// SplitMix64 finalizer; a bijection on 64-bit words with full avalanche.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Keyed pseudorandom function used for every per-document random draw.
///
/// The output depends only on (seed, stratum, doc_id), never on evaluation
/// order, so selections are reproducible under any parallel schedule.
class Prf {
 public:
  static constexpr std::string_view kName = "splitmix64-chain/fnv1a64-v1";

  static std::uint64_t tag(std::string_view s) noexcept { return mix64(fnv1a64(s)); }

  static std::uint64_t bits(std::uint64_t seed, std::uint64_t stratum_tag,
                            std::uint64_t doc_tag) noexcept {
    std::uint64_t h = mix64(seed ^ 0x5bd1e9955bd1e995ULL);
    h = mix64(h ^ stratum_tag);
    return mix64(h ^ doc_tag);
  }

  // Uniform in the open interval (0, 1): 53 random bits, offset by half a step.
  static double uniform(std::uint64_t seed, std::uint64_t stratum_tag,
                        std::uint64_t doc_tag) noexcept {
    const std::uint64_t b = bits(seed, stratum_tag, doc_tag) >> 11;
    return (static_cast<double>(b) + 0.5) * 0x1.0p-53;
  }
};

// Lowercase hex SHA-256 of a byte string.
std::string sha256_hex(std::string_view bytes);

// SHA-256 of a file's contents; throws CurateError if it cannot be read.
std::string sha256_file(const std::string& path);

// Incremental SHA-256.
class Sha256 {
 public:
  Sha256();
  ~Sha256();
  Sha256(const Sha256&) = delete;
  Sha256& operator=(const Sha256&) = delete;

  void update(std::string_view bytes);
  std::string hex_digest();

 private:
  void* ctx_;
};

}  // namespace curate
