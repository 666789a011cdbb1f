#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "curate/jsonl.hpp"

namespace curate {

inline constexpr int kMinLevel = 1;
inline constexpr int kMaxLevel = 5;

/// The fourteen quality criteria, in rating-prompt order.
enum class Criterion : std::uint8_t {
  kAccuracy,
  kCoherence,
  kLanguageConsistency,
  kSemanticDensity,
  kKnowledgeNovelty,
  kTopicFocus,
  kCreativity,
  kProfessionalism,
  kStyleConsistency,
  kGrammaticalDiversity,
  kStructuralStandardization,
  kOriginality,
  kSensitivity,
  kOverallScore,
};

inline constexpr std::size_t kNumCriteria = 14;

inline constexpr std::array<Criterion, kNumCriteria> kAllCriteria = {
    Criterion::kAccuracy,          Criterion::kCoherence,
    Criterion::kLanguageConsistency, Criterion::kSemanticDensity,
    Criterion::kKnowledgeNovelty,  Criterion::kTopicFocus,
    Criterion::kCreativity,        Criterion::kProfessionalism,
    Criterion::kStyleConsistency,  Criterion::kGrammaticalDiversity,
    Criterion::kStructuralStandardization, Criterion::kOriginality,
    Criterion::kSensitivity,       Criterion::kOverallScore,
};

constexpr std::size_t to_index(Criterion c) noexcept { return static_cast<std::size_t>(c); }
/// 1-based position in the rating prompt.
constexpr int prompt_index(Criterion c) noexcept { return static_cast<int>(c) + 1; }

std::string_view criterion_key(Criterion c) noexcept;    // "language_consistency"
std::string_view criterion_title(Criterion c) noexcept;  // "Language Consistency"
/// Accepts snake_case or title form, case-insensitively.
std::optional<Criterion> criterion_from_key(std::string_view key) noexcept;
std::optional<Criterion> criterion_from_index(int one_based) noexcept;

/// The fifteen domain types, letter codes A through O.
enum class DomainType : std::uint8_t {
  kMedicine,
  kFinance,
  kLaw,
  kEducation,
  kTechnology,
  kEntertainment,
  kMathematics,
  kCoding,
  kGovernment,
  kCulture,
  kTransportation,
  kRetailECommerce,
  kTelecommunication,
  kAgriculture,
  kOther,
};

inline constexpr std::size_t kNumDomains = 15;

constexpr std::size_t to_index(DomainType d) noexcept { return static_cast<std::size_t>(d); }
char domain_letter(DomainType d) noexcept;
std::string_view domain_name(DomainType d) noexcept;  // "Retail E-commerce"
std::string domain_key(DomainType d);                 // "retail e-commerce"
std::optional<DomainType> domain_from_letter(char c) noexcept;
std::optional<DomainType> domain_from_name(std::string_view name) noexcept;
/// Letter code or case-insensitive name.
std::optional<DomainType> parse_domain(std::string_view token) noexcept;

/// Ratings and domain for one document. Fields are optional so that
/// incomplete records can be represented and reported by validate().
struct AnnotationRecord {
  std::string doc_id;
  std::array<std::optional<int>, kNumCriteria> ratings{};
  std::optional<DomainType> domain;

  /// Level of a present criterion; throws CurateError when missing.
  int level(Criterion c) const;
  void set(Criterion c, int level) { ratings[to_index(c)] = level; }

  friend bool operator==(const AnnotationRecord&, const AnnotationRecord&) = default;
};

/// Every invariant violation of the record; empty means valid.
std::vector<std::string> validate(const AnnotationRecord& record);

/// annotations.jsonl line object.
OrderedJson to_json(const AnnotationRecord& record);
/// Parses an annotations.jsonl object. Missing or out-of-range fields leave
/// the record incomplete (use validate); structurally wrong JSON throws.
AnnotationRecord annotation_from_json(const Json& j);

enum class PromptMode { kFull, kAllRating, kScoreOnly, kDomainOnly };

std::string_view prompt_mode_name(PromptMode mode) noexcept;  // "all_rating"
std::optional<PromptMode> prompt_mode_from_name(std::string_view name) noexcept;

/// User prompt for the mode with `text` substituted for the placeholder.
std::string render_prompt(PromptMode mode, std::string_view text);
/// Unsubstituted template (contains the literal "{text}").
std::string_view prompt_template(PromptMode mode) noexcept;
/// System prompt paired with the full prompt; empty for the chat modes.
std::string_view system_prompt(PromptMode mode) noexcept;

/// The two rater output dialects the parser accepts.
enum class OutputDialect {
  kBracketed,  // "Domain:J\n[1]Accuracy:5/5\n..."
  kFlat,       // "accuracy: 5 coherence: 4 ... domain: culture"
};

/// Renders a complete record the way a rater would emit it.
std::string render_rater_output(const AnnotationRecord& record, OutputDialect dialect);

struct ParseError {
  enum class Kind { kMissingField, kOutOfRange, kNonInteger, kMalformed, kUnknownDomain, kDuplicateField };
  Kind kind = Kind::kMalformed;
  std::string field;
  std::string message;
};

template <class T>
struct Parsed {
  std::optional<T> value;
  ParseError error;

  explicit operator bool() const noexcept { return value.has_value(); }
};

/// Parses all-rating output in either dialect into a validated record.
Parsed<AnnotationRecord> parse_all_rating(std::string_view output, std::string_view doc_id);
/// Parses a single overall score ("4", "Overall Score: 4/5", ...).
Parsed<int> parse_score_only(std::string_view output);
/// Parses a single domain ("J", "culture", "Domain: [J]Culture", ...).
Parsed<DomainType> parse_domain_only(std::string_view output);

}  // namespace curate
