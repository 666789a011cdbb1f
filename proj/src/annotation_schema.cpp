#include "curate/annotation_schema.hpp"

#include <algorithm>
#include <cctype>

#include "curate/error.hpp"

namespace curate {

namespace {

struct CriterionInfo {
  std::string_view key;
  std::string_view title;
  std::string_view definition;
};

constexpr std::array<CriterionInfo, kNumCriteria> kCriterionInfo = {{
    {"accuracy", "Accuracy",
     "the fewer grammar, referential, and spelling errors the text contains, and the more accurate its expression. "},
    {"coherence", "Coherence", "the more fluent the content is expressed, and the stronger its logical coherence. "},
    {"language_consistency", "Language Consistency",
     "the more consistent the use of language in the text, with less mixing of languages. "},
    {"semantic_density", "Semantic Density",
     "the greater the proportion of valid information in the text, with less irrelevant or redundant information. "},
    {"knowledge_novelty", "Knowledge Novelty",
     "the more novel and cutting-edge the knowledge provided by the text, with more insightful views on the industry "
     "or topic. "},
    {"topic_focus", "Topic Focus",
     "the more the text content focuses on the topic, with less deviation from the main theme. "},
    {"creativity", "Creativity", "the more creative elements are shown in the text's expression. "},
    {"professionalism", "Professionalism",
     "the more professional terminology appears in the text, with more accurate use of terms and more professional "
     "domain-specific expression. "},
    {"style_consistency", "Style Consistency",
     "the more consistent the style of the text, with proper and appropriate style transitions. "},
    {"grammatical_diversity", "Grammatical Diversity",
     "the more varied and correct the grammatical structures used in the text, showing a richer language expression "
     "ability. "},
    {"structural_standardization", "Structural Standardization",
     "the clearer the structure followed by the text and the more standardized its format. "},
    {"originality", "Originality", "the fewer repetitions and similar content in the text. "},
    {"sensitivity", "Sensitivity",
     "the more appropriately sensitive topics are handled in the text, with less inappropriate content. "},
    {"overall_score", "Overall Score",
     "the better the comprehensive evaluation of the text, with superior performance in all aspects."},
}};

constexpr std::array<std::string_view, kNumDomains> kDomainNames = {
    "Medicine",   "Finance",        "Law",          "Education",         "Technology",
    "Entertainment", "Mathematics", "Coding",       "Government",        "Culture",
    "Transportation", "Retail E-commerce", "Telecommunication", "Agriculture", "Other",
};

constexpr std::string_view kSystemPrompt =
    "You are an expert to evaluate the text quality with high accuracy and confidence. Don't hesitate to use the full "
    "range of the score scale, including extreme scores if the text warrants it.";

constexpr std::string_view kPlaceholder = "{text}";

std::string build_full_template() {
  std::string s =
      "Please carefully read and analyze the following text, score it based on fourteen evaluation criteria and their "
      "respective scoring definitions. Additionally, select the most appropriate category from the fifteen domain "
      "types that best matches the content of the text. Let's think step by step.\n\n"
      "Text:{text}\n\n"
      "Domain Types:\n";
  for (std::size_t d = 0; d < kNumDomains; ++d) {
    if (d > 0) s += ' ';
    s += '[';
    s += static_cast<char>('A' + d);
    s += ']';
    s += kDomainNames[d];
  }
  s += "\n\nThe Higher The Score, The Evaluation Criteria:";
  for (Criterion c : kAllCriteria) {
    const auto& info = kCriterionInfo[to_index(c)];
    s += "\n\n[" + std::to_string(prompt_index(c)) + "]";
    s += info.title;
    s += ": ";
    s += info.definition;
    s += "_/5";
  }
  return s;
}

std::string build_all_rating_template() {
  std::string s =
      "Please score the text on fourteen evaluation criteria and specify its domain:\n"
      "Text: {text}\n"
      "Domain:_";
  for (Criterion c : kAllCriteria) {
    s += "\n[" + std::to_string(prompt_index(c)) + "]";
    s += kCriterionInfo[to_index(c)].title;
    s += ":_/5";
  }
  return s;
}

const std::string& full_template() {
  static const std::string t = build_full_template();
  return t;
}

const std::string& all_rating_template() {
  static const std::string t = build_all_rating_template();
  return t;
}

constexpr std::string_view kScoreOnlyTemplate =
    "Please give an overall score for the text:\n"
    "Text: {text}\n"
    "Overall Score:_/5";

constexpr std::string_view kDomainOnlyTemplate =
    "Please specify an domain type for the text:\n"
    "Text: {text}\n"
    "Domain:_";

char lower(char c) noexcept { return static_cast<char>(std::tolower(static_cast<unsigned char>(c))); }

bool is_space(char c) noexcept { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\v' || c == '\f'; }

bool is_alnum(char c) noexcept { return std::isalnum(static_cast<unsigned char>(c)) != 0; }

// Case-insensitive match of a label at `pos`, where any '_' or ' ' in the
// label matches a run of whitespace/underscores in the text. Returns the
// end position on success.
std::optional<std::size_t> match_label(std::string_view text, std::size_t pos, std::string_view label) {
  std::size_t i = pos;
  for (std::size_t k = 0; k < label.size(); ++k) {
    const char lc = label[k];
    if (lc == '_' || lc == ' ') {
      const std::size_t start = i;
      while (i < text.size() && (text[i] == '_' || text[i] == ' ' || text[i] == '\t')) ++i;
      if (i == start) return std::nullopt;
    } else {
      if (i >= text.size() || lower(text[i]) != lower(lc)) return std::nullopt;
      ++i;
    }
  }
  if (i < text.size() && is_alnum(text[i])) return std::nullopt;
  return i;
}

std::size_t skip_space(std::string_view text, std::size_t pos) {
  while (pos < text.size() && is_space(text[pos])) ++pos;
  return pos;
}

std::string_view token_at(std::string_view text, std::size_t pos) {
  std::size_t end = pos;
  while (end < text.size() && !is_space(text[end])) ++end;
  return text.substr(pos, end - pos);
}

ParseError make_error(ParseError::Kind kind, std::string field, std::string message) {
  return ParseError{kind, std::move(field), std::move(message)};
}

struct LevelValue {
  std::optional<int> level;
  std::optional<ParseError> error;
  std::size_t end = 0;
};

// Parses "<int>" optionally followed by "/5".
LevelValue parse_level_value(std::string_view text, std::size_t pos, std::string_view field) {
  LevelValue out;
  pos = skip_space(text, pos);
  std::size_t end = pos;
  while (end < text.size() && (std::isdigit(static_cast<unsigned char>(text[end])) || text[end] == '.' ||
                               text[end] == '-' || text[end] == '+')) {
    ++end;
  }
  const std::string_view num = text.substr(pos, end - pos);
  const bool has_digit = std::any_of(num.begin(), num.end(), [](char c) { return std::isdigit(static_cast<unsigned char>(c)); });
  if (num.empty() || !has_digit) {
    std::string tok(token_at(text, pos));
    out.error = make_error(ParseError::Kind::kMalformed, std::string(field),
                           "invalid level: " + std::string(field) + "=" + tok);
    return out;
  }
  if (num.find('.') != std::string_view::npos) {
    out.error = make_error(ParseError::Kind::kNonInteger, std::string(field),
                           "non-integer level: " + std::string(field) + "=" + std::string(num));
    return out;
  }
  long value = 0;
  try {
    value = std::stol(std::string(num));
  } catch (const std::exception&) {
    out.error = make_error(ParseError::Kind::kMalformed, std::string(field),
                           "invalid level: " + std::string(field) + "=" + std::string(num));
    return out;
  }
  std::size_t after = skip_space(text, end);
  if (after < text.size() && text[after] == '/') {
    std::size_t scale = skip_space(text, after + 1);
    if (scale < text.size() && text[scale] == '5' && (scale + 1 >= text.size() || !is_alnum(text[scale + 1]))) {
      end = scale + 1;
    } else {
      out.error = make_error(ParseError::Kind::kMalformed, std::string(field),
                             "invalid scale: " + std::string(field) + "=" + std::string(token_at(text, pos)));
      return out;
    }
  }
  if (value < kMinLevel || value > kMaxLevel) {
    out.error = make_error(ParseError::Kind::kOutOfRange, std::string(field),
                           "level out of range: " + std::string(field) + "=" + std::string(num));
    return out;
  }
  out.level = static_cast<int>(value);
  out.end = end;
  return out;
}

struct DomainValue {
  std::optional<DomainType> domain;
  std::optional<ParseError> error;
  std::size_t end = 0;
};

// Domain names ordered longest first so "Retail E-commerce" wins over shorter
// names sharing a prefix.
const std::vector<DomainType>& domains_by_name_length() {
  static const std::vector<DomainType> order = [] {
    std::vector<DomainType> v;
    for (std::size_t d = 0; d < kNumDomains; ++d) v.push_back(static_cast<DomainType>(d));
    std::stable_sort(v.begin(), v.end(), [](DomainType a, DomainType b) {
      return domain_name(a).size() > domain_name(b).size();
    });
    return v;
  }();
  return order;
}

std::optional<std::pair<DomainType, std::size_t>> match_domain_name(std::string_view text, std::size_t pos) {
  for (DomainType d : domains_by_name_length()) {
    if (auto end = match_label(text, pos, domain_name(d))) return std::make_pair(d, *end);
  }
  return std::nullopt;
}

DomainValue parse_domain_value(std::string_view text, std::size_t pos) {
  DomainValue out;
  pos = skip_space(text, pos);
  std::optional<DomainType> from_letter;
  // "[J]" prefix, optionally followed by the name.
  if (pos + 2 < text.size() && text[pos] == '[' && text[pos + 2] == ']') {
    from_letter = domain_from_letter(text[pos + 1]);
    if (from_letter) pos += 3;
  }
  if (auto named = match_domain_name(text, pos)) {
    if (from_letter && *from_letter != named->first) {
      out.error = make_error(ParseError::Kind::kUnknownDomain, "domain",
                             "conflicting domain: " + std::string(token_at(text, pos)));
      return out;
    }
    out.domain = named->first;
    out.end = named->second;
    return out;
  }
  if (from_letter) {
    out.domain = from_letter;
    out.end = pos;
    return out;
  }
  if (pos < text.size() && (pos + 1 >= text.size() || !is_alnum(text[pos + 1]))) {
    if (auto d = domain_from_letter(text[pos])) {
      out.domain = d;
      out.end = pos + 1;
      return out;
    }
  }
  std::string tok(token_at(text, pos));
  out.error = make_error(ParseError::Kind::kUnknownDomain, "domain", "unknown domain: " + tok);
  return out;
}

// Skips an optional "[<digits>]" prefix; returns the position after it.
std::size_t skip_bracket_index(std::string_view text, std::size_t pos) {
  if (pos >= text.size() || text[pos] != '[') return pos;
  std::size_t i = pos + 1;
  const std::size_t digits_start = i;
  while (i < text.size() && std::isdigit(static_cast<unsigned char>(text[i]))) ++i;
  if (i == digits_start || i >= text.size() || text[i] != ']') return pos;
  return skip_space(text, i + 1);
}

// Matches "<label> :" at pos. Returns the position after the colon.
std::optional<std::size_t> match_field(std::string_view text, std::size_t pos, std::string_view label) {
  auto end = match_label(text, pos, label);
  if (!end) return std::nullopt;
  std::size_t p = skip_space(text, *end);
  if (p < text.size() && text[p] == ':') return p + 1;
  return std::nullopt;
}

}  // namespace

std::string_view criterion_key(Criterion c) noexcept { return kCriterionInfo[to_index(c)].key; }
std::string_view criterion_title(Criterion c) noexcept { return kCriterionInfo[to_index(c)].title; }

std::optional<Criterion> criterion_from_key(std::string_view key) noexcept {
  for (Criterion c : kAllCriteria) {
    auto end = match_label(key, 0, criterion_key(c));
    if (end && *end == key.size()) return c;
  }
  return std::nullopt;
}

std::optional<Criterion> criterion_from_index(int one_based) noexcept {
  if (one_based < 1 || one_based > static_cast<int>(kNumCriteria)) return std::nullopt;
  return static_cast<Criterion>(one_based - 1);
}

char domain_letter(DomainType d) noexcept { return static_cast<char>('A' + to_index(d)); }
std::string_view domain_name(DomainType d) noexcept { return kDomainNames[to_index(d)]; }

std::string domain_key(DomainType d) {
  std::string s(domain_name(d));
  for (char& c : s) c = lower(c);
  return s;
}

std::optional<DomainType> domain_from_letter(char c) noexcept {
  const char u = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  if (u < 'A' || u >= static_cast<char>('A' + kNumDomains)) return std::nullopt;
  return static_cast<DomainType>(u - 'A');
}

std::optional<DomainType> domain_from_name(std::string_view name) noexcept {
  for (std::size_t d = 0; d < kNumDomains; ++d) {
    auto end = match_label(name, 0, kDomainNames[d]);
    if (end && *end == name.size()) return static_cast<DomainType>(d);
  }
  return std::nullopt;
}

std::optional<DomainType> parse_domain(std::string_view token) noexcept {
  if (token.size() == 1) return domain_from_letter(token[0]);
  return domain_from_name(token);
}

int AnnotationRecord::level(Criterion c) const {
  const auto& v = ratings[to_index(c)];
  if (!v) throw CurateError("record " + doc_id + " has no " + std::string(criterion_key(c)) + " rating");
  return *v;
}

std::vector<std::string> validate(const AnnotationRecord& record) {
  std::vector<std::string> out;
  if (record.doc_id.empty()) out.emplace_back("empty doc_id");
  for (Criterion c : kAllCriteria) {
    const auto& v = record.ratings[to_index(c)];
    if (!v) {
      out.push_back("missing criterion: " + std::string(criterion_key(c)));
    } else if (*v < kMinLevel || *v > kMaxLevel) {
      out.push_back("level out of range: " + std::string(criterion_key(c)) + "=" + std::to_string(*v));
    }
  }
  if (!record.domain) out.emplace_back("missing field: domain");
  return out;
}

OrderedJson to_json(const AnnotationRecord& record) {
  OrderedJson j;
  j["id"] = record.doc_id;
  j["domain"] = record.domain ? Json(domain_key(*record.domain)) : Json(nullptr);
  OrderedJson ratings = OrderedJson::object();
  for (Criterion c : kAllCriteria) {
    const auto& v = record.ratings[to_index(c)];
    if (v) ratings[std::string(criterion_key(c))] = *v;
  }
  j["ratings"] = std::move(ratings);
  return j;
}

AnnotationRecord annotation_from_json(const Json& j) {
  if (!j.is_object()) throw CurateError("annotation line is not a JSON object");
  AnnotationRecord r;
  const auto id = j.find("id");
  if (id == j.end() || !id->is_string()) throw CurateError("annotation has no string id");
  r.doc_id = id->get<std::string>();
  const auto dom = j.find("domain");
  if (dom != j.end() && !dom->is_null()) {
    if (!dom->is_string()) throw CurateError("domain is not a string");
    r.domain = parse_domain(dom->get<std::string>());
    if (!r.domain) throw CurateError("unknown domain: " + dom->get<std::string>());
  }
  const auto ratings = j.find("ratings");
  if (ratings == j.end() || !ratings->is_object()) throw CurateError("annotation has no ratings object");
  for (const auto& [key, value] : ratings->items()) {
    const auto c = criterion_from_key(key);
    if (!c) throw CurateError("unknown criterion: " + key);
    if (!value.is_number_integer()) throw CurateError("non-integer level: " + key + "=" + value.dump());
    r.ratings[to_index(*c)] = value.get<int>();
  }
  return r;
}

std::string_view prompt_mode_name(PromptMode mode) noexcept {
  switch (mode) {
    case PromptMode::kFull: return "full";
    case PromptMode::kAllRating: return "all_rating";
    case PromptMode::kScoreOnly: return "score_only";
    case PromptMode::kDomainOnly: return "domain_only";
  }
  return "";
}

std::optional<PromptMode> prompt_mode_from_name(std::string_view name) noexcept {
  for (PromptMode m : {PromptMode::kFull, PromptMode::kAllRating, PromptMode::kScoreOnly, PromptMode::kDomainOnly}) {
    if (name == prompt_mode_name(m)) return m;
  }
  if (name == "all-rating") return PromptMode::kAllRating;
  if (name == "score-only") return PromptMode::kScoreOnly;
  if (name == "domain-only") return PromptMode::kDomainOnly;
  return std::nullopt;
}

std::string_view prompt_template(PromptMode mode) noexcept {
  switch (mode) {
    case PromptMode::kFull: return full_template();
    case PromptMode::kAllRating: return all_rating_template();
    case PromptMode::kScoreOnly: return kScoreOnlyTemplate;
    case PromptMode::kDomainOnly: return kDomainOnlyTemplate;
  }
  return {};
}

std::string render_prompt(PromptMode mode, std::string_view text) {
  const std::string_view tpl = prompt_template(mode);
  const std::size_t at = tpl.find(kPlaceholder);
  std::string out;
  out.reserve(tpl.size() + text.size());
  out.append(tpl.substr(0, at));
  out.append(text);
  out.append(tpl.substr(at + kPlaceholder.size()));
  return out;
}

std::string_view system_prompt(PromptMode mode) noexcept {
  return mode == PromptMode::kFull ? kSystemPrompt : std::string_view{};
}

std::string render_rater_output(const AnnotationRecord& record, OutputDialect dialect) {
  std::string out;
  if (dialect == OutputDialect::kBracketed) {
    out += "Domain:";
    if (record.domain) out += domain_letter(*record.domain);
    for (Criterion c : kAllCriteria) {
      out += "\n[" + std::to_string(prompt_index(c)) + "]";
      out += criterion_title(c);
      out += ':';
      out += std::to_string(record.level(c));
      out += "/5";
    }
    return out;
  }
  for (Criterion c : kAllCriteria) {
    out += criterion_key(c);
    out += ": ";
    out += std::to_string(record.level(c));
    out += ' ';
  }
  out += "domain: ";
  if (record.domain) out += domain_key(*record.domain);
  return out;
}

Parsed<AnnotationRecord> parse_all_rating(std::string_view output, std::string_view doc_id) {
  Parsed<AnnotationRecord> result;
  AnnotationRecord rec;
  rec.doc_id = std::string(doc_id);
  std::size_t pos = 0;
  while (pos < output.size()) {
    pos = skip_space(output, pos);
    if (pos >= output.size()) break;
    const std::size_t field_start = skip_bracket_index(output, pos);
    bool matched = false;
    if (auto after = match_field(output, field_start, "domain")) {
      if (rec.domain) {
        result.error = make_error(ParseError::Kind::kDuplicateField, "domain", "duplicate field: domain");
        return result;
      }
      DomainValue dv = parse_domain_value(output, *after);
      if (dv.error) {
        result.error = *dv.error;
        return result;
      }
      rec.domain = dv.domain;
      pos = dv.end;
      matched = true;
    } else {
      for (Criterion c : kAllCriteria) {
        auto after = match_field(output, field_start, criterion_key(c));
        if (!after) continue;
        const std::string key(criterion_key(c));
        if (rec.ratings[to_index(c)]) {
          result.error = make_error(ParseError::Kind::kDuplicateField, key, "duplicate field: " + key);
          return result;
        }
        LevelValue lv = parse_level_value(output, *after, key);
        if (lv.error) {
          result.error = *lv.error;
          return result;
        }
        rec.ratings[to_index(c)] = lv.level;
        pos = lv.end;
        matched = true;
        break;
      }
    }
    if (!matched) {
      // Unrecognized text: skip one whitespace-delimited token.
      pos += std::max<std::size_t>(1, token_at(output, pos).size());
    }
  }
  for (Criterion c : kAllCriteria) {
    if (!rec.ratings[to_index(c)]) {
      const std::string key(criterion_key(c));
      result.error = make_error(ParseError::Kind::kMissingField, key, "missing criterion: " + key);
      return result;
    }
  }
  if (!rec.domain) {
    result.error = make_error(ParseError::Kind::kMissingField, "domain", "missing field: domain");
    return result;
  }
  result.value = std::move(rec);
  return result;
}

Parsed<int> parse_score_only(std::string_view output) {
  Parsed<int> result;
  std::size_t pos = skip_space(output, 0);
  if (auto after = match_field(output, skip_bracket_index(output, pos), "overall_score")) pos = *after;
  LevelValue lv = parse_level_value(output, pos, "overall_score");
  if (lv.error) {
    result.error = *lv.error;
    return result;
  }
  if (skip_space(output, lv.end) != output.size()) {
    result.error = make_error(ParseError::Kind::kMalformed, "overall_score",
                              "trailing text after score: " + std::string(token_at(output, skip_space(output, lv.end))));
    return result;
  }
  result.value = lv.level;
  return result;
}

Parsed<DomainType> parse_domain_only(std::string_view output) {
  Parsed<DomainType> result;
  std::size_t pos = skip_space(output, 0);
  if (auto after = match_field(output, pos, "domain")) pos = *after;
  DomainValue dv = parse_domain_value(output, pos);
  if (dv.error) {
    result.error = *dv.error;
    return result;
  }
  if (skip_space(output, dv.end) != output.size()) {
    result.error = make_error(ParseError::Kind::kMalformed, "domain",
                              "trailing text after domain: " + std::string(token_at(output, skip_space(output, dv.end))));
    return result;
  }
  result.value = dv.domain;
  return result;
}

}  // namespace curate
