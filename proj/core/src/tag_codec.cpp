#include "hitl/tag_codec.hpp"

#include "hitl/error.hpp"
#include "hitl/text_util.hpp"

#include <algorithm>
#include <charconv>
#include <map>
#include <set>

namespace hitl {

using nlohmann::json;

namespace {

std::size_t count_occurrences(std::string_view haystack, std::string_view needle) {
  std::size_t n = 0;
  for (auto pos = haystack.find(needle); pos != std::string_view::npos;
       pos = haystack.find(needle, pos + needle.size()))
    ++n;
  return n;
}

std::string first_block_trimmed(std::string_view text, std::string_view tag,
                                bool &found) {
  auto scan = extract_blocks(text, tag);
  found = !scan.blocks.empty();
  return found ? std::string(text::trim(scan.blocks.front())) : std::string{};
}

bool is_digit(char c) { return c >= '0' && c <= '9'; }

// (index, trimmed content) for every closed <quoteN>...</quoteN>.
std::vector<std::pair<long, std::string>> scan_numbered_quotes(std::string_view region) {
  std::vector<std::pair<long, std::string>> out;
  std::size_t pos = 0;
  while ((pos = region.find("<quote", pos)) != std::string_view::npos) {
    std::size_t d = pos + 6;
    std::size_t e = d;
    while (e < region.size() && is_digit(region[e]))
      ++e;
    if (e == d || e >= region.size() || region[e] != '>') {
      pos = d;
      continue;
    }
    auto digits = region.substr(d, e - d);
    std::string close = "</quote" + std::string(digits) + ">";
    auto c = region.find(close, e + 1);
    if (c == std::string_view::npos) {
      pos = e + 1;
      continue;
    }
    long index = 0;
    std::from_chars(digits.data(), digits.data() + digits.size(), index);
    out.emplace_back(index, std::string(text::trim(region.substr(e + 1, c - e - 1))));
    pos = c + close.size();
  }
  return out;
}

// Byte offset where a JSON value starts, preferring a ``` fenced block.
std::optional<std::size_t> structured_start(std::string_view text) {
  std::size_t lo = 0;
  std::size_t hi = text.size();
  if (auto fence = text.find("```"); fence != std::string_view::npos) {
    auto body = text.find('\n', fence);
    if (body != std::string_view::npos) {
      auto end = text.find("```", body);
      std::string_view inner = text.substr(body, (end == std::string_view::npos ? hi : end) - body);
      if (inner.find_first_of("{[") != std::string_view::npos) {
        lo = body;
        hi = end == std::string_view::npos ? text.size() : end;
      }
    }
  }
  auto region = text.substr(lo, hi - lo);
  auto brace = region.find('{');
  auto bracket = region.find('[');
  if (bracket != std::string_view::npos &&
      (brace == std::string_view::npos || bracket < brace)) {
    auto next = region.find_first_not_of(" \t\r\n", bracket + 1);
    if (next != std::string_view::npos && region[next] == '{')
      return lo + bracket;
  }
  if (brace != std::string_view::npos)
    return lo + brace;
  return std::nullopt;
}

// End (exclusive) of the bracketed value starting at `start`, honoring JSON
// string escapes; npos when unbalanced.
std::size_t matching_close(std::string_view text, std::size_t start) {
  std::vector<char> stack;
  bool in_string = false;
  for (std::size_t i = start; i < text.size(); ++i) {
    char c = text[i];
    if (in_string) {
      if (c == '\\')
        ++i;
      else if (c == '"')
        in_string = false;
      continue;
    }
    if (c == '"') {
      in_string = true;
    } else if (c == '{' || c == '[') {
      stack.push_back(c == '{' ? '}' : ']');
    } else if (c == '}' || c == ']') {
      if (stack.empty() || stack.back() != c)
        return std::string_view::npos;
      stack.pop_back();
      if (stack.empty())
        return i + 1;
    }
  }
  return std::string_view::npos;
}

std::string json_text(const json &j) {
  if (j.is_string())
    return j.get<std::string>();
  if (j.is_null())
    return {};
  return j.dump();
}

std::vector<std::string> json_text_list(const json &j) {
  std::vector<std::string> out;
  if (j.is_array()) {
    for (const auto &e : j)
      out.push_back(json_text(e));
  } else if (!j.is_null()) {
    out.push_back(json_text(j));
  }
  return out;
}

struct NormalizedText {
  std::string text;
  std::vector<std::size_t> origin; // origin[i] = byte offset in the source
};

NormalizedText normalize_with_map(std::string_view s) {
  NormalizedText out;
  out.text.reserve(s.size());
  out.origin.reserve(s.size());
  bool pending = false;
  std::size_t pending_at = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    char c = s[i];
    if (c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v') {
      if (!pending) {
        pending_at = i;
        pending = !out.text.empty();
      }
      continue;
    }
    if (pending) {
      out.text.push_back(' ');
      out.origin.push_back(pending_at);
      pending = false;
    }
    out.text.push_back(c);
    out.origin.push_back(i);
  }
  return out;
}

std::vector<std::string> split_on_ellipsis(std::string_view quote) {
  static constexpr std::string_view kUnicodeEllipsis = "\xE2\x80\xA6";
  std::vector<std::string> out;
  std::size_t start = 0;
  std::size_t i = 0;
  while (i < quote.size()) {
    std::size_t skip = 0;
    if (quote.substr(i, 3) == "...") {
      skip = 3;
      while (i + skip < quote.size() && quote[i + skip] == '.')
        ++skip;
    } else if (quote.substr(i, 3) == kUnicodeEllipsis) {
      skip = 3;
    }
    if (skip) {
      out.push_back(text::normalize_whitespace(quote.substr(start, i - start)));
      i += skip;
      start = i;
    } else {
      ++i;
    }
  }
  out.push_back(text::normalize_whitespace(quote.substr(start)));
  std::erase_if(out, [](const std::string &s) { return s.empty(); });
  return out;
}

// Strips one pair of enclosing ASCII or typographic double quotes.
std::optional<std::string_view> unwrap_quotes(std::string_view q) {
  static constexpr std::string_view kOpen = "\xE2\x80\x9C";
  static constexpr std::string_view kClose = "\xE2\x80\x9D";
  if (q.size() >= 2 && q.front() == '"' && q.back() == '"')
    return q.substr(1, q.size() - 2);
  if (q.size() >= 6 && q.starts_with(kOpen) && q.ends_with(kClose))
    return q.substr(3, q.size() - 6);
  return std::nullopt;
}

bool match_segments(const std::vector<std::string> &segments,
                    const NormalizedText &source, std::vector<Span> &spans) {
  spans.clear();
  if (segments.empty())
    return false;
  std::size_t pos = 0;
  for (const auto &seg : segments) {
    auto found = source.text.find(seg, pos);
    if (found == std::string::npos) {
      spans.clear();
      return false;
    }
    std::size_t begin = source.origin[found];
    std::size_t end = source.origin[found + seg.size() - 1] + 1;
    spans.push_back({begin, end - begin});
    pos = found + seg.size();
  }
  return true;
}

} // namespace

BlockScan extract_blocks(std::string_view text, std::string_view tag) {
  BlockScan out;
  if (tag.empty())
    return out;
  const std::string open = "<" + std::string(tag) + ">";
  const std::string close = "</" + std::string(tag) + ">";
  std::size_t pos = 0;
  for (;;) {
    auto o = text.find(open, pos);
    if (o == std::string_view::npos)
      break;
    auto body = o + open.size();
    auto c = text.find(close, body);
    if (c == std::string_view::npos) {
      out.malformed += count_occurrences(text.substr(o), open);
      break;
    }
    auto content = text.substr(body, c - body);
    out.nested += count_occurrences(content, open);
    out.blocks.emplace_back(content);
    out.spans.push_back({body, content.size()});
    pos = c + close.size();
  }
  return out;
}

bool contains_marker(std::string_view text, std::string_view marker) {
  auto needle = text::ascii_lower(text::normalize_whitespace(marker));
  if (needle.empty())
    return false;
  return text::ascii_lower(text::normalize_whitespace(text)).find(needle) !=
         std::string::npos;
}

EvidenceCount count_evidence(std::string_view text, const AbstentionPolicy &policy) {
  auto scan = extract_blocks(text, "evidence");
  return EvidenceCount{scan.blocks.size(),
                       policy.enabled && contains_marker(text, policy.marker),
                       scan.malformed};
}

EvidenceList parse_evidence_list(std::string_view text, const OutputContract &contract) {
  auto scan = extract_blocks(text, "evidence");
  EvidenceList out;
  out.items = std::move(scan.blocks);
  out.malformed = scan.malformed;
  if (contract.abstention && contract.abstention->enabled)
    out.abstained = contains_marker(text, contract.abstention->marker);
  return out;
}

std::string format_evidence_list(const EvidenceList &list, const OutputContract &contract) {
  std::string out;
  for (const auto &item : list.items)
    out += "<evidence>" + item + "</evidence>\n";
  if (list.abstained) {
    out += contract.abstention ? contract.abstention->marker
                               : std::string(kDefaultAbstentionMarker);
    out += '\n';
  }
  return out;
}

TaggedReport parse_element_report(std::string_view text, const OutputContract &contract) {
  TaggedReport report;
  bool found = false;
  report.explanation = first_block_trimmed(text, "explanation", found);
  if (!found)
    throw Error(Errc::missing_explanation, "response has no <explanation> block");

  auto score_text = first_block_trimmed(text, "score", found);
  if (!found)
    throw Error(Errc::missing_score, "response has no <score> block");
  int score = 0;
  auto [ptr, ec] = std::from_chars(score_text.data(), score_text.data() + score_text.size(), score);
  if (score_text.empty() || ec != std::errc{} ||
      ptr != score_text.data() + score_text.size())
    throw Error(Errc::non_integer_score, "score '" + score_text + "' is not an integer");
  auto range = contract.effective_score_range();
  if (!range.contains(score))
    throw Error(Errc::score_out_of_range,
                "score " + std::to_string(score) + " outside [" + std::to_string(range.lo) +
                    "," + std::to_string(range.hi) + "]");
  report.score = score;

  auto quotations = extract_blocks(text, "quotations");
  std::string_view region = quotations.blocks.empty() ? text : std::string_view(quotations.blocks.front());
  auto numbered = scan_numbered_quotes(region);
  std::stable_sort(numbered.begin(), numbered.end(),
                   [](const auto &a, const auto &b) { return a.first < b.first; });
  std::set<long> seen;
  for (auto &[index, quote] : numbered)
    if (seen.insert(index).second)
      report.quotations.push_back(std::move(quote));

  if (report.quotations.empty() && report.score != 0)
    throw Error(Errc::missing_quotations,
                "score " + std::to_string(report.score) + " given without quotations");
  return report;
}

std::vector<TaggedReport> parse_element_reports(std::string_view text,
                                                const OutputContract &contract) {
  static constexpr std::string_view kClose = "</score>";
  std::vector<TaggedReport> out;
  std::size_t start = 0;
  for (;;) {
    auto c = text.find(kClose, start);
    if (c == std::string_view::npos)
      break;
    auto chunk = text.substr(start, c + kClose.size() - start);
    if (chunk.find("<score>") != std::string_view::npos) {
      try {
        out.push_back(parse_element_report(chunk, contract));
      } catch (const Error &e) {
        throw Error(e.code(), "report " + std::to_string(out.size() + 1) + ": " + e.what());
      }
    }
    start = c + kClose.size();
  }
  auto range = contract.enum_range.value_or(IntRange{1, 1});
  if (!range.contains(static_cast<int>(out.size()))) {
    if (out.empty()) {
      // surface the single-report error when nothing parsed at all
      parse_element_report(text, contract);
    }
    throw Error(Errc::cardinality_violation,
                std::to_string(out.size()) + " reports, expected [" +
                    std::to_string(range.lo) + "," + std::to_string(range.hi) + "]");
  }
  return out;
}

std::string format_report(const TaggedReport &report) {
  std::string out = "<explanation>" + report.explanation + "</explanation>\n<quotations>\n";
  for (std::size_t i = 0; i < report.quotations.size(); ++i) {
    auto n = std::to_string(i + 1);
    out += "<quote" + n + ">" + report.quotations[i] + "</quote" + n + ">\n";
  }
  out += "</quotations>\n<score>" + std::to_string(report.score) + "</score>\n";
  return out;
}

std::string format_reports(const std::vector<TaggedReport> &reports) {
  std::string out;
  for (std::size_t i = 0; i < reports.size(); ++i) {
    out += "[" + std::to_string(i + 1) + "]\n";
    out += format_report(reports[i]);
  }
  return out;
}

json extract_structured(std::string_view text) {
  auto start = structured_start(text);
  if (!start)
    throw Error(Errc::no_structured_region, "no JSON object or list found in response");
  auto end = matching_close(text, *start);
  if (end == std::string_view::npos)
    throw Error(Errc::malformed_structure,
                "unbalanced brackets in structure starting at byte " + std::to_string(*start));
  try {
    return json::parse(text.substr(*start, end - *start));
  } catch (const json::parse_error &e) {
    throw Error(Errc::malformed_structure,
                "malformed structure at byte " + std::to_string(*start + e.byte - 1) +
                    ": " + e.what());
  }
}

ElementSchema parse_elements_schema(std::string_view text, IntRange cardinality) {
  json doc = extract_structured(text);
  const json *list = nullptr;
  if (doc.is_array()) {
    list = &doc;
  } else if (doc.is_object()) {
    for (const char *key : {"dimensions", "elements"})
      if (doc.contains(key) && doc[key].is_array()) {
        list = &doc[key];
        break;
      }
  }
  if (!list)
    throw Error(Errc::malformed_structure, "structure has no 'dimensions' list");

  ElementSchema schema;
  std::set<std::string> keys;
  for (std::size_t i = 0; i < list->size(); ++i) {
    const auto &e = (*list)[i];
    if (!e.is_object() || !e.contains("element_key") || e["element_key"].is_null())
      throw Error(Errc::malformed_structure,
                  "element " + std::to_string(i + 1) + " lacks element_key");
    SchemaElement el;
    el.key = json_text(e["element_key"]);
    el.label = e.contains("element_label") ? json_text(e["element_label"]) : std::string{};
    el.definition = e.contains("short_definition") ? json_text(e["short_definition"]) : std::string{};
    if (e.contains("identification_rubric"))
      el.rubric = json_text_list(e["identification_rubric"]);
    if (e.contains("evidence_expectations"))
      el.evidence = json_text_list(e["evidence_expectations"]);
    if (!keys.insert(el.key).second)
      throw Error(Errc::duplicate_key, "element_key '" + el.key + "' appears more than once");
    schema.elements.push_back(std::move(el));
  }
  if (!cardinality.contains(static_cast<int>(schema.elements.size())))
    throw Error(Errc::cardinality_violation,
                std::to_string(schema.elements.size()) + " elements, expected [" +
                    std::to_string(cardinality.lo) + "," + std::to_string(cardinality.hi) + "]");
  return schema;
}

json schema_to_json(const ElementSchema &schema) {
  json list = json::array();
  for (const auto &e : schema.elements)
    list.push_back(json{{"element_key", e.key},
                        {"element_label", e.label},
                        {"short_definition", e.definition},
                        {"identification_rubric", e.rubric},
                        {"evidence_expectations", e.evidence}});
  return json{{"dimensions", list}};
}

std::string format_schema(const ElementSchema &schema) {
  return schema_to_json(schema).dump(2);
}

QuoteCheck verify_quote(std::string_view quote, std::string_view source) {
  QuoteCheck out;
  out.quote = std::string(quote);
  auto normalized = normalize_with_map(source);
  auto trimmed = text::trim(quote);
  out.verified = match_segments(split_on_ellipsis(trimmed), normalized, out.segments);
  if (!out.verified)
    if (auto inner = unwrap_quotes(trimmed))
      out.verified = match_segments(split_on_ellipsis(*inner), normalized, out.segments);
  return out;
}

} // namespace hitl
