#pragma once

#include <hitl/tag_codec.hpp>
#include <hitl/text_util.hpp>

#include <random>
#include <string>

namespace hitl::test {

// Non-empty text with no tag markup and no leading or trailing whitespace.
inline std::string random_field(std::mt19937 &rng, int max_len = 40) {
  static const std::vector<std::string> pieces = {
      "a", "b", "Z", " ", "  ", "\n", "\t", ".", ",", "'", "\"", "...", "0", "9", "&", "/",
      "\xC3\xA9", "\xE2\x80\x94", "\xE2\x80\xA6", "{", "}", "[", "]"};
  std::uniform_int_distribution<std::size_t> pick(0, pieces.size() - 1);
  int len = std::uniform_int_distribution<int>(1, max_len)(rng);
  std::string s;
  for (int i = 0; i < len; ++i)
    s += pieces[pick(rng)];
  auto trimmed = std::string(text::trim(s));
  return trimmed.empty() ? "x" : trimmed;
}

inline TaggedReport random_report(std::mt19937 &rng, IntRange scores = {0, 10}) {
  TaggedReport r;
  r.explanation = random_field(rng, 60);
  r.score = std::uniform_int_distribution<int>(scores.lo, scores.hi)(rng);
  int quotes = std::uniform_int_distribution<int>(r.score == 0 ? 0 : 1, 6)(rng);
  for (int i = 0; i < quotes; ++i)
    r.quotations.push_back(random_field(rng));
  return r;
}

// Random mix of text and (possibly unbalanced, possibly foreign) tags.
inline std::string random_tag_soup(std::mt19937 &rng, const std::string &tag) {
  const std::vector<std::string> pieces = {"<" + tag + ">", "</" + tag + ">", "<" + tag + ">",
                                           "</" + tag + ">", "<other>", "</other>", "<" + tag,
                                           tag + ">", "text", " ", "\n", "<", ">", "/"};
  std::uniform_int_distribution<std::size_t> pick(0, pieces.size() - 1);
  int len = std::uniform_int_distribution<int>(0, 30)(rng);
  std::string s;
  for (int i = 0; i < len; ++i)
    s += pieces[pick(rng)];
  return s;
}

} // namespace hitl::test
