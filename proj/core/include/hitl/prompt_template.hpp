#pragma once

#include <map>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace hitl {

// Template text with single-brace `{name}` placeholders. `{{` and `}}` are
// literal braces. A brace that does not open a well-formed `{identifier}` is
// literal text, so JSON-ish snippets such as "{ dimensions: [...] }" pass
// through untouched.
struct PromptTemplate {
  std::string text;
  std::set<std::string> required_bindings;

  // Template whose required bindings are exactly the placeholders in `text`.
  static PromptTemplate from_text(std::string text);

  friend bool operator==(const PromptTemplate &, const PromptTemplate &) = default;
};

using Bindings = std::map<std::string, std::string, std::less<>>;

struct PlaceholderRef {
  std::string name;
  std::size_t offset = 0; // position of '{' in the template text
  std::size_t length = 0; // including both braces
};

// Placeholders in order of occurrence (duplicates kept).
std::vector<PlaceholderRef> scan_placeholders(std::string_view text);
std::set<std::string> placeholder_names(std::string_view text);

// Single left-to-right pass; binding values are never re-expanded.
// Throws Error(missing_binding) naming the absent placeholder, or
// Error(unknown_binding) for a binding the template does not declare.
std::string render_prompt(const PromptTemplate &tmpl, const Bindings &bindings);

} // namespace hitl
