#include "hitl/prompt_template.hpp"

#include "hitl/error.hpp"

namespace hitl {

namespace {

bool ident_start(char c) {
  return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || c == '_';
}
bool ident_char(char c) { return ident_start(c) || (c >= '0' && c <= '9'); }

// Length of a `{identifier}` token at `i`, or 0.
std::size_t placeholder_at(std::string_view text, std::size_t i) {
  if (text[i] != '{' || i + 1 >= text.size() || !ident_start(text[i + 1]))
    return 0;
  std::size_t j = i + 2;
  while (j < text.size() && ident_char(text[j]))
    ++j;
  if (j < text.size() && text[j] == '}')
    return j - i + 1;
  return 0;
}

template <typename OnLiteral, typename OnPlaceholder>
void walk(std::string_view text, OnLiteral on_literal,
          OnPlaceholder on_placeholder) {
  std::size_t i = 0;
  while (i < text.size()) {
    char c = text[i];
    if ((c == '{' || c == '}') && i + 1 < text.size() && text[i + 1] == c) {
      on_literal(std::string_view(&text[i], 1));
      i += 2;
      continue;
    }
    if (std::size_t n = placeholder_at(text, i); n != 0) {
      on_placeholder(PlaceholderRef{std::string(text.substr(i + 1, n - 2)), i, n});
      i += n;
      continue;
    }
    std::size_t j = i + 1;
    while (j < text.size() && text[j] != '{' && text[j] != '}')
      ++j;
    on_literal(text.substr(i, j - i));
    i = j;
  }
}

} // namespace

PromptTemplate PromptTemplate::from_text(std::string text) {
  PromptTemplate t;
  t.required_bindings = placeholder_names(text);
  t.text = std::move(text);
  return t;
}

std::vector<PlaceholderRef> scan_placeholders(std::string_view text) {
  std::vector<PlaceholderRef> out;
  walk(text, [](std::string_view) {},
       [&](PlaceholderRef ref) { out.push_back(std::move(ref)); });
  return out;
}

std::set<std::string> placeholder_names(std::string_view text) {
  std::set<std::string> out;
  for (auto &ref : scan_placeholders(text))
    out.insert(std::move(ref.name));
  return out;
}

std::string render_prompt(const PromptTemplate &tmpl, const Bindings &bindings) {
  for (const auto &name : tmpl.required_bindings) {
    if (!bindings.contains(name))
      throw Error(Errc::missing_binding, "missing binding for placeholder {" +
                                             name + "}");
  }
  for (const auto &[name, value] : bindings) {
    if (!tmpl.required_bindings.contains(name))
      throw Error(Errc::unknown_binding,
                  "binding '" + name + "' is not declared by the template");
  }

  std::string out;
  out.reserve(tmpl.text.size());
  walk(
      tmpl.text, [&](std::string_view lit) { out.append(lit); },
      [&](const PlaceholderRef &ref) {
        auto it = bindings.find(ref.name);
        if (it == bindings.end())
          throw Error(Errc::missing_binding,
                      "missing binding for placeholder {" + ref.name + "}");
        out.append(it->second);
      });
  return out;
}

} // namespace hitl
