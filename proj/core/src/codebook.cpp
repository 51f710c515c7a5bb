#include "hitl/codebook.hpp"

#include "hitl/error.hpp"
#include "hitl/pipeline_io.hpp"
#include "hitl/tag_codec.hpp"
#include "hitl/text_util.hpp"

#include <algorithm>
#include <tuple>

namespace hitl {

using nlohmann::json;

std::string_view to_string(ItemKind k) noexcept {
  switch (k) {
  case ItemKind::select_one: return "select-one";
  case ItemKind::multiselect: return "multiselect";
  case ItemKind::open_text: return "open-text";
  }
  return "select-one";
}

std::string_view to_string(AnswerViolationCode c) noexcept {
  switch (c) {
  case AnswerViolationCode::option_membership: return "option-membership";
  case AnswerViolationCode::none_combined: return "none-combined";
  case AnswerViolationCode::rationale_presence: return "rationale-presence";
  case AnswerViolationCode::rationale_length: return "rationale-length";
  case AnswerViolationCode::quote_count: return "quote-count";
  case AnswerViolationCode::quote_not_verbatim: return "quote-not-verbatim";
  case AnswerViolationCode::unknown_item: return "unknown-item";
  case AnswerViolationCode::out_of_scope_item: return "out-of-scope-item";
  }
  return "option-membership";
}

std::string_view to_string(Severity s) noexcept {
  return s == Severity::error ? "error" : "warning";
}

const ItemOption *Item::option(std::string_view code) const noexcept {
  for (const auto &o : options)
    if (o.code == code)
      return &o;
  return nullptr;
}

const Item *Instrument::find(std::string_view id) const noexcept {
  for (const auto &i : items)
    if (i.id == id)
      return &i;
  return nullptr;
}

namespace {

std::string scalar_text(const json &v) {
  if (v.is_string())
    return v.get<std::string>();
  if (v.is_number_integer())
    return std::to_string(v.get<long long>());
  return v.dump();
}

ItemKind parse_item_kind(const std::string &s) {
  if (s == "select-one")
    return ItemKind::select_one;
  if (s == "multiselect")
    return ItemKind::multiselect;
  if (s == "open-text")
    return ItemKind::open_text;
  throw Error(Errc::config_error, "unknown item kind '" + s + "'");
}

} // namespace

Instrument parse_instrument(const json &j) {
  Instrument out;
  try {
    out.version = scalar_text(j.at("version"));
    for (const auto &ji : j.at("items")) {
      Item item;
      item.id = ji.at("id").get<std::string>();
      item.part = ji.value("part", 0);
      item.kind = parse_item_kind(ji.at("kind").get<std::string>());
      item.text = ji.value("text", std::string{});
      item.requires_reason = ji.value("requires_reason", false);
      item.none_exclusive = ji.value("none_exclusive", false);
      if (ji.contains("scale"))
        item.scale = ji["scale"].get<IntRange>();
      for (const auto &jo : ji.value("options", json::array())) {
        ItemOption o;
        o.code = scalar_text(jo.at("code"));
        o.label = jo.value("label", std::string{});
        if (jo.contains("anchor") && !jo["anchor"].is_null())
          o.anchor = jo["anchor"].get<int>();
        item.options.push_back(std::move(o));
      }
      out.items.push_back(std::move(item));
    }
  } catch (const json::exception &e) {
    throw Error(Errc::config_error, std::string("bad instrument: ") + e.what());
  }
  return out;
}

Instrument load_instrument(const std::filesystem::path &path) {
  return parse_instrument(load_structured(path));
}

std::vector<std::string> check_instrument(const Instrument &instrument) {
  std::vector<std::string> out;
  std::set<std::string> ids;
  for (const auto &item : instrument.items) {
    if (!ids.insert(item.id).second)
      out.push_back(item.id + ": duplicate item id");
    if (item.kind != ItemKind::open_text && item.options.size() < 2)
      out.push_back(item.id + ": select items need at least two options");
    if (item.kind == ItemKind::multiselect && item.none_exclusive && !item.option(kNoneCode))
      out.push_back(item.id + ": NONE-exclusive item has no NONE option");
    if (item.scale) {
      std::optional<int> prev;
      for (const auto &o : item.options) {
        if (!o.anchor)
          continue;
        if (!item.scale->contains(*o.anchor))
          out.push_back(item.id + ": anchor " + o.code + " outside the scale");
        if (prev && *o.anchor <= *prev)
          out.push_back(item.id + ": anchors are not increasing");
        prev = o.anchor;
      }
    }
  }
  return out;
}

std::string format_instrument(const Instrument &instrument) {
  std::string out;
  for (const auto &item : instrument.items) {
    out += item.id + " (" + std::string(to_string(item.kind));
    if (item.none_exclusive)
      out += ", NONE is exclusive";
    out += std::string(", requires_reason = ") + (item.requires_reason ? "true" : "false") + "): ";
    out += item.text + "\n";
    for (const auto &o : item.options)
      out += "  " + o.code + ": " + o.label + "\n";
    out += "\n";
  }
  return out;
}

std::vector<AnswerViolation> validate_answer(const Item &item, const Answer &answer,
                                             std::optional<std::string_view> source_text) {
  std::vector<AnswerViolation> out;
  auto add = [&](AnswerViolationCode code, Severity sev, std::string msg) {
    out.push_back({code, sev, item.id, std::move(msg)});
  };

  if (item.kind == ItemKind::select_one && answer.values.size() != 1)
    add(AnswerViolationCode::option_membership, Severity::error,
        "select-one item needs exactly one code, got " + std::to_string(answer.values.size()));
  if (item.kind == ItemKind::multiselect && answer.values.empty())
    add(AnswerViolationCode::option_membership, Severity::error,
        "multiselect item needs at least one code");
  if (item.kind != ItemKind::open_text)
    for (const auto &code : answer.values)
      if (!item.option(code))
        add(AnswerViolationCode::option_membership, Severity::error,
            "'" + code + "' is not an option of " + item.id);

  if (item.kind == ItemKind::multiselect && item.none_exclusive && answer.values.size() > 1 &&
      std::find(answer.values.begin(), answer.values.end(), kNoneCode) != answer.values.end())
    add(AnswerViolationCode::none_combined, Severity::error,
        "NONE cannot be combined with other codes");

  if (item.requires_reason && !answer.rationale)
    add(AnswerViolationCode::rationale_presence, Severity::error,
        item.id + " requires a rationale block");
  if (!item.requires_reason && answer.rationale)
    add(AnswerViolationCode::rationale_presence, Severity::warning,
        item.id + " does not take a rationale block");

  if (answer.rationale) {
    const auto &r = *answer.rationale;
    auto sentences = text::count_sentences(r.text);
    if (sentences > kMaxRationaleSentences)
      add(AnswerViolationCode::rationale_length, Severity::warning,
          "rationale has " + std::to_string(sentences) + " sentences");
    if (!kQuoteCount.contains(static_cast<int>(r.quotes.size())))
      add(AnswerViolationCode::quote_count, Severity::error,
          "rationale has " + std::to_string(r.quotes.size()) + " quotes, expected 1 to 10");
    if (source_text)
      for (const auto &q : r.quotes)
        if (!verify_quote(q, *source_text).verified)
          add(AnswerViolationCode::quote_not_verbatim, Severity::error,
              "quote not found verbatim: " + q);
  }
  return out;
}

std::map<std::string, Answer> parse_answers(const json &j) {
  std::map<std::string, Answer> out;
  if (!j.is_object())
    throw Error(Errc::config_error, "answers must be an object keyed by item id");
  for (const auto &[id, ja] : j.items()) {
    Answer a;
    a.item = id;
    const json &value = ja.is_object() ? ja.value("value", json()) : ja;
    if (value.is_array()) {
      for (const auto &v : value)
        a.values.push_back(scalar_text(v));
    } else if (!value.is_null()) {
      a.values.push_back(scalar_text(value));
    }
    if (ja.is_object() && ja.contains("rationale") && !ja["rationale"].is_null()) {
      const auto &jr = ja["rationale"];
      Rationale r;
      r.text = jr.value("text", std::string{});
      for (const auto &q : jr.value("quotes", json::array()))
        r.quotes.push_back(q.get<std::string>());
      a.rationale = std::move(r);
    }
    out[id] = std::move(a);
  }
  return out;
}

CodedRecord parse_coded_record(const json &j) {
  CodedRecord r;
  try {
    r.paper_id = scalar_text(j.at("paper_id"));
    r.source = j.value("source", std::string("human"));
    if (j.contains("model_meta") && !j["model_meta"].is_null())
      r.model_meta = j["model_meta"].get<RunParams>();
    r.answers = parse_answers(j.at("answers"));
  } catch (const json::exception &e) {
    throw Error(Errc::config_error, std::string("bad coded record: ") + e.what());
  }
  return r;
}

json coded_record_json(const CodedRecord &record) {
  json answers = json::object();
  for (const auto &[id, a] : record.answers) {
    json ja{{"value", a.values.size() == 1 ? json(a.values.front()) : json(a.values)}};
    if (a.rationale)
      ja["rationale"] = json{{"text", a.rationale->text}, {"quotes", a.rationale->quotes}};
    answers[id] = std::move(ja);
  }
  json out{{"paper_id", record.paper_id}, {"source", record.source}, {"answers", answers}};
  if (record.model_meta)
    out["model_meta"] = *record.model_meta;
  return out;
}

CodedRecord load_coded_record(const std::filesystem::path &path) {
  return parse_coded_record(load_structured(path));
}

std::vector<CodedRecord> load_coded_dir(const std::filesystem::path &dir) {
  if (!std::filesystem::is_directory(dir))
    throw Error(Errc::io_error, "not a directory: " + dir.string());
  std::vector<std::filesystem::path> files;
  for (const auto &entry : std::filesystem::directory_iterator(dir))
    if (entry.is_regular_file() && entry.path().extension() == ".json")
      files.push_back(entry.path());
  std::sort(files.begin(), files.end());
  std::vector<CodedRecord> out;
  for (const auto &f : files)
    out.push_back(load_coded_record(f));
  return out;
}

std::vector<AnswerViolation> validate_record(const Instrument &instrument,
                                             const CodedRecord &record,
                                             std::optional<std::string_view> source_text) {
  std::vector<AnswerViolation> out;
  bool out_of_scope = false;
  if (auto it = record.answers.find("Q00"); it != record.answers.end())
    out_of_scope = it->second.text() == "NO";
  for (const auto &[id, answer] : record.answers) {
    const Item *item = instrument.find(id);
    if (!item) {
      out.push_back({AnswerViolationCode::unknown_item, Severity::error, id,
                     "no item " + id + " in the instrument"});
      continue;
    }
    if (out_of_scope && item->part > 1)
      out.push_back({AnswerViolationCode::out_of_scope_item, Severity::error, id,
                     "Q00 = NO allows Part 1 items only"});
    auto v = validate_answer(*item, answer, source_text);
    out.insert(out.end(), v.begin(), v.end());
  }
  return out;
}

std::vector<ScreeningRecord> parse_screening(const json &j) {
  const json &list = j.is_object() ? j.at("records") : j;
  std::vector<ScreeningRecord> out;
  try {
    for (const auto &jr : list) {
      ScreeningRecord r;
      r.id = scalar_text(jr.at("id"));
      r.abstract = jr.value("abstract", std::string{});
      for (const auto &jp : jr.at("passes")) {
        ScreeningPass p;
        p.model = jp.value("model", std::string{});
        auto v = jp.at("verdict").get<std::string>();
        if (v == "relevant")
          p.verdict = ScreenVerdict::relevant;
        else if (v == "not-relevant")
          p.verdict = ScreenVerdict::not_relevant;
        else
          throw Error(Errc::config_error, "record " + r.id + ": verdict '" + v +
                                              "' is not relevant|not-relevant");
        r.passes.push_back(std::move(p));
      }
      out.push_back(std::move(r));
    }
  } catch (const json::exception &e) {
    throw Error(Errc::config_error, std::string("bad screening records: ") + e.what());
  }
  return out;
}

std::set<std::string> screen(std::span<const ScreeningRecord> records) {
  for (const auto &r : records)
    if (r.passes.size() != kScreeningPasses)
      throw Error(Errc::pass_count_mismatch, "record " + r.id + " has " +
                                                 std::to_string(r.passes.size()) +
                                                 " passes, expected 3");
  std::set<std::string> out;
  for (const auto &r : records)
    if (std::all_of(r.passes.begin(), r.passes.end(),
                    [](const ScreeningPass &p) { return p.verdict == ScreenVerdict::relevant; }))
      out.insert(r.id);
  return out;
}

UseCandidate select_primary_use(std::span<const UseCandidate> candidates) {
  const UseCandidate *best = nullptr;
  auto rank = [](const UseCandidate &c) {
    // larger is better on every component
    return std::make_tuple(c.autonomy, c.depth, c.volume, -c.methods_position);
  };
  for (const auto &c : candidates) {
    if (!c.generative)
      continue;
    if (!best || rank(c) > rank(*best) || (rank(c) == rank(*best) && c.id < best->id))
      best = &c;
  }
  if (!best)
    throw Error(Errc::no_generative_candidate, "no generative use among the candidates");
  return *best;
}

namespace {

// Order-insensitive, so multiselect answers compare as sets.
std::string answer_key(const Answer &a) {
  auto values = a.values;
  std::sort(values.begin(), values.end());
  return json(values).dump();
}

} // namespace

Aggregate aggregate_runs(std::span<const CodedRecord> records) {
  if (records.empty())
    throw Error(Errc::empty_input, "aggregate_runs needs at least one record");
  for (const auto &r : records)
    if (r.paper_id != records.front().paper_id)
      throw Error(Errc::mixed_paper_ids, "records for papers " + records.front().paper_id +
                                             " and " + r.paper_id + " mixed");

  Aggregate out;
  out.consensus.paper_id = records.front().paper_id;
  out.consensus.source = "consensus";
  std::set<std::string> items;
  for (const auto &r : records)
    for (const auto &[id, a] : r.answers)
      items.insert(id);

  for (const auto &id : items) {
    ItemDispersion d;
    d.item = id;
    std::map<std::string, const Answer *> first;
    for (const auto &r : records) {
      auto it = r.answers.find(id);
      if (it == r.answers.end())
        continue;
      ++d.available;
      auto key = answer_key(it->second);
      auto v = std::find_if(d.variants.begin(), d.variants.end(),
                            [&](const auto &p) { return p.first == key; });
      if (v == d.variants.end()) {
        d.variants.emplace_back(key, 1);
        first[key] = &it->second;
      } else {
        ++v->second;
      }
    }
    auto modal = std::max_element(d.variants.begin(), d.variants.end(),
                                  [](const auto &a, const auto &b) { return a.second < b.second; });
    d.agreement = static_cast<double>(modal->second) / d.available;
    d.resolved = 2 * modal->second > d.available;
    if (d.resolved)
      out.consensus.answers[id] = *first.at(modal->first);
    out.dispersion.push_back(std::move(d));
  }
  return out;
}

std::vector<ManifestRecord> load_manifest(const std::filesystem::path &path) {
  auto j = load_structured(path);
  auto base = path.parent_path();
  std::vector<ManifestRecord> out;
  try {
    const json &list = j.is_object() ? j.at("records") : j;
    for (const auto &jr : list) {
      ManifestRecord r;
      r.id = scalar_text(jr.at("id"));
      r.title = jr.value("title", std::string{});
      r.abstract = jr.value("abstract", std::string{});
      auto p = std::filesystem::path(jr.at("text_path").get<std::string>());
      r.text_path = p.is_absolute() ? p : base / p;
      out.push_back(std::move(r));
    }
  } catch (const json::exception &e) {
    throw Error(Errc::config_error, "bad manifest " + path.string() + ": " + e.what());
  }
  return out;
}

} // namespace hitl
