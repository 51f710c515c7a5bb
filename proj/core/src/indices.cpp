#include "hitl/indices.hpp"

#include "hitl/error.hpp"
#include "hitl/pipeline_io.hpp"
#include "hitl/text_util.hpp"

#include <charconv>
#include <cmath>

namespace hitl {

using nlohmann::json;

ScalingSet parse_scaling(const json &j) {
  ScalingSet out;
  try {
    for (const auto &js : j.at("items")) {
      ItemScaling s;
      s.item = js.at("item").get<std::string>();
      auto mode = js.value("mode", std::string("ordinal"));
      if (mode == "ordinal") {
        s.mode = ScalingMode::ordinal;
        s.min_anchor = js.at("min").get<int>();
        s.max_anchor = js.at("max").get<int>();
        if (s.min_anchor >= s.max_anchor)
          throw Error(Errc::config_error, s.item + ": min anchor must be below max");
      } else if (mode == "categorical") {
        s.mode = ScalingMode::categorical;
        for (auto it = js.at("map").begin(); it != js.at("map").end(); ++it) {
          const auto &code = it.key();
          const auto &v = it.value();
          if (v.is_null()) {
            s.missing_codes.insert(code);
            continue;
          }
          double d = v.get<double>();
          if (d < 0.0 || d > 1.0)
            throw Error(Errc::config_error, s.item + ": categorical value outside [0,1]");
          s.categorical[code] = d;
        }
      } else if (mode == "count") {
        s.mode = ScalingMode::count;
        for (const auto &c : js.at("codes"))
          s.count_codes.insert(c.get<std::string>());
        if (s.count_codes.empty())
          throw Error(Errc::config_error, s.item + ": count scaling needs codes");
        for (const auto &c : js.value("zero", json::array()))
          s.categorical[c.get<std::string>()] = 0.0;
      } else {
        throw Error(Errc::config_error, s.item + ": unknown scaling mode '" + mode + "'");
      }
      auto polarity = js.value("polarity", std::string("direct"));
      if (polarity != "direct" && polarity != "inverted")
        throw Error(Errc::config_error, s.item + ": polarity must be direct or inverted");
      s.polarity = polarity == "inverted" ? Polarity::inverted : Polarity::direct;
      if (js.contains("missing")) {
        s.missing_codes.clear();
        for (const auto &c : js["missing"])
          s.missing_codes.insert(c.get<std::string>());
      }
      out.items[s.item] = std::move(s);
    }
    for (auto it = j.at("membership").begin(); it != j.at("membership").end(); ++it)
      out.membership[it.key()] = it.value().get<std::vector<std::string>>();
    auto notes = j.value("notes", json::object());
    for (auto it = notes.begin(); it != notes.end(); ++it)
      out.notes[it.key()] = it.value().get<std::string>();
  } catch (const json::exception &e) {
    throw Error(Errc::config_error, std::string("bad scaling file: ") + e.what());
  }
  for (const auto &c : {kDepth, kAutonomy, kReproducibility})
    if (!out.membership.contains(c))
      throw Error(Errc::config_error, std::string("scaling membership lacks ") + c);
  for (const auto &[c, ids] : out.membership)
    for (const auto &id : ids)
      if (!out.items.contains(id))
        throw Error(Errc::config_error, c + " names " + id + " which has no scaling");
  return out;
}

ScalingSet load_scaling(const std::filesystem::path &path) {
  return parse_scaling(load_structured(path));
}

std::optional<double> rescale_item(const ItemScaling &s, const Answer &answer) {
  if (answer.values.empty())
    return std::nullopt;
  auto unmapped = [&](const std::string &code) {
    return Error(Errc::unmapped_code, s.item + ": code '" + code + "' has no scaling");
  };
  for (const auto &code : answer.values)
    if (s.missing_codes.contains(code)) {
      if (answer.values.size() > 1)
        throw unmapped(code);
      return std::nullopt;
    }

  std::optional<double> value;
  switch (s.mode) {
  case ScalingMode::ordinal: {
    if (answer.values.size() != 1)
      throw Error(Errc::unmapped_code, s.item + ": ordinal item takes one code");
    const auto &code = answer.values.front();
    int v = 0;
    auto [p, ec] = std::from_chars(code.data(), code.data() + code.size(), v);
    if (ec != std::errc{} || p != code.data() + code.size() || v < s.min_anchor ||
        v > s.max_anchor)
      throw unmapped(code);
    value = static_cast<double>(v - s.min_anchor) / (s.max_anchor - s.min_anchor);
    break;
  }
  case ScalingMode::categorical:
    for (const auto &code : answer.values) {
      auto it = s.categorical.find(code);
      if (it == s.categorical.end())
        throw unmapped(code);
      value = value ? std::max(*value, it->second) : it->second;
    }
    break;
  case ScalingMode::count: {
    std::size_t hits = 0;
    for (const auto &code : answer.values) {
      if (s.count_codes.contains(code))
        ++hits;
      else if (!s.categorical.contains(code))
        throw unmapped(code);
    }
    value = static_cast<double>(hits) / static_cast<double>(s.count_codes.size());
    break;
  }
  }
  if (value && s.polarity == Polarity::inverted)
    value = 1.0 - *value;
  return value;
}

ConstructIndices compute_indices(const CodedRecord &record, const ScalingSet &scaling) {
  ConstructIndices out;
  for (const auto &[construct, ids] : scaling.membership) {
    double sum = 0.0;
    int n = 0;
    for (const auto &id : ids) {
      auto it = record.answers.find(id);
      if (it == record.answers.end())
        continue;
      auto v = rescale_item(scaling.items.at(id), it->second);
      if (!v)
        continue;
      sum += *v;
      ++n;
    }
    out.items_used[construct] = n;
    std::optional<double> mean;
    if (n > 0)
      mean = sum / n;
    if (construct == kDepth)
      out.depth = mean;
    else if (construct == kAutonomy)
      out.autonomy = mean;
    else if (construct == kReproducibility)
      out.reproducibility = mean;
  }
  return out;
}

std::optional<double> correlate(std::span<const std::optional<double>> xs,
                                std::span<const std::optional<double>> ys) {
  if (xs.size() != ys.size())
    throw Error(Errc::length_mismatch, "correlate needs equal lengths, got " +
                                           std::to_string(xs.size()) + " and " +
                                           std::to_string(ys.size()));
  double sx = 0.0;
  double sy = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < xs.size(); ++i)
    if (xs[i] && ys[i]) {
      sx += *xs[i];
      sy += *ys[i];
      ++n;
    }
  if (n < 3)
    return std::nullopt;
  double mx = sx / static_cast<double>(n);
  double my = sy / static_cast<double>(n);
  double sxx = 0.0;
  double syy = 0.0;
  double sxy = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i)
    if (xs[i] && ys[i]) {
      double dx = *xs[i] - mx;
      double dy = *ys[i] - my;
      sxx += dx * dx;
      syy += dy * dy;
      sxy += dx * dy;
    }
  if (sxx <= 0.0 || syy <= 0.0)
    return std::nullopt;
  double r = sxy / std::sqrt(sxx * syy);
  return std::clamp(r, -1.0, 1.0);
}

std::string emit_plane(std::span<const PlaneRow> rows) {
  auto cell = [](const std::optional<double> &v) { return v ? text::fixed(*v, 3) : std::string{}; };
  std::string out = "id,depth,autonomy,reproducibility\n";
  for (const auto &r : rows) {
    std::string id = r.id;
    if (id.find_first_of(",\"\n") != std::string::npos) {
      std::string quoted = "\"";
      for (char c : id)
        quoted += c == '"' ? std::string("\"\"") : std::string(1, c);
      id = quoted + "\"";
    }
    out += id + "," + cell(r.indices.depth) + "," + cell(r.indices.autonomy) + "," +
           cell(r.indices.reproducibility) + "\n";
  }
  return out;
}

} // namespace hitl
