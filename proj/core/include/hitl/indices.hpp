#pragma once

#include "hitl/codebook.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

namespace hitl {

enum class Polarity { direct, inverted };
enum class ScalingMode { ordinal, categorical, count };

struct ItemScaling {
  std::string item;
  ScalingMode mode = ScalingMode::ordinal;
  int min_anchor = 0;
  int max_anchor = 1;
  Polarity polarity = Polarity::direct;
  // categorical: code -> unit value. Multiselect answers take the maximum.
  std::map<std::string, double> categorical;
  // count: share of these codes selected.
  std::set<std::string> count_codes;
  // Codes that mean "no value" (NR, NA by default).
  std::set<std::string> missing_codes{"NR", "NA"};
};

inline constexpr const char *kDepth = "depth";
inline constexpr const char *kAutonomy = "autonomy";
inline constexpr const char *kReproducibility = "reproducibility";

struct ScalingSet {
  std::map<std::string, ItemScaling> items;
  // construct -> item ids
  std::map<std::string, std::vector<std::string>> membership;
  // Free-form notes carried into exported metadata (e.g. polarity choices).
  std::map<std::string, std::string> notes;
};

ScalingSet parse_scaling(const nlohmann::json &j);
ScalingSet load_scaling(const std::filesystem::path &path);

// Unit value, or nullopt for missing codes. Throws Error(unmapped_code) for a
// code the scaling cannot place.
std::optional<double> rescale_item(const ItemScaling &scaling, const Answer &answer);

struct ConstructIndices {
  std::optional<double> depth;
  std::optional<double> autonomy;
  std::optional<double> reproducibility;
  std::map<std::string, int> items_used;
};

// Available-case mean per construct.
ConstructIndices compute_indices(const CodedRecord &record, const ScalingSet &scaling);

// Pearson over pairs where both sides are present. nullopt with fewer than
// three pairs or zero variance. Throws Error(length_mismatch).
std::optional<double> correlate(std::span<const std::optional<double>> xs,
                                std::span<const std::optional<double>> ys);

struct PlaneRow {
  std::string id;
  ConstructIndices indices;
};

// CSV with header `id,depth,autonomy,reproducibility`; missing values are
// empty fields, present ones use 3 decimals.
std::string emit_plane(std::span<const PlaneRow> rows);

} // namespace hitl
