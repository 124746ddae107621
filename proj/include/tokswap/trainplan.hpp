#pragma once

#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "tokswap/error.hpp"

namespace tokswap {

enum class Stage { kBoundaryAdaptation, kFullAdaptation };

inline std::string_view to_string(Stage s) {
  return s == Stage::kBoundaryAdaptation ? "boundary-adaptation" : "full-adaptation";
}

inline Stage parse_stage(std::string_view s) {
  if (s == "boundary-adaptation") return Stage::kBoundaryAdaptation;
  if (s == "full-adaptation") return Stage::kFullAdaptation;
  throw Error(ErrorKind::kInvalidArgument, "unknown stage '" + std::string(s) + "'");
}

inline constexpr std::uint64_t kBoundaryBudget = 4'000'000'000ULL;
inline constexpr std::uint64_t kFullBudget = 16'000'000'000ULL;
inline constexpr std::string_view kInputEmbedding = "input_embedding";
inline constexpr std::string_view kLmHead = "lm_head";

struct ParameterGroup {
  std::string name;
  bool trainable = false;

  friend bool operator==(const ParameterGroup&, const ParameterGroup&) = default;
};

/// Groups are input_embedding, the layers "0".."n-1", then lm_head.
struct FreezePlan {
  Stage stage = Stage::kBoundaryAdaptation;
  std::size_t n_layers = 0;
  std::vector<ParameterGroup> groups;
  std::uint64_t token_budget = 0;
  bool non_default_budget = false;

  std::vector<std::string> trainable() const {
    std::vector<std::string> out;
    for (const auto& g : groups) {
      if (g.trainable) out.push_back(g.name);
    }
    return out;
  }

  std::vector<std::string> frozen() const {
    std::vector<std::string> out;
    for (const auto& g : groups) {
      if (!g.trainable) out.push_back(g.name);
    }
    return out;
  }

  friend bool operator==(const FreezePlan&, const FreezePlan&) = default;
};

inline FreezePlan make_freeze_plan(std::size_t n_layers, Stage stage,
                                   std::optional<std::uint64_t> budget_override = std::nullopt) {
  if (n_layers == 0) throw Error(ErrorKind::kZeroLayers, "a freeze plan needs at least one layer");
  FreezePlan plan;
  plan.stage = stage;
  plan.n_layers = n_layers;
  const std::uint64_t default_budget = stage == Stage::kBoundaryAdaptation ? kBoundaryBudget : kFullBudget;
  plan.token_budget = budget_override.value_or(default_budget);
  plan.non_default_budget = plan.token_budget != default_budget;

  // two lowest and two highest transformer blocks
  std::set<std::size_t> boundary = {0, n_layers - 1};
  if (n_layers > 1) {
    boundary.insert(1);
    boundary.insert(n_layers - 2);
  }
  const bool full = stage == Stage::kFullAdaptation;
  plan.groups.push_back({std::string(kInputEmbedding), true});
  for (std::size_t i = 0; i < n_layers; ++i) {
    plan.groups.push_back({std::to_string(i), full || boundary.contains(i)});
  }
  plan.groups.push_back({std::string(kLmHead), true});
  return plan;
}

inline std::vector<FreezePlan> pipeline_manifest(std::size_t n_layers,
                                                 std::optional<std::uint64_t> boundary_budget = std::nullopt,
                                                 std::optional<std::uint64_t> full_budget = std::nullopt) {
  return {make_freeze_plan(n_layers, Stage::kBoundaryAdaptation, boundary_budget),
          make_freeze_plan(n_layers, Stage::kFullAdaptation, full_budget)};
}

inline constexpr int kManifestFormatVersion = 1;

/// Replaces "{}" in `name_template` with the layer index; reserved names pass through.
inline std::string group_path(const std::string& name, const std::string& name_template) {
  if (name_template.empty() || name == kInputEmbedding || name == kLmHead) return name;
  const auto pos = name_template.find("{}");
  if (pos == std::string::npos) return name_template + name;
  return name_template.substr(0, pos) + name + name_template.substr(pos + 2);
}

inline nlohmann::json manifest_to_json(const std::vector<FreezePlan>& plans,
                                       const std::string& name_template = {}) {
  if (plans.empty()) throw Error(ErrorKind::kInvalidArgument, "empty manifest");
  nlohmann::json stages = nlohmann::json::array();
  for (const auto& p : plans) {
    nlohmann::json trainable = nlohmann::json::array();
    nlohmann::json frozen = nlohmann::json::array();
    for (const auto& g : p.groups) (g.trainable ? trainable : frozen).push_back(group_path(g.name, name_template));
    stages.push_back({{"stage", std::string(to_string(p.stage))},
                      {"token_budget", p.token_budget},
                      {"non_default_budget", p.non_default_budget},
                      {"trainable", std::move(trainable)},
                      {"frozen", std::move(frozen)}});
  }
  nlohmann::json j = {
      {"format_version", kManifestFormatVersion},
      {"n_layers", plans.front().n_layers},
      {"stages", std::move(stages)},
  };
  if (!name_template.empty()) j["name_template"] = name_template;
  return j;
}

/// Inverse of manifest_to_json for manifests written without a name template.
inline std::vector<FreezePlan> manifest_from_json(const nlohmann::json& j) {
  std::vector<FreezePlan> out;
  try {
    if (j.at("format_version").get<int>() != kManifestFormatVersion) {
      throw Error(ErrorKind::kFormat, "unsupported manifest format_version");
    }
    if (j.contains("name_template")) {
      throw Error(ErrorKind::kFormat, "manifests with a name template cannot be read back");
    }
    const auto n = j.at("n_layers").get<std::size_t>();
    for (const auto& s : j.at("stages")) {
      FreezePlan p;
      p.stage = parse_stage(s.at("stage").get<std::string>());
      p.n_layers = n;
      p.token_budget = s.at("token_budget").get<std::uint64_t>();
      p.non_default_budget = s.value("non_default_budget", false);
      std::set<std::string> trainable;
      for (const auto& t : s.at("trainable")) trainable.insert(t.get<std::string>());
      p.groups.push_back({std::string(kInputEmbedding), trainable.contains(std::string(kInputEmbedding))});
      for (std::size_t i = 0; i < n; ++i) p.groups.push_back({std::to_string(i), trainable.contains(std::to_string(i))});
      p.groups.push_back({std::string(kLmHead), trainable.contains(std::string(kLmHead))});
      out.push_back(std::move(p));
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::kFormat, std::string("manifest: ") + e.what());
  }
  return out;
}

}  // namespace tokswap
