#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dinfogan/data.hpp"
#include "dinfogan/evaluation.hpp"
#include "dinfogan/latent.hpp"
#include "dinfogan/losses.hpp"
#include "dinfogan/networks.hpp"
#include "dinfogan/training.hpp"

namespace dinfogan {

// JSON forms. In a TrainConfig the architecture omits the latent
// dimensions, which come from `prior`.
void to_json(nlohmann::json& j, const ArchitectureConfig& c);
void from_json(const nlohmann::json& j, ArchitectureConfig& c);
void to_json(nlohmann::json& j, const PriorConfig& c);
void from_json(const nlohmann::json& j, PriorConfig& c);
void to_json(nlohmann::json& j, const LossWeights& w);
void from_json(const nlohmann::json& j, LossWeights& w);
void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);
void to_json(nlohmann::json& j, const DatasetSpec& s);
void from_json(const nlohmann::json& j, DatasetSpec& s);
void to_json(nlohmann::json& j, const EvalOptions& o);
void from_json(const nlohmann::json& j, EvalOptions& o);

struct RunConfig {
  DatasetSpec dataset;
  TrainConfig train;
  EvalOptions eval;
  std::string output_dir = "runs/default";
  std::string cache_dir;  // empty: $DINFOGAN_CACHE, else ".dinfogan-cache"

  // Defaults for a named dataset (architecture, learning rates, loop counts).
  static RunConfig for_dataset(const std::string& dataset);

  std::vector<std::string> problems() const;
  bool operator==(const RunConfig&) const = default;
};

void to_json(nlohmann::json& j, const RunConfig& c);
void from_json(const nlohmann::json& j, RunConfig& c);

// Applies "a.b.c=value" to `j`; the value is parsed as JSON when possible and
// kept as a string otherwise.
void apply_override(nlohmann::json& j, const std::string& assignment);

// Resolves a user document against the defaults of its dataset (taken from
// dataset.name, default "micro"). Unknown keys, type mismatches and invalid
// values are all collected into one ConfigError.
RunConfig resolve_run_config(const nlohmann::json& user, const std::vector<std::string>& overrides = {});
RunConfig load_run_config(const std::filesystem::path& path, const std::vector<std::string>& overrides = {});

std::filesystem::path resolve_cache_root(const RunConfig& c);

}  // namespace dinfogan
