#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dialogcode/llm_client.hpp"
#include "dialogcode/transcript.hpp"

namespace dialogcode {

enum class PredictionMode { kSeparate, kCombined };
std::string_view to_string(PredictionMode m);
PredictionMode mode_from_string(std::string_view s);

// Everything a run needs. Relative paths in the file are resolved against
// the directory holding the config file.
struct RunConfig {
  std::string codebook = "bundled";  // path, or "bundled"
  std::string templates_dir;         // empty = bundled templates
  std::vector<std::string> transcripts;
  std::vector<std::string> ground_truth;
  std::string task_materials;

  SplitRatios split_ratios;
  std::uint64_t split_seed = 42;
  SplitUnit split_unit = SplitUnit::kUtterance;

  std::vector<ProviderConfig> providers;

  PredictionMode mode = PredictionMode::kSeparate;
  std::size_t context_window = 0;    // utterances either side; 0 = whole dialogue
  std::size_t fallback_window = 40;  // used when a provider reports a context overflow
  int workers = 4;

  std::string revision_provider;  // empty skips revision
  int max_tie_rounds = 3;
  std::string checker_provider;
  int consistency_max_rounds = 10;
  double gate_kappa_threshold = 0.80;

  std::string cache_dir = "cache";
  std::string output_dir = "runs";

  static RunConfig from_json(const nlohmann::json& doc, const std::filesystem::path& base_dir);
  static RunConfig load(const std::filesystem::path& path);

  nlohmann::json to_json() const;
  // The part of the config that determines results: no output or cache
  // locations, worker counts, rate limits or fault-injection settings.
  nlohmann::json identity_json() const;
  // sha256 of identity_json().
  std::string hash() const;

  const ProviderConfig* find_provider(std::string_view id) const;
  std::vector<const ProviderConfig*> voting_providers() const;

  // Throws ValidationError listing every problem.
  void validate() const;
};

}  // namespace dialogcode
