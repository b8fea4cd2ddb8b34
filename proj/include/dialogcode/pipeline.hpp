#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "dialogcode/run_config.hpp"
#include "dialogcode/transcript.hpp"

namespace dialogcode {

enum class GateVerdict { kPass, kFail, kNotApplicable };
std::string_view to_string(GateVerdict v);

struct RunOptions {
  std::optional<std::string> run_id;   // default: first 12 hex digits of the config hash
  bool resume = false;                 // skip stages the manifest records as complete
  std::optional<PredictionMode> mode;  // overrides the config (and so the config hash)
};

// One run directory under the configured output directory:
//
//   manifest.json             run id, config hash, completed stages in order
//   config.json               the resolved configuration
//   timing.json               wall-clock seconds per stage (not reproducible)
//   corpus.json               dialogues with revised text
//   split.json                validation / test / remainder ids
//   predictions.<subset>.csv  every parsed sample
//   discarded.<subset>.csv    samples that could not be parsed after repair
//   votes.<subset>.csv        ensemble outcome per task
//   provider_codes.<subset>.csv  per-provider vote over its own samples
//   coded.<subset>.csv        fused codes before consistency checking
//   checked.<subset>.csv      codes after consistency checking
//   revisions.<subset>.csv    audit log of consistency revisions
//   fixpoint.<subset>.json    consistency statistics
//   metrics.<subset>.json     metric reports; summary.<subset>.txt renders them
//   gate.<subset>.json        gate verdict
//
// Each stage writes its files and only then records itself in the manifest,
// so an interrupted stage leaves the manifest unchanged and reruns cleanly.
class Pipeline {
 public:
  Pipeline(RunConfig config, RunOptions options = {});
  ~Pipeline();
  Pipeline(const Pipeline&) = delete;
  Pipeline& operator=(const Pipeline&) = delete;

  const RunConfig& config() const;
  const std::string& run_id() const;
  const std::filesystem::path& run_dir() const;

  void preprocess();
  void predict(Subset subset);
  // Combined-mode runs skip checking with a notice.
  void check(Subset subset);
  // Metrics over the subset's validation and test ids; the remainder is
  // never scored and yields kNotApplicable.
  GateVerdict evaluate(Subset subset);
  // Writes report.txt (and comparison.txt when other run ids are given) and
  // returns the text.
  std::string report(const std::vector<std::string>& compare_run_ids = {});

  // All stages. Without a subset: validation, gate, test, gate, then the
  // remainder is coded. Returns the process exit code (0, or 2 on a gate
  // failure).
  int run(std::optional<Subset> subset = std::nullopt);

  bool stage_done(const std::string& stage) const;
  std::uint64_t network_calls() const;
  std::uint64_t network_calls(const std::string& provider_id) const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace dialogcode
