#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "dialogcode/codebook.hpp"
#include "dialogcode/llm_client.hpp"
#include "dialogcode/transcript.hpp"

namespace dialogcode::synthetic {

// Dialogues built from two-utterance exchanges whose acts form a declared
// sequence pair under one event, interleaved with single utterances that
// carry a responder act or no act. The H1 labels therefore contain no
// sequence-pair violations.
struct CorpusSpec {
  std::uint64_t seed = 1;
  std::size_t utterances = 100;
  std::size_t per_dialogue = 25;
  double exchange_share = 0.7;   // chance that the next unit is an exchange
  double h2_disagreement = 0.1;  // chance H2 picks a different code
  std::string group_prefix = "g";
};

struct Corpus {
  std::vector<Dialogue> dialogues;
  std::vector<GroundTruth> labels;  // H1 rows, then H2 rows
  std::vector<std::pair<std::string, std::string>> exchanges;
};

Corpus make_corpus(const Codebook& cb, const CorpusSpec& spec);

struct WrittenCorpus {
  std::vector<std::filesystem::path> transcripts;
  std::filesystem::path ground_truth;
};

// Writes <dir>/transcripts/<group>.json and <dir>/ground_truth.csv.
WrittenCorpus write_corpus(const Corpus& corpus, const std::filesystem::path& dir);

struct MockRunSpec {
  std::uint64_t seed = 1;
  int providers = 3;
  int samples_per_task = 1;
  NoiseProfile noise;
  bool revision = true;
  bool checker = true;
  SplitRatios ratios;
  std::uint64_t split_seed = 42;
  double gate_threshold = 0.80;
  std::string mode = "separate";
  int max_tie_rounds = 3;
  int workers = 2;
};

// Run configuration over a written corpus using local mock providers named
// mock-a, mock-b, ... whose oracle is the corpus H1 labels.
nlohmann::json mock_config(const WrittenCorpus& corpus, const MockRunSpec& spec,
                           const std::filesystem::path& output_dir, const std::filesystem::path& cache_dir);

}  // namespace dialogcode::synthetic
