#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "dialogcode/codebook.hpp"

namespace dialogcode {

struct Utterance {
  std::string id;
  std::string speaker;  // opaque, already anonymized
  std::string text;
  std::optional<std::string> revised_text;
  double start = 0.0;
  double end = 0.0;

  // Text used by prediction prompts: the revision when there is one.
  const std::string& working_text() const { return revised_text ? *revised_text : text; }

  bool operator==(const Utterance&) const = default;
};

struct Dialogue {
  std::string group_id;
  std::vector<Utterance> utterances;  // sorted by start, ties in file order

  std::optional<std::size_t> index_of(std::string_view id) const;
  bool operator==(const Dialogue&) const = default;
};

// Parses a transcript document: either a JSON array of records or an object
// with `segments` (and optionally `group_id`). Each record has `speaker`,
// `text`, `start`, `end` and optionally `id`; missing ids become
// "<group>-<n>" with n counting records from 1 in file order.
Dialogue load_transcript(std::string_view text, std::string_view default_group_id,
                         std::string_view source = "transcript");
// The group id defaults to the file stem.
Dialogue load_transcript_file(const std::filesystem::path& path);
std::string serialize_transcript(const Dialogue& d);

enum class Annotator { kH1, kH2, kAdjudicated };
std::string_view to_string(Annotator a);
Annotator annotator_from_string(std::string_view s);

struct GroundTruth {
  std::string utterance_id;
  std::string event;
  std::string act;
  Annotator annotator = Annotator::kH1;
};

// CSV with header `utterance_id,event,act,annotator`.
std::vector<GroundTruth> parse_ground_truth(std::string_view text,
                                            std::string_view source = "ground truth");
std::vector<GroundTruth> load_ground_truth_file(const std::filesystem::path& path);
std::string serialize_ground_truth(const std::vector<GroundTruth>& labels);

// Read-only view of a dialogue with zero or more annotator labels per
// utterance. Labels are canonicalized against the codebook.
class LabeledDialogue {
 public:
  const Dialogue& dialogue() const { return *dialogue_; }
  std::vector<GroundTruth> labels_for(std::string_view utterance_id) const;
  std::optional<CodeLabel> label(std::string_view utterance_id, Annotator a) const;

 private:
  friend LabeledDialogue attach_labels(const Dialogue&, const std::vector<GroundTruth>&,
                                       const Codebook&);
  const Dialogue* dialogue_ = nullptr;
  std::map<std::string, std::vector<GroundTruth>, std::less<>> labels_;
};

// The view references `d`, which must outlive it.
LabeledDialogue attach_labels(const Dialogue& d, const std::vector<GroundTruth>& labels,
                              const Codebook& cb);

enum class Subset { kValidation, kTest, kRemainder, kAll };
std::string_view to_string(Subset s);
Subset subset_from_string(std::string_view s);

struct SplitRatios {
  double validation = 0.30;
  double test = 0.10;
  double remainder = 0.60;

  bool operator==(const SplitRatios&) const = default;
};

enum class SplitUnit { kUtterance, kDialogue };

struct DatasetSplit {
  std::set<std::string> validation;
  std::set<std::string> test;
  std::set<std::string> remainder;
  std::uint64_t seed = 0;
  SplitRatios ratios;
  SplitUnit unit = SplitUnit::kUtterance;

  // kAll covers all three sets.
  bool contains(Subset s, const std::string& id) const;
  std::set<std::string> ids(Subset s) const;

  std::string to_json() const;
  static DatasetSplit from_json(std::string_view text);
  bool operator==(const DatasetSplit&) const = default;
};

// Seeded partition. Validation gets round(r_v * n) ids, test gets
// round(r_t * n) capped by what is left, remainder takes the rest. With
// SplitUnit::kDialogue whole dialogues are assigned in shuffled order until
// each quota is reached.
DatasetSplit split_dataset(const std::vector<Dialogue>& dialogues, SplitRatios ratios,
                           std::uint64_t seed, SplitUnit unit = SplitUnit::kUtterance);

}  // namespace dialogcode
