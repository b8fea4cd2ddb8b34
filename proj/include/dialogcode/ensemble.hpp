#pragma once

#include <functional>
#include <map>
#include <string>
#include <variant>
#include <vector>

#include "dialogcode/codebook.hpp"

namespace dialogcode {

struct PredictionEntry {
  std::string provider_id;
  double weight = 1.0;
  int sample_index = 0;
  std::string label;
};

// All samples collected for one (utterance, dimension) task.
struct PredictionSet {
  std::string task_id;
  Dimension dimension = Dimension::kEvent;
  std::vector<PredictionEntry> entries;
  int providers = 0;           // distinct providers asked
  int samples_per_provider = 0;
};

// Label -> summed weight. Labels never predicted are absent.
using Frequencies = std::map<std::string, double>;

struct Tie {
  std::vector<std::string> labels;  // sorted
  bool operator==(const Tie&) const = default;
};

using Selection = std::variant<std::string, Tie>;

struct VoteOutcome {
  std::string final_label;
  Frequencies frequencies;
  int rounds = 0;       // tie-break rounds used
  bool forced = false;  // still tied after max_rounds; smallest label taken
};

// F_c = sum over entries of weight * [label == c]. Entries are summed in
// (provider_id, sample_index) order so the result does not depend on the
// order they were collected in. Throws on an empty set.
Frequencies weighted_frequency(const PredictionSet& ps);

// Unique maximizer, or every label sharing the maximum.
Selection select_final(const Frequencies& freqs);

// Called once per tie-break round; returns one new sample per provider.
using Requery = std::function<std::vector<PredictionEntry>(int round)>;

// Votes, and while tied asks every provider for one more sample, up to
// `max_rounds` rounds. New entries are appended to `ps`, so a failure inside
// `requery` leaves the samples gathered so far in place.
VoteOutcome resolve(PredictionSet& ps, const Requery& requery, int max_rounds = 3);

}  // namespace dialogcode
