#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "dialogcode/codebook.hpp"
#include "dialogcode/error.hpp"
#include "dialogcode/llm_client.hpp"
#include "dialogcode/prompting.hpp"

namespace dialogcode {

enum class CodeSource { kEnsemble, kConsistencyRevision, kHuman };
std::string_view to_string(CodeSource s);

struct HistoryEntry {
  int round = 0;
  std::string prior_event;
  std::string prior_act;
  std::string new_event;
  std::string new_act;
};

struct CodedUtterance {
  std::string utterance_id;
  std::string event;
  std::string act;
  // Act vote before the no-act rule was applied. Restored when a revision
  // moves the utterance from an event without acts to one with acts.
  std::string predicted_act;
  CodeSource source = CodeSource::kEnsemble;
  int source_round = 0;
  std::vector<HistoryEntry> history;  // append-only

  CodeLabel code() const { return {event, act}; }
};

// Adjacent utterances whose acts form a declared sequence pair but whose
// events differ.
struct Violation {
  std::size_t position = 0;  // index of the current utterance
  std::string current_act;
  std::string next_act;
  std::string current_event;
  std::string next_event;
};

std::optional<Violation> detect_violation(const CodedUtterance& current, const CodedUtterance& next,
                                          const Codebook& cb, std::size_t position = 0);

enum class VerdictKind { kConsistent, kReviseCurrent, kReviseNext };

struct Verdict {
  VerdictKind kind = VerdictKind::kConsistent;
  std::string event;  // canonical; empty when consistent
  std::string act;    // empty unless the checker proposed an act too
  std::string raw;
};

// Reads the last "Verdict:" line. The revised code may be an event name or
// an "<Event>-<Act>" rendering. Returns nullopt when unreadable or when the
// event is not in the codebook.
std::optional<Verdict> parse_verdict(std::string_view raw, const Codebook& cb);

using CheckerFn = std::function<std::string(const ChatRequest&)>;

// Renders the consistency prompt for `violation` (ctx.neighbor_window holds
// the current and next utterance with their codes), asks the checker, and
// parses its verdict. An unreadable verdict gets one repair prompt; a second
// failure is logged and treated as consistent.
Verdict adjudicate(const Violation& violation, const PromptContext& ctx, const PromptRenderer& renderer,
                   const CheckerFn& checker, const Codebook& cb);

struct RevisionRecord {
  int round = 0;
  std::size_t position = 0;
  std::string utterance_id;
  CodeLabel old_code;
  CodeLabel new_code;
  std::string verdict_hash;  // sha256 of the checker reply; "fallback" for state restores
};

struct FixpointStats {
  int rounds = 0;
  std::vector<int> changes_per_round;
  std::size_t utterances = 0;
  std::size_t changed_utterances = 0;  // revised at least once
  std::size_t net_changed_utterances = 0;  // final code differs from the input
  std::size_t revision_events = 0;
  double total_changed_fraction = 0.0;  // changed_utterances / utterances
  double revision_event_fraction = 0.0;
  bool oscillation_detected = false;
  bool hit_round_cap = false;
  std::optional<int> fallback_round;  // state restored after oscillation
};

struct FixpointResult {
  std::vector<CodedUtterance> sequence;
  FixpointStats stats;
  std::vector<RevisionRecord> audit;
};

// Decides one violation given the sequence as it stands.
using Adjudicator = std::function<Verdict(const Violation&, const std::vector<CodedUtterance>&)>;

// Thrown when the adjudicator fails mid-run. Carries the partially revised
// sequence so the caller can inspect or resume.
class FixpointInterrupted : public Error {
 public:
  FixpointInterrupted(const std::string& what, FixpointResult partial, int round)
      : Error(what), partial_(std::move(partial)), round_(round) {}
  const FixpointResult& partial() const { return partial_; }
  int round() const { return round_; }

 private:
  FixpointResult partial_;
  int round_;
};

// Scans adjacent pairs from the start, applying each revision immediately,
// and repeats until a round makes no change, `max_rounds` is reached, or a
// global state repeats. On a repeat the state with the fewest violations
// (earliest on ties) is restored.
FixpointResult run_fixpoint(std::vector<CodedUtterance> sequence, const Codebook& cb,
                            const Adjudicator& adjudicator, int max_rounds = 10);

std::size_t count_violations(const std::vector<CodedUtterance>& sequence, const Codebook& cb);

// Applies an audit log to the pre-fixpoint sequence.
std::vector<CodeLabel> replay_audit(const std::vector<CodedUtterance>& initial,
                                    const std::vector<RevisionRecord>& audit);

}  // namespace dialogcode
