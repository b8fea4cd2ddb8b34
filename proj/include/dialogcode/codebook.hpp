#pragma once

#include <compare>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace dialogcode {

// Which part of a code a prediction or label series refers to.
enum class Dimension { kEvent, kAct, kCombined };

std::string_view to_string(Dimension d);
Dimension dimension_from_string(std::string_view s);

// Act assigned to events that carry no acts (the socio-emotional ones).
inline constexpr std::string_view kNoAct = "None";

struct InteractionType {
  std::string name;
  std::string definition;
};

struct EventCode {
  std::string name;
  std::string interaction;
  std::string definition;
  std::string example_utterance;
  bool has_acts = true;
};

struct ActCode {
  std::string name;
  std::string definition;
};

struct SequencePair {
  std::string initiator;
  std::string responder;
};

// An (event, act) code. Rendered as "<Event>-<Act>".
struct CodeLabel {
  std::string event;
  std::string act;

  std::string render() const { return event + "-" + act; }
  auto operator<=>(const CodeLabel&) const = default;
};

// Lookup key used for case-insensitive name matching: lowercase alphanumerics
// only, so "Build on", "build_on" and "BuildOn" collide.
std::string name_key(std::string_view name);

// The layered label space: interactions -> events -> acts, plus the directed
// act pairs that must share one event when adjacent. Immutable once built.
class Codebook {
 public:
  // Parses and validates a JSON codebook document. `source` names the
  // document in error messages.
  static Codebook parse(std::string_view text, std::string_view source = "codebook");
  static Codebook load(const std::filesystem::path& path);
  static const Codebook& bundled_default();

  const std::string& version() const { return version_; }
  const std::vector<InteractionType>& interactions() const { return interactions_; }
  const std::vector<EventCode>& events() const { return events_; }
  // The substantive acts; the `None` sentinel is implicit.
  const std::vector<ActCode>& acts() const { return acts_; }
  const std::vector<SequencePair>& sequence_pairs() const { return sequence_pairs_; }

  const EventCode* find_event(std::string_view name) const;
  const ActCode* find_act(std::string_view name) const;
  const InteractionType* find_interaction(std::string_view name) const;

  bool is_interactive_pair(std::string_view first, std::string_view second) const;

  // Every legal code, sorted by rendering.
  const std::vector<CodeLabel>& combined_label_space() const { return label_space_; }

  // Closed label set for one dimension: event names, act names (without
  // `None`), or combined renderings.
  std::vector<std::string> labels_for(Dimension d) const;

  bool is_legal(const CodeLabel& label) const;

  // Resolves names case-insensitively to their canonical spelling and checks
  // the has_acts rule. Empty act for a no-act event is read as `None`.
  // Throws ValidationError naming the rule that failed.
  CodeLabel make_label(std::string_view event, std::string_view act) const;

  // Splits a rendering on its final '-' and resolves both halves.
  std::optional<CodeLabel> parse_rendered(std::string_view rendered) const;

  std::string to_json() const;

 private:
  Codebook() = default;
  void validate_and_index();

  std::string version_;
  std::vector<InteractionType> interactions_;
  std::vector<EventCode> events_;
  std::vector<ActCode> acts_;
  std::vector<SequencePair> sequence_pairs_;
  std::vector<CodeLabel> label_space_;
};

Codebook load_codebook(const std::filesystem::path& path);
bool is_interactive_pair(const Codebook& cb, std::string_view first, std::string_view second);
const std::vector<CodeLabel>& combined_label_space(const Codebook& cb);

}  // namespace dialogcode
