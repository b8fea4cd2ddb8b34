#include "dialogcode/codebook.hpp"

#include <algorithm>
#include <cctype>
#include <map>
#include <set>

#include <nlohmann/json.hpp>

#include "dialogcode/embedded_data.hpp"
#include "dialogcode/error.hpp"
#include "dialogcode/util.hpp"

namespace dialogcode {

using nlohmann::json;

std::string_view to_string(Dimension d) {
  switch (d) {
    case Dimension::kEvent: return "event";
    case Dimension::kAct: return "act";
    case Dimension::kCombined: return "combined";
  }
  return "?";
}

Dimension dimension_from_string(std::string_view s) {
  const auto k = to_lower(s);
  if (k == "event") return Dimension::kEvent;
  if (k == "act") return Dimension::kAct;
  if (k == "combined") return Dimension::kCombined;
  throw Error("unknown dimension '" + std::string(s) + "'");
}

std::string name_key(std::string_view name) {
  std::string key;
  for (unsigned char c : name) {
    if (std::isalnum(c)) key.push_back(static_cast<char>(std::tolower(c)));
  }
  return key;
}

namespace {

std::size_t line_of(std::string_view text, std::size_t byte) {
  byte = std::min(byte, text.size());
  return 1 + static_cast<std::size_t>(std::count(text.begin(), text.begin() + byte, '\n'));
}

// Reads one required string field; records a violation instead of throwing so
// the caller can report every problem at once.
std::string get_string(const json& obj, const std::string& field, const std::string& where,
                       std::vector<std::string>& problems, bool required = true) {
  auto it = obj.find(field);
  if (it == obj.end()) {
    if (required) problems.push_back(where + "." + field + ": missing");
    return {};
  }
  if (!it->is_string()) {
    problems.push_back(where + "." + field + ": expected string");
    return {};
  }
  return it->get<std::string>();
}

const json& get_array(const json& doc, const std::string& field, std::vector<std::string>& problems) {
  static const json kEmpty = json::array();
  auto it = doc.find(field);
  if (it == doc.end()) {
    problems.push_back(field + ": missing");
    return kEmpty;
  }
  if (!it->is_array()) {
    problems.push_back(field + ": expected array");
    return kEmpty;
  }
  return *it;
}

}  // namespace

Codebook Codebook::parse(std::string_view text, std::string_view source) {
  json doc;
  try {
    doc = json::parse(text.begin(), text.end());
  } catch (const json::parse_error& e) {
    throw MalformedDocumentError(std::string(source) + ":" + std::to_string(line_of(text, e.byte)),
                                 e.what());
  }
  if (!doc.is_object()) {
    throw MalformedDocumentError(std::string(source), "top level must be an object");
  }

  std::vector<std::string> problems;
  Codebook cb;
  cb.version_ = get_string(doc, "version", "codebook", problems);

  const auto& interactions = get_array(doc, "interactions", problems);
  for (std::size_t i = 0; i < interactions.size(); ++i) {
    const auto where = "interactions[" + std::to_string(i) + "]";
    if (!interactions[i].is_object()) {
      problems.push_back(where + ": expected object");
      continue;
    }
    cb.interactions_.push_back({get_string(interactions[i], "name", where, problems),
                                get_string(interactions[i], "definition", where, problems, false)});
  }

  const auto& events = get_array(doc, "events", problems);
  for (std::size_t i = 0; i < events.size(); ++i) {
    const auto where = "events[" + std::to_string(i) + "]";
    const auto& e = events[i];
    if (!e.is_object()) {
      problems.push_back(where + ": expected object");
      continue;
    }
    EventCode ev;
    ev.name = get_string(e, "name", where, problems);
    ev.interaction = get_string(e, "interaction", where, problems);
    ev.definition = get_string(e, "definition", where, problems, false);
    ev.example_utterance = get_string(e, "example", where, problems, false);
    auto ha = e.find("has_acts");
    if (ha == e.end()) {
      problems.push_back(where + ".has_acts: missing");
    } else if (!ha->is_boolean()) {
      problems.push_back(where + ".has_acts: expected boolean");
    } else {
      ev.has_acts = ha->get<bool>();
    }
    cb.events_.push_back(std::move(ev));
  }

  const auto& acts = get_array(doc, "acts", problems);
  for (std::size_t i = 0; i < acts.size(); ++i) {
    const auto where = "acts[" + std::to_string(i) + "]";
    if (!acts[i].is_object()) {
      problems.push_back(where + ": expected object");
      continue;
    }
    cb.acts_.push_back({get_string(acts[i], "name", where, problems),
                        get_string(acts[i], "definition", where, problems, false)});
  }

  const auto& pairs = get_array(doc, "sequence_pairs", problems);
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const auto where = "sequence_pairs[" + std::to_string(i) + "]";
    if (!pairs[i].is_object()) {
      problems.push_back(where + ": expected object");
      continue;
    }
    cb.sequence_pairs_.push_back({get_string(pairs[i], "initiator", where, problems),
                                  get_string(pairs[i], "responder", where, problems)});
  }

  // Structural problems make the integrity checks below meaningless.
  if (!problems.empty()) throw MalformedDocumentError(std::string(source), ValidationError(problems).what());

  cb.validate_and_index();
  return cb;
}

void Codebook::validate_and_index() {
  std::vector<std::string> problems;

  if (trim(version_).empty()) problems.push_back("version: must not be empty");

  auto check_unique = [&problems](const std::string& kind, const auto& items) {
    std::map<std::string, std::string> seen;
    for (const auto& item : items) {
      const auto key = name_key(item.name);
      if (key.empty()) {
        problems.push_back(kind + " name '" + item.name + "' is empty");
        continue;
      }
      auto [it, inserted] = seen.emplace(key, item.name);
      if (!inserted) {
        problems.push_back(kind + " name '" + item.name + "' duplicates '" + it->second +
                           "' (names are case-insensitive)");
      }
    }
  };
  check_unique("interaction", interactions_);
  check_unique("event", events_);
  check_unique("act", acts_);

  if (interactions_.empty()) problems.push_back("interactions: at least one is required");
  if (events_.empty()) problems.push_back("events: at least one is required");

  for (const auto& a : acts_) {
    if (name_key(a.name) == name_key(kNoAct)) {
      problems.push_back("act name '" + a.name + "' is reserved for events without acts");
    }
  }

  bool any_has_acts = false;
  for (const auto& e : events_) {
    any_has_acts = any_has_acts || e.has_acts;
    if (find_interaction(e.interaction) == nullptr) {
      problems.push_back("event '" + e.name + "' references unknown interaction '" +
                         e.interaction + "'");
    }
  }
  if (any_has_acts && acts_.empty()) {
    problems.push_back("acts: events with has_acts=true need at least one act");
  }

  std::set<std::pair<std::string, std::string>> seen_pairs;
  for (const auto& p : sequence_pairs_) {
    if (find_act(p.initiator) == nullptr) {
      problems.push_back("sequence pair initiator '" + p.initiator + "' is not a declared act");
    }
    if (find_act(p.responder) == nullptr) {
      problems.push_back("sequence pair responder '" + p.responder + "' is not a declared act");
    }
    if (!seen_pairs.emplace(name_key(p.initiator), name_key(p.responder)).second) {
      problems.push_back("sequence pair (" + p.initiator + ", " + p.responder + ") is declared twice");
    }
  }

  if (!problems.empty()) throw ValidationError(std::move(problems));

  // Store references in canonical spelling.
  for (auto& e : events_) e.interaction = find_interaction(e.interaction)->name;
  for (auto& p : sequence_pairs_) {
    p.initiator = find_act(p.initiator)->name;
    p.responder = find_act(p.responder)->name;
  }

  label_space_.clear();
  for (const auto& e : events_) {
    if (e.has_acts) {
      for (const auto& a : acts_) label_space_.push_back({e.name, a.name});
    } else {
      label_space_.push_back({e.name, std::string(kNoAct)});
    }
  }
  std::sort(label_space_.begin(), label_space_.end(),
            [](const CodeLabel& a, const CodeLabel& b) { return a.render() < b.render(); });
}

Codebook Codebook::load(const std::filesystem::path& path) {
  return parse(read_text_file(path), path.string());
}

const Codebook& Codebook::bundled_default() {
  static const Codebook cb = parse(embedded::kDefaultCodebook, "bundled default codebook");
  return cb;
}

namespace {
template <class T>
const T* find_by_name(const std::vector<T>& items, std::string_view name) {
  const auto key = name_key(name);
  if (key.empty()) return nullptr;
  for (const auto& item : items) {
    if (name_key(item.name) == key) return &item;
  }
  return nullptr;
}
}  // namespace

const EventCode* Codebook::find_event(std::string_view name) const {
  return find_by_name(events_, name);
}
const ActCode* Codebook::find_act(std::string_view name) const {
  return find_by_name(acts_, name);
}
const InteractionType* Codebook::find_interaction(std::string_view name) const {
  return find_by_name(interactions_, name);
}

bool Codebook::is_interactive_pair(std::string_view first, std::string_view second) const {
  const auto a = name_key(first);
  const auto b = name_key(second);
  return std::any_of(sequence_pairs_.begin(), sequence_pairs_.end(), [&](const SequencePair& p) {
    return name_key(p.initiator) == a && name_key(p.responder) == b;
  });
}

std::vector<std::string> Codebook::labels_for(Dimension d) const {
  std::vector<std::string> out;
  switch (d) {
    case Dimension::kEvent:
      for (const auto& e : events_) out.push_back(e.name);
      break;
    case Dimension::kAct:
      for (const auto& a : acts_) out.push_back(a.name);
      break;
    case Dimension::kCombined:
      for (const auto& l : label_space_) out.push_back(l.render());
      break;
  }
  return out;
}

bool Codebook::is_legal(const CodeLabel& label) const {
  return std::binary_search(label_space_.begin(), label_space_.end(), label,
                            [](const CodeLabel& a, const CodeLabel& b) {
                              return a.render() < b.render();
                            });
}

CodeLabel Codebook::make_label(std::string_view event, std::string_view act) const {
  const EventCode* ev = find_event(event);
  if (ev == nullptr) throw ValidationError({"unknown event '" + std::string(event) + "'"});
  const bool act_is_none = trim(act).empty() || name_key(act) == name_key(kNoAct);
  if (!ev->has_acts) {
    if (!act_is_none) {
      throw ValidationError({"event '" + ev->name + "' has no acts, so its act must be None (got '" +
                             std::string(act) + "')"});
    }
    return {ev->name, std::string(kNoAct)};
  }
  if (act_is_none) {
    throw ValidationError({"event '" + ev->name + "' requires one of the declared acts, not None"});
  }
  const ActCode* ac = find_act(act);
  if (ac == nullptr) throw ValidationError({"unknown act '" + std::string(act) + "'"});
  return {ev->name, ac->name};
}

std::optional<CodeLabel> Codebook::parse_rendered(std::string_view rendered) const {
  const auto pos = rendered.rfind('-');
  if (pos == std::string_view::npos) return std::nullopt;
  try {
    return make_label(trim(rendered.substr(0, pos)), trim(rendered.substr(pos + 1)));
  } catch (const ValidationError&) {
    return std::nullopt;
  }
}

std::string Codebook::to_json() const {
  json doc;
  doc["version"] = version_;
  doc["interactions"] = json::array();
  for (const auto& i : interactions_) {
    doc["interactions"].push_back({{"name", i.name}, {"definition", i.definition}});
  }
  doc["events"] = json::array();
  for (const auto& e : events_) {
    doc["events"].push_back({{"name", e.name},
                             {"interaction", e.interaction},
                             {"definition", e.definition},
                             {"example", e.example_utterance},
                             {"has_acts", e.has_acts}});
  }
  doc["acts"] = json::array();
  for (const auto& a : acts_) doc["acts"].push_back({{"name", a.name}, {"definition", a.definition}});
  doc["sequence_pairs"] = json::array();
  for (const auto& p : sequence_pairs_) {
    doc["sequence_pairs"].push_back({{"initiator", p.initiator}, {"responder", p.responder}});
  }
  return doc.dump(2);
}

Codebook load_codebook(const std::filesystem::path& path) { return Codebook::load(path); }

bool is_interactive_pair(const Codebook& cb, std::string_view first, std::string_view second) {
  return cb.is_interactive_pair(first, second);
}

const std::vector<CodeLabel>& combined_label_space(const Codebook& cb) {
  return cb.combined_label_space();
}

}  // namespace dialogcode
