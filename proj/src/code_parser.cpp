#include "dialogcode/code_parser.hpp"

#include <algorithm>
#include <cctype>
#include <optional>
#include <vector>

#include "dialogcode/error.hpp"
#include "dialogcode/util.hpp"

namespace dialogcode {

std::string ParsedPrediction::label() const {
  switch (dimension) {
    case Dimension::kEvent: return event;
    case Dimension::kAct: return act;
    case Dimension::kCombined: return event + "-" + act;
  }
  return {};
}

namespace {

// Lowercase, single spaces, and no spaces around hyphens.
std::string canonical_text(std::string_view s) {
  std::string n = normalize_label_text(s);
  std::string out;
  out.reserve(n.size());
  for (std::size_t i = 0; i < n.size(); ++i) {
    if (n[i] == ' ' && ((i + 1 < n.size() && n[i + 1] == '-') || (!out.empty() && out.back() == '-'))) {
      continue;
    }
    out.push_back(n[i]);
  }
  return out;
}

// "BuildOn" -> "Build On"; other names come back unchanged.
std::string split_camel(std::string_view name) {
  std::string out;
  for (std::size_t i = 0; i < name.size(); ++i) {
    const auto c = static_cast<unsigned char>(name[i]);
    if (i > 0 && std::isupper(c) && std::islower(static_cast<unsigned char>(name[i - 1]))) out.push_back(' ');
    out.push_back(name[i]);
  }
  return out;
}

std::vector<std::string> surface_forms(std::string_view name) {
  std::vector<std::string> forms{canonical_text(name)};
  const auto spaced = canonical_text(split_camel(name));
  if (spaced != forms.front()) forms.push_back(spaced);
  return forms;
}

struct Candidate {
  std::string form;
  ParsedPrediction value;
};

std::vector<Candidate> candidates_for(const Codebook& cb, Dimension d) {
  std::vector<Candidate> out;
  switch (d) {
    case Dimension::kEvent:
      for (const auto& e : cb.events()) {
        for (auto& f : surface_forms(e.name)) out.push_back({f, {d, e.name, {}, {}}});
      }
      break;
    case Dimension::kAct:
      for (const auto& a : cb.acts()) {
        for (auto& f : surface_forms(a.name)) out.push_back({f, {d, {}, a.name, {}}});
      }
      break;
    case Dimension::kCombined:
      for (const auto& l : cb.combined_label_space()) {
        const auto event_forms = surface_forms(l.event);
        for (const auto& ef : event_forms) {
          for (const auto& af : surface_forms(l.act)) out.push_back({ef + "-" + af, {d, l.event, l.act, {}}});
          // An event without acts may be answered by its name alone.
          if (l.act == kNoAct) out.push_back({ef, {d, l.event, l.act, {}}});
        }
      }
      break;
  }
  return out;
}

bool is_word_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) != 0; }

std::string strip_decoration(std::string_view s) {
  auto is_deco = [](char c) {
    return std::isspace(static_cast<unsigned char>(c)) || c == '*' || c == '_' || c == '"' ||
           c == '\'' || c == '`' || c == '.' || c == '[' || c == ']' || c == '<' || c == '>';
  };
  while (!s.empty() && is_deco(s.front())) s.remove_prefix(1);
  while (!s.empty() && is_deco(s.back())) s.remove_suffix(1);
  return std::string(s);
}

std::optional<ParsedPrediction> resolve_exact(std::string_view answer, const Codebook& cb, Dimension d,
                                              const std::vector<Candidate>& cands) {
  const auto text = canonical_text(strip_decoration(answer));
  if (text.empty()) return std::nullopt;
  for (const auto& c : cands) {
    if (c.form == text) return c.value;
  }
  if (d == Dimension::kCombined) {
    if (auto l = cb.parse_rendered(text)) return ParsedPrediction{d, l->event, l->act, {}};
  }
  return std::nullopt;
}

// Position of the last whole-word occurrence of any candidate; longer forms
// win ties so "self-disclosure-none" beats "none".
std::optional<ParsedPrediction> resolve_last_mention(const std::string& text,
                                                     const std::vector<Candidate>& cands) {
  const Candidate* best = nullptr;
  std::size_t best_end = 0;
  for (const auto& c : cands) {
    std::size_t pos = text.rfind(c.form);
    while (pos != std::string::npos) {
      const std::size_t end = pos + c.form.size();
      const bool left_ok = pos == 0 || !is_word_char(text[pos - 1]);
      const bool right_ok = end == text.size() || !is_word_char(text[end]);
      if (left_ok && right_ok) {
        if (best == nullptr || end > best_end || (end == best_end && c.form.size() > best->form.size())) {
          best = &c;
          best_end = end;
        }
        break;
      }
      if (pos == 0) break;
      pos = text.rfind(c.form, pos - 1);
    }
  }
  if (best == nullptr) return std::nullopt;
  return best->value;
}

}  // namespace

ParsedPrediction parse_code_response(std::string_view raw, const Codebook& cb, Dimension dimension) {
  const auto cands = candidates_for(cb, dimension);

  // Prefer the last explicit "label:" line.
  std::string_view rest = raw;
  std::optional<std::size_t> label_line_start;
  std::optional<ParsedPrediction> found;
  {
    const std::string lowered = to_lower(raw);
    std::size_t pos = lowered.rfind("label");
    while (pos != std::string::npos && !found) {
      std::size_t colon = pos + 5;
      while (colon < lowered.size() && (lowered[colon] == '*' || lowered[colon] == ' ')) ++colon;
      if (colon < lowered.size() && lowered[colon] == ':') {
        const auto eol = lowered.find('\n', colon);
        const auto answer = rest.substr(colon + 1, eol == std::string::npos ? std::string_view::npos : eol - colon - 1);
        found = resolve_exact(answer, cb, dimension, cands);
        if (found) label_line_start = pos;
      }
      if (pos == 0) break;
      pos = lowered.rfind("label", pos - 1);
    }
  }
  if (!found) found = resolve_last_mention(canonical_text(raw), cands);
  if (!found) {
    throw ResponseParseError("no " + std::string(to_string(dimension)) + " label found in reply",
                             std::string(raw));
  }
  found->dimension = dimension;
  if (label_line_start) {
    auto note = trim(raw.substr(0, *label_line_start));
    if (note.size() > 500) note = note.substr(note.size() - 500);
    found->confidence_note = std::move(note);
  }
  return *found;
}

std::string repair_instruction(const Codebook& cb, Dimension dimension) {
  std::string out =
      "Your previous reply did not end with a label I could read. Answer with exactly one label "
      "from the list below, on a single line in the form \"Label: <label>\".\n";
  for (const auto& l : cb.labels_for(dimension)) out += "- " + l + "\n";
  return out;
}

}  // namespace dialogcode
