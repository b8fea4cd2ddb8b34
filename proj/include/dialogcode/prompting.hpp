#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "dialogcode/codebook.hpp"
#include "dialogcode/llm_client.hpp"
#include "dialogcode/transcript.hpp"

namespace dialogcode {

// A prompt family: role text for the system message plus a user body with
// {{name}} placeholders and optional {{#name}}...{{/name}} sections that
// render only when `name` is bound to non-blank text.
struct PromptTemplate {
  TemplateId template_id = TemplateId::kEvent;
  std::string system_role_text;
  std::string body;
  std::set<std::string> placeholders;

  // File layout: a "=== system ===" line, the role text, a "=== user ===" line,
  // then the body. Unknown placeholder names are rejected.
  static PromptTemplate parse(TemplateId id, std::string_view file_text);
};

// Substitutes bindings into `text`. Throws RenderError naming the first
// placeholder without a binding.
std::string render_placeholders(std::string_view text, const std::map<std::string, std::string>& bindings);

class TemplateSet {
 public:
  static TemplateSet bundled();
  // Reads <dir>/{revision,event,act,combined,consistency}.txt. Files that are
  // absent fall back to the bundled default.
  static TemplateSet load_dir(const std::filesystem::path& dir);

  const PromptTemplate& get(TemplateId id) const;

 private:
  std::array<PromptTemplate, 5> templates_;
};

std::string_view template_file_name(TemplateId id);

// One coded utterance shown to the consistency checker.
struct CodedNeighbor {
  std::string utterance_id;
  std::string line;  // rendered utterance line
  std::string event;
  std::string act;
};

struct PromptContext {
  std::string codebook_digest;
  std::optional<std::string> full_dialogue;
  std::string target_id;
  std::string target_text;       // the utterance text alone
  std::string target_utterance;  // the rendered line, as it appears in full_dialogue
  std::vector<CodedNeighbor> neighbor_window;  // current first, then next
  std::string task_materials;
};

std::string render_codebook_digest(const Codebook& cb);
std::string render_utterance_line(const Utterance& u, bool use_revised = true);

// Renders the utterances within `window` positions of `center` (0 = the
// whole dialogue), one line each.
std::string render_dialogue(const Dialogue& d, std::size_t center, std::size_t window = 0,
                            bool use_revised = true);

// Context for coding utterance `index` of `d`. Revision contexts should pass
// use_revised = false so the model sees the raw transcript.
PromptContext make_context(const Codebook& cb, const Dialogue& d, std::size_t index,
                           std::size_t window = 0, std::string task_materials = {},
                           bool use_revised = true);

// Pure rendering of the five prompt families.
class PromptRenderer {
 public:
  PromptRenderer(const Codebook& cb, TemplateSet templates);

  ChatRequest render_revision(const PromptContext& ctx) const;
  ChatRequest render_event(const PromptContext& ctx) const;
  ChatRequest render_act(const PromptContext& ctx) const;
  ChatRequest render_combined(const PromptContext& ctx) const;
  ChatRequest render_consistency(const PromptContext& ctx) const;

  ChatRequest render_prediction(Dimension d, const PromptContext& ctx) const;

 private:
  ChatRequest render(TemplateId id, const PromptContext& ctx) const;

  const Codebook& cb_;
  TemplateSet templates_;
};

}  // namespace dialogcode
