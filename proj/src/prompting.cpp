#include "dialogcode/prompting.hpp"

#include <cstdio>
#include <regex>

#include <spdlog/spdlog.h>

#include "dialogcode/embedded_data.hpp"
#include "dialogcode/error.hpp"
#include "dialogcode/util.hpp"

namespace dialogcode {

namespace {

const std::set<std::string>& known_placeholders() {
  static const std::set<std::string> names{
      "codebook_digest", "full_dialogue",  "target_utterance", "task_materials",
      "event_labels",    "act_labels",     "combined_labels",  "pair_rule",
      "neighbor_window", "pair_assessment"};
  return names;
}

constexpr std::array<TemplateId, 5> kAllTemplates{TemplateId::kRevision, TemplateId::kEvent, TemplateId::kAct,
                                                  TemplateId::kCombined, TemplateId::kConsistencyCheck};

std::size_t slot(TemplateId id) { return static_cast<std::size_t>(id); }

std::string_view bundled_text(TemplateId id) {
  switch (id) {
    case TemplateId::kRevision: return embedded::kRevisionTemplate;
    case TemplateId::kEvent: return embedded::kEventTemplate;
    case TemplateId::kAct: return embedded::kActTemplate;
    case TemplateId::kCombined: return embedded::kCombinedTemplate;
    case TemplateId::kConsistencyCheck: return embedded::kConsistencyTemplate;
  }
  return {};
}

void render_into(std::string_view text, const std::map<std::string, std::string>& bindings, std::string& out) {
  std::size_t pos = 0;
  while (pos < text.size()) {
    const auto open = text.find("{{", pos);
    if (open == std::string_view::npos) {
      out.append(text.substr(pos));
      return;
    }
    out.append(text.substr(pos, open - pos));
    const auto close = text.find("}}", open + 2);
    if (close == std::string_view::npos) throw RenderError("unterminated placeholder in template");
    const std::string tag = trim(text.substr(open + 2, close - open - 2));
    pos = close + 2;
    if (tag.empty()) throw RenderError("empty placeholder in template");
    if (tag.front() == '/') throw RenderError("section end '" + tag.substr(1) + "' without a start");
    if (tag.front() == '#') {
      const std::string name = trim(tag.substr(1));
      const std::string end_tag = "{{/" + name + "}}";
      const auto end = text.find(end_tag, pos);
      if (end == std::string_view::npos) throw RenderError("section '" + name + "' is never closed");
      auto it = bindings.find(name);
      if (it != bindings.end() && !trim(it->second).empty()) render_into(text.substr(pos, end - pos), bindings, out);
      pos = end + end_tag.size();
      continue;
    }
    auto it = bindings.find(tag);
    if (it == bindings.end()) throw RenderError("missing binding for placeholder '" + tag + "'");
    out.append(it->second);
  }
}

std::string tidy(std::string s) {
  static const std::regex blank_runs("\n[ \t]*\n([ \t]*\n)+");
  s = std::regex_replace(s, blank_runs, "\n\n");
  return trim(s);
}

std::string bullet_list(const std::vector<std::string>& items) {
  std::string out;
  for (const auto& i : items) out += "- " + i + "\n";
  if (!out.empty()) out.pop_back();
  return out;
}

std::string format_seconds(double s) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", s);
  return buf;
}

}  // namespace

std::string render_placeholders(std::string_view text, const std::map<std::string, std::string>& bindings) {
  std::string out;
  render_into(text, bindings, out);
  return tidy(std::move(out));
}

PromptTemplate PromptTemplate::parse(TemplateId id, std::string_view file_text) {
  static constexpr std::string_view kSystem = "=== system ===";
  static constexpr std::string_view kUser = "=== user ===";
  const auto sys = file_text.find(kSystem);
  const auto user = file_text.find(kUser);
  if (sys == std::string_view::npos || user == std::string_view::npos || user < sys) {
    throw MalformedDocumentError(std::string(template_file_name(id)),
                                 "expected '=== system ===' followed by '=== user ===' sections");
  }
  PromptTemplate t;
  t.template_id = id;
  t.system_role_text = trim(file_text.substr(sys + kSystem.size(), user - sys - kSystem.size()));
  t.body = trim(file_text.substr(user + kUser.size()));
  static const std::regex tag(R"(\{\{\s*[#/]?\s*([A-Za-z_][A-Za-z0-9_]*)\s*\}\})");
  std::vector<std::string> unknown;
  for (const auto* part : {&t.system_role_text, &t.body}) {
    for (std::sregex_iterator it(part->begin(), part->end(), tag), end; it != end; ++it) {
      const auto name = (*it)[1].str();
      t.placeholders.insert(name);
      if (!known_placeholders().count(name)) unknown.push_back(name);
    }
  }
  if (!unknown.empty()) {
    std::vector<std::string> problems;
    for (const auto& n : unknown) problems.push_back(std::string(template_file_name(id)) + ": unknown placeholder '" + n + "'");
    throw ValidationError(std::move(problems));
  }
  if (t.system_role_text.empty()) {
    throw ValidationError({std::string(template_file_name(id)) + ": role text must not be empty"});
  }
  return t;
}

std::string_view template_file_name(TemplateId id) {
  switch (id) {
    case TemplateId::kRevision: return "revision.txt";
    case TemplateId::kEvent: return "event.txt";
    case TemplateId::kAct: return "act.txt";
    case TemplateId::kCombined: return "combined.txt";
    case TemplateId::kConsistencyCheck: return "consistency.txt";
  }
  return "?";
}

TemplateSet TemplateSet::bundled() {
  TemplateSet set;
  for (auto id : kAllTemplates) set.templates_[slot(id)] = PromptTemplate::parse(id, bundled_text(id));
  return set;
}

TemplateSet TemplateSet::load_dir(const std::filesystem::path& dir) {
  TemplateSet set = bundled();
  for (auto id : kAllTemplates) {
    const auto path = dir / template_file_name(id);
    if (std::filesystem::exists(path)) {
      set.templates_[slot(id)] = PromptTemplate::parse(id, read_text_file(path));
    } else {
      spdlog::info("template {} not found in {}; using the bundled one", template_file_name(id), dir.string());
    }
  }
  return set;
}

const PromptTemplate& TemplateSet::get(TemplateId id) const { return templates_[slot(id)]; }

std::string render_codebook_digest(const Codebook& cb) {
  std::string out = "Interactions and their events:\n";
  for (const auto& inter : cb.interactions()) {
    out += "* " + inter.name + " interactions: " + inter.definition + "\n";
    for (const auto& e : cb.events()) {
      if (e.interaction != inter.name) continue;
      out += "  - " + e.name + ": " + e.definition;
      if (!e.example_utterance.empty()) out += " Example: \"" + e.example_utterance + "\"";
      if (!e.has_acts) out += " (no acts; its act is " + std::string(kNoAct) + ")";
      out += "\n";
    }
  }
  out += "Acts (each utterance performs one act inside its event):\n";
  for (const auto& a : cb.acts()) out += "  - " + a.name + ": " + a.definition + "\n";
  out.pop_back();
  return out;
}

std::string render_utterance_line(const Utterance& u, bool use_revised) {
  return "[" + u.id + "] " + u.speaker + " (" + format_seconds(u.start) + "-" + format_seconds(u.end) +
         "s): " + (use_revised ? u.working_text() : u.text);
}

std::string render_dialogue(const Dialogue& d, std::size_t center, std::size_t window, bool use_revised) {
  std::size_t first = 0;
  std::size_t last = d.utterances.size();
  if (window > 0 && !d.utterances.empty()) {
    first = center > window ? center - window : 0;
    last = std::min(d.utterances.size(), center + window + 1);
  }
  std::string out;
  if (first > 0) out += "(" + std::to_string(first) + " earlier utterances omitted)\n";
  for (std::size_t i = first; i < last; ++i) out += render_utterance_line(d.utterances[i], use_revised) + "\n";
  if (last < d.utterances.size()) {
    out += "(" + std::to_string(d.utterances.size() - last) + " later utterances omitted)\n";
  }
  if (!out.empty()) out.pop_back();
  return out;
}

PromptContext make_context(const Codebook& cb, const Dialogue& d, std::size_t index, std::size_t window,
                           std::string task_materials, bool use_revised) {
  if (index >= d.utterances.size()) throw Error("utterance index out of range");
  const auto& u = d.utterances[index];
  PromptContext ctx;
  ctx.codebook_digest = render_codebook_digest(cb);
  ctx.full_dialogue = render_dialogue(d, index, window, use_revised);
  ctx.target_id = u.id;
  ctx.target_text = use_revised ? u.working_text() : u.text;
  ctx.target_utterance = render_utterance_line(u, use_revised);
  ctx.task_materials = std::move(task_materials);
  return ctx;
}

PromptRenderer::PromptRenderer(const Codebook& cb, TemplateSet templates) : cb_(cb), templates_(std::move(templates)) {}

ChatRequest PromptRenderer::render(TemplateId id, const PromptContext& ctx) const {
  std::map<std::string, std::string> b;
  b["codebook_digest"] = ctx.codebook_digest;
  b["task_materials"] = ctx.task_materials;
  if (ctx.full_dialogue && !trim(*ctx.full_dialogue).empty()) b["full_dialogue"] = *ctx.full_dialogue;
  if (!ctx.target_utterance.empty()) b["target_utterance"] = ctx.target_utterance;
  b["event_labels"] = bullet_list(cb_.labels_for(Dimension::kEvent));
  b["act_labels"] = bullet_list(cb_.labels_for(Dimension::kAct));
  b["combined_labels"] = bullet_list(cb_.labels_for(Dimension::kCombined));
  {
    std::vector<std::string> pairs;
    for (const auto& p : cb_.sequence_pairs()) pairs.push_back(p.initiator + " -> " + p.responder);
    b["pair_rule"] = bullet_list(pairs);
  }

  ChatRequest req;
  req.tag.kind = id;
  req.tag.attrs["task_materials"] = ctx.task_materials;

  if (id == TemplateId::kConsistencyCheck) {
    if (ctx.neighbor_window.size() < 2) {
      throw RenderError("consistency prompt needs a neighbor window with the current and next utterance");
    }
    const auto& cur = ctx.neighbor_window[0];
    const auto& next = ctx.neighbor_window[1];
    std::string window;
    const char* roles[] = {"Current utterance", "Next utterance"};
    for (std::size_t i = 0; i < ctx.neighbor_window.size(); ++i) {
      const auto& n = ctx.neighbor_window[i];
      window += (i < 2 ? std::string(roles[i]) : "Following utterance") + ": " + n.line + "\n  Code: " +
                CodeLabel{n.event, n.act}.render() + "\n";
    }
    window.pop_back();
    b["neighbor_window"] = window;
    std::string assessment;
    if (cb_.is_interactive_pair(cur.act, next.act)) {
      if (name_key(cur.event) != name_key(next.event)) {
        assessment = "Attention: the acts " + cur.act + " -> " + next.act +
                     " form an interactive sequence, but the events differ (" + cur.event + " vs " +
                     next.event + "). Decide which event is correct for this exchange.";
      } else {
        assessment = "The acts " + cur.act + " -> " + next.act +
                     " form an interactive sequence and both utterances already share the event " + cur.event + ".";
      }
    } else {
      assessment = "The acts " + cur.act + " -> " + next.act +
                   " do not form an interactive sequence, so their events need not match.";
    }
    b["pair_assessment"] = assessment;
    req.tag.utterance_ids = {cur.utterance_id, next.utterance_id};
    req.tag.attrs["current_event"] = cur.event;
    req.tag.attrs["current_act"] = cur.act;
    req.tag.attrs["next_event"] = next.event;
    req.tag.attrs["next_act"] = next.act;
  } else {
    req.tag.utterance_ids = {ctx.target_id};
    req.tag.attrs["text"] = ctx.target_text;
  }

  if (ctx.full_dialogue && !ctx.target_utterance.empty() &&
      ctx.full_dialogue->find(ctx.target_utterance) == std::string::npos) {
    throw RenderError("target utterance does not appear in the rendered dialogue");
  }

  const auto& tpl = templates_.get(id);
  req.system_text = render_placeholders(tpl.system_role_text, b);
  req.user_text = render_placeholders(tpl.body, b);
  return req;
}

ChatRequest PromptRenderer::render_revision(const PromptContext& ctx) const { return render(TemplateId::kRevision, ctx); }
ChatRequest PromptRenderer::render_event(const PromptContext& ctx) const { return render(TemplateId::kEvent, ctx); }
ChatRequest PromptRenderer::render_act(const PromptContext& ctx) const { return render(TemplateId::kAct, ctx); }
ChatRequest PromptRenderer::render_combined(const PromptContext& ctx) const { return render(TemplateId::kCombined, ctx); }
ChatRequest PromptRenderer::render_consistency(const PromptContext& ctx) const {
  return render(TemplateId::kConsistencyCheck, ctx);
}

ChatRequest PromptRenderer::render_prediction(Dimension d, const PromptContext& ctx) const {
  switch (d) {
    case Dimension::kEvent: return render_event(ctx);
    case Dimension::kAct: return render_act(ctx);
    case Dimension::kCombined: return render_combined(ctx);
  }
  throw Error("unknown dimension");
}

}  // namespace dialogcode
