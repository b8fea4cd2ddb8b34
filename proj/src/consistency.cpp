#include "dialogcode/consistency.hpp"

#include <algorithm>
#include <set>

#include <spdlog/spdlog.h>

#include "dialogcode/util.hpp"

namespace dialogcode {

std::string_view to_string(CodeSource s) {
  switch (s) {
    case CodeSource::kEnsemble: return "ensemble";
    case CodeSource::kConsistencyRevision: return "consistency";
    case CodeSource::kHuman: return "human";
  }
  return "?";
}

std::optional<Violation> detect_violation(const CodedUtterance& current, const CodedUtterance& next,
                                          const Codebook& cb, std::size_t position) {
  if (!cb.is_interactive_pair(current.act, next.act)) return std::nullopt;
  if (name_key(current.event) == name_key(next.event)) return std::nullopt;
  return Violation{position, current.act, next.act, current.event, next.event};
}

std::optional<Verdict> parse_verdict(std::string_view raw, const Codebook& cb) {
  const std::string lowered = to_lower(raw);
  const auto pos = lowered.rfind("verdict");
  if (pos == std::string::npos) return std::nullopt;
  auto colon = lowered.find(':', pos);
  if (colon == std::string::npos) return std::nullopt;
  const auto eol = lowered.find('\n', colon);
  std::string line = trim(lowered.substr(colon + 1, eol == std::string::npos ? std::string::npos : eol - colon - 1));
  std::string original = trim(raw.substr(colon + 1, eol == std::string::npos ? std::string_view::npos : eol - colon - 1));
  auto strip = [](std::string s) {
    while (!s.empty() && (s.back() == '.' || s.back() == '*' || s.back() == '"')) s.pop_back();
    while (!s.empty() && (s.front() == '*' || s.front() == '"')) s.erase(s.begin());
    return trim(s);
  };
  line = strip(line);
  original = strip(original);

  Verdict v;
  v.raw = std::string(raw);
  if (line == "consistent") return v;

  std::string_view rest;
  if (line.rfind("revise-current", 0) == 0) {
    v.kind = VerdictKind::kReviseCurrent;
    rest = std::string_view(original).substr(std::string_view("revise-current").size());
  } else if (line.rfind("revise-next", 0) == 0) {
    v.kind = VerdictKind::kReviseNext;
    rest = std::string_view(original).substr(std::string_view("revise-next").size());
  } else {
    return std::nullopt;
  }
  std::string code = trim(rest);
  if (!code.empty() && code.front() == ':') code = trim(code.substr(1));
  code = strip(code);
  if (code.empty()) return std::nullopt;

  if (const auto* ev = cb.find_event(code)) {
    v.event = ev->name;
    return v;
  }
  // "<Event>-<Act>"; the event itself may contain hyphens.
  const auto dash = code.rfind('-');
  if (dash != std::string::npos) {
    const auto* ev = cb.find_event(trim(code.substr(0, dash)));
    const auto act = trim(code.substr(dash + 1));
    if (ev != nullptr) {
      v.event = ev->name;
      if (const auto* a = cb.find_act(act)) v.act = a->name;
      else if (name_key(act) == name_key(kNoAct)) v.act = std::string(kNoAct);
      else return std::nullopt;
      return v;
    }
  }
  return std::nullopt;
}

Verdict adjudicate(const Violation& violation, const PromptContext& ctx, const PromptRenderer& renderer,
                   const CheckerFn& checker, const Codebook& cb) {
  ChatRequest req = renderer.render_consistency(ctx);
  const std::string first = checker(req);
  if (auto v = parse_verdict(first, cb)) return *v;

  spdlog::warn("consistency verdict at position {} unreadable; asking once more", violation.position);
  req.user_text += "\n\nYour previous reply did not end with a usable verdict. Reply with one final line, "
                   "exactly one of:\nVerdict: consistent\nVerdict: revise-current: <event>\n"
                   "Verdict: revise-next: <event>\nwhere <event> is an event name from the coding framework.";
  req.sample_index = 1;
  const std::string second = checker(req);
  if (auto v = parse_verdict(second, cb)) return *v;

  spdlog::warn("consistency verdict at position {} still unreadable; leaving codes unchanged", violation.position);
  Verdict keep;
  keep.raw = second;
  return keep;
}

namespace {

std::string fingerprint(const std::vector<CodedUtterance>& seq) {
  std::string fp;
  for (const auto& c : seq) {
    fp += c.event;
    fp += '\x1f';
    fp += c.act;
    fp += '\x1e';
  }
  return fp;
}

void set_code(CodedUtterance& u, const CodeLabel& code, int round) {
  u.history.push_back({round, u.event, u.act, code.event, code.act});
  u.event = code.event;
  u.act = code.act;
  u.source = CodeSource::kConsistencyRevision;
  u.source_round = round;
}

// The code an utterance would get from `v`, or nullopt when the revision is
// a no-op or would produce an illegal code.
std::optional<CodeLabel> revised_code(const CodedUtterance& u, const Verdict& v, const Codebook& cb) {
  const auto* ev = cb.find_event(v.event);
  if (ev == nullptr) return std::nullopt;
  std::string act;
  if (!v.act.empty()) {
    act = v.act;
  } else if (!ev->has_acts) {
    act = std::string(kNoAct);
  } else if (u.act != kNoAct) {
    act = u.act;
  } else {
    act = u.predicted_act;
  }
  try {
    auto code = cb.make_label(ev->name, act);
    if (code == u.code()) return std::nullopt;
    return code;
  } catch (const ValidationError& e) {
    spdlog::warn("ignoring revision of {} to {}: {}", u.utterance_id, ev->name, e.what());
    return std::nullopt;
  }
}

}  // namespace

std::size_t count_violations(const std::vector<CodedUtterance>& sequence, const Codebook& cb) {
  std::size_t n = 0;
  for (std::size_t i = 0; i + 1 < sequence.size(); ++i) {
    if (detect_violation(sequence[i], sequence[i + 1], cb, i)) ++n;
  }
  return n;
}

FixpointResult run_fixpoint(std::vector<CodedUtterance> sequence, const Codebook& cb,
                            const Adjudicator& adjudicator, int max_rounds) {
  if (max_rounds < 1) throw Error("max_rounds must be at least 1");
  FixpointResult result;
  result.sequence = std::move(sequence);
  auto& seq = result.sequence;
  auto& stats = result.stats;
  stats.utterances = seq.size();

  const std::vector<CodedUtterance> initial = seq;
  std::set<std::string> seen{fingerprint(seq)};
  // State after each round (index 0 = input) with its violation count.
  std::vector<std::pair<std::vector<CodeLabel>, std::size_t>> snapshots;
  auto snapshot = [&] {
    std::vector<CodeLabel> codes;
    for (const auto& c : seq) codes.push_back(c.code());
    snapshots.emplace_back(std::move(codes), count_violations(seq, cb));
  };
  snapshot();

  for (int round = 1; round <= max_rounds; ++round) {
    int changes = 0;
    for (std::size_t i = 0; i + 1 < seq.size(); ++i) {
      auto violation = detect_violation(seq[i], seq[i + 1], cb, i);
      if (!violation) continue;
      Verdict verdict;
      try {
        verdict = adjudicator(*violation, seq);
      } catch (const std::exception& e) {
        stats.rounds = round;
        stats.changes_per_round.push_back(changes);
        throw FixpointInterrupted(std::string("consistency check interrupted: ") + e.what(), result, round);
      }
      if (verdict.kind == VerdictKind::kConsistent) continue;
      const std::size_t target = verdict.kind == VerdictKind::kReviseCurrent ? i : i + 1;
      auto code = revised_code(seq[target], verdict, cb);
      if (!code) continue;
      result.audit.push_back({round, target, seq[target].utterance_id, seq[target].code(), *code, sha256_hex(verdict.raw)});
      set_code(seq[target], *code, round);
      ++changes;
    }
    stats.rounds = round;
    stats.changes_per_round.push_back(changes);
    if (changes == 0) break;

    if (!seen.insert(fingerprint(seq)).second) {
      stats.oscillation_detected = true;
      std::size_t best = 0;
      for (std::size_t s = 1; s < snapshots.size(); ++s) {
        if (snapshots[s].second < snapshots[best].second) best = s;
      }
      stats.fallback_round = static_cast<int>(best);
      spdlog::warn("consistency check oscillates at round {}; restoring the state after round {}", round, best);
      const auto& codes = snapshots[best].first;
      for (std::size_t i = 0; i < seq.size(); ++i) {
        if (seq[i].code() == codes[i]) continue;
        result.audit.push_back({round + 1, i, seq[i].utterance_id, seq[i].code(), codes[i], "fallback"});
        set_code(seq[i], codes[i], round + 1);
      }
      break;
    }
    snapshot();
    if (round == max_rounds) stats.hit_round_cap = true;
  }

  for (std::size_t i = 0; i < seq.size(); ++i) {
    if (!seq[i].history.empty()) ++stats.changed_utterances;
    if (seq[i].code() != initial[i].code()) ++stats.net_changed_utterances;
  }
  stats.revision_events = result.audit.size();
  if (!seq.empty()) {
    stats.total_changed_fraction = static_cast<double>(stats.changed_utterances) / seq.size();
    stats.revision_event_fraction = static_cast<double>(stats.revision_events) / seq.size();
  }
  return result;
}

std::vector<CodeLabel> replay_audit(const std::vector<CodedUtterance>& initial,
                                    const std::vector<RevisionRecord>& audit) {
  std::vector<CodeLabel> codes;
  for (const auto& c : initial) codes.push_back(c.code());
  for (const auto& r : audit) codes.at(r.position) = r.new_code;
  return codes;
}

}  // namespace dialogcode
