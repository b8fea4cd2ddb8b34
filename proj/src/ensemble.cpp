#include "dialogcode/ensemble.hpp"

#include <algorithm>

#include <spdlog/spdlog.h>

#include "dialogcode/error.hpp"

namespace dialogcode {

Frequencies weighted_frequency(const PredictionSet& ps) {
  if (ps.entries.empty()) throw Error("prediction set for '" + ps.task_id + "' is empty");
  std::vector<const PredictionEntry*> order;
  order.reserve(ps.entries.size());
  for (const auto& e : ps.entries) order.push_back(&e);
  std::sort(order.begin(), order.end(), [](const PredictionEntry* a, const PredictionEntry* b) {
    if (a->provider_id != b->provider_id) return a->provider_id < b->provider_id;
    if (a->sample_index != b->sample_index) return a->sample_index < b->sample_index;
    return a->label < b->label;
  });
  Frequencies f;
  for (const auto* e : order) f[e->label] += e->weight;
  return f;
}

Selection select_final(const Frequencies& freqs) {
  if (freqs.empty()) throw Error("cannot select from empty frequencies");
  double best = freqs.begin()->second;
  for (const auto& [label, w] : freqs) best = std::max(best, w);
  std::vector<std::string> top;
  for (const auto& [label, w] : freqs) {
    if (w == best) top.push_back(label);
  }
  if (top.size() == 1) return top.front();
  return Tie{std::move(top)};
}

VoteOutcome resolve(PredictionSet& ps, const Requery& requery, int max_rounds) {
  VoteOutcome out;
  for (;;) {
    out.frequencies = weighted_frequency(ps);
    auto sel = select_final(out.frequencies);
    if (auto* label = std::get_if<std::string>(&sel)) {
      out.final_label = *label;
      return out;
    }
    const auto& tie = std::get<Tie>(sel);
    if (out.rounds >= max_rounds || !requery) {
      out.final_label = tie.labels.front();
      out.forced = true;
      spdlog::warn("{}: still tied after {} extra rounds; taking '{}'", ps.task_id, out.rounds, out.final_label);
      return out;
    }
    ++out.rounds;
    auto extra = requery(out.rounds);
    ps.entries.insert(ps.entries.end(), extra.begin(), extra.end());
  }
}

}  // namespace dialogcode
