#include "dialogcode/metrics.hpp"

#include <algorithm>
#include <set>
#include <unordered_map>

#include "dialogcode/error.hpp"

namespace dialogcode {

std::int64_t ConfusionMatrix::row_sum(std::size_t i) const {
  std::int64_t s = 0;
  for (auto v : counts[i]) s += v;
  return s;
}

std::int64_t ConfusionMatrix::col_sum(std::size_t j) const {
  std::int64_t s = 0;
  for (const auto& row : counts) s += row[j];
  return s;
}

std::int64_t ConfusionMatrix::trace() const {
  std::int64_t s = 0;
  for (std::size_t i = 0; i < counts.size(); ++i) s += counts[i][i];
  return s;
}

std::vector<std::string> evaluation_labels(const Codebook& cb, Dimension d) {
  auto labels = cb.labels_for(d);
  if (d == Dimension::kAct) {
    const bool any_no_act = std::any_of(cb.events().begin(), cb.events().end(),
                                        [](const EventCode& e) { return !e.has_acts; });
    if (any_no_act) labels.emplace_back(kNoAct);
  }
  return labels;
}

ConfusionMatrix confusion(const LabelSeries& a, const LabelSeries& b, const std::vector<std::string>& label_space,
                          double max_unmatched_fraction) {
  if (a.dimension != b.dimension) throw Error("cannot compare series of different dimensions");
  std::unordered_map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < label_space.size(); ++i) index.emplace(label_space[i], i);

  auto lookup = [&](const std::string& label, const std::string& rater) {
    auto it = index.find(label);
    if (it == index.end()) throw Error("label '" + label + "' from " + rater + " is outside the label space");
    return it->second;
  };

  std::map<std::string, std::size_t> b_labels;
  for (const auto& [id, label] : b.items) {
    if (!b_labels.emplace(id, lookup(label, b.rater)).second) throw Error("duplicate id '" + id + "' in " + b.rater);
  }

  ConfusionMatrix cm;
  cm.labels = label_space;
  cm.counts.assign(label_space.size(), std::vector<std::int64_t>(label_space.size(), 0));
  std::set<std::string> a_ids;
  for (const auto& [id, label] : a.items) {
    if (!a_ids.insert(id).second) throw Error("duplicate id '" + id + "' in " + a.rater);
    const auto i = lookup(label, a.rater);
    auto it = b_labels.find(id);
    if (it == b_labels.end()) {
      ++cm.only_in_a;
      continue;
    }
    ++cm.counts[i][it->second];
    ++cm.total;
  }
  cm.only_in_b = b_labels.size() - static_cast<std::size_t>(cm.total);
  if (cm.total == 0) throw Error("series " + a.rater + " and " + b.rater + " share no ids");
  const double all = static_cast<double>(cm.total + cm.only_in_a + cm.only_in_b);
  if ((cm.only_in_a + cm.only_in_b) / all > max_unmatched_fraction) {
    throw Error("series " + a.rater + " and " + b.rater + " disagree on too many ids (" +
                std::to_string(cm.only_in_a + cm.only_in_b) + " unmatched)");
  }
  return cm;
}

KappaResult cohen_kappa(const ConfusionMatrix& cm) {
  if (cm.total <= 0) throw Error("kappa needs at least one item");
  const auto total = cm.total;
  std::int64_t chance = 0;
  for (std::size_t c = 0; c < cm.labels.size(); ++c) chance += cm.row_sum(c) * cm.col_sum(c);
  const double p_o = static_cast<double>(cm.trace()) / total;
  if (chance == total * total) return {cm.trace() == total ? 1.0 : 0.0, true};
  const double p_e = static_cast<double>(chance) / (static_cast<double>(total) * total);
  return {(p_o - p_e) / (1.0 - p_e), false};
}

MetricsReport classification_metrics(const ConfusionMatrix& cm, TruthAxis truth_axis) {
  MetricsReport r;
  r.n = cm.total;
  const auto kappa = cohen_kappa(cm);
  r.kappa = kappa.value;
  r.kappa_degenerate = kappa.degenerate;
  r.accuracy = static_cast<double>(cm.trace()) / cm.total;

  const std::size_t k = cm.labels.size();
  for (std::size_t c = 0; c < k; ++c) {
    const std::int64_t tp = cm.counts[c][c];
    const std::int64_t truth_count = truth_axis == TruthAxis::kRows ? cm.row_sum(c) : cm.col_sum(c);
    const std::int64_t pred_count = truth_axis == TruthAxis::kRows ? cm.col_sum(c) : cm.row_sum(c);
    const std::int64_t fp = pred_count - tp;
    const std::int64_t fn = truth_count - tp;
    ClassMetrics m;
    m.support = truth_count;
    m.precision = pred_count > 0 ? static_cast<double>(tp) / pred_count : 0.0;
    m.recall = truth_count > 0 ? static_cast<double>(tp) / truth_count : 0.0;
    m.f1 = m.precision + m.recall > 0 ? 2.0 * m.precision * m.recall / (m.precision + m.recall) : 0.0;
    m.iou = tp + fp + fn > 0 ? static_cast<double>(tp) / (tp + fp + fn) : 0.0;
    r.macro_f1 += m.f1;
    r.macro_iou += m.iou;
    r.weighted_f1 += m.f1 * truth_count;
    r.weighted_iou += m.iou * truth_count;
    r.per_class.emplace(cm.labels[c], m);
  }
  if (k > 0) {
    r.macro_f1 /= k;
    r.macro_iou /= k;
  }
  r.weighted_f1 /= cm.total;
  r.weighted_iou /= cm.total;
  return r;
}

namespace {
std::string series_label(const CodeLabel& code, Dimension d) {
  switch (d) {
    case Dimension::kEvent: return code.event;
    case Dimension::kAct: return code.act;
    case Dimension::kCombined: return code.render();
  }
  return {};
}
}  // namespace

LabelSeries make_series(const CodeMap& codes, Dimension d, std::string rater) {
  LabelSeries s;
  s.dimension = d;
  s.rater = std::move(rater);
  for (const auto& [id, code] : codes) s.items.emplace_back(id, series_label(code, d));
  return s;
}

Comparison compare_codes(const std::string& rater_name, const CodeMap& rater, const std::string& reference_name,
                         const CodeMap& reference,
                         const Codebook& cb, const std::vector<Dimension>& dimensions,
                         const std::set<std::string>& scope) {
  auto restrict = [&scope](const CodeMap& m) {
    if (scope.empty()) return m;
    CodeMap out;
    for (const auto& [id, code] : m) {
      if (scope.count(id)) out.emplace(id, code);
    }
    return out;
  };
  const auto r = restrict(rater);
  const auto ref = restrict(reference);
  Comparison c;
  c.rater = rater_name;
  c.reference = reference_name;
  c.name = rater_name + " vs " + reference_name;
  for (auto d : dimensions) {
    auto cm = confusion(make_series(r, d, c.rater), make_series(ref, d, c.reference), evaluation_labels(cb, d));
    c.by_dimension.emplace(d, classification_metrics(cm, TruthAxis::kColumns));
    c.confusions.emplace(d, std::move(cm));
  }
  return c;
}

AgreementReport agreement_report(const CodeMap& model, const std::map<Annotator, CodeMap>& humans,
                                 const Codebook& cb, const std::vector<Dimension>& dimensions,
                                 const std::set<std::string>& scope) {
  AgreementReport report;
  auto human = [&humans](Annotator a) -> const CodeMap* {
    auto it = humans.find(a);
    return it == humans.end() || it->second.empty() ? nullptr : &it->second;
  };
  struct Pair {
    std::string name;
    std::string rater_name;
    const CodeMap* rater;
    std::string reference_name;
    const CodeMap* reference;
  };
  const CodeMap* m = model.empty() ? nullptr : &model;
  // H1 vs H2 takes H1 as the reference.
  std::vector<Pair> pairs{{"H1 vs H2", "H2", human(Annotator::kH2), "H1", human(Annotator::kH1)},
                          {"M vs H1", "M", m, "H1", human(Annotator::kH1)},
                          {"M vs H2", "M", m, "H2", human(Annotator::kH2)}};
  if (human(Annotator::kAdjudicated)) {
    pairs.push_back({"M vs adjudicated", "M", m, "adjudicated", human(Annotator::kAdjudicated)});
  }
  for (const auto& p : pairs) {
    if (p.rater == nullptr || p.reference == nullptr) {
      report.notices.push_back(p.name + ": skipped, a series is missing");
      continue;
    }
    try {
      auto row = compare_codes(p.rater_name, *p.rater, p.reference_name, *p.reference, cb, dimensions, scope);
      row.name = p.name;
      const auto& any = row.confusions.begin()->second;
      if (any.only_in_a + any.only_in_b > 0) {
        report.notices.push_back(p.name + ": " + std::to_string(any.only_in_a) + " ids only in " + row.rater + ", " +
                                 std::to_string(any.only_in_b) + " only in " + row.reference);
      }
      report.rows.push_back(std::move(row));
    } catch (const Error& e) {
      report.notices.push_back(p.name + ": skipped, " + e.what());
    }
  }
  return report;
}

}  // namespace dialogcode
