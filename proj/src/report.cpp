#include "dialogcode/report.hpp"

#include <fmt/format.h>

namespace dialogcode {

using nlohmann::json;

json to_json(const ClassMetrics& m) {
  return {{"precision", m.precision}, {"recall", m.recall}, {"f1", m.f1}, {"iou", m.iou}, {"support", m.support}};
}

json to_json(const MetricsReport& m) {
  json per_class = json::object();
  for (const auto& [label, cm] : m.per_class) per_class[label] = to_json(cm);
  return {{"kappa", m.kappa},
          {"kappa_degenerate", m.kappa_degenerate},
          {"accuracy", m.accuracy},
          {"macro_f1", m.macro_f1},
          {"weighted_f1", m.weighted_f1},
          {"macro_iou", m.macro_iou},
          {"weighted_iou", m.weighted_iou},
          {"n", m.n},
          {"per_class", per_class}};
}

json to_json(const FixpointStats& s) {
  json j{{"rounds", s.rounds},
         {"changes_per_round", s.changes_per_round},
         {"utterances", s.utterances},
         {"changed_utterances", s.changed_utterances},
         {"net_changed_utterances", s.net_changed_utterances},
         {"revision_events", s.revision_events},
         {"total_changed_fraction", s.total_changed_fraction},
         {"revision_event_fraction", s.revision_event_fraction},
         {"oscillation_detected", s.oscillation_detected},
         {"hit_round_cap", s.hit_round_cap}};
  j["fallback_round"] = s.fallback_round ? json(*s.fallback_round) : json(nullptr);
  return j;
}

json metrics_row(const std::string& name, const std::map<Dimension, MetricsReport>& by_dimension) {
  json dims = json::object();
  for (const auto& [d, m] : by_dimension) dims[std::string(to_string(d))] = to_json(m);
  return {{"name", name}, {"dimensions", dims}};
}

json to_json(const ConfusionMatrix& cm) {
  return {{"labels", cm.labels},
          {"counts", cm.counts},
          {"total", cm.total},
          {"only_in_rater", cm.only_in_a},
          {"only_in_reference", cm.only_in_b}};
}

json metrics_row(const Comparison& c) {
  auto row = metrics_row(c.name, c.by_dimension);
  row["rater"] = c.rater;
  row["reference"] = c.reference;
  json confusions = json::object();
  for (const auto& [d, cm] : c.confusions) confusions[std::string(to_string(d))] = to_json(cm);
  row["confusion"] = confusions;
  return row;
}

namespace {

constexpr const char* kDimOrder[] = {"combined", "event", "act"};

std::string cell(const json& m, const char* key) {
  if (!m.contains(key)) return "-";
  return fmt::format("{:.4f}", m.at(key).get<double>());
}

bool any_degenerate(const json& doc) {
  for (const char* section : {"providers", "stages", "agreement"}) {
    if (!doc.contains(section)) continue;
    for (const auto& r : doc.at(section)) {
      for (const auto& [d, m] : r.at("dimensions").items()) {
        if (m.value("kappa_degenerate", false)) return true;
      }
    }
  }
  return false;
}

}  // namespace

std::string format_metrics_table(const std::string& title, const json& rows) {
  std::size_t name_w = 4;
  for (const auto& r : rows) name_w = std::max(name_w, r.at("name").get<std::string>().size());
  std::string out = title + "\n";
  const auto header = fmt::format("{:<{}}  {:<8}  {:>7}  {:>8}  {:>8}  {:>11}  {:>9}  {:>12}  {:>5}\n", "Row", name_w,
                                  "Codes", "Kappa", "Accuracy", "Macro-F1", "Weighted-F1", "Macro-IoU",
                                  "Weighted-IoU", "N");
  out += header;
  out += std::string(header.size() - 1, '-') + "\n";
  for (const auto& r : rows) {
    const auto& dims = r.at("dimensions");
    for (const char* d : kDimOrder) {
      if (!dims.contains(d)) continue;
      const auto& m = dims.at(d);
      std::string kappa = cell(m, "kappa");
      if (m.value("kappa_degenerate", false)) kappa += "*";
      out += fmt::format("{:<{}}  {:<8}  {:>7}  {:>8}  {:>8}  {:>11}  {:>9}  {:>12}  {:>5}\n",
                         r.at("name").get<std::string>(), name_w, d, kappa, cell(m, "accuracy"),
                         cell(m, "macro_f1"), cell(m, "weighted_f1"), cell(m, "macro_iou"),
                         cell(m, "weighted_iou"), m.value("n", 0));
    }
  }
  return out;
}

std::string format_subset_report(const json& doc) {
  std::string out = fmt::format("Run {} ({} mode), subset {}, reference {}\n\n", doc.value("run_id", "?"),
                                doc.value("mode", "?"), doc.value("subset", "?"), doc.value("reference", "?"));
  if (doc.contains("providers")) out += format_metrics_table("Single models and ensemble", doc.at("providers")) + "\n";
  if (doc.contains("stages")) out += format_metrics_table("Before and after consistency checking", doc.at("stages")) + "\n";
  if (doc.contains("agreement")) out += format_metrics_table("Agreement", doc.at("agreement")) + "\n";
  if (doc.contains("consistency") && !doc.at("consistency").is_null()) {
    const auto& c = doc.at("consistency");
    out += fmt::format("Consistency checking: {} of {} utterances changed ({:.2f}%), {} revisions, {} rounds{}\n",
                       c.value("changed_utterances", 0), c.value("utterances", 0),
                       100.0 * c.value("total_changed_fraction", 0.0), c.value("revision_events", 0),
                       c.value("rounds", 0), c.value("oscillation_detected", false) ? ", oscillation" : "");
  }
  if (doc.contains("gate")) {
    const auto& g = doc.at("gate");
    out += fmt::format("Gate: {} (combined kappa {:.4f} vs threshold {:.2f})\n", g.value("verdict", "?"),
                       g.value("kappa", 0.0), g.value("threshold", 0.0));
  }
  for (const auto& n : doc.value("notices", json::array())) out += "note: " + n.get<std::string>() + "\n";
  if (any_degenerate(doc)) out += "(* chance agreement is 1: both raters used one class throughout)\n";
  return out;
}

std::string format_comparison(const std::vector<std::pair<std::string, json>>& docs) {
  json providers = json::array();
  json stages = json::array();
  for (const auto& [label, doc] : docs) {
    for (auto row : doc.value("providers", json::array())) {
      row["name"] = label + " / " + row.at("name").get<std::string>();
      providers.push_back(row);
    }
    for (auto row : doc.value("stages", json::array())) {
      row["name"] = label + " / " + row.at("name").get<std::string>();
      stages.push_back(row);
    }
  }
  std::string out = format_metrics_table("Single models and ensemble, side by side", providers) + "\n";
  out += format_metrics_table("Before and after consistency checking, side by side", stages);
  return out;
}

}  // namespace dialogcode
