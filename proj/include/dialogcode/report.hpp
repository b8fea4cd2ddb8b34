#pragma once

#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dialogcode/consistency.hpp"
#include "dialogcode/metrics.hpp"

namespace dialogcode {

nlohmann::json to_json(const ClassMetrics& m);
nlohmann::json to_json(const MetricsReport& m);
nlohmann::json to_json(const FixpointStats& s);
// Rows are the rater, columns the reference.
nlohmann::json to_json(const ConfusionMatrix& cm);

// A report row: {"name": ..., "dimensions": {"event": {...}, ...}}.
nlohmann::json metrics_row(const std::string& name, const std::map<Dimension, MetricsReport>& by_dimension);
nlohmann::json metrics_row(const Comparison& c);

// Fixed-width table with one line per (row, dimension): kappa, accuracy,
// macro and weighted F1, macro and weighted IoU.
std::string format_metrics_table(const std::string& title, const nlohmann::json& rows);

// Plain-text rendering of a metrics.<subset>.json document.
std::string format_subset_report(const nlohmann::json& doc);

// Side-by-side view of several runs' metrics documents for the same subset.
// Each entry of `docs` is prefixed with its label in the row names.
std::string format_comparison(const std::vector<std::pair<std::string, nlohmann::json>>& docs);

}  // namespace dialogcode
