#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "dialogcode/codebook.hpp"
#include "dialogcode/transcript.hpp"

namespace dialogcode {

struct LabelSeries {
  Dimension dimension = Dimension::kEvent;
  std::string rater;
  std::vector<std::pair<std::string, std::string>> items;  // (utterance id, label)
};

struct ConfusionMatrix {
  std::vector<std::string> labels;  // row and column order
  std::vector<std::vector<std::int64_t>> counts;  // counts[i][j]: a said i, b said j
  std::int64_t total = 0;
  std::size_t only_in_a = 0;  // ids present in one series only
  std::size_t only_in_b = 0;

  std::int64_t row_sum(std::size_t i) const;
  std::int64_t col_sum(std::size_t j) const;
  std::int64_t trace() const;
};

// Label space used for evaluation. The act dimension includes `None` when
// the codebook has events without acts.
std::vector<std::string> evaluation_labels(const Codebook& cb, Dimension d);

// Compares the series over their shared ids. Throws when nothing is shared,
// when a label is outside `label_space`, or when more than
// `max_unmatched_fraction` of all ids appear in only one series.
ConfusionMatrix confusion(const LabelSeries& a, const LabelSeries& b, const std::vector<std::string>& label_space,
                          double max_unmatched_fraction = 1.0);

struct KappaResult {
  double value = 0.0;
  bool degenerate = false;  // chance agreement is 1 (a single class throughout)
};

KappaResult cohen_kappa(const ConfusionMatrix& cm);

struct ClassMetrics {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  double iou = 0.0;
  std::int64_t support = 0;  // ground-truth count
};

struct MetricsReport {
  double kappa = 0.0;
  bool kappa_degenerate = false;
  double accuracy = 0.0;  // also the percent agreement
  double macro_f1 = 0.0;
  double weighted_f1 = 0.0;
  double macro_iou = 0.0;
  double weighted_iou = 0.0;
  std::map<std::string, ClassMetrics> per_class;
  std::int64_t n = 0;
};

// Which confusion axis holds ground truth.
enum class TruthAxis { kRows, kColumns };

// Per-class precision/recall/F1/IoU (0 where undefined), accuracy, macro
// means over the full label space and support-weighted means. Also fills
// kappa.
MetricsReport classification_metrics(const ConfusionMatrix& cm, TruthAxis truth_axis);

// Codes keyed by utterance id.
using CodeMap = std::map<std::string, CodeLabel>;

LabelSeries make_series(const CodeMap& codes, Dimension d, std::string rater);

struct Comparison {
  std::string name;       // e.g. "M vs H1"
  std::string rater;
  std::string reference;  // treated as ground truth
  std::map<Dimension, MetricsReport> by_dimension;
  std::map<Dimension, ConfusionMatrix> confusions;
};

struct AgreementReport {
  std::vector<Comparison> rows;
  std::vector<std::string> notices;  // skipped pairs, id mismatches
};

// Rows in order H1 vs H2, M vs H1, M vs H2, then M vs adjudicated when such
// labels exist. Pairs with a missing series are skipped with a notice. Only
// ids in `scope` are compared (all ids when scope is empty).
AgreementReport agreement_report(const CodeMap& model, const std::map<Annotator, CodeMap>& humans,
                                 const Codebook& cb, const std::vector<Dimension>& dimensions,
                                 const std::set<std::string>& scope = {});

// Metrics for one rater against one reference over the given dimensions.
// `name` is "<rater> vs <reference>" unless given explicitly.
Comparison compare_codes(const std::string& rater_name, const CodeMap& rater, const std::string& reference_name,
                         const CodeMap& reference,
                         const Codebook& cb, const std::vector<Dimension>& dimensions,
                         const std::set<std::string>& scope = {});

}  // namespace dialogcode
