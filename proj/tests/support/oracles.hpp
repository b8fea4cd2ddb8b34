#pragma once

// Second implementations used as test oracles. They work from raw data
// (pairs of labels, flat sample lists) rather than the library's
// intermediate structures, and are written for clarity, not speed.

#include <algorithm>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

namespace oracle {

struct Sample {
  std::string provider;
  double weight;
  std::string label;
};

// Sum of weights per label, by direct enumeration over every candidate label.
inline std::map<std::string, double> weighted_frequency(const std::vector<Sample>& samples) {
  std::set<std::string> candidates;
  for (const auto& s : samples) candidates.insert(s.label);
  std::map<std::string, double> out;
  for (const auto& c : candidates) {
    // Sorted addition order makes the float sum independent of input order.
    std::vector<std::pair<std::string, double>> terms;
    for (const auto& s : samples) {
      if (s.label == c) terms.emplace_back(s.provider, s.weight);
    }
    std::sort(terms.begin(), terms.end());
    double f = 0;
    for (const auto& t : terms) f += t.second;
    out[c] = f;
  }
  return out;
}

// Every label whose frequency no other label beats.
inline std::vector<std::string> argmax_set(const std::map<std::string, double>& f) {
  std::vector<std::string> out;
  for (const auto& [c, w] : f) {
    bool beaten = false;
    for (const auto& [d, v] : f) beaten = beaten || v > w;
    if (!beaten) out.push_back(c);
  }
  return out;
}

struct Metrics {
  double kappa = 0;
  bool degenerate = false;
  double accuracy = 0;
  double macro_f1 = 0;
  double weighted_f1 = 0;
  double macro_iou = 0;
  double weighted_iou = 0;
};

// pairs: (predicted, truth). Macro means run over `classes`.
inline Metrics metrics(const std::vector<std::pair<std::string, std::string>>& pairs,
                       const std::vector<std::string>& classes) {
  Metrics m;
  const double n = static_cast<double>(pairs.size());
  long agree = 0;
  for (const auto& [p, t] : pairs) agree += p == t;
  m.accuracy = agree / n;

  long long chance_num = 0;
  for (const auto& c : classes) {
    long pc = 0, tc = 0;
    for (const auto& [p, t] : pairs) {
      pc += p == c;
      tc += t == c;
    }
    chance_num += static_cast<long long>(pc) * tc;
  }
  const long long n2 = static_cast<long long>(pairs.size()) * static_cast<long long>(pairs.size());
  if (chance_num == n2) {
    m.degenerate = true;
    m.kappa = agree == static_cast<long>(pairs.size()) ? 1.0 : 0.0;
  } else {
    const double pe = static_cast<double>(chance_num) / (n * n);
    m.kappa = (m.accuracy - pe) / (1 - pe);
  }

  for (const auto& c : classes) {
    long tp = 0, fp = 0, fn = 0, support = 0;
    for (const auto& [p, t] : pairs) {
      tp += p == c && t == c;
      fp += p == c && t != c;
      fn += p != c && t == c;
      support += t == c;
    }
    const double precision = tp + fp ? static_cast<double>(tp) / (tp + fp) : 0.0;
    const double recall = tp + fn ? static_cast<double>(tp) / (tp + fn) : 0.0;
    const double f1 = precision + recall > 0 ? 2 * precision * recall / (precision + recall) : 0.0;
    const double iou = tp + fp + fn ? static_cast<double>(tp) / (tp + fp + fn) : 0.0;
    m.macro_f1 += f1 / classes.size();
    m.macro_iou += iou / classes.size();
    m.weighted_f1 += f1 * support / n;
    m.weighted_iou += iou * support / n;
  }
  return m;
}

}  // namespace oracle
