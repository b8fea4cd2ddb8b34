#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "dialogcode/error.hpp"
#include "dialogcode/metrics.hpp"
#include "oracles.hpp"

using namespace dialogcode;

namespace {

ConfusionMatrix from_counts(std::vector<std::vector<std::int64_t>> counts) {
  ConfusionMatrix cm;
  for (std::size_t i = 0; i < counts.size(); ++i) cm.labels.push_back(std::string(1, char('A' + i)));
  cm.counts = std::move(counts);
  for (const auto& row : cm.counts) {
    for (auto v : row) cm.total += v;
  }
  return cm;
}

LabelSeries series(Dimension d, std::string rater, const std::vector<std::string>& labels) {
  LabelSeries s;
  s.dimension = d;
  s.rater = std::move(rater);
  for (std::size_t i = 0; i < labels.size(); ++i) s.items.emplace_back("id" + std::to_string(i), labels[i]);
  return s;
}

struct RandomPair {
  std::vector<std::string> classes;
  std::vector<std::string> predicted;
  std::vector<std::string> truth;
};

RandomPair random_pair(std::mt19937_64& rng) {
  std::uniform_int_distribution<int> k_dist(1, 10), n_dist(1, 200);
  RandomPair p;
  const int k = k_dist(rng);
  for (int c = 0; c < k; ++c) p.classes.push_back("c" + std::to_string(c));
  std::uniform_int_distribution<int> pick(0, k - 1);
  std::bernoulli_distribution agree(std::uniform_real_distribution<double>(0, 1)(rng));
  const int n = n_dist(rng);
  for (int i = 0; i < n; ++i) {
    p.truth.push_back(p.classes[pick(rng)]);
    p.predicted.push_back(agree(rng) ? p.truth.back() : p.classes[pick(rng)]);
  }
  return p;
}

}  // namespace

TEST_SUITE("metrics") {
  static const Codebook& cb = Codebook::bundled_default();

  TEST_CASE("confusion counts shared ids cell by cell") {
    const std::vector<std::string> space = {"A", "B", "C"};
    const auto same = confusion(series(Dimension::kEvent, "a", {"A", "B", "C", "A", "B"}),
                                series(Dimension::kEvent, "b", {"A", "B", "C", "A", "B"}), space);
    CHECK(same.trace() == 5);
    CHECK(same.total == 5);

    const auto disjoint = confusion(series(Dimension::kEvent, "a", {"A", "A", "B", "B"}),
                                    series(Dimension::kEvent, "b", {"C", "C", "C", "C"}), space);
    CHECK(disjoint.trace() == 0);

    // a: A A B C C B ; b: A B B C A C
    const auto cm = confusion(series(Dimension::kEvent, "a", {"A", "A", "B", "C", "C", "B"}),
                              series(Dimension::kEvent, "b", {"A", "B", "B", "C", "A", "C"}), space);
    const std::vector<std::vector<std::int64_t>> expected = {{1, 1, 0}, {0, 1, 1}, {1, 0, 1}};
    CHECK(cm.counts == expected);
    CHECK(cm.row_sum(0) == 2);
    CHECK(cm.col_sum(2) == 2);
  }

  TEST_CASE("confusion reports and limits mismatched ids") {
    auto a = series(Dimension::kAct, "a", {"Ask", "Give", "Agree"});
    auto b = series(Dimension::kAct, "b", {"Ask", "Give"});
    b.items.emplace_back("other", "Agree");
    const std::vector<std::string> space = {"Ask", "Give", "Agree"};
    const auto cm = confusion(a, b, space);
    CHECK(cm.total == 2);
    CHECK(cm.only_in_a == 1);
    CHECK(cm.only_in_b == 1);
    CHECK_THROWS_AS(confusion(a, b, space, 0.2), Error);

    LabelSeries empty = b;
    empty.items = {{"zzz", "Ask"}};
    CHECK_THROWS_AS(confusion(a, empty, space), Error);
    CHECK_THROWS_AS(confusion(a, series(Dimension::kAct, "b", {"Ask", "Wink"}), space), Error);
    CHECK_THROWS_AS(confusion(a, series(Dimension::kEvent, "b", {"Ask"}), space), Error);
  }

  TEST_CASE("kappa examples") {
    CHECK(cohen_kappa(from_counts({{20, 5}, {10, 15}})).value == doctest::Approx(0.4).epsilon(1e-12));
    CHECK(cohen_kappa(from_counts({{3, 0, 0}, {0, 4, 0}, {0, 0, 2}})).value == 1.0);
    const auto one_class = cohen_kappa(from_counts({{9, 0}, {0, 0}}));
    CHECK(one_class.degenerate);
    CHECK(one_class.value == 1.0);
    CHECK_FALSE(cohen_kappa(from_counts({{5, 5}, {5, 5}})).degenerate);
    CHECK(cohen_kappa(from_counts({{5, 5}, {5, 5}})).value == doctest::Approx(0.0));
  }

  TEST_CASE("classification metrics examples") {
    const auto r = classification_metrics(from_counts({{8, 2}, {3, 7}}), TruthAxis::kRows);
    CHECK(r.per_class.at("A").f1 == doctest::Approx(16.0 / 21.0).epsilon(1e-12));
    CHECK(r.per_class.at("B").f1 == doctest::Approx(14.0 / 19.0).epsilon(1e-12));
    CHECK(std::abs(r.weighted_f1 - 0.7494) < 1e-4);
    CHECK(r.per_class.at("A").support == 10);
    CHECK(r.accuracy == doctest::Approx(0.75));

    const auto perfect = classification_metrics(from_counts({{3, 0, 0}, {0, 4, 0}, {0, 0, 2}}), TruthAxis::kColumns);
    CHECK(perfect.accuracy == 1.0);
    CHECK(perfect.weighted_f1 == 1.0);
    CHECK(perfect.weighted_iou == 1.0);

    const auto absent = classification_metrics(from_counts({{3, 0, 0}, {0, 4, 0}, {0, 0, 0}}), TruthAxis::kColumns);
    CHECK(absent.per_class.at("C").f1 == 0.0);
    CHECK(absent.per_class.at("C").support == 0);
    CHECK(absent.macro_f1 == doctest::Approx(2.0 / 3.0));
    CHECK(absent.weighted_f1 == 1.0);
  }

  TEST_CASE("metrics agree with the brute-force oracle") {
    std::mt19937_64 rng(2024);
    for (int trial = 0; trial < 200; ++trial) {
      const auto p = random_pair(rng);
      std::vector<std::pair<std::string, std::string>> pairs;
      for (std::size_t i = 0; i < p.truth.size(); ++i) pairs.emplace_back(p.predicted[i], p.truth[i]);
      const auto expected = oracle::metrics(pairs, p.classes);
      const auto cm = confusion(series(Dimension::kEvent, "m", p.predicted), series(Dimension::kEvent, "h", p.truth),
                                p.classes);
      const auto r = classification_metrics(cm, TruthAxis::kColumns);
      CHECK(std::abs(r.kappa - expected.kappa) <= 1e-12);
      CHECK(r.kappa_degenerate == expected.degenerate);
      CHECK(std::abs(r.accuracy - expected.accuracy) <= 1e-12);
      CHECK(std::abs(r.macro_f1 - expected.macro_f1) <= 1e-12);
      CHECK(std::abs(r.weighted_f1 - expected.weighted_f1) <= 1e-12);
      CHECK(std::abs(r.macro_iou - expected.macro_iou) <= 1e-12);
      CHECK(std::abs(r.weighted_iou - expected.weighted_iou) <= 1e-12);
    }
  }

  TEST_CASE("structural properties") {
    std::mt19937_64 rng(77);
    for (int trial = 0; trial < 200; ++trial) {
      auto p = random_pair(rng);
      const auto a = series(Dimension::kEvent, "a", p.predicted);
      const auto b = series(Dimension::kEvent, "b", p.truth);
      const auto ab = confusion(a, b, p.classes);
      const auto ba = confusion(b, a, p.classes);
      CHECK(std::abs(cohen_kappa(ab).value - cohen_kappa(ba).value) <= 1e-12);

      const auto self = cohen_kappa(confusion(a, a, p.classes));
      CHECK(self.value == doctest::Approx(1.0).epsilon(1e-12));

      const auto r = classification_metrics(ab, TruthAxis::kColumns);
      double weighted_recall = 0, max_f1 = 0, max_iou = 0;
      for (const auto& [label, m] : r.per_class) {
        weighted_recall += m.recall * m.support;
        max_f1 = std::max(max_f1, m.f1);
        max_iou = std::max(max_iou, m.iou);
      }
      CHECK(std::abs(r.accuracy - weighted_recall / r.n) <= 1e-12);
      CHECK(r.weighted_f1 <= max_f1 + 1e-12);
      CHECK(r.weighted_iou <= max_iou + 1e-12);
      CHECK(r.kappa >= -1.0);
      CHECK(r.kappa <= 1.0 + 1e-12);
      for (double v : {r.accuracy, r.macro_f1, r.weighted_f1, r.macro_iou, r.weighted_iou}) {
        CHECK(v >= 0.0);
        CHECK(v <= 1.0 + 1e-12);
      }

      // Same permutation applied to both series.
      std::vector<std::size_t> order(p.truth.size());
      for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
      std::shuffle(order.begin(), order.end(), rng);
      LabelSeries pa = a, pb = b;
      for (std::size_t i = 0; i < order.size(); ++i) {
        pa.items[i] = a.items[order[i]];
        pb.items[i] = b.items[order[i]];
      }
      const auto rp = classification_metrics(confusion(pa, pb, p.classes), TruthAxis::kColumns);
      CHECK(rp.kappa == r.kappa);
      CHECK(rp.weighted_f1 == r.weighted_f1);
      CHECK(rp.macro_iou == r.macro_iou);
    }
  }

  TEST_CASE("macro sits below weighted when frequent classes score better") {
    // Class A is frequent and well predicted, B and C are rare and missed more often.
    const auto r = classification_metrics(from_counts({{40, 2, 2}, {3, 2, 1}, {2, 1, 1}}), TruthAxis::kColumns);
    REQUIRE(r.per_class.at("A").f1 > r.per_class.at("B").f1);
    REQUIRE(r.per_class.at("A").support > r.per_class.at("B").support);
    CHECK(r.macro_f1 <= r.weighted_f1);
    CHECK(r.macro_iou <= r.weighted_iou);
  }

  TEST_CASE("evaluation label spaces") {
    CHECK(evaluation_labels(cb, Dimension::kEvent).size() == 10);
    const auto acts = evaluation_labels(cb, Dimension::kAct);
    CHECK(acts.size() == 7);
    CHECK(acts.back() == "None");
    CHECK(evaluation_labels(cb, Dimension::kCombined).size() == 45);
  }

  TEST_CASE("agreement report rows and notices") {
    CodeMap h1 = {{"u1", {"Planning", "Ask"}}, {"u2", {"Planning", "Answer"}}, {"u3", {"Encouragement", "None"}}};
    CodeMap h2 = h1;
    h2["u3"] = {"Emotional Expression", "None"};
    const std::vector<Dimension> dims = {Dimension::kCombined, Dimension::kEvent, Dimension::kAct};

    const auto report = agreement_report(h1, {{Annotator::kH1, h1}, {Annotator::kH2, h2}}, cb, dims);
    REQUIRE(report.rows.size() == 3);
    CHECK(report.rows[0].name == "H1 vs H2");
    CHECK(report.rows[1].name == "M vs H1");
    CHECK(report.rows[2].name == "M vs H2");
    CHECK(report.notices.empty());
    for (auto d : dims) CHECK(report.rows[1].by_dimension.at(d).kappa == 1.0);
    CHECK(report.rows[0].by_dimension.at(Dimension::kAct).accuracy == 1.0);
    CHECK(report.rows[0].by_dimension.at(Dimension::kEvent).accuracy == doctest::Approx(2.0 / 3.0));

    const auto only_h1 = agreement_report(h1, {{Annotator::kH1, h1}}, cb, dims);
    CHECK(only_h1.rows.size() == 1);
    CHECK(only_h1.notices.size() == 2);

    const auto with_adj = agreement_report(h1, {{Annotator::kH1, h1}, {Annotator::kAdjudicated, h2}}, cb, dims);
    CHECK(with_adj.rows.back().name == "M vs adjudicated");

    const auto scoped = agreement_report(h1, {{Annotator::kH1, h1}, {Annotator::kH2, h2}}, cb, dims, {"u1", "u2"});
    CHECK(scoped.rows[0].by_dimension.at(Dimension::kEvent).n == 2);
    CHECK(scoped.rows[0].by_dimension.at(Dimension::kEvent).accuracy == 1.0);
  }

  TEST_CASE("combined codes join event and act") {
    CodeMap m = {{"u1", {"Planning", "Ask"}}, {"u2", {"Planning", "Give"}}};
    CodeMap h = {{"u1", {"Planning", "Answer"}}, {"u2", {"Planning", "Give"}}};
    const auto c = compare_codes("M", m, "H1", h, cb, {Dimension::kCombined, Dimension::kEvent});
    CHECK(c.name == "M vs H1");
    CHECK(c.by_dimension.at(Dimension::kEvent).accuracy == 1.0);
    CHECK(c.by_dimension.at(Dimension::kCombined).accuracy == 0.5);
  }

  TEST_CASE("planted disagreements match the oracle") {
    std::mt19937_64 rng(99);
    const auto labels = cb.labels_for(Dimension::kCombined);
    std::uniform_int_distribution<std::size_t> pick(0, labels.size() - 1);
    CodeMap h1, model;
    std::vector<std::pair<std::string, std::string>> pairs;
    for (int i = 0; i < 100; ++i) {
      const auto id = "u" + std::to_string(i);
      const auto truth = *cb.parse_rendered(labels[pick(rng)]);
      auto guess = truth;
      if (i % 4 == 0) guess = *cb.parse_rendered(labels[pick(rng)]);
      h1[id] = truth;
      model[id] = guess;
      pairs.emplace_back(guess.render(), truth.render());
    }
    const auto report = agreement_report(model, {{Annotator::kH1, h1}}, cb, {Dimension::kCombined});
    const auto& m = report.rows.at(0).by_dimension.at(Dimension::kCombined);
    const auto expected = oracle::metrics(pairs, evaluation_labels(cb, Dimension::kCombined));
    CHECK(std::abs(m.kappa - expected.kappa) <= 1e-12);
    CHECK(std::abs(m.weighted_f1 - expected.weighted_f1) <= 1e-12);
    CHECK(std::abs(m.macro_iou - expected.macro_iou) <= 1e-12);
  }
}
