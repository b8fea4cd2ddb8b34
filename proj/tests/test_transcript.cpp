#include <doctest.h>

#include <cmath>
#include <map>

#include "dialogcode/error.hpp"
#include "dialogcode/transcript.hpp"

using namespace dialogcode;

namespace {

std::vector<Dialogue> corpus_of(std::size_t n, std::size_t per_dialogue = 1000) {
  std::vector<Dialogue> out;
  for (std::size_t i = 0; i < n; ++i) {
    if (i % per_dialogue == 0) out.push_back({"g" + std::to_string(out.size()), {}});
    Utterance u;
    u.id = "u" + std::to_string(i);
    u.speaker = "S";
    u.text = "t";
    u.start = static_cast<double>(i);
    u.end = u.start + 1;
    out.back().utterances.push_back(u);
  }
  return out;
}

}  // namespace

TEST_SUITE("transcript") {
  TEST_CASE("records load in start order with ties kept in file order") {
    const auto d = load_transcript(R"([
      {"speaker": "A", "text": "third", "start": 5, "end": 6},
      {"speaker": "B", "text": "first", "start": 1, "end": 2},
      {"speaker": "C", "text": "second", "start": 1, "end": 3}
    ])",
                                   "grp");
    REQUIRE(d.utterances.size() == 3);
    CHECK(d.utterances[0].text == "first");
    CHECK(d.utterances[1].text == "second");
    CHECK(d.utterances[2].text == "third");
    // Generated ids count records from 1 in file order.
    CHECK(d.utterances[0].id == "grp-2");
    CHECK(d.utterances[2].id == "grp-1");
    CHECK(d.group_id == "grp");
  }

  TEST_CASE("segments object with group id") {
    const auto d = load_transcript(
        R"({"group_id": "G7", "segments": [{"id": "x", "speaker": "A", "text": "hi", "start": 0.5, "end": 0.75}]})", "fallback");
    CHECK(d.group_id == "G7");
    CHECK(d.utterances.at(0).id == "x");
    CHECK(d.utterances.at(0).start == doctest::Approx(0.5));
  }

  TEST_CASE("end before start names the record") {
    try {
      load_transcript(R"([{"speaker": "A", "text": "ok", "start": 0, "end": 1},
                          {"speaker": "A", "text": "bad", "start": 3, "end": 2}])",
                      "g");
      FAIL("expected an error");
    } catch (const Error& e) {
      CHECK(std::string(e.what()).find("1") != std::string::npos);
    }
  }

  TEST_CASE("blank text, duplicate ids and missing fields are rejected") {
    CHECK_THROWS_AS(load_transcript(R"([{"speaker": "A", "text": "   ", "start": 0, "end": 1}])", "g"), Error);
    CHECK_THROWS_AS(load_transcript(R"([{"id": "a", "speaker": "A", "text": "x", "start": 0, "end": 1},
                                        {"id": "a", "speaker": "A", "text": "y", "start": 1, "end": 2}])",
                                    "g"),
                    Error);
    CHECK_THROWS_AS(load_transcript(R"([{"speaker": "A", "start": 0, "end": 1}])", "g"), Error);
    CHECK_THROWS_AS(load_transcript("[{", "g"), MalformedDocumentError);
  }

  TEST_CASE("serialize then load round-trips") {
    auto d = load_transcript(R"([{"speaker": "A", "text": "one, \"two\"", "start": 0, "end": 1.25},
                                 {"speaker": "B", "text": "three", "start": 2, "end": 3}])",
                             "g");
    d.utterances[1].revised_text = "Three, revised.";
    const auto again = load_transcript(serialize_transcript(d), "other");
    CHECK(again == d);
  }

  TEST_CASE("split sizes follow the rounding rule") {
    auto s = split_dataset(corpus_of(10), {}, 42);
    CHECK(s.validation.size() == 3);
    CHECK(s.test.size() == 1);
    CHECK(s.remainder.size() == 6);

    // round(0.3 * 5676) = round(1702.8) = 1703; round(0.1 * 5676) = round(567.6) = 568.
    auto big = split_dataset(corpus_of(5676, 700), {}, 7);
    CHECK(big.validation.size() == 1703);
    CHECK(big.test.size() == 568);
    CHECK(big.remainder.size() == 3405);
  }

  TEST_CASE("split is a deterministic partition") {
    const auto corpus = corpus_of(137, 20);
    for (std::uint64_t seed : {1u, 2u, 99u}) {
      const auto a = split_dataset(corpus, {}, seed);
      const auto b = split_dataset(corpus, {}, seed);
      CHECK(a == b);
      std::set<std::string> all;
      for (const auto* set : {&a.validation, &a.test, &a.remainder}) {
        for (const auto& id : *set) CHECK_MESSAGE(all.insert(id).second, "id in two sets: " << id);
      }
      CHECK(all.size() == 137);
      CHECK(a.ids(Subset::kAll) == all);
    }
    CHECK(split_dataset(corpus, {}, 1) != split_dataset(corpus, {}, 2));
    CHECK_THROWS(split_dataset({}, {}, 1));
  }

  TEST_CASE("split membership is uniform over seeds") {
    const auto corpus = corpus_of(20);
    std::map<std::string, int> hits;
    const int seeds = 1000;
    for (int s = 0; s < seeds; ++s) {
      for (const auto& id : split_dataset(corpus, {}, static_cast<std::uint64_t>(s)).validation) ++hits[id];
    }
    for (const auto& u : corpus[0].utterances) {
      CHECK_MESSAGE(std::abs(hits[u.id] / double(seeds) - 0.30) <= 0.05, u.id << " " << hits[u.id]);
    }
  }

  TEST_CASE("dialogue-level split keeps dialogues whole") {
    const auto corpus = corpus_of(100, 10);
    const auto s = split_dataset(corpus, {}, 3, SplitUnit::kDialogue);
    for (const auto& d : corpus) {
      int sets = 0;
      for (const auto* set : {&s.validation, &s.test, &s.remainder}) sets += set->count(d.utterances[0].id) > 0;
      CHECK(sets == 1);
      for (const auto& u : d.utterances) {
        CHECK(s.validation.count(u.id) == s.validation.count(d.utterances[0].id));
        CHECK(s.test.count(u.id) == s.test.count(d.utterances[0].id));
      }
    }
    CHECK(s.validation.size() + s.test.size() + s.remainder.size() == 100);
  }

  TEST_CASE("split serializes") {
    const auto s = split_dataset(corpus_of(30), {}, 5);
    CHECK(DatasetSplit::from_json(s.to_json()) == s);
  }

  TEST_CASE("ground truth csv parses and round-trips") {
    const auto rows = parse_ground_truth(
        "utterance_id,event,act,annotator\n"
        "u1,Planning,Give,H1\n"
        "u1,Planning,Agree,H2\n"
        "\"u,2\",Encouragement,None,adjudicated\n");
    REQUIRE(rows.size() == 3);
    CHECK(rows[2].utterance_id == "u,2");
    CHECK(rows[2].annotator == Annotator::kAdjudicated);
    const auto again = parse_ground_truth(serialize_ground_truth(rows));
    REQUIRE(again.size() == 3);
    CHECK(again[2].utterance_id == "u,2");
    CHECK(again[1].act == "Agree");
    CHECK_THROWS_AS(parse_ground_truth("id,event\nu1,Planning\n"), MalformedDocumentError);
    CHECK_THROWS(parse_ground_truth("utterance_id,event,act,annotator\nu1,Planning,Give,H3\n"));
  }

  TEST_CASE("attach_labels") {
    const auto& cb = Codebook::bundled_default();
    Dialogue d{"g", {Utterance{"u1", "A", "hello", std::nullopt, 0, 1}}};

    const auto one = attach_labels(d, {{"u1", "planning", "give", Annotator::kH1}}, cb);
    REQUIRE(one.labels_for("u1").size() == 1);
    CHECK(one.label("u1", Annotator::kH1)->render() == "Planning-Give");
    CHECK_FALSE(one.label("u1", Annotator::kH2));

    const auto two = attach_labels(d, {{"u1", "Planning", "Give", Annotator::kH1}, {"u1", "Planning", "Agree", Annotator::kH2}}, cb);
    CHECK(two.label("u1", Annotator::kH1)->act == "Give");
    CHECK(two.label("u1", Annotator::kH2)->act == "Agree");

    CHECK_THROWS_AS(attach_labels(d, {{"u9", "Planning", "Give", Annotator::kH1}}, cb), Error);
    try {
      attach_labels(d, {{"u1", "Emotional Expression", "Ask", Annotator::kH1}}, cb);
      FAIL("expected an error");
    } catch (const Error& e) {
      CHECK(std::string(e.what()).find("None") != std::string::npos);
    }
  }
}
