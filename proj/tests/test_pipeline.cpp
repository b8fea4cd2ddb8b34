#include <doctest.h>

#include <set>

#include "dialogcode/cli.hpp"
#include "dialogcode/error.hpp"
#include "dialogcode/pipeline.hpp"
#include "mock_run.hpp"

using namespace dialogcode;
using testing_support::MockWorkspace;
using testing_support::read_artifact;
using testing_support::read_json;
using testing_support::slurp;
using testing_support::snapshot_run;

namespace {

synthetic::CorpusSpec small_corpus(std::size_t utterances = 40) {
  synthetic::CorpusSpec spec;
  spec.seed = 3;
  spec.utterances = utterances;
  spec.per_dialogue = 10;
  return spec;
}

synthetic::MockRunSpec noisy(double event = 0.2, double act = 0.05) {
  synthetic::MockRunSpec run;
  run.noise.event = event;
  run.noise.act = act;
  run.noise.combined = 0.4;
  run.gate_threshold = 0.0;
  return run;
}

int cli(std::vector<std::string> args) {
  args.insert(args.begin(), "dialogcode");
  args.insert(args.begin() + 1, {"--log-level", "off"});
  std::vector<char*> argv;
  for (auto& a : args) argv.push_back(a.data());
  return cli_main(static_cast<int>(argv.size()), argv.data());
}

std::set<std::string> json_ids(const nlohmann::json& arr) {
  std::set<std::string> out;
  for (const auto& id : arr) out.insert(id.get<std::string>());
  return out;
}

}  // namespace

TEST_SUITE("pipeline") {
  TEST_CASE("noiseless run passes both gates and codes the remainder") {
    MockWorkspace ws(small_corpus());
    Pipeline p(ws.config(synthetic::MockRunSpec{}));
    CHECK(p.run() == 0);
    const auto dir = p.run_dir();
    for (const char* subset : {"validation", "test"}) {
      const auto gate = read_json(dir / (std::string("gate.") + subset + ".json"));
      CHECK(gate["verdict"] == "PASS");
      CHECK(gate["kappa"].get<double>() == 1.0);
    }
    CHECK(std::filesystem::exists(dir / "checked.remainder.csv"));
    CHECK_FALSE(std::filesystem::exists(dir / "metrics.remainder.json"));
    CHECK(std::filesystem::exists(dir / "report.txt"));

    const auto truth = ws.truth();
    for (const auto& row : read_artifact(dir / "checked.remainder.csv")) {
      CHECK(truth.at(row.at("utterance_id")) == CodeLabel{row.at("event"), row.at("act")});
    }
    const auto manifest = read_json(dir / "manifest.json");
    CHECK(manifest["run_id"] == p.run_id());
    CHECK(manifest["stages"].front() == "preprocess");
  }

  TEST_CASE("preprocess revises every utterance and splits the corpus") {
    MockWorkspace ws(small_corpus(12));
    auto doc = ws.config_json(synthetic::MockRunSpec{});
    doc["task_materials"] = "Sort learning objectives by Bloom's taxonomy level.\nUse the handout.";
    Pipeline p(ws.config(doc));
    p.preprocess();
    const auto corpus = read_json(p.run_dir() / "corpus.json");
    int n = 0;
    for (const auto& d : corpus["dialogues"]) {
      for (const auto& u : d["segments"]) {
        ++n;
        const auto revised = u.at("revised_text").get<std::string>();
        CHECK(revised.find(u.at("text").get<std::string>()) == 0);
        CHECK(revised.find("Bloom's taxonomy") != std::string::npos);
      }
    }
    CHECK(n == 12);
    const auto split = read_json(p.run_dir() / "split.json");
    CHECK(json_ids(split["validation"]).size() + json_ids(split["test"]).size() + json_ids(split["remainder"]).size() ==
          12);
  }

  TEST_CASE("interrupted preprocessing resumes from the cache") {
    MockWorkspace ws(small_corpus(10));
    auto failing = ws.config_json(synthetic::MockRunSpec{});
    failing["providers"][0]["mock"]["fail_after_calls"] = 2;
    {
      Pipeline p(ws.config(failing));
      CHECK_THROWS_AS(p.preprocess(), TransportError);
      CHECK_FALSE(p.stage_done("preprocess"));
    }
    Pipeline again(ws.config(synthetic::MockRunSpec{}), RunOptions{std::nullopt, true, std::nullopt});
    again.preprocess();
    CHECK(again.network_calls() == 8);
    CHECK(again.stage_done("preprocess"));
  }

  TEST_CASE("resumed runs make no requests and change nothing") {
    MockWorkspace ws(small_corpus());
    const auto cfg = ws.config(noisy());
    std::map<std::string, std::string> first;
    {
      Pipeline p(cfg);
      CHECK(p.run() == 0);
      CHECK(p.network_calls() > 0);
      first = snapshot_run(p.run_dir());
    }
    Pipeline resumed(cfg, RunOptions{std::nullopt, true, std::nullopt});
    CHECK(resumed.run() == 0);
    CHECK(resumed.network_calls() == 0);
    CHECK(snapshot_run(resumed.run_dir()) == first);

    // A fresh run over the warm cache reproduces every artifact.
    std::filesystem::remove_all(resumed.run_dir());
    Pipeline warm(cfg);
    CHECK(warm.run() == 0);
    CHECK(warm.network_calls() == 0);
    CHECK(snapshot_run(warm.run_dir()) == first);
  }

  TEST_CASE("every task persists z times k samples") {
    MockWorkspace ws(small_corpus(20));
    auto run = noisy(0.4, 0.3);
    run.samples_per_task = 5;
    Pipeline p(ws.config(run));
    p.preprocess();
    p.predict(Subset::kValidation);
    std::map<std::string, int> initial;
    std::map<std::string, int> extra;
    for (const auto& row : read_artifact(p.run_dir() / "predictions.validation.csv")) {
      (std::stoi(row.at("sample_index")) < 5 ? initial : extra)[row.at("task_id")]++;
      CHECK(row.at("weight") == "1");
    }
    REQUIRE_FALSE(initial.empty());
    for (const auto& [task, n] : initial) CHECK(n == 15);
    for (const auto& [task, n] : extra) CHECK(n % 3 == 0);

    const auto votes = read_artifact(p.run_dir() / "votes.validation.csv");
    CHECK(votes.size() == initial.size());
    for (const auto& v : votes) {
      if (std::stoi(v.at("rounds")) == 0) CHECK(v.at("samples") == "15");
    }
  }

  TEST_CASE("no-act events force the act to None") {
    MockWorkspace ws(small_corpus(40));
    Pipeline p(ws.config(noisy(0.3, 0.3)));
    p.preprocess();
    p.predict(Subset::kValidation);
    const auto& cb = Codebook::bundled_default();
    for (const auto& row : read_artifact(p.run_dir() / "coded.validation.csv")) {
      const auto* ev = cb.find_event(row.at("event"));
      REQUIRE(ev != nullptr);
      CHECK(ev->has_acts == (row.at("act") != "None"));
      CHECK(row.at("predicted_act") != "None");
    }
  }

  TEST_CASE("combined mode skips consistency checking") {
    MockWorkspace ws(small_corpus());
    auto run = noisy();
    run.mode = "combined";
    Pipeline p(ws.config(run));
    CHECK(p.run(Subset::kValidation) == 0);
    CHECK_FALSE(std::filesystem::exists(p.run_dir() / "checked.validation.csv"));
    CHECK_FALSE(p.stage_done("check:validation"));
    const auto metrics = read_json(p.run_dir() / "metrics.validation.json");
    CHECK(metrics["mode"] == "combined");
    CHECK(metrics["stages"].size() == 1);
    CHECK(metrics["consistency"].is_null());
  }

  TEST_CASE("mode overrides give separate runs") {
    MockWorkspace ws(small_corpus());
    const auto cfg = ws.config(noisy());
    Pipeline separate(cfg);
    Pipeline combined(cfg, RunOptions{std::nullopt, false, PredictionMode::kCombined});
    CHECK(separate.run_id() != combined.run_id());
    CHECK(combined.config().mode == PredictionMode::kCombined);
  }

  TEST_CASE("the remainder never reaches a metric") {
    MockWorkspace ws(small_corpus());
    Pipeline p(ws.config(noisy()));
    CHECK(p.run() == 0);
    const auto split = read_json(p.run_dir() / "split.json");
    const auto remainder = json_ids(split["remainder"]);
    CHECK(p.evaluate(Subset::kRemainder) == GateVerdict::kNotApplicable);
    CHECK_FALSE(std::filesystem::exists(p.run_dir() / "metrics.remainder.json"));

    p.predict(Subset::kAll);
    p.check(Subset::kAll);
    CHECK(p.evaluate(Subset::kAll) == GateVerdict::kPass);
    const auto all = read_json(p.run_dir() / "metrics.all.json");
    const auto n = all["gate"]["n"].get<std::size_t>();
    CHECK(n == json_ids(split["validation"]).size() + json_ids(split["test"]).size());
    for (const auto& row : all["providers"]) {
      for (const auto& [dim, m] : row["dimensions"].items()) CHECK(m["n"].get<std::size_t>() == n);
    }
    CHECK_FALSE(remainder.empty());
  }

  TEST_CASE("consistency checking lifts event agreement") {
    MockWorkspace ws(small_corpus(60));
    auto run = noisy(0.3, 0.0);
    run.providers = 1;
    run.ratios = {1.0, 0.0, 0.0};
    Pipeline p(ws.config(run));
    CHECK(p.run(Subset::kValidation) == 0);
    const auto metrics = read_json(p.run_dir() / "metrics.validation.json");
    REQUIRE(metrics["stages"].size() == 2);
    const double before = metrics["stages"][0]["dimensions"]["event"]["kappa"];
    const double after = metrics["stages"][1]["dimensions"]["event"]["kappa"];
    CHECK(after > before);
    const auto fixpoint = read_json(p.run_dir() / "fixpoint.validation.json");
    CHECK(fixpoint["total"]["changed_utterances"].get<int>() > 0);
    CHECK_FALSE(read_artifact(p.run_dir() / "revisions.validation.csv").empty());
  }

  TEST_CASE("invalid configurations list their problems") {
    MockWorkspace ws(small_corpus(10));
    auto doc = ws.config_json(synthetic::MockRunSpec{});
    doc["split"]["ratios"] = {0.5, 0.5, 0.5};
    doc["consistency"]["checker"] = "nobody";
    doc["providers"][1]["samples_per_task"] = 0;
    try {
      ws.config(doc);
      FAIL("expected a validation error");
    } catch (const ValidationError& e) {
      CHECK(e.violations().size() == 3);
    }
  }

  TEST_CASE("a run id is tied to its configuration") {
    MockWorkspace ws(small_corpus(10));
    const RunOptions named{std::string("shared"), false, std::nullopt};
    {
      Pipeline p(ws.config(synthetic::MockRunSpec{}), named);
      p.preprocess();
    }
    CHECK_THROWS_AS(Pipeline(ws.config(noisy()), named), Error);
    CHECK_NOTHROW(Pipeline(ws.config(synthetic::MockRunSpec{}), named));
  }

  TEST_CASE("evaluation needs ground truth") {
    MockWorkspace ws(small_corpus(20));
    auto doc = ws.config_json(synthetic::MockRunSpec{});
    doc["ground_truth"] = nlohmann::json::array();
    for (auto& p : doc["providers"]) p["mock"]["oracle"] = ws.written().ground_truth.string();
    Pipeline p(ws.config(doc));
    p.preprocess();
    p.predict(Subset::kValidation);
    CHECK_THROWS_AS(p.evaluate(Subset::kValidation), Error);
  }

  TEST_CASE("command line exit codes") {
    MockWorkspace ws(small_corpus());
    const auto clean = ws.write_config(ws.config_json(synthetic::MockRunSpec{}), "clean.json");
    CHECK(cli({"run", "--config", clean.string()}) == 0);
    CHECK(cli({"evaluate", "--config", clean.string(), "--subset", "test"}) == 0);
    CHECK(cli({"report", "--config", clean.string()}) == 0);

    auto bad = noisy(0.6, 0.3);
    bad.gate_threshold = 0.8;
    const auto failing = ws.write_config(ws.config_json(bad), "failing.json");
    CHECK(cli({"run", "--config", failing.string()}) == 2);

    CHECK(cli({"run", "--config", (ws.root() / "missing.json").string()}) == 1);
    std::ofstream(ws.root() / "broken.json") << "{ not json";
    CHECK(cli({"run", "--config", (ws.root() / "broken.json").string()}) == 1);
    CHECK(cli({"evaluate", "--config", clean.string(), "--subset", "everything"}) == 1);
  }

  TEST_CASE("staged commands follow the manifest") {
    MockWorkspace ws(small_corpus());
    const auto path = ws.write_config(ws.config_json(noisy()));
    CHECK(cli({"preprocess", "--config", path.string()}) == 0);
    CHECK(cli({"predict", "--config", path.string()}) == 0);
    CHECK(cli({"check", "--config", path.string()}) == 0);
    CHECK(cli({"evaluate", "--config", path.string()}) == 0);
    Pipeline p(RunConfig::load(path), RunOptions{std::nullopt, true, std::nullopt});
    for (const char* stage : {"preprocess", "predict:validation", "check:validation", "evaluate:validation"}) {
      CHECK(p.stage_done(stage));
    }
  }

  TEST_CASE("reports compare runs side by side") {
    MockWorkspace ws(small_corpus());
    const auto cfg = ws.config(noisy());
    Pipeline separate(cfg);
    CHECK(separate.run(Subset::kValidation) == 0);
    Pipeline combined(cfg, RunOptions{std::nullopt, false, PredictionMode::kCombined});
    CHECK(combined.run(Subset::kValidation) == 0);
    const auto text = separate.report({combined.run_id()});
    CHECK(text.find("Multi-LLMs with CC") != std::string::npos);
    const auto cmp = slurp(separate.run_dir() / "comparison.txt");
    CHECK(cmp.find(separate.run_id() + " (separate)") != std::string::npos);
    CHECK(cmp.find(combined.run_id() + " (combined)") != std::string::npos);
    CHECK_THROWS_AS(separate.report({"no-such-run"}), Error);
  }
}
