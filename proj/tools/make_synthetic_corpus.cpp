// Writes a synthetic mock corpus: transcripts, two-annotator ground truth
// and a run configuration that codes it with local mock providers.
#include <iostream>

#include <CLI11.hpp>

#include "dialogcode/util.hpp"
#include "synthetic/synthetic.hpp"

int main(int argc, char** argv) {
  using namespace dialogcode;
  CLI::App app{"Generate a synthetic dialogue corpus for mock runs"};
  std::string out = "samples";
  synthetic::CorpusSpec corpus;
  synthetic::MockRunSpec run;
  app.add_option("--out", out, "Output directory");
  app.add_option("--utterances", corpus.utterances, "Number of utterances");
  app.add_option("--per-dialogue", corpus.per_dialogue, "Utterances per dialogue");
  app.add_option("--seed", corpus.seed, "Corpus seed");
  app.add_option("--event-noise", run.noise.event, "Mock error rate for events");
  app.add_option("--act-noise", run.noise.act, "Mock error rate for acts");
  app.add_option("--combined-noise", run.noise.combined, "Mock error rate for combined codes");
  app.add_option("--samples", run.samples_per_task, "Samples per provider per task");
  CLI11_PARSE(app, argc, argv);

  try {
    const std::filesystem::path dir = std::filesystem::absolute(out);
    const auto c = synthetic::make_corpus(Codebook::bundled_default(), corpus);
    auto written = synthetic::write_corpus(c, dir);
    // Relative paths keep the generated config portable.
    for (auto& t : written.transcripts) t = std::filesystem::relative(t, dir);
    written.ground_truth = std::filesystem::relative(written.ground_truth, dir);
    run.seed = corpus.seed;
    const auto cfg = synthetic::mock_config(written, run, "runs", "cache");
    write_text_file_atomic(dir / "mock_config.json", cfg.dump(2) + "\n");
    std::cout << "wrote " << c.dialogues.size() << " dialogues to " << dir.string() << "\n";
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
