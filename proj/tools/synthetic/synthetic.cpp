#include "synthetic.hpp"

#include <random>
#include <set>

#include <fmt/format.h>

#include "dialogcode/util.hpp"

namespace dialogcode::synthetic {

namespace {

template <class T>
const T& pick(std::mt19937_64& rng, const std::vector<T>& v) {
  return v[uniform_below(rng, v.size())];
}

}  // namespace

Corpus make_corpus(const Codebook& cb, const CorpusSpec& spec) {
  std::mt19937_64 rng(spec.seed);
  std::vector<std::string> act_events, no_act_events;
  for (const auto& e : cb.events()) (e.has_acts ? act_events : no_act_events).push_back(e.name);
  std::set<std::string> initiators;
  for (const auto& p : cb.sequence_pairs()) initiators.insert(p.initiator);
  // Singles never open a pair, so no violation can straddle units.
  std::vector<std::string> single_acts;
  for (const auto& a : cb.acts()) {
    if (!initiators.count(a.name)) single_acts.push_back(a.name);
  }

  Corpus out;
  std::vector<GroundTruth> h1;
  std::size_t made = 0;
  std::size_t group = 0;
  while (made < spec.utterances) {
    Dialogue d;
    d.group_id = fmt::format("{}{:02}", spec.group_prefix, ++group);
    const std::size_t size = std::min(spec.per_dialogue, spec.utterances - made);
    auto add = [&](const CodeLabel& code) {
      Utterance u;
      const std::size_t n = d.utterances.size();
      u.id = fmt::format("{}-{:03}", d.group_id, n + 1);
      u.speaker = fmt::format("S{}", 1 + n % 4);
      u.text = fmt::format("Synthetic utterance {} of group {}.", n + 1, d.group_id);
      u.start = 2.0 * static_cast<double>(n);
      u.end = u.start + 1.5;
      d.utterances.push_back(u);
      h1.push_back({u.id, code.event, code.act, Annotator::kH1});
    };
    while (d.utterances.size() < size) {
      const bool room = size - d.utterances.size() >= 2;
      if (room && uniform_unit(rng) < spec.exchange_share) {
        const auto& pair = pick(rng, cb.sequence_pairs());
        const auto& event = pick(rng, act_events);
        add({event, pair.initiator});
        add({event, pair.responder});
        out.exchanges.emplace_back(d.utterances[d.utterances.size() - 2].id, d.utterances.back().id);
      } else if (no_act_events.empty() || uniform_unit(rng) < 0.5) {
        add({pick(rng, act_events), pick(rng, single_acts)});
      } else {
        add({pick(rng, no_act_events), std::string(kNoAct)});
      }
    }
    made += d.utterances.size();
    out.dialogues.push_back(std::move(d));
  }

  const auto& space = cb.combined_label_space();
  out.labels = h1;
  for (const auto& g : h1) {
    GroundTruth h2 = g;
    h2.annotator = Annotator::kH2;
    if (uniform_unit(rng) < spec.h2_disagreement) {
      const auto& alt = pick(rng, space);
      h2.event = alt.event;
      h2.act = alt.act;
    }
    out.labels.push_back(h2);
  }
  return out;
}

WrittenCorpus write_corpus(const Corpus& corpus, const std::filesystem::path& dir) {
  WrittenCorpus out;
  std::filesystem::create_directories(dir / "transcripts");
  for (const auto& d : corpus.dialogues) {
    const auto path = dir / "transcripts" / (d.group_id + ".json");
    write_text_file_atomic(path, serialize_transcript(d) + "\n");
    out.transcripts.push_back(path);
  }
  out.ground_truth = dir / "ground_truth.csv";
  write_text_file_atomic(out.ground_truth, serialize_ground_truth(corpus.labels));
  return out;
}

nlohmann::json mock_config(const WrittenCorpus& corpus, const MockRunSpec& spec,
                           const std::filesystem::path& output_dir, const std::filesystem::path& cache_dir) {
  using nlohmann::json;
  json providers = json::array();
  for (int i = 0; i < spec.providers; ++i) {
    const std::string id = fmt::format("mock-{}", static_cast<char>('a' + i));
    providers.push_back({{"provider_id", id},
                         {"endpoint", "local"},
                         {"model_name", id},
                         {"samples_per_task", spec.samples_per_task},
                         {"retry", {{"max_attempts", 2}, {"base_delay_ms", 1}}},
                         {"mock",
                          {{"seed", spec.seed * 1000 + static_cast<std::uint64_t>(i)},
                           {"noise",
                            {{"event", spec.noise.event}, {"act", spec.noise.act}, {"combined", spec.noise.combined}}},
                           {"oracle", corpus.ground_truth.string()},
                           {"oracle_annotator", "H1"}}}});
  }
  json transcripts = json::array();
  for (const auto& t : corpus.transcripts) transcripts.push_back(t.string());
  return {{"transcripts", transcripts},
          {"ground_truth", {corpus.ground_truth.string()}},
          {"split",
           {{"ratios", {spec.ratios.validation, spec.ratios.test, spec.ratios.remainder}}, {"seed", spec.split_seed}}},
          {"providers", providers},
          {"prediction", {{"mode", spec.mode}, {"workers", spec.workers}}},
          {"revision", {{"provider", spec.revision ? "mock-a" : ""}}},
          {"ensemble", {{"max_tie_rounds", spec.max_tie_rounds}}},
          {"consistency", {{"checker", spec.checker ? "mock-a" : ""}, {"max_rounds", 10}}},
          {"gate", {{"kappa_threshold", spec.gate_threshold}}},
          {"cache_dir", cache_dir.string()},
          {"output_dir", output_dir.string()}};
}

}  // namespace dialogcode::synthetic
