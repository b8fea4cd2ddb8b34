#include "dialogcode/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <exception>
#include <fstream>
#include <functional>
#include <map>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include <fmt/format.h>
#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "dialogcode/code_parser.hpp"
#include "dialogcode/codebook.hpp"
#include "dialogcode/consistency.hpp"
#include "dialogcode/ensemble.hpp"
#include "dialogcode/error.hpp"
#include "dialogcode/llm_client.hpp"
#include "dialogcode/metrics.hpp"
#include "dialogcode/mock_provider.hpp"
#include "dialogcode/prompting.hpp"
#include "dialogcode/report.hpp"
#include "dialogcode/util.hpp"

namespace dialogcode {

using nlohmann::json;
namespace fs = std::filesystem;

std::string_view to_string(GateVerdict v) {
  switch (v) {
    case GateVerdict::kPass: return "PASS";
    case GateVerdict::kFail: return "FAIL";
    case GateVerdict::kNotApplicable: return "N/A";
  }
  return "?";
}

namespace {

// Runs fn(i) for every i in [0, n) on up to `workers` threads. After the
// first failure no new indices start; the exception of the lowest failing
// index is rethrown once all threads have stopped.
void parallel_for(std::size_t n, int workers, const std::function<void(std::size_t)>& fn) {
  if (n == 0) return;
  std::vector<std::exception_ptr> errors(n);
  std::atomic<std::size_t> next{0};
  std::atomic<bool> stop{false};
  auto worker = [&] {
    while (!stop.load()) {
      const std::size_t i = next.fetch_add(1);
      if (i >= n) return;
      try {
        fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
        stop = true;
      }
    }
  };
  const std::size_t threads = std::min<std::size_t>(n, static_cast<std::size_t>(std::max(1, workers)));
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

std::string csv_row(std::initializer_list<std::string> cells) {
  std::string out;
  bool first = true;
  for (const auto& c : cells) {
    if (!first) out.push_back(',');
    out += csv_quote(c);
    first = false;
  }
  out.push_back('\n');
  return out;
}

using CsvRecord = std::map<std::string, std::string>;

std::vector<CsvRecord> read_csv(const fs::path& path) {
  std::istringstream in(read_text_file(path));
  std::string line;
  std::vector<std::string> header;
  std::vector<CsvRecord> out;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    auto cells = split_csv_line(line, path.string() + ":" + std::to_string(line_no));
    if (header.empty()) {
      header = std::move(cells);
      continue;
    }
    if (cells.size() != header.size()) {
      throw MalformedDocumentError(path.string() + ":" + std::to_string(line_no), "wrong number of cells");
    }
    CsvRecord rec;
    for (std::size_t i = 0; i < header.size(); ++i) rec[header[i]] = cells[i];
    out.push_back(std::move(rec));
  }
  return out;
}

std::vector<Dimension> dimensions_for(PredictionMode mode) {
  if (mode == PredictionMode::kCombined) return {Dimension::kCombined};
  return {Dimension::kEvent, Dimension::kAct};
}

std::string task_id(const std::string& utterance_id, Dimension d) {
  return utterance_id + "/" + std::string(to_string(d));
}

std::string first_line(std::string_view s) {
  const auto nl = s.find('\n');
  return std::string(s.substr(0, nl));
}

// Position of one utterance in the corpus.
struct Slot {
  std::size_t dialogue = 0;
  std::size_t index = 0;
};

struct TaskResult {
  std::string utterance_id;
  Dimension dimension = Dimension::kEvent;
  PredictionSet ps;
  VoteOutcome vote;
  std::map<std::string, std::string> provider_labels;  // provider id -> its own vote
  std::string discards;                                // csv rows
};

}  // namespace

struct Pipeline::Impl {
  RunConfig cfg;
  std::string config_hash;
  std::string run_id;
  fs::path dir;
  bool resume = false;
  Codebook cb;
  PromptRenderer renderer;
  std::shared_ptr<ResponseCache> cache;
  std::map<std::string, std::shared_ptr<ProviderClient>> clients;
  json manifest;
  std::mutex manifest_mutex;

  // Loaded lazily from the preprocess artifacts.
  std::optional<std::vector<Dialogue>> corpus;
  std::optional<DatasetSplit> split;

  Impl(RunConfig c, const RunOptions& opt)
      : cfg(std::move(c)),
        cb(cfg.codebook == "bundled" ? Codebook::bundled_default() : Codebook::load(cfg.codebook)),
        renderer(cb, cfg.templates_dir.empty() ? TemplateSet::bundled() : TemplateSet::load_dir(cfg.templates_dir)) {
    if (opt.mode) cfg.mode = *opt.mode;
    resume = opt.resume;
    config_hash = cfg.hash();
    run_id = opt.run_id ? *opt.run_id : config_hash.substr(0, 12);
    if (run_id.empty() || run_id.find_first_of("/\\") != std::string::npos || run_id == "." || run_id == "..") {
      throw Error("invalid run id '" + run_id + "'");
    }
    dir = fs::path(cfg.output_dir) / run_id;
    cache = std::make_shared<ResponseCache>(cfg.cache_dir);
    for (const auto& p : cfg.providers) {
      std::unique_ptr<ChatTransport> transport;
      if (p.is_local()) {
        transport = std::make_unique<MockTransport>(*p.mock, cb, load_mock_oracle(*p.mock, cb));
      } else {
        transport = make_openai_compatible_transport();
      }
      clients[p.provider_id] = std::make_shared<ProviderClient>(p, std::move(transport), cache);
    }
    open_run_dir();
  }

  void open_run_dir() {
    fs::create_directories(dir);
    const auto mpath = dir / "manifest.json";
    if (fs::exists(mpath)) {
      manifest = json::parse(read_text_file(mpath));
      if (manifest.value("config_hash", "") != config_hash) {
        throw Error("run directory " + dir.string() +
                    " belongs to a different configuration; pick another --run-id or output directory");
      }
    } else {
      manifest = {{"run_id", run_id},
                  {"config_hash", config_hash},
                  {"mode", to_string(cfg.mode)},
                  {"stages", json::array()}};
      write("config.json", cfg.identity_json().dump(2) + "\n");
      write("manifest.json", manifest.dump(2) + "\n");
    }
  }

  void write(const std::string& name, const std::string& content) const { write_text_file_atomic(dir / name, content); }

  bool done(const std::string& stage) {
    std::lock_guard lock(manifest_mutex);
    for (const auto& s : manifest["stages"]) {
      if (s.get<std::string>() == stage) return true;
    }
    return false;
  }

  bool skip(const std::string& stage) {
    if (resume && done(stage)) {
      spdlog::info("{}: already complete, skipping", stage);
      return true;
    }
    return false;
  }

  void require(const std::string& stage, const std::string& by) {
    if (!done(stage)) throw Error(by + " needs stage '" + stage + "' to have completed in run " + run_id);
  }

  void record(const std::string& stage, double seconds) {
    std::lock_guard lock(manifest_mutex);
    bool present = false;
    for (const auto& s : manifest["stages"]) present = present || s.get<std::string>() == stage;
    if (!present) manifest["stages"].push_back(stage);
    write("manifest.json", manifest.dump(2) + "\n");
    json timing = json::object();
    if (fs::exists(dir / "timing.json")) timing = json::parse(read_text_file(dir / "timing.json"));
    timing[stage] = seconds;
    write("timing.json", timing.dump(2) + "\n");
    spdlog::info("{}: done in {:.2f}s", stage, seconds);
  }

  ProviderClient& client(const std::string& id) {
    auto it = clients.find(id);
    if (it == clients.end()) throw Error("unknown provider '" + id + "'");
    return *it->second;
  }

  // Sends the request rendered with the configured window. A context
  // overflow is retried once with the narrower fallback window.
  std::string ask(ProviderClient& c, const std::function<ChatRequest(std::size_t)>& render) {
    try {
      return c.complete(render(cfg.context_window)).raw_text;
    } catch (const ContextLimitError& e) {
      if (cfg.fallback_window == 0 || cfg.fallback_window == cfg.context_window) throw;
      spdlog::warn("{}: context limit reached ({}); retrying with {} utterances either side",
                   c.config().provider_id, e.what(), cfg.fallback_window);
      return c.complete(render(cfg.fallback_window)).raw_text;
    }
  }

  // ---- corpus -------------------------------------------------------------

  std::vector<Dialogue> load_raw_corpus() const {
    std::vector<Dialogue> out;
    std::set<std::string> ids;
    std::vector<std::string> dupes;
    for (const auto& path : cfg.transcripts) {
      out.push_back(load_transcript_file(path));
      for (const auto& u : out.back().utterances) {
        if (!ids.insert(u.id).second) dupes.push_back("utterance id '" + u.id + "' appears in more than one transcript");
      }
    }
    if (!dupes.empty()) throw ValidationError(std::move(dupes));
    return out;
  }

  const std::vector<Dialogue>& dialogues() {
    if (!corpus) {
      const auto doc = json::parse(read_text_file(dir / "corpus.json"));
      std::vector<Dialogue> ds;
      for (const auto& d : doc.at("dialogues")) {
        ds.push_back(load_transcript(d.dump(), d.at("group_id").get<std::string>(), "corpus.json"));
      }
      corpus = std::move(ds);
    }
    return *corpus;
  }

  const DatasetSplit& data_split() {
    if (!split) split = DatasetSplit::from_json(read_text_file(dir / "split.json"));
    return *split;
  }

  std::vector<Slot> slots(Subset s) {
    std::vector<Slot> out;
    const auto& ds = dialogues();
    const auto& sp = data_split();
    for (std::size_t d = 0; d < ds.size(); ++d) {
      for (std::size_t i = 0; i < ds[d].utterances.size(); ++i) {
        if (sp.contains(s, ds[d].utterances[i].id)) out.push_back({d, i});
      }
    }
    return out;
  }

  // ---- preprocess ---------------------------------------------------------

  void preprocess() {
    auto ds = load_raw_corpus();
    std::vector<Slot> all;
    for (std::size_t d = 0; d < ds.size(); ++d) {
      for (std::size_t i = 0; i < ds[d].utterances.size(); ++i) all.push_back({d, i});
    }
    std::vector<std::string> revised(all.size());
    if (cfg.revision_provider.empty()) {
      spdlog::info("preprocess: no revision provider configured; utterances keep their transcribed text");
      for (std::size_t k = 0; k < all.size(); ++k) revised[k] = ds[all[k].dialogue].utterances[all[k].index].text;
    } else {
      auto& c = client(cfg.revision_provider);
      parallel_for(all.size(), cfg.workers, [&](std::size_t k) {
        const auto& d = ds[all[k].dialogue];
        const auto& u = d.utterances[all[k].index];
        auto render = [&](std::size_t window) {
          return renderer.render_revision(make_context(cb, d, all[k].index, window, cfg.task_materials, false));
        };
        std::string text;
        try {
          text = trim(ask(c, render));
        } catch (const RequestRejectedError& e) {
          spdlog::warn("preprocess: revision of {} rejected ({}); keeping the transcribed text", u.id, e.what());
        } catch (const ContextLimitError& e) {
          spdlog::warn("preprocess: revision of {} exceeds the context ({}); keeping the transcribed text", u.id,
                       e.what());
        }
        if (text.empty()) {
          if (!u.text.empty()) spdlog::warn("preprocess: empty revision for {}; keeping the transcribed text", u.id);
          text = u.text;
        }
        revised[k] = std::move(text);
      });
    }
    for (std::size_t k = 0; k < all.size(); ++k) ds[all[k].dialogue].utterances[all[k].index].revised_text = revised[k];

    json doc{{"dialogues", json::array()}};
    for (const auto& d : ds) doc["dialogues"].push_back(json::parse(serialize_transcript(d)));
    write("corpus.json", doc.dump(2) + "\n");
    auto sp = split_dataset(ds, cfg.split_ratios, cfg.split_seed, cfg.split_unit);
    write("split.json", sp.to_json() + "\n");
    spdlog::info("preprocess: {} utterances; split {} validation / {} test / {} remainder", all.size(),
                 sp.validation.size(), sp.test.size(), sp.remainder.size());
    corpus = std::move(ds);
    split = std::move(sp);
  }

  // ---- predict ------------------------------------------------------------

  // One sample from one provider. Unparseable replies get one repair prompt;
  // a second failure discards the sample.
  std::optional<std::string> sample(ProviderClient& c, const Dialogue& d, std::size_t index, Dimension dim,
                                    int sample_index, std::string& discards) {
    auto render = [&](std::size_t window) {
      auto req = renderer.render_prediction(dim, make_context(cb, d, index, window, cfg.task_materials));
      req.sample_index = sample_index;
      return req;
    };
    const std::string raw = ask(c, render);
    try {
      return parse_code_response(raw, cb, dim).label();
    } catch (const ResponseParseError&) {
    }
    auto repair = [&](std::size_t window) {
      auto req = render(window);
      req.user_text += "\n\nYour previous answer was:\n" + raw + "\n\n" + repair_instruction(cb, dim);
      return req;
    };
    const std::string second = ask(c, repair);
    try {
      return parse_code_response(second, cb, dim).label();
    } catch (const ResponseParseError& e) {
      const auto& u = d.utterances[index];
      spdlog::warn("{}: sample {} from {} discarded: {}", task_id(u.id, dim), sample_index,
                   c.config().provider_id, e.what());
      discards += csv_row({task_id(u.id, dim), c.config().provider_id, std::to_string(sample_index),
                           first_line(e.what())});
      return std::nullopt;
    }
  }

  TaskResult predict_task(const Slot& slot, Dimension dim) {
    const auto& d = dialogues()[slot.dialogue];
    const auto& u = d.utterances[slot.index];
    TaskResult r;
    r.utterance_id = u.id;
    r.dimension = dim;
    r.ps.task_id = task_id(u.id, dim);
    r.ps.dimension = dim;
    const auto voters = cfg.voting_providers();
    r.ps.providers = static_cast<int>(voters.size());
    int max_k = 0;
    for (const auto* p : voters) {
      max_k = std::max(max_k, p->samples_per_task);
      auto& c = client(p->provider_id);
      for (int j = 0; j < p->samples_per_task; ++j) {
        if (auto label = sample(c, d, slot.index, dim, j, r.discards)) {
          r.ps.entries.push_back({p->provider_id, p->weight, j, *label});
        }
      }
    }
    r.ps.samples_per_provider = max_k;
    if (r.ps.entries.empty()) throw Error(r.ps.task_id + ": no provider returned a usable label");

    // Each provider's own vote over its initial samples.
    for (const auto* p : voters) {
      PredictionSet own{r.ps.task_id, dim, {}, 1, p->samples_per_task};
      for (const auto& e : r.ps.entries) {
        if (e.provider_id == p->provider_id) own.entries.push_back(e);
      }
      if (own.entries.empty()) {
        spdlog::warn("{}: no usable sample from {}; it contributes nothing to this task", r.ps.task_id,
                     p->provider_id);
        continue;
      }
      auto sel = select_final(weighted_frequency(own));
      r.provider_labels[p->provider_id] =
          std::holds_alternative<std::string>(sel) ? std::get<std::string>(sel) : std::get<Tie>(sel).labels.front();
    }

    auto requery = [&](int round) {
      std::vector<PredictionEntry> extra;
      for (const auto* p : voters) {
        const int j = p->samples_per_task + round - 1;
        if (auto label = sample(client(p->provider_id), d, slot.index, dim, j, r.discards)) {
          extra.push_back({p->provider_id, p->weight, j, *label});
        }
      }
      return extra;
    };
    r.vote = resolve(r.ps, requery, cfg.max_tie_rounds);
    return r;
  }

  CodedUtterance fuse(const std::string& id, const std::map<Dimension, std::string>& labels) const {
    CodedUtterance cu;
    cu.utterance_id = id;
    if (cfg.mode == PredictionMode::kCombined) {
      const auto label = cb.parse_rendered(labels.at(Dimension::kCombined));
      if (!label) throw Error(id + ": combined label '" + labels.at(Dimension::kCombined) + "' is not in the codebook");
      cu.event = label->event;
      cu.act = label->act;
      cu.predicted_act = label->act;
      return cu;
    }
    cu.event = labels.at(Dimension::kEvent);
    cu.predicted_act = labels.at(Dimension::kAct);
    const auto* ev = cb.find_event(cu.event);
    cu.act = ev && !ev->has_acts ? std::string(kNoAct) : cu.predicted_act;
    return cu;
  }

  void predict(Subset s) {
    require("preprocess", "predict");
    const auto todo = slots(s);
    const auto dims = dimensions_for(cfg.mode);
    std::vector<TaskResult> results(todo.size() * dims.size());
    spdlog::info("predict:{}: {} utterances, {} tasks", to_string(s), todo.size(), results.size());
    parallel_for(results.size(), cfg.workers, [&](std::size_t k) {
      results[k] = predict_task(todo[k / dims.size()], dims[k % dims.size()]);
    });

    std::string predictions = "task_id,provider_id,sample_index,label,weight\n";
    std::string discards = "task_id,provider_id,sample_index,reason\n";
    std::string votes = "task_id,final_label,rounds,forced,samples\n";
    std::string coded = "utterance_id,event,act,predicted_act\n";
    std::string provider_codes = "utterance_id,provider_id,event,act\n";
    std::size_t forced = 0;
    for (std::size_t u = 0; u < todo.size(); ++u) {
      std::map<Dimension, std::string> final_labels;
      std::map<std::string, std::map<Dimension, std::string>> by_provider;
      for (std::size_t j = 0; j < dims.size(); ++j) {
        const auto& r = results[u * dims.size() + j];
        for (const auto& e : r.ps.entries) {
          predictions += csv_row({r.ps.task_id, e.provider_id, std::to_string(e.sample_index), e.label,
                                  fmt::format("{}", e.weight)});
        }
        discards += r.discards;
        votes += csv_row({r.ps.task_id, r.vote.final_label, std::to_string(r.vote.rounds),
                          r.vote.forced ? "true" : "false", std::to_string(r.ps.entries.size())});
        forced += r.vote.forced ? 1 : 0;
        final_labels[r.dimension] = r.vote.final_label;
        for (const auto& [pid, label] : r.provider_labels) by_provider[pid][r.dimension] = label;
      }
      const auto& id = results[u * dims.size()].utterance_id;
      const auto cu = fuse(id, final_labels);
      coded += csv_row({cu.utterance_id, cu.event, cu.act, cu.predicted_act});
      for (const auto& [pid, labels] : by_provider) {
        if (labels.size() != dims.size()) continue;
        const auto pc = fuse(id, labels);
        provider_codes += csv_row({id, pid, pc.event, pc.act});
      }
    }
    const std::string tag(to_string(s));
    write("predictions." + tag + ".csv", predictions);
    write("discarded." + tag + ".csv", discards);
    write("votes." + tag + ".csv", votes);
    write("provider_codes." + tag + ".csv", provider_codes);
    write("coded." + tag + ".csv", coded);
    if (forced) spdlog::warn("predict:{}: {} tasks stayed tied and took the smallest label", tag, forced);
  }

  std::vector<CodedUtterance> read_coded(Subset s) {
    std::vector<CodedUtterance> out;
    for (auto& rec : read_csv(dir / ("coded." + std::string(to_string(s)) + ".csv"))) {
      CodedUtterance cu;
      cu.utterance_id = rec.at("utterance_id");
      cu.event = rec.at("event");
      cu.act = rec.at("act");
      cu.predicted_act = rec.at("predicted_act");
      out.push_back(std::move(cu));
    }
    return out;
  }

  // ---- check --------------------------------------------------------------

  bool check(Subset s) {
    require("predict:" + std::string(to_string(s)), "check");
    if (cfg.mode == PredictionMode::kCombined) {
      spdlog::warn("check:{}: combined-mode runs have no separate event and act codes; consistency checking skipped",
                   to_string(s));
      return false;
    }
    if (cfg.checker_provider.empty()) throw Error("check needs consistency.checker in the config");
    auto& checker_client = client(cfg.checker_provider);
    const auto& ds = dialogues();

    std::map<std::string, CodedUtterance> coded;
    std::vector<std::string> order;
    for (auto& cu : read_coded(s)) {
      order.push_back(cu.utterance_id);
      coded.emplace(cu.utterance_id, std::move(cu));
    }

    // Runs of utterances that are adjacent in their dialogue and both coded
    // in this subset; only those pairs can be checked.
    struct Segment {
      std::size_t dialogue;
      std::vector<std::size_t> positions;
    };
    std::vector<std::vector<Segment>> per_dialogue(ds.size());
    for (std::size_t d = 0; d < ds.size(); ++d) {
      Segment cur{d, {}};
      for (std::size_t i = 0; i <= ds[d].utterances.size(); ++i) {
        const bool in = i < ds[d].utterances.size() && coded.count(ds[d].utterances[i].id);
        if (in) {
          cur.positions.push_back(i);
        } else {
          if (cur.positions.size() >= 2) per_dialogue[d].push_back(cur);
          cur.positions.clear();
        }
      }
    }

    struct SegmentOutcome {
      std::size_t dialogue;
      std::vector<std::size_t> positions;
      FixpointResult result;
    };
    std::vector<std::vector<SegmentOutcome>> outcomes(ds.size());
    parallel_for(ds.size(), cfg.workers, [&](std::size_t d) {
      const auto& dlg = ds[d];
      for (const auto& seg : per_dialogue[d]) {
        std::vector<CodedUtterance> seq;
        for (auto p : seg.positions) seq.push_back(coded.at(dlg.utterances[p].id));
        auto adjudicator = [&](const Violation& v, const std::vector<CodedUtterance>& cur) {
          const std::size_t here = seg.positions[v.position];
          const std::size_t there = seg.positions[v.position + 1];
          auto make = [&](std::size_t window) {
            auto ctx = make_context(cb, dlg, here, window, cfg.task_materials);
            ctx.neighbor_window = {
                {cur[v.position].utterance_id, render_utterance_line(dlg.utterances[here]), cur[v.position].event,
                 cur[v.position].act},
                {cur[v.position + 1].utterance_id, render_utterance_line(dlg.utterances[there]),
                 cur[v.position + 1].event, cur[v.position + 1].act}};
            return ctx;
          };
          auto checker = [&](const ChatRequest& req) { return checker_client.complete(req).raw_text; };
          try {
            return adjudicate(v, make(cfg.context_window), renderer, checker, cb);
          } catch (const ContextLimitError& e) {
            if (cfg.fallback_window == 0 || cfg.fallback_window == cfg.context_window) throw;
            spdlog::warn("check: context limit reached ({}); retrying with {} utterances either side", e.what(),
                         cfg.fallback_window);
            return adjudicate(v, make(cfg.fallback_window), renderer, checker, cb);
          }
        };
        auto result = run_fixpoint(std::move(seq), cb, adjudicator, cfg.consistency_max_rounds);
        outcomes[d].push_back({d, seg.positions, std::move(result)});
      }
    });

    FixpointStats total;
    total.utterances = coded.size();
    json dialogue_stats = json::array();
    std::string revisions = "group_id,round,position,utterance_id,old_event,old_act,new_event,new_act,verdict_hash\n";
    for (std::size_t d = 0; d < ds.size(); ++d) {
      json segs = json::array();
      for (const auto& o : outcomes[d]) {
        const auto& st = o.result.stats;
        total.rounds = std::max(total.rounds, st.rounds);
        if (total.changes_per_round.size() < st.changes_per_round.size()) {
          total.changes_per_round.resize(st.changes_per_round.size(), 0);
        }
        for (std::size_t r = 0; r < st.changes_per_round.size(); ++r) total.changes_per_round[r] += st.changes_per_round[r];
        total.changed_utterances += st.changed_utterances;
        total.net_changed_utterances += st.net_changed_utterances;
        total.revision_events += st.revision_events;
        total.oscillation_detected = total.oscillation_detected || st.oscillation_detected;
        total.hit_round_cap = total.hit_round_cap || st.hit_round_cap;
        for (const auto& cu : o.result.sequence) coded[cu.utterance_id] = cu;
        for (const auto& rr : o.result.audit) {
          revisions += csv_row({ds[d].group_id, std::to_string(rr.round), std::to_string(o.positions[rr.position]),
                                rr.utterance_id, rr.old_code.event, rr.old_code.act, rr.new_code.event,
                                rr.new_code.act, rr.verdict_hash});
        }
        json sj = to_json(st);
        sj["first_utterance"] = ds[d].utterances[o.positions.front()].id;
        sj["last_utterance"] = ds[d].utterances[o.positions.back()].id;
        segs.push_back(std::move(sj));
      }
      if (!segs.empty()) dialogue_stats.push_back({{"group_id", ds[d].group_id}, {"segments", segs}});
    }
    if (total.utterances > 0) {
      total.total_changed_fraction = static_cast<double>(total.changed_utterances) / total.utterances;
      total.revision_event_fraction = static_cast<double>(total.revision_events) / total.utterances;
    }

    std::string checked = "utterance_id,event,act,predicted_act,source,source_round\n";
    for (const auto& id : order) {
      const auto& cu = coded.at(id);
      checked += csv_row({cu.utterance_id, cu.event, cu.act, cu.predicted_act, std::string(to_string(cu.source)),
                          std::to_string(cu.source_round)});
    }
    const std::string tag(to_string(s));
    write("checked." + tag + ".csv", checked);
    write("revisions." + tag + ".csv", revisions);
    write("fixpoint." + tag + ".json", json{{"total", to_json(total)}, {"dialogues", dialogue_stats}}.dump(2) + "\n");
    spdlog::info("check:{}: {} of {} utterances changed ({:.2f}%), {} revisions", tag, total.changed_utterances,
                 total.utterances, 100.0 * total.total_changed_fraction, total.revision_events);
    return true;
  }

  // ---- evaluate -----------------------------------------------------------

  std::map<Annotator, CodeMap> human_codes() {
    std::set<std::string> known;
    for (const auto& d : dialogues()) {
      for (const auto& u : d.utterances) known.insert(u.id);
    }
    std::map<Annotator, CodeMap> out;
    std::vector<std::string> problems;
    for (const auto& path : cfg.ground_truth) {
      for (const auto& g : load_ground_truth_file(path)) {
        if (!known.count(g.utterance_id)) {
          problems.push_back(path + ": unknown utterance id '" + g.utterance_id + "'");
          continue;
        }
        try {
          auto label = cb.make_label(g.event, g.act);
          if (!out[g.annotator].emplace(g.utterance_id, label).second) {
            problems.push_back(path + ": " + std::string(to_string(g.annotator)) + " labels '" + g.utterance_id +
                               "' twice");
          }
        } catch (const ValidationError& e) {
          for (const auto& v : e.violations()) problems.push_back(path + ": " + g.utterance_id + ": " + v);
        }
      }
    }
    if (!problems.empty()) throw ValidationError(std::move(problems));
    return out;
  }

  CodeMap read_code_map(const fs::path& path) {
    CodeMap out;
    for (const auto& rec : read_csv(path)) out[rec.at("utterance_id")] = {rec.at("event"), rec.at("act")};
    return out;
  }

  GateVerdict evaluate(Subset s) {
    const std::string tag(to_string(s));
    if (s == Subset::kRemainder) {
      spdlog::info("evaluate:remainder: deploy scope has no ground truth; no metrics computed");
      return GateVerdict::kNotApplicable;
    }
    require("predict:" + tag, "evaluate");
    const auto& sp = data_split();
    std::set<std::string> scope;
    for (const auto& id : sp.ids(s)) {
      if (!sp.remainder.count(id)) scope.insert(id);
    }
    if (scope.empty()) {
      spdlog::warn("evaluate:{}: subset is empty; nothing to evaluate", tag);
      return GateVerdict::kNotApplicable;
    }

    const auto humans = human_codes();
    std::optional<Annotator> ref;
    for (Annotator a : {Annotator::kAdjudicated, Annotator::kH1, Annotator::kH2}) {
      auto it = humans.find(a);
      if (ref || it == humans.end()) continue;
      for (const auto& id : scope) {
        if (it->second.count(id)) {
          ref = a;
          break;
        }
      }
    }
    if (!ref) throw Error("evaluate:" + tag + ": no ground truth covers this subset");
    const std::string ref_name(to_string(*ref));
    const auto& reference = humans.at(*ref);
    std::size_t covered = 0;
    for (const auto& id : scope) covered += reference.count(id);
    json notices = json::array();
    if (covered < scope.size()) {
      notices.push_back(fmt::format("{} of {} utterances lack {} labels and are left out", scope.size() - covered,
                                    scope.size(), ref_name));
    }

    const std::vector<Dimension> dims = {Dimension::kCombined, Dimension::kEvent, Dimension::kAct};
    const CodeMap pre = read_code_map(dir / ("coded." + tag + ".csv"));
    std::optional<CodeMap> post;
    if (cfg.mode == PredictionMode::kSeparate && done("check:" + tag)) {
      post = read_code_map(dir / ("checked." + tag + ".csv"));
    }
    const CodeMap& final_codes = post ? *post : pre;

    json providers = json::array();
    std::map<std::string, CodeMap> per_provider;
    for (const auto& rec : read_csv(dir / ("provider_codes." + tag + ".csv"))) {
      per_provider[rec.at("provider_id")][rec.at("utterance_id")] = {rec.at("event"), rec.at("act")};
    }
    for (const auto* p : cfg.voting_providers()) {
      auto it = per_provider.find(p->provider_id);
      if (it == per_provider.end()) {
        notices.push_back(p->provider_id + " produced no usable codes");
        continue;
      }
      try {
        providers.push_back(metrics_row(compare_codes(p->provider_id, it->second, ref_name, reference, cb, dims, scope)));
      } catch (const Error& e) {
        notices.push_back(p->provider_id + ": " + e.what());
      }
    }
    const auto ensemble = compare_codes("Multi-LLMs", pre, ref_name, reference, cb, dims, scope);
    providers.push_back(metrics_row(ensemble));

    json stages = json::array();
    stages.push_back(metrics_row(ensemble));
    std::optional<Comparison> checked_cmp;
    if (post) {
      checked_cmp = compare_codes("Multi-LLMs with CC", *post, ref_name, reference, cb, dims, scope);
      stages.push_back(metrics_row(*checked_cmp));
    } else {
      notices.push_back("no consistency-checked codes; final codes are the ensemble codes");
    }

    const auto agreement = agreement_report(final_codes, humans, cb, dims, scope);
    json agreement_rows = json::array();
    for (const auto& c : agreement.rows) agreement_rows.push_back(metrics_row(c));
    for (const auto& n : agreement.notices) notices.push_back(n);

    const auto& gate_cmp = checked_cmp ? *checked_cmp : ensemble;
    const auto& combined = gate_cmp.by_dimension.at(Dimension::kCombined);
    const bool pass = combined.kappa >= cfg.gate_kappa_threshold;
    json gate{{"subset", tag},
              {"reference", ref_name},
              {"kappa", combined.kappa},
              {"threshold", cfg.gate_kappa_threshold},
              {"verdict", pass ? "PASS" : "FAIL"},
              {"per_dimension",
               {{"combined", combined.kappa},
                {"event", gate_cmp.by_dimension.at(Dimension::kEvent).kappa},
                {"act", gate_cmp.by_dimension.at(Dimension::kAct).kappa}}},
              {"n", combined.n}};

    json consistency = nullptr;
    if (post && fs::exists(dir / ("fixpoint." + tag + ".json"))) {
      consistency = json::parse(read_text_file(dir / ("fixpoint." + tag + ".json"))).at("total");
    }

    json doc{{"run_id", run_id},
             {"config_hash", config_hash},
             {"mode", to_string(cfg.mode)},
             {"subset", tag},
             {"reference", ref_name},
             {"providers", providers},
             {"stages", stages},
             {"agreement", agreement_rows},
             {"consistency", consistency},
             {"gate", gate},
             {"notices", notices}};
    write("metrics." + tag + ".json", doc.dump(2) + "\n");
    write("summary." + tag + ".txt", format_subset_report(doc));
    write("gate." + tag + ".json", gate.dump(2) + "\n");
    spdlog::info("evaluate:{}: combined kappa {:.4f} vs {} (threshold {:.2f}) -> {}", tag, combined.kappa, ref_name,
                 cfg.gate_kappa_threshold, pass ? "PASS" : "FAIL");
    return pass ? GateVerdict::kPass : GateVerdict::kFail;
  }

  GateVerdict stored_verdict(Subset s) {
    const auto path = dir / ("gate." + std::string(to_string(s)) + ".json");
    if (!fs::exists(path)) return GateVerdict::kNotApplicable;
    return json::parse(read_text_file(path)).value("verdict", "") == "PASS" ? GateVerdict::kPass
                                                                              : GateVerdict::kFail;
  }

  // ---- report -------------------------------------------------------------

  std::string report(const std::vector<std::string>& others) {
    const Subset order[] = {Subset::kValidation, Subset::kTest, Subset::kAll};
    std::string text;
    for (Subset s : order) {
      const auto path = dir / ("metrics." + std::string(to_string(s)) + ".json");
      if (!fs::exists(path)) continue;
      text += format_subset_report(json::parse(read_text_file(path))) + "\n";
    }
    if (text.empty()) text = "Run " + run_id + " has no evaluated subsets yet.\n";
    write("report.txt", text);

    if (others.empty()) return text;
    std::string cmp;
    for (Subset s : order) {
      const std::string name = "metrics." + std::string(to_string(s)) + ".json";
      if (!fs::exists(dir / name)) continue;
      std::vector<std::pair<std::string, json>> docs;
      auto mine = json::parse(read_text_file(dir / name));
      docs.emplace_back(run_id + " (" + mine.value("mode", "?") + ")", std::move(mine));
      for (const auto& other : others) {
        const auto path = fs::path(cfg.output_dir) / other / name;
        if (!fs::exists(path)) {
          throw Error("run '" + other + "' has no " + name + " under " + cfg.output_dir);
        }
        auto doc = json::parse(read_text_file(path));
        docs.emplace_back(other + " (" + doc.value("mode", "?") + ")", std::move(doc));
      }
      cmp += "Subset " + std::string(to_string(s)) + "\n" + format_comparison(docs) + "\n";
    }
    if (cmp.empty()) throw Error("run " + run_id + " has no evaluated subsets to compare");
    write("comparison.txt", cmp);
    return text + cmp;
  }
};

Pipeline::Pipeline(RunConfig config, RunOptions options)
    : impl_(std::make_unique<Impl>(std::move(config), options)) {}

Pipeline::~Pipeline() = default;

const RunConfig& Pipeline::config() const { return impl_->cfg; }
const std::string& Pipeline::run_id() const { return impl_->run_id; }
const std::filesystem::path& Pipeline::run_dir() const { return impl_->dir; }
bool Pipeline::stage_done(const std::string& stage) const { return impl_->done(stage); }

std::uint64_t Pipeline::network_calls() const {
  std::uint64_t n = 0;
  for (const auto& [id, c] : impl_->clients) n += c->network_calls();
  return n;
}

std::uint64_t Pipeline::network_calls(const std::string& provider_id) const {
  auto it = impl_->clients.find(provider_id);
  return it == impl_->clients.end() ? 0 : it->second->network_calls();
}

namespace {
template <class F>
auto timed(F&& f) {
  const auto t0 = std::chrono::steady_clock::now();
  f();
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}
}  // namespace

void Pipeline::preprocess() {
  if (impl_->skip("preprocess")) return;
  impl_->record("preprocess", timed([&] { impl_->preprocess(); }));
}

void Pipeline::predict(Subset s) {
  const std::string stage = "predict:" + std::string(to_string(s));
  if (impl_->skip(stage)) return;
  impl_->record(stage, timed([&] { impl_->predict(s); }));
}

void Pipeline::check(Subset s) {
  const std::string stage = "check:" + std::string(to_string(s));
  if (impl_->skip(stage)) return;
  bool ran = false;
  const double secs = timed([&] { ran = impl_->check(s); });
  if (ran) impl_->record(stage, secs);
}

GateVerdict Pipeline::evaluate(Subset s) {
  const std::string stage = "evaluate:" + std::string(to_string(s));
  if (s != Subset::kRemainder && impl_->skip(stage)) return impl_->stored_verdict(s);
  GateVerdict v = GateVerdict::kNotApplicable;
  const double secs = timed([&] { v = impl_->evaluate(s); });
  if (v != GateVerdict::kNotApplicable) impl_->record(stage, secs);
  return v;
}

std::string Pipeline::report(const std::vector<std::string>& compare_run_ids) { return impl_->report(compare_run_ids); }

int Pipeline::run(std::optional<Subset> subset) {
  // Without a configured checker the run skips consistency checking; the
  // explicit check command still treats that as an error.
  auto check_if_configured = [this](Subset s) {
    if (impl_->cfg.checker_provider.empty()) {
      spdlog::warn("check:{}: no consistency checker configured; skipping", to_string(s));
      return;
    }
    check(s);
  };
  preprocess();
  if (subset) {
    predict(*subset);
    check_if_configured(*subset);
    return evaluate(*subset) == GateVerdict::kFail ? 2 : 0;
  }
  for (Subset s : {Subset::kValidation, Subset::kTest}) {
    predict(s);
    check_if_configured(s);
    if (evaluate(s) == GateVerdict::kFail) {
      spdlog::error("gate failed on the {} set; stopping before later subsets", to_string(s));
      report();
      return 2;
    }
  }
  predict(Subset::kRemainder);
  check_if_configured(Subset::kRemainder);
  spdlog::info("remainder coded; no metrics computed for the deploy scope");
  report();
  return 0;
}

}  // namespace dialogcode
