#include "dialogcode/run_config.hpp"

#include <cmath>
#include <set>

#include "dialogcode/error.hpp"
#include "dialogcode/util.hpp"

namespace dialogcode {

using nlohmann::json;

std::string_view to_string(PredictionMode m) {
  return m == PredictionMode::kSeparate ? "separate" : "combined";
}

PredictionMode mode_from_string(std::string_view s) {
  const auto k = to_lower(s);
  if (k == "separate") return PredictionMode::kSeparate;
  if (k == "combined") return PredictionMode::kCombined;
  throw Error("unknown prediction mode '" + std::string(s) + "'");
}

namespace {

std::string resolve(const std::filesystem::path& base, const std::string& p) {
  if (p.empty()) return p;
  std::filesystem::path path(p);
  if (path.is_absolute()) return path.lexically_normal().string();
  return (base / path).lexically_normal().string();
}

template <class T>
T value_or(const json& obj, const char* key, T fallback) {
  auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) return fallback;
  return it->get<T>();
}

ProviderConfig provider_from_json(const json& p, const std::filesystem::path& base) {
  ProviderConfig cfg;
  cfg.provider_id = p.at("provider_id").get<std::string>();
  cfg.endpoint = p.at("endpoint").get<std::string>();
  cfg.model_name = value_or<std::string>(p, "model_name", cfg.provider_id);
  cfg.sampling.temperature = value_or(p, "temperature", cfg.sampling.temperature);
  cfg.sampling.max_output_tokens = value_or(p, "max_output_tokens", cfg.sampling.max_output_tokens);
  cfg.weight = value_or(p, "weight", cfg.weight);
  cfg.samples_per_task = value_or(p, "samples_per_task", cfg.samples_per_task);
  cfg.credentials_env = value_or<std::string>(p, "credentials_env", "");
  cfg.voting = value_or(p, "voting", cfg.voting);
  cfg.requests_per_minute = value_or(p, "requests_per_minute", cfg.requests_per_minute);
  if (auto r = p.find("retry"); r != p.end()) {
    cfg.retry.max_attempts = value_or(*r, "max_attempts", cfg.retry.max_attempts);
    cfg.retry.base_delay = std::chrono::milliseconds(value_or<long long>(*r, "base_delay_ms", cfg.retry.base_delay.count()));
  }
  if (auto m = p.find("mock"); m != p.end()) {
    MockSettings ms;
    ms.seed = value_or<std::uint64_t>(*m, "seed", 0);
    if (auto n = m->find("noise"); n != m->end()) {
      ms.noise.event = value_or(*n, "event", 0.0);
      ms.noise.act = value_or(*n, "act", 0.0);
      ms.noise.combined = value_or(*n, "combined", 0.0);
    }
    if (auto c = m->find("confusion"); c != m->end()) ms.noise.confusion = c->get<ConfusionWeights>();
    ms.oracle_path = resolve(base, value_or<std::string>(*m, "oracle", ""));
    ms.oracle_annotator = value_or<std::string>(*m, "oracle_annotator", "H1");
    ms.fail_after_calls = value_or<std::uint64_t>(*m, "fail_after_calls", 0);
    cfg.mock = ms;
  } else if (cfg.is_local()) {
    cfg.mock = MockSettings{};
  }
  return cfg;
}

json provider_to_json(const ProviderConfig& p, bool for_hash) {
  json j{{"provider_id", p.provider_id},
         {"endpoint", p.endpoint},
         {"model_name", p.model_name},
         {"temperature", p.sampling.temperature},
         {"max_output_tokens", p.sampling.max_output_tokens},
         {"weight", p.weight},
         {"samples_per_task", p.samples_per_task},
         {"credentials_env", p.credentials_env},
         {"voting", p.voting}};
  if (!for_hash) {
    j["requests_per_minute"] = p.requests_per_minute;
    j["retry"] = {{"max_attempts", p.retry.max_attempts}, {"base_delay_ms", p.retry.base_delay.count()}};
  }
  if (p.mock) {
    json m{{"seed", p.mock->seed},
           {"noise", {{"event", p.mock->noise.event}, {"act", p.mock->noise.act}, {"combined", p.mock->noise.combined}}},
           {"oracle", p.mock->oracle_path},
           {"oracle_annotator", p.mock->oracle_annotator}};
    if (!p.mock->noise.confusion.empty()) m["confusion"] = p.mock->noise.confusion;
    if (!for_hash) m["fail_after_calls"] = p.mock->fail_after_calls;
    j["mock"] = m;
  }
  return j;
}

}  // namespace

RunConfig RunConfig::from_json(const json& doc, const std::filesystem::path& base) {
  RunConfig c;
  try {
    c.codebook = value_or<std::string>(doc, "codebook", "bundled");
    if (c.codebook != "bundled") c.codebook = resolve(base, c.codebook);
    c.templates_dir = resolve(base, value_or<std::string>(doc, "templates_dir", ""));
    for (const auto& t : doc.at("transcripts")) c.transcripts.push_back(resolve(base, t.get<std::string>()));
    if (auto g = doc.find("ground_truth"); g != doc.end()) {
      for (const auto& t : *g) c.ground_truth.push_back(resolve(base, t.get<std::string>()));
    }
    c.task_materials = value_or<std::string>(doc, "task_materials", "");
    if (auto f = doc.find("task_materials_file"); f != doc.end()) {
      c.task_materials = read_text_file(resolve(base, f->get<std::string>()));
    }
    if (auto s = doc.find("split"); s != doc.end()) {
      if (auto r = s->find("ratios"); r != s->end()) {
        const auto v = r->get<std::vector<double>>();
        if (v.size() != 3) throw ValidationError({"split.ratios must have three entries"});
        c.split_ratios = {v[0], v[1], v[2]};
      }
      c.split_seed = value_or<std::uint64_t>(*s, "seed", c.split_seed);
      c.split_unit = value_or<std::string>(*s, "unit", "utterance") == "dialogue" ? SplitUnit::kDialogue
                                                                                 : SplitUnit::kUtterance;
    }
    for (const auto& p : doc.at("providers")) c.providers.push_back(provider_from_json(p, base));
    if (auto p = doc.find("prediction"); p != doc.end()) {
      c.mode = mode_from_string(value_or<std::string>(*p, "mode", "separate"));
      c.context_window = value_or<std::size_t>(*p, "context_window", c.context_window);
      c.fallback_window = value_or<std::size_t>(*p, "fallback_window", c.fallback_window);
      c.workers = value_or(*p, "workers", c.workers);
    }
    if (auto r = doc.find("revision"); r != doc.end()) c.revision_provider = value_or<std::string>(*r, "provider", "");
    if (auto e = doc.find("ensemble"); e != doc.end()) c.max_tie_rounds = value_or(*e, "max_tie_rounds", c.max_tie_rounds);
    if (auto k = doc.find("consistency"); k != doc.end()) {
      c.checker_provider = value_or<std::string>(*k, "checker", "");
      c.consistency_max_rounds = value_or(*k, "max_rounds", c.consistency_max_rounds);
    }
    if (auto g = doc.find("gate"); g != doc.end()) c.gate_kappa_threshold = value_or(*g, "kappa_threshold", c.gate_kappa_threshold);
    c.cache_dir = resolve(base, value_or<std::string>(doc, "cache_dir", c.cache_dir));
    c.output_dir = resolve(base, value_or<std::string>(doc, "output_dir", c.output_dir));
  } catch (const json::exception& e) {
    throw MalformedDocumentError("run config", e.what());
  }
  c.validate();
  return c;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
  json doc;
  const auto text = read_text_file(path);
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw MalformedDocumentError(path.string(), e.what());
  }
  return from_json(doc, std::filesystem::absolute(path).parent_path());
}

namespace {
json config_json(const RunConfig& c, bool for_hash) {
  json providers = json::array();
  for (const auto& p : c.providers) providers.push_back(provider_to_json(p, for_hash));
  json j{{"codebook", c.codebook},
         {"templates_dir", c.templates_dir},
         {"transcripts", c.transcripts},
         {"ground_truth", c.ground_truth},
         {"task_materials", c.task_materials},
         {"split",
          {{"ratios", {c.split_ratios.validation, c.split_ratios.test, c.split_ratios.remainder}},
           {"seed", c.split_seed},
           {"unit", c.split_unit == SplitUnit::kDialogue ? "dialogue" : "utterance"}}},
         {"providers", providers},
         {"prediction",
          {{"mode", to_string(c.mode)}, {"context_window", c.context_window}, {"fallback_window", c.fallback_window}}},
         {"revision", {{"provider", c.revision_provider}}},
         {"ensemble", {{"max_tie_rounds", c.max_tie_rounds}}},
         {"consistency", {{"checker", c.checker_provider}, {"max_rounds", c.consistency_max_rounds}}},
         {"gate", {{"kappa_threshold", c.gate_kappa_threshold}}}};
  if (!for_hash) {
    j["prediction"]["workers"] = c.workers;
    j["cache_dir"] = c.cache_dir;
    j["output_dir"] = c.output_dir;
  }
  return j;
}
}  // namespace

json RunConfig::to_json() const { return config_json(*this, false); }

json RunConfig::identity_json() const { return config_json(*this, true); }

std::string RunConfig::hash() const { return sha256_hex(identity_json().dump()); }

const ProviderConfig* RunConfig::find_provider(std::string_view id) const {
  for (const auto& p : providers) {
    if (p.provider_id == id) return &p;
  }
  return nullptr;
}

std::vector<const ProviderConfig*> RunConfig::voting_providers() const {
  std::vector<const ProviderConfig*> out;
  for (const auto& p : providers) {
    if (p.voting) out.push_back(&p);
  }
  return out;
}

void RunConfig::validate() const {
  std::vector<std::string> problems;
  if (transcripts.empty()) problems.push_back("transcripts: at least one file is required");
  const double sum = split_ratios.validation + split_ratios.test + split_ratios.remainder;
  if (std::abs(sum - 1.0) > 1e-9) problems.push_back("split.ratios must sum to 1");
  std::set<std::string> ids;
  for (const auto& p : providers) {
    for (auto& v : dialogcode::validate(p)) problems.push_back(std::move(v));
    if (!ids.insert(p.provider_id).second) problems.push_back("provider '" + p.provider_id + "' is declared twice");
  }
  if (voting_providers().empty()) problems.push_back("providers: at least one voting provider is required");
  if (!revision_provider.empty() && !find_provider(revision_provider)) {
    problems.push_back("revision.provider '" + revision_provider + "' is not a declared provider");
  }
  if (!checker_provider.empty() && !find_provider(checker_provider)) {
    problems.push_back("consistency.checker '" + checker_provider + "' is not a declared provider");
  }
  if (max_tie_rounds < 0) problems.push_back("ensemble.max_tie_rounds must be >= 0");
  if (consistency_max_rounds < 1) problems.push_back("consistency.max_rounds must be >= 1");
  if (workers < 1) problems.push_back("prediction.workers must be >= 1");
  if (gate_kappa_threshold < -1 || gate_kappa_threshold > 1) problems.push_back("gate.kappa_threshold must lie in [-1, 1]");
  if (!problems.empty()) throw ValidationError(std::move(problems));
}

}  // namespace dialogcode
