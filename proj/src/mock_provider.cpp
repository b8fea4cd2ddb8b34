#include "dialogcode/mock_provider.hpp"

#include <random>

#include "dialogcode/error.hpp"
#include "dialogcode/util.hpp"

namespace dialogcode {

std::string mock_draw(std::uint64_t seed, std::string_view task_key, int sample_index,
                      const std::string& truth, const std::vector<std::string>& labels, double eps,
                      const ConfusionWeights& confusion) {
  std::mt19937_64 rng(stable_seed(std::to_string(seed) + "\x1f" + std::string(task_key) + "\x1f" +
                                  std::to_string(sample_index)));
  const double u = uniform_unit(rng);
  if (u >= eps) return truth;

  std::vector<const std::string*> wrong;
  std::vector<double> weights;
  const auto row = confusion.find(truth);
  for (const auto& l : labels) {
    if (l == truth) continue;
    double w = 1.0;
    if (row != confusion.end()) {
      auto it = row->second.find(l);
      w = it == row->second.end() ? 0.0 : it->second;
    }
    if (w > 0) {
      wrong.push_back(&l);
      weights.push_back(w);
    }
  }
  if (wrong.empty()) return truth;
  double total = 0;
  for (double w : weights) total += w;
  double pick = uniform_unit(rng) * total;
  for (std::size_t i = 0; i < wrong.size(); ++i) {
    if (pick < weights[i]) return *wrong[i];
    pick -= weights[i];
  }
  return *wrong.back();
}

namespace {

std::string seeded_choice(std::uint64_t seed, std::string_view key, const std::vector<std::string>& labels) {
  std::mt19937_64 rng(stable_seed(std::to_string(seed) + "\x1e" + std::string(key)));
  return labels[uniform_below(rng, labels.size())];
}

}  // namespace

ParsedPrediction mock_predict(std::uint64_t seed, const Utterance& utterance, Dimension dimension,
                              const NoiseProfile& noise, const CodeLabel& truth, const Codebook& cb,
                              int sample_index) {
  const auto labels = cb.labels_for(dimension);
  const std::string task_key = utterance.id + "/" + std::string(to_string(dimension));
  ParsedPrediction p;
  p.dimension = dimension;
  switch (dimension) {
    case Dimension::kEvent:
      p.event = mock_draw(seed, task_key, sample_index, truth.event, labels, noise.event, noise.confusion);
      break;
    case Dimension::kAct: {
      const std::string true_act =
          truth.act == kNoAct ? seeded_choice(seed, utterance.id + "/act-stand-in", labels) : truth.act;
      p.act = mock_draw(seed, task_key, sample_index, true_act, labels, noise.act, noise.confusion);
      break;
    }
    case Dimension::kCombined: {
      const auto drawn = mock_draw(seed, task_key, sample_index, truth.render(), labels, noise.combined,
                                   noise.confusion);
      const auto label = cb.parse_rendered(drawn);
      p.event = label->event;
      p.act = label->act;
      break;
    }
  }
  return p;
}

std::map<std::string, CodeLabel> load_mock_oracle(const MockSettings& settings, const Codebook& cb) {
  std::map<std::string, CodeLabel> oracle;
  if (settings.oracle_path.empty()) return oracle;
  const auto want = annotator_from_string(settings.oracle_annotator);
  for (const auto& g : load_ground_truth_file(settings.oracle_path)) {
    if (g.annotator != want) continue;
    oracle[g.utterance_id] = cb.make_label(g.event, g.act);
  }
  return oracle;
}

MockTransport::MockTransport(MockSettings settings, const Codebook& cb, std::map<std::string, CodeLabel> oracle)
    : settings_(std::move(settings)), cb_(cb), oracle_(std::move(oracle)) {}

CodeLabel MockTransport::truth_for(const std::string& utterance_id) const {
  if (auto it = oracle_.find(utterance_id); it != oracle_.end()) return it->second;
  const auto& space = cb_.combined_label_space();
  std::mt19937_64 rng(stable_seed(std::to_string(settings_.seed) + "\x1d" + utterance_id));
  return space[uniform_below(rng, space.size())];
}

std::string MockTransport::send(const ProviderConfig&, const ChatRequest& req) {
  const auto n = ++calls_;
  if (settings_.fail_after_calls > 0 && n > settings_.fail_after_calls) {
    throw TransportError("mock: injected failure after " + std::to_string(settings_.fail_after_calls) + " calls");
  }
  switch (req.tag.kind) {
    case TemplateId::kRevision: return revise(req);
    case TemplateId::kEvent: return predict(req, Dimension::kEvent);
    case TemplateId::kAct: return predict(req, Dimension::kAct);
    case TemplateId::kCombined: return predict(req, Dimension::kCombined);
    case TemplateId::kConsistencyCheck: return check(req);
  }
  throw RequestRejectedError("mock: unknown request kind");
}

std::string MockTransport::predict(const ChatRequest& req, Dimension d) const {
  if (req.tag.utterance_ids.empty()) throw RequestRejectedError("mock: prediction request without utterance id");
  Utterance u;
  u.id = req.tag.utterance_ids.front();
  const auto p = mock_predict(settings_.seed, u, d, settings_.noise, truth_for(u.id), cb_, req.sample_index);
  // Repair prompts get the same answer; the mock never produces unparsable text.
  return "Reasoning: the utterance fits the " + std::string(to_string(d)) +
         " definition best in its context.\nLabel: " + p.label();
}

std::string MockTransport::revise(const ChatRequest& req) const {
  const auto text = req.tag.attrs.count("text") ? req.tag.attrs.at("text") : std::string();
  const auto task = req.tag.attrs.count("task_materials") ? trim(req.tag.attrs.at("task_materials")) : std::string();
  if (task.empty()) return text + " [revised]";
  const auto first_line = task.substr(0, task.find('\n'));
  return text + " [revised; task context: " + first_line + "]";
}

std::string MockTransport::check(const ChatRequest& req) const {
  if (req.tag.utterance_ids.size() < 2) throw RequestRejectedError("mock: consistency request needs two utterances");
  const auto& cur = req.tag.utterance_ids[0];
  const auto& next = req.tag.utterance_ids[1];
  auto attr = [&req](const char* k) {
    auto it = req.tag.attrs.find(k);
    return it == req.tag.attrs.end() ? std::string() : it->second;
  };
  const auto cur_truth = truth_for(cur);
  const auto next_truth = truth_for(next);
  if (name_key(attr("current_event")) != name_key(cur_truth.event)) {
    return "The current event does not match the discussion.\nVerdict: revise-current: " + cur_truth.event;
  }
  if (name_key(attr("next_event")) != name_key(next_truth.event)) {
    return "The next event does not match the discussion.\nVerdict: revise-next: " + next_truth.event;
  }
  return "Both events fit the discussion.\nVerdict: consistent";
}

}  // namespace dialogcode
