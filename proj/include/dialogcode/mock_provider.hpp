#pragma once

#include <atomic>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "dialogcode/code_parser.hpp"
#include "dialogcode/codebook.hpp"
#include "dialogcode/llm_client.hpp"
#include "dialogcode/transcript.hpp"

namespace dialogcode {

// Noisy oracle draw over an arbitrary label set. Returns `truth` with
// probability 1 - eps, otherwise a wrong label chosen by the confusion row
// for `truth` (uniform over the other labels when the row is absent). A pure
// function of its arguments.
std::string mock_draw(std::uint64_t seed, std::string_view task_key, int sample_index,
                      const std::string& truth, const std::vector<std::string>& labels, double eps,
                      const ConfusionWeights& confusion = {});

// Codebook-aware draw for one utterance. For the act dimension an event
// without acts has no true act among the choices, so a seeded act stands in.
ParsedPrediction mock_predict(std::uint64_t seed, const Utterance& utterance, Dimension dimension,
                              const NoiseProfile& noise, const CodeLabel& truth, const Codebook& cb,
                              int sample_index = 0);

// In-process provider behind endpoint "local". Prediction requests are
// answered from a hidden oracle with configured noise; revision requests
// return the text with a marker (and the task context when given);
// consistency requests get an oracle-aligned verdict.
class MockTransport final : public ChatTransport {
 public:
  MockTransport(MockSettings settings, const Codebook& cb, std::map<std::string, CodeLabel> oracle);

  std::string send(const ProviderConfig& cfg, const ChatRequest& req) override;

  std::uint64_t calls() const { return calls_.load(); }

 private:
  CodeLabel truth_for(const std::string& utterance_id) const;
  std::string predict(const ChatRequest& req, Dimension d) const;
  std::string revise(const ChatRequest& req) const;
  std::string check(const ChatRequest& req) const;

  MockSettings settings_;
  const Codebook& cb_;
  std::map<std::string, CodeLabel> oracle_;
  std::atomic<std::uint64_t> calls_{0};
};

// Transport driven by a caller-supplied function; used for scripted checkers.
class ScriptedTransport final : public ChatTransport {
 public:
  using Script = std::function<std::string(const ChatRequest&)>;
  explicit ScriptedTransport(Script script) : script_(std::move(script)) {}
  std::string send(const ProviderConfig&, const ChatRequest& req) override { return script_(req); }

 private:
  Script script_;
};

// Loads the oracle labels named in the settings.
std::map<std::string, CodeLabel> load_mock_oracle(const MockSettings& settings, const Codebook& cb);

}  // namespace dialogcode
