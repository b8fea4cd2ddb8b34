#include <doctest.h>

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <thread>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "dialogcode/code_parser.hpp"
#include "dialogcode/error.hpp"
#include "dialogcode/llm_client.hpp"
#include "dialogcode/mock_provider.hpp"
#include "dialogcode/prompting.hpp"
#include "support/temp_dir.hpp"

using namespace dialogcode;
using testing_support::TempDir;

namespace {

ProviderConfig remote_config(const std::string& endpoint, const std::string& env) {
  ProviderConfig cfg;
  cfg.provider_id = "remote";
  cfg.endpoint = endpoint;
  cfg.model_name = "some-model";
  cfg.credentials_env = env;
  cfg.retry.max_attempts = 3;
  cfg.retry.base_delay = std::chrono::milliseconds(1);
  return cfg;
}

ChatRequest request(const std::string& user = "Code this.", int sample = 0) {
  ChatRequest r;
  r.system_text = "You are a coder.";
  r.user_text = user;
  r.sample_index = sample;
  return r;
}

// Local stand-in for a chat-completion service.
class FakeService {
 public:
  explicit FakeService(std::function<void(const httplib::Request&, httplib::Response&)> handler) {
    server_.Post("/v1/chat/completions", [this, handler](const httplib::Request& req, httplib::Response& res) {
      ++hits;
      handler(req, res);
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~FakeService() {
    server_.stop();
    thread_.join();
  }
  std::string endpoint() const { return "http://127.0.0.1:" + std::to_string(port_); }
  std::atomic<int> hits{0};

 private:
  httplib::Server server_;
  int port_ = 0;
  std::thread thread_;
};

std::string completion(const std::string& content) {
  return nlohmann::json{{"choices", {{{"message", {{"role", "assistant"}, {"content", content}}}}}}}.dump();
}

class CountingTransport final : public ChatTransport {
 public:
  int failures_left = 0;
  int calls = 0;
  std::string send(const ProviderConfig&, const ChatRequest& req) override {
    ++calls;
    if (failures_left > 0) {
      --failures_left;
      throw TransportError("temporarily unavailable");
    }
    return "echo:" + req.user_text + ":" + std::to_string(req.sample_index);
  }
};

}  // namespace

TEST_SUITE("llm_client") {
  TEST_CASE("cache keys separate sample indices and content") {
    const auto cfg = remote_config("http://x", "K");
    CHECK(cache_key(cfg, request("a", 0)) == cache_key(cfg, request("a", 0)));
    CHECK(cache_key(cfg, request("a", 0)) != cache_key(cfg, request("a", 1)));
    CHECK(cache_key(cfg, request("a", 0)) != cache_key(cfg, request("b", 0)));
    auto hot = request("a", 0);
    hot.sampling = Sampling{1.0, 1024};
    CHECK(cache_key(cfg, hot) != cache_key(cfg, request("a", 0)));
    auto other = cfg;
    other.model_name = "other-model";
    CHECK(cache_key(other, request("a", 0)) != cache_key(cfg, request("a", 0)));
  }

  TEST_CASE("mock cache identity folds in seed and noise") {
    ProviderConfig a;
    a.provider_id = "m";
    a.endpoint = "local";
    a.model_name = "m";
    a.mock = MockSettings{};
    auto b = a;
    b.mock->seed = 9;
    auto c = a;
    c.mock->noise.event = 0.2;
    CHECK(a.cache_identity() != b.cache_identity());
    CHECK(a.cache_identity() != c.cache_identity());
    auto d = a;
    d.mock->fail_after_calls = 5;
    CHECK(a.cache_identity() == d.cache_identity());
  }

  TEST_CASE("cached requests replay without network calls") {
    TempDir dir;
    auto cache = std::make_shared<ResponseCache>(dir.path());
    auto transport = std::make_unique<CountingTransport>();
    auto* t = transport.get();
    ProviderClient client(remote_config("http://x", "K"), std::move(transport), cache);
    const auto first = client.complete(request("hello", 2));
    CHECK_FALSE(first.cached);
    const auto second = client.complete(request("hello", 2));
    CHECK(second.cached);
    CHECK(second.raw_text == first.raw_text);
    CHECK(t->calls == 1);
    CHECK(client.network_calls() == 1);

    // A second client over the same directory sees the entry.
    auto t2 = std::make_unique<CountingTransport>();
    auto* t2p = t2.get();
    ProviderClient again(remote_config("http://x", "K"), std::move(t2), std::make_shared<ResponseCache>(dir.path()));
    CHECK(again.complete(request("hello", 2)).cached);
    CHECK(t2p->calls == 0);
  }

  TEST_CASE("transient failures are retried up to the attempt bound") {
    auto transport = std::make_unique<CountingTransport>();
    auto* t = transport.get();
    t->failures_left = 2;
    ProviderClient client(remote_config("http://x", "K"), std::move(transport), nullptr);
    CHECK(client.complete(request()).raw_text == "echo:Code this.:0");
    CHECK(t->calls == 3);

    t->failures_left = 5;
    CHECK_THROWS_AS(client.complete(request("again")), TransportError);
    CHECK(t->calls == 6);
  }

  TEST_CASE("requests need both texts") {
    ProviderClient client(remote_config("http://x", "K"), std::make_unique<CountingTransport>(), nullptr);
    auto r = request();
    r.system_text = "  ";
    CHECK_THROWS_AS(client.complete(r), Error);
  }

  TEST_CASE("missing credentials fail before any network call") {
    FakeService service([](const httplib::Request&, httplib::Response& res) {
      res.set_content(completion("Label: Planning"), "application/json");
    });
    ::unsetenv("DIALOGCODE_TEST_MISSING_KEY");
    ProviderClient client(remote_config(service.endpoint(), "DIALOGCODE_TEST_MISSING_KEY"),
                          make_openai_compatible_transport(), nullptr);
    CHECK_THROWS_AS(client.complete(request()), CredentialError);
    CHECK(service.hits == 0);
  }

  TEST_CASE("chat-completion adapter speaks the wire format") {
    ::setenv("DIALOGCODE_TEST_KEY", "secret-token", 1);
    std::string seen_auth;
    nlohmann::json seen_body;
    FakeService service([&](const httplib::Request& req, httplib::Response& res) {
      seen_auth = req.get_header_value("Authorization");
      seen_body = nlohmann::json::parse(req.body);
      res.set_content(completion("Reasoning.\nLabel: Planning"), "application/json");
    });
    ProviderClient client(remote_config(service.endpoint(), "DIALOGCODE_TEST_KEY"), make_openai_compatible_transport(),
                          nullptr);
    const auto r = client.complete(request("What is this?"));
    CHECK(r.raw_text == "Reasoning.\nLabel: Planning");
    CHECK(seen_auth == "Bearer secret-token");
    CHECK(seen_body["model"] == "some-model");
    CHECK(seen_body["messages"][0]["role"] == "system");
    CHECK(seen_body["messages"][1]["content"] == "What is this?");
    CHECK(seen_body["temperature"].get<double>() == doctest::Approx(0.7));
  }

  TEST_CASE("adapter maps HTTP failures") {
    ::setenv("DIALOGCODE_TEST_KEY", "secret-token", 1);
    std::atomic<int> status{401};
    std::atomic<int> recover_after{0};
    FakeService service([&](const httplib::Request&, httplib::Response& res) {
      if (recover_after > 0 && --recover_after == 0) {
        res.set_content(completion("ok"), "application/json");
        return;
      }
      res.status = status;
      res.set_content(status == 400 ? R"({"error": {"code": "context_length_exceeded"}})" : R"({"error": "x"})",
                      "application/json");
    });
    ProviderClient client(remote_config(service.endpoint(), "DIALOGCODE_TEST_KEY"), make_openai_compatible_transport(),
                          nullptr);

    CHECK_THROWS_AS(client.complete(request("a")), CredentialError);
    CHECK(service.hits == 1);  // never retried

    status = 400;
    CHECK_THROWS_AS(client.complete(request("b")), ContextLimitError);

    status = 422;
    CHECK_THROWS_AS(client.complete(request("c")), RequestRejectedError);

    status = 429;
    recover_after = 2;  // one 429, then success
    CHECK(client.complete(request("d")).raw_text == "ok");

    status = 503;
    const int before = service.hits;
    CHECK_THROWS_AS(client.complete(request("e")), TransportError);
    CHECK(service.hits - before == 3);
  }

  TEST_CASE("token bucket spaces requests") {
    TokenBucket bucket(1200.0);  // one request per 50 ms
    const auto t0 = std::chrono::steady_clock::now();
    for (int i = 0; i < 3; ++i) bucket.acquire();
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    CHECK(secs >= 0.09);
    TokenBucket unlimited(0);
    for (int i = 0; i < 1000; ++i) unlimited.acquire();
  }

  TEST_CASE("provider validation lists every problem") {
    ProviderConfig cfg;
    cfg.provider_id = "p";
    cfg.endpoint = "https://example.invalid";
    cfg.model_name = "";
    cfg.samples_per_task = 0;
    cfg.weight = 0;
    const auto problems = validate(cfg);
    CHECK(problems.size() >= 4);
  }
}

TEST_SUITE("code_parser") {
  static const Codebook& cb = Codebook::bundled_default();

  TEST_CASE("verbose reasoning with the label at the end") {
    const auto p = parse_code_response("Let me think. The speaker proposes steps... therefore the event is: Solution Development",
                                       cb, Dimension::kEvent);
    CHECK(p.event == "Solution Development");
    CHECK(p.label() == "Solution Development");
  }

  TEST_CASE("combined answers split on the final dash") {
    const auto p = parse_code_response("solution development-ask", cb, Dimension::kCombined);
    CHECK(p.event == "Solution Development");
    CHECK(p.act == "Ask");
    CHECK(p.label() == "Solution Development-Ask");
    const auto s = parse_code_response("Label: self-disclosure-none", cb, Dimension::kCombined);
    CHECK(s.label() == "Self-disclosure-None");
  }

  TEST_CASE("unresolvable replies raise with the raw text") {
    try {
      parse_code_response("The answer is unclear", cb, Dimension::kEvent);
      FAIL("expected a parse error");
    } catch (const ResponseParseError& e) {
      CHECK(e.raw() == "The answer is unclear");
    }
  }

  TEST_CASE("the final label line wins over earlier mentions") {
    const auto p = parse_code_response("It could be Planning or Monitoring.\nLabel:   **monitoring**", cb,
                                       Dimension::kEvent);
    CHECK(p.event == "Monitoring");
    CHECK(p.confidence_note.find("Planning") != std::string::npos);
    const auto a = parse_code_response("The speaker builds on the idea.\nLabel: Build  On", cb, Dimension::kAct);
    CHECK(a.act == "BuildOn");
  }

  TEST_CASE("every canonical rendering round-trips") {
    for (auto d : {Dimension::kEvent, Dimension::kAct, Dimension::kCombined}) {
      for (const auto& label : cb.labels_for(d)) {
        CHECK(parse_code_response(label, cb, d).label() == label);
        CHECK(parse_code_response("Reasoning first.\nLabel: " + label, cb, d).label() == label);
      }
    }
  }

  TEST_CASE("repair instruction lists the closed label set") {
    const auto text = repair_instruction(cb, Dimension::kAct);
    for (const auto& a : cb.labels_for(Dimension::kAct)) CHECK(text.find(a) != std::string::npos);
  }
}

TEST_SUITE("mock_provider") {
  static const Codebook& cb = Codebook::bundled_default();
  static const std::vector<std::string> five = {"A", "B", "C", "D", "E"};

  TEST_CASE("noiseless and fully noisy draws") {
    for (int i = 0; i < 200; ++i) {
      CHECK(mock_draw(1, "t" + std::to_string(i), 0, "C", five, 0.0) == "C");
      CHECK(mock_draw(1, "t" + std::to_string(i), 0, "C", five, 1.0) != "C");
    }
  }

  TEST_CASE("empirical error rate matches the configured rate") {
    int wrong = 0;
    const int n = 10000;
    for (int i = 0; i < n; ++i) wrong += mock_draw(7, "task" + std::to_string(i), 0, "A", five, 0.3) != "A";
    CHECK(std::abs(wrong / double(n) - 0.3) <= 0.02);
  }

  TEST_CASE("draws are pure functions of their inputs") {
    for (int i = 0; i < 50; ++i) {
      const auto key = "k" + std::to_string(i);
      CHECK(mock_draw(3, key, i % 4, "B", five, 0.5) == mock_draw(3, key, i % 4, "B", five, 0.5));
    }
    int differs = 0;
    for (int i = 0; i < 200; ++i) {
      differs += mock_draw(3, "k" + std::to_string(i), 0, "B", five, 0.5) !=
                 mock_draw(4, "k" + std::to_string(i), 0, "B", five, 0.5);
    }
    CHECK(differs > 0);
  }

  TEST_CASE("confusion weights steer wrong answers") {
    ConfusionWeights confusion{{"A", {{"D", 1.0}}}};
    for (int i = 0; i < 100; ++i) CHECK(mock_draw(1, "t" + std::to_string(i), 0, "A", five, 1.0, confusion) == "D");
  }

  TEST_CASE("mock transport answers from its oracle") {
    MockSettings s;
    s.seed = 5;
    MockTransport t(s, cb, {{"u1", cb.make_label("Planning", "Give")}});
    Dialogue d{"g", {Utterance{"u1", "A", "Let us split the work.", std::nullopt, 0, 1}}};
    PromptRenderer renderer(cb, TemplateSet::bundled());
    const auto ctx = make_context(cb, d, 0);
    ProviderConfig cfg;
    const auto ev = t.send(cfg, renderer.render_event(ctx));
    CHECK(parse_code_response(ev, cb, Dimension::kEvent).event == "Planning");
    CHECK(t.send(cfg, renderer.render_event(ctx)) == ev);
    CHECK(parse_code_response(t.send(cfg, renderer.render_act(ctx)), cb, Dimension::kAct).act == "Give");
    CHECK(parse_code_response(t.send(cfg, renderer.render_combined(ctx)), cb, Dimension::kCombined).label() ==
          "Planning-Give");
    const auto revised = t.send(cfg, renderer.render_revision(make_context(cb, d, 0, 0, "", false)));
    CHECK(revised.find("Let us split the work.") == 0);

    MockSettings failing = s;
    failing.fail_after_calls = 1;
    MockTransport f(failing, cb, {});
    CHECK_NOTHROW(f.send(cfg, renderer.render_event(ctx)));
    CHECK_THROWS_AS(f.send(cfg, renderer.render_event(ctx)), TransportError);
  }
}
