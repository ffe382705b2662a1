#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <atomic>
#include <chrono>
#include <deque>
#include <functional>
#include <mutex>
#include <thread>

#include "doctest.h"
#include "helpers.hpp"
#include "httplib.h"
#include "json.hpp"
#include "lmtree/remote_analyst.hpp"

using namespace lmtree;
using namespace testutil;
using json = nlohmann::json;

namespace {

std::string envelope(const std::string& content) {
  return json{{"choices", json::array({{{"message", {{"role", "assistant"}, {"content", content}}}}})}}
      .dump();
}

/// Local chat-completions stand-in. The handler sees the parsed request body
/// and returns (status, assistant content).
class MockServer {
 public:
  using Handler = std::function<std::pair<int, std::string>(const json&, const httplib::Request&)>;

  explicit MockServer(Handler handler) : handler_(std::move(handler)) {
    server_.Post("/v1/chat/completions", [this](const httplib::Request& req, httplib::Response& res) {
      {
        std::lock_guard lock(mutex_);
        ++requests_;
        bodies_.push_back(req.body);
        auth_ = req.get_header_value("Authorization");
      }
      const auto [status, content] = handler_(json::parse(req.body), req);
      res.status = status;
      res.set_content(status == 200 ? envelope(content) : content, "application/json");
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }

  ~MockServer() {
    server_.stop();
    thread_.join();
  }

  std::string url() const { return "http://127.0.0.1:" + std::to_string(port_) + "/v1"; }
  int requests() {
    std::lock_guard lock(mutex_);
    return requests_;
  }
  std::vector<std::string> bodies() {
    std::lock_guard lock(mutex_);
    return bodies_;
  }
  std::string auth() {
    std::lock_guard lock(mutex_);
    return auth_;
  }

 private:
  Handler handler_;
  httplib::Server server_;
  std::thread thread_;
  int port_ = 0;
  std::mutex mutex_;
  int requests_ = 0;
  std::vector<std::string> bodies_;
  std::string auth_;
};

RemoteOptions options_for(const std::string& url) {
  RemoteOptions o;
  o.base_url = url;
  o.model = "test-model";
  o.api_key = "secret";
  o.requests_per_second = 1000;
  o.backoff = std::chrono::milliseconds(1);
  o.timeout_seconds = 5;
  return o;
}

std::vector<PublicItem> sample(const std::string& prefix, int n, const std::string& body = "text") {
  std::vector<PublicItem> out;
  for (int i = 0; i < n; ++i) {
    out.push_back({prefix + std::to_string(i), "news", "title " + prefix + std::to_string(i), body});
  }
  return out;
}

const std::string kGpuAnswer =
    R"({"attribute_name": "high_end_gpu", "attribute_description": "mentions a high-end GPU",
        "rule_kind": "existence", "threshold": null, "direction": "high", "rationale": "r"})";

std::string user_message(const json& request) {
  return request.at("messages").at(1).at("content").get<std::string>();
}

}  // namespace

TEST_SUITE("remote_analyst") {
  TEST_CASE("parses bare and fenced answers") {
    const auto bare = parse_proposal_content(kGpuAnswer);
    REQUIRE(bare.has_value());
    CHECK(bare->attribute.name == "high_end_gpu");
    CHECK(bare->rule_kind == RuleKind::Existence);

    const auto fenced = parse_proposal_content(
        "Here it is:\n```json\n{\"attribute_name\": \"market_value\", \"rule_kind\": \"threshold\", "
        "\"threshold\": 1000, \"direction\": \"high\"}\n```");
    REQUIRE(fenced.has_value());
    CHECK(fenced->attribute.kind == AttributeKind::Numeric);
    CHECK(*fenced->threshold == 1000.0);

    CHECK_FALSE(parse_proposal_content(R"({"attribute_name": null})").has_value());
    CHECK_THROWS_AS(parse_proposal_content("no json here"), std::invalid_argument);
    CHECK_THROWS_AS(parse_proposal_content(R"({"attribute_name": "x", "rule_kind": "threshold"})"),
                    std::invalid_argument);
    CHECK_THROWS_AS(parse_proposal_content(R"({"attribute_name": "x", "rule_kind": "maybe"})"),
                    std::invalid_argument);
  }

  TEST_CASE("truncation keeps whole UTF-8 sequences") {
    CHECK(truncate_utf8("abcdef", 3) == "abc");
    CHECK(truncate_utf8("abc", 10) == "abc");
    const std::string umlaut = "a\xC3\xBC" "b";  // a, u-umlaut (2 bytes), b
    CHECK(truncate_utf8(umlaut, 2) == "a");
    CHECK(truncate_utf8(umlaut, 3) == "a\xC3\xBC");
  }

  TEST_CASE("proposal round trip with auth header and sampled prompt") {
    MockServer server([](const json&, const httplib::Request&) { return std::pair{200, kGpuAnswer}; });
    auto options = options_for(server.url());
    options.sample_size = 3;
    options.body_truncation = 5;
    RemoteAnalyst analyst(options);
    const auto proposal = analyst.propose_split(sample("h", 8, "0123456789"), sample("l", 8, "abcdefghij"));
    REQUIRE(proposal.has_value());
    CHECK(proposal->attribute.name == "high_end_gpu");
    CHECK(server.requests() == 1);
    CHECK(server.auth() == "Bearer secret");
    CHECK(analyst.sample_limit() == 3);

    const auto request = json::parse(server.bodies().at(0));
    CHECK(request.at("model") == "test-model");
    const auto user = user_message(request);
    CHECK(user.find("title h2") != std::string::npos);
    CHECK(user.find("title h3") == std::string::npos);  // sample_size 3
    CHECK(user.find("01234") != std::string::npos);
    CHECK(user.find("012345") == std::string::npos);  // body_truncation 5
  }

  TEST_CASE("a malformed answer is asked again") {
    std::atomic<int> calls{0};
    MockServer server([&](const json&, const httplib::Request&) {
      return std::pair{200, ++calls == 1 ? std::string("I think it is the GPU.") : kGpuAnswer};
    });
    RemoteAnalyst analyst(options_for(server.url()));
    const auto proposal = analyst.propose_split(sample("h", 2), sample("l", 2));
    REQUIRE(proposal.has_value());
    CHECK(server.requests() == 2);
  }

  TEST_CASE("always malformed gives no proposal after the retry budget") {
    MockServer server([](const json&, const httplib::Request&) { return std::pair{200, std::string("???")}; });
    auto options = options_for(server.url());
    options.max_retries = 2;
    RemoteAnalyst analyst(options);
    CHECK_FALSE(analyst.propose_split(sample("h", 2), sample("l", 2)).has_value());
    CHECK(server.requests() == 3);
  }

  TEST_CASE("server errors are retried") {
    std::atomic<int> calls{0};
    MockServer server([&](const json&, const httplib::Request&) {
      return ++calls == 1 ? std::pair{500, std::string("oops")} : std::pair{200, kGpuAnswer};
    });
    RemoteAnalyst analyst(options_for(server.url()));
    CHECK(analyst.propose_split(sample("h", 2), sample("l", 2)).has_value());
    CHECK(server.requests() == 2);
  }

  TEST_CASE("auth failure is a backend error, not a missing proposal") {
    MockServer server([](const json&, const httplib::Request&) { return std::pair{401, std::string("{}")}; });
    RemoteAnalyst analyst(options_for(server.url()));
    CHECK_THROWS_AS(analyst.propose_split(sample("h", 2), sample("l", 2)), AnalystError);
    CHECK(server.requests() == 1);
  }

  TEST_CASE("a closed port is a backend error") {
    int port = 0;
    {
      httplib::Server probe;
      port = probe.bind_to_any_port("127.0.0.1");
    }
    auto options = options_for("http://127.0.0.1:" + std::to_string(port) + "/v1");
    options.max_retries = 1;
    options.timeout_seconds = 1;
    RemoteAnalyst analyst(options);
    CHECK_THROWS_AS(analyst.propose_split(sample("h", 2), sample("l", 2)), AnalystError);
    CHECK_THROWS_AS(analyst.annotate(sample("i", 3), {"a", "", AttributeKind::Existence}), AnalystError);
  }

  TEST_CASE("parallel annotation, per-item failure and cache reuse") {
    // Items whose title ends in 7 never get a usable answer.
    MockServer server([](const json& request, const httplib::Request&) {
      const auto user = user_message(request);
      if (user.find("title i7\n") != std::string::npos) return std::pair{200, std::string("cannot tell")};
      const bool even = user.find("title i0\n") != std::string::npos || user.find("title i2\n") != std::string::npos;
      return std::pair{200, std::string(even ? R"({"present": true})" : R"({"present": false})")};
    });
    const auto dir = scratch_dir("remote_cache");
    auto options = options_for(server.url());
    options.max_retries = 1;
    options.max_in_flight = 4;
    options.cache_path = dir / "annotations.jsonl";
    const AttributeSpec attribute{"rgb_lighting", "mentions RGB lighting", AttributeKind::Existence};
    const auto items = sample("i", 10);

    RemoteAnalyst first(options);
    const auto out = first.annotate(items, attribute);
    REQUIRE(out.size() == 10);
    for (std::size_t i = 0; i < 10; ++i) CHECK(out[i].item_id == items[i].item_id);
    CHECK(*out[0].present);
    CHECK_FALSE(*out[1].present);
    CHECK_FALSE(out[7].present.has_value());  // unknown
    CHECK(apply_rule(out[7], SplitProposal{attribute, RuleKind::Existence, {}, Side::High, ""}) == Side::Low);
    const int after_first = server.requests();
    CHECK(after_first == 9 + 2);  // item 7 asked twice

    // A new analyst over the same cache file only asks about the unknown item.
    RemoteAnalyst second(options);
    const auto again = second.annotate(items, attribute);
    CHECK(second.cache_hits() == 9);
    CHECK(server.requests() == after_first + 2);
    for (std::size_t i = 0; i < 10; ++i) CHECK(again[i] == out[i]);
  }

  TEST_CASE("numeric annotation") {
    MockServer server([](const json& request, const httplib::Request&) {
      const auto user = user_message(request);
      return std::pair{200, std::string(user.find("title v0") != std::string::npos ? R"({"value": 1500})"
                                                                                   : R"({"value": null})")};
    });
    RemoteAnalyst analyst(options_for(server.url()));
    const auto out = analyst.annotate(sample("v", 2), {"market_value", "", AttributeKind::Numeric});
    CHECK(*out[0].value == 1500.0);
    CHECK_FALSE(out[1].value.has_value());
  }

  TEST_CASE("rate limiter spaces requests") {
    RateLimiter limiter(20.0, 1.0);
    const auto start = std::chrono::steady_clock::now();
    for (int i = 0; i < 6; ++i) limiter.acquire();
    const double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    CHECK(elapsed >= 0.2);  // five waits of 50 ms after the first token
    CHECK(elapsed < 2.0);
  }

  TEST_CASE("base url without a scheme is rejected") {
    CHECK_THROWS_AS(RemoteAnalyst(options_for("localhost/v1")), AnalystError);
  }
}
