#include <gtest/gtest.h>

#include <atomic>
#include <cstdlib>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "epu/fetch.hpp"
#include "support.hpp"

using namespace epu;
using testing_support::doc;

namespace {

double stub_prob(const std::string& text) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : text) h = (h ^ c) * 1099511628211ull;
    return static_cast<double>(h >> 11) / static_cast<double>(1ull << 53);
}

std::string stub_response(const std::string& body, const std::string& model = "stub-v1") {
    auto req = nlohmann::json::parse(body);
    nlohmann::json resp;
    resp["model_id"] = model;
    resp["probs"] = nlohmann::json::array();
    for (const auto& t : req["texts"]) resp["probs"].push_back(stub_prob(t.get<std::string>()));
    return resp.dump();
}

/// In-process HTTP scorer speaking the wire protocol.
class StubServer {
public:
    StubServer() {
        svr_.Post("/score", [this](const httplib::Request& req, httplib::Response& res) {
            ++requests;
            if (fail_next > 0) {
                --fail_next;
                res.status = 503;
                return;
            }
            if (reject) {
                res.status = 400;
                res.set_content("bad task", "text/plain");
                return;
            }
            res.set_content(stub_response(req.body), "application/json");
        });
        svr_.Get("/health", [](const httplib::Request&, httplib::Response& res) {
            res.set_content(R"({"status":"ok","model_id":"stub-v1"})", "application/json");
        });
        port_ = svr_.bind_to_any_port("127.0.0.1");
        thread_ = std::thread([this] { svr_.listen_after_bind(); });
        svr_.wait_until_ready();
    }
    ~StubServer() {
        svr_.stop();
        thread_.join();
    }
    std::string url() const { return "http://127.0.0.1:" + std::to_string(port_); }

    std::atomic<int> requests{0};
    std::atomic<int> fail_next{0};
    std::atomic<bool> reject{false};

private:
    httplib::Server svr_;
    int port_ = 0;
    std::thread thread_;
};

Corpus corpus_of(int n) {
    std::vector<Document> docs;
    for (int i = 0; i < n; ++i) {
        auto d = doc("doc" + std::to_string(1000 + i), "o", "2001-01-01", "body text " + std::to_string(i));
        if (i % 3 == 0) d.title = "Title " + std::to_string(i);
        docs.push_back(std::move(d));
    }
    return Corpus(docs);
}

ScoringEndpoint endpoint(std::size_t batch, int retries = 2) {
    ScoringEndpoint ep;
    ep.batch_size = batch;
    ep.retries = retries;
    ep.timeout = std::chrono::milliseconds(5000);
    return ep;
}

} // namespace

TEST(Fetch, HttpRoundTripIndependentOfBatchSize) {
    StubServer server;
    const auto c = corpus_of(100);
    std::optional<ScoreSet> first;
    for (std::size_t b : {1u, 7u, 32u, 64u}) {
        auto ep = endpoint(b);
        ep.base_url = server.url();
        const auto r = fetch_scores(ep, c, "epu");
        ASSERT_TRUE(r.complete());
        EXPECT_EQ(r.scores.size(), 100u);
        EXPECT_EQ(r.scores.model_id(), "stub-v1");
        EXPECT_EQ(r.batches, (100 + b - 1) / b);
        if (!first) first = r.scores;
        else EXPECT_EQ(r.scores, *first);
    }
    for (const auto& d : c.docs()) EXPECT_EQ(first->find(d.id), stub_prob(d.full_text()));
}

TEST(Fetch, HealthCheck) {
    StubServer server;
    auto ep = endpoint(8);
    ep.base_url = server.url();
    const auto h = check_health(ep);
    EXPECT_EQ(h.status, "ok");
    EXPECT_EQ(h.model_id, "stub-v1");
}

TEST(Fetch, ServerErrorsAreRetried) {
    StubServer server;
    server.fail_next = 1;
    auto ep = endpoint(10, 2);
    ep.base_url = server.url();
    ep.max_in_flight = 1;
    const auto r = fetch_scores(ep, corpus_of(30), "epu");
    EXPECT_TRUE(r.complete());
    EXPECT_EQ(r.retries_used, 1u);
    EXPECT_EQ(server.requests.load(), 4);
}

TEST(Fetch, ClientErrorIsProtocolViolation) {
    StubServer server;
    server.reject = true;
    auto ep = endpoint(10);
    ep.base_url = server.url();
    EXPECT_THROW((void)fetch_scores(ep, corpus_of(5), "epu"), ProtocolError);
}

TEST(Fetch, UnreachableScorerLeavesEverythingUnscored) {
    auto ep = endpoint(4, 0);
    ep.base_url = "http://127.0.0.1:1";
    ep.timeout = std::chrono::milliseconds(500);
    const auto r = fetch_scores(ep, corpus_of(10), "epu");
    EXPECT_FALSE(r.complete());
    EXPECT_EQ(r.unscored.size(), 10u);
    EXPECT_EQ(r.scores.size(), 0u);
}

TEST(Fetch, TransientFailureWithinBudgetCompletes) {
    std::atomic<int> calls{0};
    Transport flaky = [&](const std::string& body) {
        if (calls++ == 2) throw TransientError("injected");
        return stub_response(body);
    };
    auto ep = endpoint(7, 2);
    ep.max_in_flight = 1;
    const auto c = corpus_of(50);
    const auto r = fetch_scores(ep, c, "epu", flaky);
    EXPECT_TRUE(r.complete());
    EXPECT_EQ(r.retries_used, 1u);
    EXPECT_EQ(r.scores, fetch_scores(ep, c, "epu", [](const std::string& b) { return stub_response(b); }).scores);
}

TEST(Fetch, ExhaustedRetriesReportUnscoredIds) {
    Transport broken_batch = [](const std::string& body) {
        if (body.find("body text 9\"") != std::string::npos) throw TransientError("always down");
        return stub_response(body);
    };
    auto ep = endpoint(4, 2);
    const auto c = corpus_of(12);
    const auto r = fetch_scores(ep, c, "epu", broken_batch);
    EXPECT_FALSE(r.complete());
    // doc9 sits in batch 2 (ids doc1008..doc1011).
    EXPECT_EQ(r.unscored, (std::vector<std::string>{"doc1008", "doc1009", "doc1010", "doc1011"}));
    EXPECT_EQ(r.scores.size(), 8u);
    EXPECT_EQ(r.retries_used, 2u);
}

TEST(Fetch, LengthMismatchIsFatalAndEchoesBatch) {
    Transport short_reply = [](const std::string& body) {
        auto j = nlohmann::json::parse(stub_response(body));
        j["probs"].erase(j["probs"].size() - 1);
        return j.dump();
    };
    try {
        (void)fetch_scores(endpoint(4), corpus_of(4), "epu", short_reply);
        FAIL();
    } catch (const ProtocolError& e) {
        const std::string msg = e.what();
        EXPECT_NE(msg.find("expected 4 probabilities, got 3"), std::string::npos) << msg;
        EXPECT_NE(msg.find("batch 0"), std::string::npos);
        EXPECT_NE(msg.find("doc1000,doc1001,doc1002,doc1003"), std::string::npos);
    }
}

TEST(Fetch, OutOfRangeProbabilityIsFatal) {
    Transport bad = [](const std::string& body) {
        auto j = nlohmann::json::parse(stub_response(body));
        j["probs"][0] = 1.5;
        return j.dump();
    };
    EXPECT_THROW((void)fetch_scores(endpoint(4), corpus_of(4), "epu", bad), ProtocolError);
    Transport garbage = [](const std::string&) { return std::string("<html>"); };
    EXPECT_THROW((void)fetch_scores(endpoint(4), corpus_of(4), "epu", garbage), ProtocolError);
}

TEST(Fetch, ModelChangeMidRunIsFatal) {
    std::atomic<int> calls{0};
    Transport switching = [&](const std::string& body) {
        return stub_response(body, calls++ == 0 ? "a" : "b");
    };
    auto ep = endpoint(2);
    ep.max_in_flight = 1;
    EXPECT_THROW((void)fetch_scores(ep, corpus_of(6), "epu", switching), ProtocolError);
}

TEST(Fetch, RequestCarriesTaskAndTitleFirstText) {
    std::string seen;
    Transport capture = [&](const std::string& body) {
        seen = body;
        return stub_response(body);
    };
    (void)fetch_scores(endpoint(1), corpus_of(1), "trade", capture);
    auto j = nlohmann::json::parse(seen);
    EXPECT_EQ(j["task"], "trade");
    EXPECT_EQ(j["texts"][0], "Title 0 body text 0");
}

TEST(Fetch, EndpointValidation) {
    auto ep = endpoint(0);
    EXPECT_THROW(ep.validate(), ValidationError);
    ep = endpoint(1, -1);
    EXPECT_THROW(ep.validate(), ValidationError);
    ::setenv(kScorerEnvVar, "http://example.invalid:9", 1);
    EXPECT_EQ(ScoringEndpoint::address_from_env(), "http://example.invalid:9");
    ::unsetenv(kScorerEnvVar);
    EXPECT_FALSE(ScoringEndpoint::address_from_env());
}
