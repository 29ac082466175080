#pragma once

// Client side of the scoring wire protocol:
//   POST /score   {"task": str, "texts": [str...]} -> {"model_id": str, "probs": [float...]}
//   GET  /health  -> {"status": "ok", "model_id": str}
// Batches are sent concurrently; the resulting ScoreSet is independent of
// batch size, concurrency and arrival order.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdlib>
#include <functional>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <httplib.h>
#include <json.hpp>

#include "epu/corpus.hpp"
#include "epu/error.hpp"
#include "epu/scores.hpp"

namespace epu {

inline constexpr const char* kScorerEnvVar = "EPU_SCORER_URL";

struct ScoringEndpoint {
    std::string base_url = "http://127.0.0.1:8080";
    std::size_t batch_size = 32;
    std::size_t max_in_flight = 4;
    std::chrono::milliseconds timeout{30'000};
    int retries = 2;

    void validate() const {
        if (batch_size < 1) throw ValidationError("batch_size must be >= 1");
        if (max_in_flight < 1) throw ValidationError("max_in_flight must be >= 1");
        if (retries < 0) throw ValidationError("retry budget must be >= 0");
    }

    /// Endpoint address from the environment, if set.
    static std::optional<std::string> address_from_env() {
        const char* v = std::getenv(kScorerEnvVar);
        if (v && *v) return std::string(v);
        return std::nullopt;
    }
};

/// A failure worth retrying (connection refused, timeout, 5xx).
class TransientError : public IoError {
public:
    using IoError::IoError;
};

/// Sends one `/score` request body and returns the response body. Throws
/// TransientError for retryable failures and ProtocolError for rejections.
using Transport = std::function<std::string(const std::string& request_body)>;

[[nodiscard]] inline Transport http_transport(const ScoringEndpoint& ep) {
    return [ep](const std::string& body) -> std::string {
        httplib::Client cli(ep.base_url);
        const auto secs = std::chrono::duration_cast<std::chrono::seconds>(ep.timeout);
        const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(ep.timeout - secs);
        cli.set_connection_timeout(secs.count(), usecs.count());
        cli.set_read_timeout(secs.count(), usecs.count());
        cli.set_write_timeout(secs.count(), usecs.count());
        auto res = cli.Post("/score", body, "application/json");
        if (!res) throw TransientError("scorer unreachable: " + httplib::to_string(res.error()));
        if (res->status >= 500) throw TransientError("scorer returned HTTP " + std::to_string(res->status));
        if (res->status != 200)
            throw ProtocolError("scorer rejected batch with HTTP " + std::to_string(res->status) + ": " + res->body);
        return res->body;
    };
}

struct HealthStatus {
    std::string status;
    std::string model_id;
};

[[nodiscard]] inline HealthStatus check_health(const ScoringEndpoint& ep) {
    httplib::Client cli(ep.base_url);
    auto res = cli.Get("/health");
    if (!res) throw IoError("scorer unreachable: " + httplib::to_string(res.error()));
    auto j = nlohmann::json::parse(res->body, nullptr, false);
    if (res->status != 200 || j.is_discarded() || !j.is_object() || !j.contains("status") || !j["status"].is_string())
        throw ProtocolError("malformed /health response: " + res->body);
    return {j["status"].get<std::string>(), j.value("model_id", std::string())};
}

struct FetchResult {
    ScoreSet scores;                    // every document that was scored
    std::vector<std::string> unscored;  // ids whose batch exhausted its retries
    std::size_t batches = 0;
    std::size_t retries_used = 0;

    [[nodiscard]] bool complete() const { return unscored.empty(); }
};

namespace detail {

struct BatchOutcome {
    std::optional<std::string> model_id;
    std::vector<double> probs;
    std::optional<std::string> protocol_error;
    bool exhausted = false;
    std::size_t retries = 0;
};

inline std::string echo_batch(std::size_t index, const std::vector<std::string>& ids, const std::string& body) {
    std::string msg = "batch " + std::to_string(index) + " ids [";
    for (std::size_t k = 0; k < ids.size(); ++k) msg += (k ? "," : "") + ids[k];
    msg += "] response: " + (body.size() > 2000 ? body.substr(0, 2000) + "..." : body);
    return msg;
}

} // namespace detail

/// Scores every document through `transport` (defaults to HTTP against `ep`).
/// Texts are title + body. Throws ProtocolError on any contract violation.
[[nodiscard]] inline FetchResult fetch_scores(const ScoringEndpoint& ep, const Corpus& corpus, const std::string& task,
                                              Transport transport = nullptr) {
    ep.validate();
    if (corpus.empty()) throw ValidationError("cannot fetch scores for an empty corpus");
    if (!transport) transport = http_transport(ep);

    const auto& docs = corpus.docs();
    const std::size_t n_batches = (docs.size() + ep.batch_size - 1) / ep.batch_size;
    std::vector<detail::BatchOutcome> outcomes(n_batches);
    std::vector<std::string> bodies(n_batches);
    std::atomic<std::size_t> next{0};

    auto worker = [&] {
        for (std::size_t b; (b = next.fetch_add(1)) < n_batches;) {
            const std::size_t lo = b * ep.batch_size, hi = std::min(docs.size(), lo + ep.batch_size);
            nlohmann::json req;
            req["task"] = task;
            req["texts"] = nlohmann::json::array();
            for (std::size_t i = lo; i < hi; ++i) req["texts"].push_back(docs[i].full_text());
            const std::string body = req.dump();
            auto& out = outcomes[b];
            for (int attempt = 0;; ++attempt) {
                std::string resp;
                try {
                    resp = transport(body);
                } catch (const TransientError&) {
                    if (attempt >= ep.retries) {
                        out.exhausted = true;
                        break;
                    }
                    ++out.retries;
                    continue;
                } catch (const ProtocolError& e) {
                    out.protocol_error = e.what();
                    break;
                }
                bodies[b] = resp;
                auto j = nlohmann::json::parse(resp, nullptr, false);
                if (j.is_discarded() || !j.is_object() || !j.contains("model_id") || !j["model_id"].is_string() ||
                    !j.contains("probs") || !j["probs"].is_array()) {
                    out.protocol_error = "malformed response";
                    break;
                }
                const auto& probs = j["probs"];
                if (probs.size() != hi - lo) {
                    out.protocol_error = "expected " + std::to_string(hi - lo) + " probabilities, got " +
                                         std::to_string(probs.size());
                    break;
                }
                for (const auto& p : probs) {
                    if (!p.is_number() || !(p.get<double>() >= 0.0 && p.get<double>() <= 1.0)) {
                        out.protocol_error = "probability outside [0,1]: " + p.dump();
                        break;
                    }
                    out.probs.push_back(p.get<double>());
                }
                if (!out.protocol_error) out.model_id = j["model_id"].get<std::string>();
                break;
            }
        }
    };
    {
        std::vector<std::jthread> pool;
        const auto n_workers = std::min(ep.max_in_flight, n_batches);
        for (std::size_t t = 0; t < n_workers; ++t) pool.emplace_back(worker);
    }

    FetchResult result;
    result.batches = n_batches;
    std::optional<std::string> model_id;
    std::vector<ScoreSet::Entry> entries;
    for (std::size_t b = 0; b < n_batches; ++b) {
        const std::size_t lo = b * ep.batch_size, hi = std::min(docs.size(), lo + ep.batch_size);
        auto& o = outcomes[b];
        result.retries_used += o.retries;
        std::vector<std::string> ids;
        for (std::size_t i = lo; i < hi; ++i) ids.push_back(docs[i].id);
        if (o.protocol_error)
            throw ProtocolError("protocol violation (" + *o.protocol_error + "): " + detail::echo_batch(b, ids, bodies[b]));
        if (o.exhausted) {
            result.unscored.insert(result.unscored.end(), ids.begin(), ids.end());
            continue;
        }
        if (model_id && *model_id != *o.model_id)
            throw ProtocolError("scorer changed model_id mid-run ('" + *model_id + "' vs '" + *o.model_id + "')");
        model_id = o.model_id;
        for (std::size_t k = 0; k < ids.size(); ++k) entries.emplace_back(std::move(ids[k]), o.probs[k]);
    }
    result.scores = ScoreSet(task, model_id.value_or(""), std::move(entries));
    return result;
}

} // namespace epu
