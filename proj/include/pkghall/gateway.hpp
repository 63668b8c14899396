#pragma once

#include <atomic>
#include <condition_variable>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "pkghall/error.hpp"
#include "pkghall/params.hpp"
#include "pkghall/prompts.hpp"
#include "pkghall/retry.hpp"
#include "pkghall/sha256.hpp"
#include "pkghall/util.hpp"
#include "pkghall/version.hpp"

namespace pkghall {

// A chat-completion endpoint. auth_env names the environment variable that
// holds the bearer token; the token itself never appears in config files,
// transcripts or run records. `supports` lists the extension sampling
// params the endpoint accepts (top_k, min_p, repetition_penalty);
// temperature, top_p and max_tokens are universal.
struct ProviderEndpoint {
    std::string name;
    std::string base_url;
    std::string model_id;
    std::string auth_env;
    std::set<std::string> supports = {"top_k", "min_p", "repetition_penalty"};
    int max_parallel = 4;

    bool supports_param(const std::string& p) const { return supports.count(p) > 0; }

    bool operator==(const ProviderEndpoint&) const = default;
};

enum class GatewayMode { live, record, replay };

inline const char* gateway_mode_name(GatewayMode m) {
    switch (m) {
    case GatewayMode::live: return "live";
    case GatewayMode::record: return "record";
    case GatewayMode::replay: return "replay";
    }
    return "?";
}

inline GatewayMode parse_gateway_mode(std::string_view s) {
    if (s == "live") return GatewayMode::live;
    if (s == "record") return GatewayMode::record;
    if (s == "replay") return GatewayMode::replay;
    throw Error(Errc::config_error, "unknown gateway mode: " + std::string(s));
}

struct CompletionResult {
    std::string text;
    std::string finish_reason;
    double latency_ms = 0.0;
    std::string transcript_key;
    std::string recorded_at; // ISO 8601; replay returns the original stamp
    bool from_cache = false;
};

// ------------------------------------------------------------------
// Transcript store: content-addressed, append-only
// ------------------------------------------------------------------

// The cache key covers everything that could change a response:
// endpoint, model, sampling params, messages, and the caller's trial nonce
// (so deliberate resampling of one prompt yields distinct entries).
inline std::string transcript_key(const ProviderEndpoint& endpoint,
                                  const std::vector<ChatMessage>& messages,
                                  const GenerationParams& params, std::uint64_t trial_nonce) {
    nlohmann::json canon;
    canon["endpoint"] = endpoint.name;
    canon["model"] = endpoint.model_id;
    canon["nonce"] = trial_nonce;
    canon["params"] = params.to_json();
    nlohmann::json msgs = nlohmann::json::array();
    for (const auto& m : messages) msgs.push_back({{"role", m.role}, {"content", m.content}});
    canon["messages"] = msgs;
    return sha256_hex(canon.dump());
}

class TranscriptStore {
public:
    TranscriptStore() = default;
    explicit TranscriptStore(std::filesystem::path dir) : dir_(std::move(dir)) {
        ensure_dir(dir_);
    }

    const std::filesystem::path& dir() const { return dir_; }

    std::optional<nlohmann::json> lookup(const std::string& key) const {
        std::filesystem::path p = path_for(key);
        std::error_code ec;
        if (!std::filesystem::exists(p, ec)) return std::nullopt;
        try {
            return nlohmann::json::parse(read_file(p));
        } catch (const nlohmann::json::exception& e) {
            throw Error(Errc::format_error, "corrupt transcript " + p.string() + ": " + e.what());
        }
    }

    // Append-only: identical keys carry identical request/response content
    // by construction, so last-write-wins is safe under concurrency.
    void put(const nlohmann::json& record) const {
        std::string key = record.at("key").get<std::string>();
        write_file_atomic(path_for(key), record.dump() + "\n");
    }

    size_t count() const {
        size_t n = 0;
        for (const auto& entry : std::filesystem::directory_iterator(dir_))
            if (entry.path().extension() == ".json") ++n;
        return n;
    }

private:
    std::filesystem::path path_for(const std::string& key) const { return dir_ / (key + ".json"); }
    std::filesystem::path dir_;
};

// ------------------------------------------------------------------
// Transports
// ------------------------------------------------------------------

struct TransportResult {
    bool transport_ok = false;
    std::string transport_error;
    int status = 0;
    std::string body;
    std::string retry_after; // seconds, when the server sent one
};

class Transport {
public:
    virtual ~Transport() = default;
    virtual TransportResult post_chat(const ProviderEndpoint& endpoint,
                                      const nlohmann::json& payload) = 0;
};

class HttpTransport : public Transport {
public:
    TransportResult post_chat(const ProviderEndpoint& endpoint,
                              const nlohmann::json& payload) override {
        TransportResult out;
        ParsedUrl parsed = parse_url(endpoint.base_url);
        httplib::Client client(scheme_host(parsed));
        client.set_connection_timeout(30);
        client.set_read_timeout(600);

        httplib::Headers headers;
        if (!endpoint.auth_env.empty()) {
            const char* token = std::getenv(endpoint.auth_env.c_str());
            if (token && *token)
                headers.emplace("Authorization", std::string("Bearer ") + token);
        }
        auto res = client.Post(parsed.path + "/v1/chat/completions", headers, payload.dump(),
                               "application/json");
        if (!res) {
            out.transport_error = httplib::to_string(res.error());
            return out;
        }
        out.transport_ok = true;
        out.status = res->status;
        out.body = res->body;
        if (res->has_header("Retry-After")) out.retry_after = res->get_header_value("Retry-After");
        return out;
    }
};

// In-process transport for tests and scripted stubs: the function receives
// the wire payload and returns the response body JSON.
class FunctionTransport : public Transport {
public:
    using Handler = std::function<nlohmann::json(const ProviderEndpoint&, const nlohmann::json&)>;

    explicit FunctionTransport(Handler handler) : handler_(std::move(handler)) {}

    TransportResult post_chat(const ProviderEndpoint& endpoint,
                              const nlohmann::json& payload) override {
        ++calls;
        TransportResult out;
        out.transport_ok = true;
        out.status = 200;
        out.body = handler_(endpoint, payload).dump();
        return out;
    }

    std::atomic<size_t> calls{0};

private:
    Handler handler_;
};

// Convenience: wraps a plain content function into an OpenAI-shaped body.
inline nlohmann::json chat_response_body(const std::string& content,
                                         const std::string& finish_reason = "stop") {
    return {
        {"id", "stub"},
        {"object", "chat.completion"},
        {"choices",
         {{{"index", 0},
           {"message", {{"role", "assistant"}, {"content", content}}},
           {"finish_reason", finish_reason}}}},
    };
}

// ------------------------------------------------------------------
// Gateway
// ------------------------------------------------------------------

namespace detail {

// Runtime-sized counting semaphore (std::counting_semaphore wants a
// compile-time ceiling).
class BoundedSlots {
public:
    explicit BoundedSlots(int n) : free_(n) {}

    void acquire() {
        std::unique_lock lock(m_);
        cv_.wait(lock, [&] { return free_ > 0; });
        --free_;
    }
    void release() {
        {
            std::lock_guard lock(m_);
            ++free_;
        }
        cv_.notify_one();
    }

private:
    std::mutex m_;
    std::condition_variable cv_;
    int free_;
};

struct SlotGuard {
    BoundedSlots& slots;
    explicit SlotGuard(BoundedSlots& s) : slots(s) { slots.acquire(); }
    ~SlotGuard() { slots.release(); }
};

} // namespace detail

struct BatchItem {
    std::vector<ChatMessage> messages;
    GenerationParams params;
    std::uint64_t trial_nonce = 0;
};

struct BatchResult {
    std::optional<CompletionResult> result;
    std::optional<Errc> error;
    std::string error_message;

    bool ok() const { return result.has_value(); }
};

class Gateway {
public:
    Gateway(GatewayMode mode, TranscriptStore store,
            std::shared_ptr<Transport> transport = nullptr, RetryPolicy retry = {})
        : mode_(mode), store_(std::move(store)), transport_(std::move(transport)),
          retry_(retry) {
        if (mode_ != GatewayMode::replay && !transport_)
            transport_ = std::make_shared<HttpTransport>();
    }

    GatewayMode mode() const { return mode_; }
    const TranscriptStore& store() const { return store_; }

    CompletionResult complete(const ProviderEndpoint& endpoint,
                              const std::vector<ChatMessage>& messages,
                              const GenerationParams& params, std::uint64_t trial_nonce) {
        check_params(endpoint, params);
        std::string key = transcript_key(endpoint, messages, params, trial_nonce);

        if (mode_ == GatewayMode::replay || mode_ == GatewayMode::record) {
            if (auto cached = store_.lookup(key)) return from_transcript(*cached, key);
            if (mode_ == GatewayMode::replay)
                throw Error(Errc::replay_miss, "no transcript for key " + key);
        }

        CompletionResult result = call_live(endpoint, messages, params, key);
        if (mode_ == GatewayMode::record) {
            nlohmann::json record = {
                {"version", schema_version},
                {"key", key},
                {"endpoint", endpoint.name},
                {"model", endpoint.model_id},
                {"trial_nonce", trial_nonce},
                {"request", {{"messages", messages_json(messages)}, {"params", params.to_json()}}},
                {"response", {{"text", result.text}, {"finish_reason", result.finish_reason}}},
                {"latency_ms", result.latency_ms},
                {"recorded_at", result.recorded_at},
            };
            store_.put(record);
        }
        return result;
    }

    // Fan-out with per-endpoint bounded concurrency; results keep input
    // order, failures are per-item.
    std::vector<BatchResult> complete_batch(const ProviderEndpoint& endpoint,
                                            const std::vector<BatchItem>& items) {
        std::vector<BatchResult> results(items.size());
        if (items.empty()) return results;

        int workers = std::min<int>(endpoint.max_parallel, static_cast<int>(items.size()));
        workers = std::max(workers, 1);
        std::atomic<size_t> next{0};

        auto work = [&] {
            for (;;) {
                size_t i = next.fetch_add(1);
                if (i >= items.size()) return;
                try {
                    results[i].result = complete(endpoint, items[i].messages, items[i].params,
                                                 items[i].trial_nonce);
                } catch (const Error& e) {
                    results[i].error = e.code();
                    results[i].error_message = e.what();
                } catch (const std::exception& e) {
                    results[i].error = Errc::network_error;
                    results[i].error_message = e.what();
                }
            }
        };
        std::vector<std::thread> pool;
        pool.reserve(workers);
        for (int w = 0; w < workers; ++w) pool.emplace_back(work);
        for (auto& t : pool) t.join();
        return results;
    }

private:
    static nlohmann::json messages_json(const std::vector<ChatMessage>& messages) {
        nlohmann::json out = nlohmann::json::array();
        for (const auto& m : messages) out.push_back({{"role", m.role}, {"content", m.content}});
        return out;
    }

    static void check_params(const ProviderEndpoint& endpoint, const GenerationParams& p) {
        auto need = [&](const char* cap) {
            if (!endpoint.supports.count(cap))
                throw Error(Errc::unsupported_param,
                            std::string(cap) + " requested but endpoint " + endpoint.name +
                                " does not support it");
        };
        if (p.requests_top_k()) need("top_k");
        if (p.requests_min_p()) need("min_p");
        if (p.requests_repetition_penalty()) need("repetition_penalty");
    }

    static CompletionResult from_transcript(const nlohmann::json& record, const std::string& key) {
        CompletionResult out;
        try {
            out.text = record.at("response").at("text").get<std::string>();
            out.finish_reason = record.at("response").value("finish_reason", "");
            out.latency_ms = record.value("latency_ms", 0.0);
            out.recorded_at = record.value("recorded_at", "");
        } catch (const nlohmann::json::exception& e) {
            throw Error(Errc::format_error, std::string("malformed transcript: ") + e.what());
        }
        out.transcript_key = key;
        out.from_cache = true;
        return out;
    }

    CompletionResult call_live(const ProviderEndpoint& endpoint,
                               const std::vector<ChatMessage>& messages,
                               const GenerationParams& params, const std::string& key) {
        nlohmann::json payload = {
            {"model", endpoint.model_id},
            {"messages", messages_json(messages)},
            {"temperature", params.temperature},
            {"top_p", params.top_p},
            {"max_tokens", params.max_tokens},
        };
        if (params.requests_top_k()) payload["top_k"] = params.top_k;
        if (params.requests_min_p()) payload["min_p"] = params.min_p;
        if (params.requests_repetition_penalty())
            payload["repetition_penalty"] = params.repetition_penalty;

        detail::BoundedSlots& slots = slots_for(endpoint);
        std::string last_error;
        Errc last_errc = Errc::network_error;

        for (int attempt = 0; attempt <= retry_.max_retries; ++attempt) {
            if (attempt > 0) retry_.sleep_before_retry(attempt - 1);

            TransportResult res;
            auto t0 = std::chrono::steady_clock::now();
            {
                detail::SlotGuard guard(slots);
                res = transport_->post_chat(endpoint, payload);
            }
            auto t1 = std::chrono::steady_clock::now();
            double latency =
                std::chrono::duration<double, std::milli>(t1 - t0).count();

            if (!res.transport_ok) {
                last_error = res.transport_error;
                last_errc = Errc::network_error;
                continue;
            }
            if (res.status == 429) {
                last_error = "rate limited";
                last_errc = Errc::rate_limited;
                if (!res.retry_after.empty()) {
                    int secs = std::atoi(res.retry_after.c_str());
                    if (secs > 0 && attempt < retry_.max_retries)
                        std::this_thread::sleep_for(std::chrono::seconds(std::min(secs, 60)));
                }
                continue;
            }
            if (res.status >= 500) {
                last_error = "http status " + std::to_string(res.status);
                last_errc = Errc::http_status_error;
                continue;
            }
            if (res.status < 200 || res.status >= 300)
                throw Error(Errc::http_status_error,
                            endpoint.name + " returned " + std::to_string(res.status));

            CompletionResult out;
            try {
                nlohmann::json body = nlohmann::json::parse(res.body);
                const auto& choice = body.at("choices").at(0);
                out.text = choice.at("message").at("content").get<std::string>();
                out.finish_reason = choice.value("finish_reason", "");
            } catch (const nlohmann::json::exception& e) {
                throw Error(Errc::format_error,
                            "unparseable completion from " + endpoint.name + ": " + e.what());
            }
            out.latency_ms = latency > 0 ? latency : 0.000001;
            out.recorded_at = now_iso8601_utc();
            out.transcript_key = key;
            out.from_cache = false;
            return out;
        }
        throw Error(last_errc, endpoint.name + ": " + last_error + " (after " +
                                   std::to_string(retry_.max_retries + 1) + " attempts)");
    }

    detail::BoundedSlots& slots_for(const ProviderEndpoint& endpoint) {
        std::lock_guard lock(slots_mutex_);
        auto it = slots_.find(endpoint.name);
        if (it == slots_.end()) {
            it = slots_
                     .emplace(endpoint.name, std::make_unique<detail::BoundedSlots>(
                                                 std::max(endpoint.max_parallel, 1)))
                     .first;
        }
        return *it->second;
    }

    GatewayMode mode_;
    TranscriptStore store_;
    std::shared_ptr<Transport> transport_;
    RetryPolicy retry_;
    std::mutex slots_mutex_;
    std::map<std::string, std::unique_ptr<detail::BoundedSlots>> slots_;
};

} // namespace pkghall
