#pragma once

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <random>
#include <string>
#include <string_view>
#include <thread>

#include "pkghall/error.hpp"

namespace pkghall {

// Shared by the registry fetcher and the LLM gateway: up to max_retries
// re-attempts after the first try, exponential backoff doubling from
// initial_delay to delay_cap, jittered.
struct RetryPolicy {
    int max_retries = 3;
    std::chrono::milliseconds initial_delay{1000};
    std::chrono::milliseconds delay_cap{30000};
    bool jitter = true;

    std::chrono::milliseconds delay_for_attempt(int attempt) const {
        // attempt 0 = delay before the first retry
        auto d = initial_delay;
        for (int i = 0; i < attempt && d < delay_cap; ++i) d *= 2;
        d = std::min(d, delay_cap);
        if (jitter && d.count() > 0) {
            static thread_local std::mt19937_64 rng{std::random_device{}()};
            std::uniform_int_distribution<std::int64_t> dist(d.count() / 2, d.count());
            d = std::chrono::milliseconds(dist(rng));
        }
        return d;
    }

    void sleep_before_retry(int attempt) const {
        auto d = delay_for_attempt(attempt);
        if (d.count() > 0) std::this_thread::sleep_for(d);
    }

    // Test-friendly variant: retries enabled, no waiting.
    static RetryPolicy immediate(int retries = 3) {
        return RetryPolicy{retries, std::chrono::milliseconds(0), std::chrono::milliseconds(0),
                           false};
    }
};

struct ParsedUrl {
    bool https = false;
    std::string host_port; // "host" or "host:port", as httplib wants it
    std::string path;      // leading path prefix, "" when none
};

inline ParsedUrl parse_url(std::string_view url) {
    ParsedUrl out;
    std::string_view rest = url;
    if (rest.rfind("https://", 0) == 0) {
        out.https = true;
        rest = rest.substr(8);
    } else if (rest.rfind("http://", 0) == 0) {
        rest = rest.substr(7);
    } else {
        throw Error(Errc::config_error, "url must start with http:// or https://: " +
                                            std::string(url));
    }
    size_t slash = rest.find('/');
    out.host_port = std::string(rest.substr(0, slash));
    if (slash != std::string_view::npos) {
        std::string_view path = rest.substr(slash);
        if (path != "/") out.path = std::string(path);
    }
    if (out.host_port.empty())
        throw Error(Errc::config_error, "url has no host: " + std::string(url));
    // trim a trailing slash so joining with absolute paths stays clean
    if (!out.path.empty() && out.path.back() == '/') out.path.pop_back();
    return out;
}

inline std::string scheme_host(const ParsedUrl& u) {
    return (u.https ? std::string("https://") : std::string("http://")) + u.host_port;
}

} // namespace pkghall
