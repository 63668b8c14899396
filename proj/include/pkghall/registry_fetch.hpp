#pragma once

#include <filesystem>
#include <string>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "pkghall/ecosystem.hpp"
#include "pkghall/error.hpp"
#include "pkghall/retry.hpp"
#include "pkghall/registry.hpp"
#include "pkghall/sha256.hpp"
#include "pkghall/util.hpp"
#include "pkghall/version.hpp"

namespace pkghall {

struct FetchResult {
    std::filesystem::path path;
    size_t bytes = 0;
    std::string digest;
    int attempts = 1; // total tries including the successful one
};

// Downloads a registry index (e.g. the PyPI simple index) verbatim to disk
// and records fetch metadata alongside. Connection failures, 5xx and 429
// are retried per policy; other non-2xx statuses fail immediately.
inline FetchResult fetch_snapshot(const std::string& url, Ecosystem eco,
                                  const std::filesystem::path& out_path,
                                  const RetryPolicy& retry = {}) {
    ParsedUrl parsed = parse_url(url);
    std::string target = parsed.path.empty() ? "/" : parsed.path;

    int attempts = 0;
    std::string last_error;
    for (int attempt = 0; attempt <= retry.max_retries; ++attempt) {
        if (attempt > 0) retry.sleep_before_retry(attempt - 1);
        ++attempts;

        httplib::Client client(scheme_host(parsed));
        client.set_connection_timeout(30);
        client.set_read_timeout(300);
        auto res = client.Get(target);
        if (!res) {
            last_error = "connection failed: " + httplib::to_string(res.error());
            continue;
        }
        if (res->status == 429 || res->status >= 500) {
            last_error = "http status " + std::to_string(res->status);
            continue;
        }
        if (res->status < 200 || res->status >= 300)
            throw Error(Errc::http_status_error,
                        "GET " + url + " returned " + std::to_string(res->status));

        write_file_atomic(out_path, res->body);
        FetchResult result;
        result.path = out_path;
        result.bytes = res->body.size();
        result.digest = "sha256:" + sha256_hex(res->body);
        result.attempts = attempts;

        nlohmann::json meta = {
            {"version", schema_version},
            {"url", url},
            {"ecosystem", ecosystem_name(eco)},
            {"fetched_at", now_iso8601_utc()},
            {"bytes", result.bytes},
            {"digest", result.digest},
            {"attempts", attempts},
        };
        std::filesystem::path meta_path = out_path;
        meta_path += ".fetch.json";
        write_file_atomic(meta_path, meta.dump(2) + "\n");
        return result;
    }
    throw Error(Errc::network_error,
                "GET " + url + " failed after " + std::to_string(attempts) +
                    " attempts: " + last_error);
}

} // namespace pkghall
