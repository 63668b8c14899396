#pragma once

// Shared helpers for the test suite: a temp-dir RAII guard and a scripted
// localhost chat-completions server.

#include <atomic>
#include <filesystem>
#include <functional>
#include <mutex>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "pkghall/gateway.hpp"
#include "pkghall/util.hpp"

namespace testsupport {

class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        static std::atomic<unsigned> counter{0};
        path_ = std::filesystem::temp_directory_path() /
                ("pkghall_test_" + tag + "_" + std::to_string(::getpid()) + "_" +
                 std::to_string(counter++));
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& sub) const { return path_ / sub; }

private:
    std::filesystem::path path_;
};

// A scripted chat-completions endpoint on localhost. The script function
// maps the request payload to (status, body). Tracks request count and the
// high-water mark of in-flight requests for concurrency assertions.
class StubServer {
public:
    using Script = std::function<std::pair<int, std::string>(const nlohmann::json& payload,
                                                             const httplib::Request& req)>;

    explicit StubServer(Script script) : script_(std::move(script)) {
        server_.Post("/v1/chat/completions", [this](const httplib::Request& req,
                                                    httplib::Response& res) {
            int now = ++in_flight_;
            {
                std::lock_guard<std::mutex> lock(mutex_);
                if (now > high_water_) high_water_ = now;
            }
            ++requests_;
            nlohmann::json payload = nlohmann::json::parse(req.body, nullptr, false);
            auto [status, body] = script_(payload, req);
            res.status = status;
            if (status == 429 && !retry_after_.empty())
                res.set_header("Retry-After", retry_after_);
            res.set_content(body, "application/json");
            --in_flight_;
        });
        port_ = server_.bind_to_any_port("127.0.0.1");
        thread_ = std::thread([this] { server_.listen_after_bind(); });
        server_.wait_until_ready();
    }

    ~StubServer() {
        server_.stop();
        if (thread_.joinable()) thread_.join();
    }

    int port() const { return port_; }
    std::string base_url() const { return "http://127.0.0.1:" + std::to_string(port_); }
    size_t requests() const { return requests_.load(); }
    int high_water() const {
        std::lock_guard<std::mutex> lock(mutex_);
        return high_water_;
    }
    void set_retry_after(std::string v) { retry_after_ = std::move(v); }

private:
    Script script_;
    httplib::Server server_;
    std::thread thread_;
    int port_ = 0;
    std::atomic<size_t> requests_{0};
    std::atomic<int> in_flight_{0};
    mutable std::mutex mutex_;
    int high_water_ = 0;
    std::string retry_after_;
};

inline std::string ok_chat_body(const std::string& content) {
    return pkghall::chat_response_body(content, "stop").dump();
}

// ------------------------------------------------------------------
// Install-parser corpus fixture
// ------------------------------------------------------------------

struct CorpusExpect {
    std::string eco;
    std::string name;
    std::string normalized;
    std::string span;     // empty = not asserted
    bool has_span = false;
};

struct CorpusCase {
    std::string name;
    std::string body;
    std::vector<CorpusExpect> expect;
};

inline std::vector<CorpusCase> load_parser_corpus(const std::filesystem::path& path) {
    nlohmann::json doc = nlohmann::json::parse(pkghall::read_file(path));
    std::vector<CorpusCase> cases;
    for (const auto& c : doc.at("cases")) {
        CorpusCase cc;
        cc.name = c.at("name").get<std::string>();
        cc.body = c.at("body").get<std::string>();
        for (const auto& e : c.at("expect")) {
            CorpusExpect ex;
            ex.eco = e.at("eco").get<std::string>();
            ex.name = e.at("name").get<std::string>();
            ex.normalized = e.at("normalized").get<std::string>();
            if (e.contains("span")) {
                ex.span = e.at("span").get<std::string>();
                ex.has_span = true;
            }
            cc.expect.push_back(std::move(ex));
        }
        cases.push_back(std::move(cc));
    }
    return cases;
}

// Where CMake points the suite at shared fixtures; falls back to the
// source-relative path so the binaries also run standalone.
inline std::filesystem::path fixtures_dir() {
    if (const char* env = std::getenv("PKGHALL_FIXTURES")) return env;
    return std::filesystem::path("tests") / "fixtures";
}

} // namespace testsupport
