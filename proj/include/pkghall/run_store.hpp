#pragma once

#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <unordered_set>
#include <vector>

#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>

#include <nlohmann/json.hpp>

#include "pkghall/classify.hpp"
#include "pkghall/error.hpp"
#include "pkghall/extraction.hpp"
#include "pkghall/util.hpp"
#include "pkghall/version.hpp"

namespace pkghall {

// Everything about a run except its results: stamped before the first
// record, finalized (status + finish time) when the run ends. Endpoint and
// secrets policy: names only, never tokens.
struct RunManifest {
    std::string run_id;
    int version = schema_version;
    std::string toolkit = toolkit_version;
    std::string mode;
    std::string endpoint;
    std::string model;
    std::string config_digest;
    std::string dataset_digest;
    std::map<std::string, std::string> snapshot_digests;
    std::string started_at;
    std::string finished_at;
    std::string status = "running"; // running | complete | failed

    nlohmann::json to_json() const {
        return {
            {"run_id", run_id},       {"version", version},
            {"toolkit", toolkit},     {"mode", mode},
            {"endpoint", endpoint},   {"model", model},
            {"config_digest", config_digest},
            {"dataset_digest", dataset_digest},
            {"snapshot_digests", snapshot_digests},
            {"started_at", started_at},
            {"finished_at", finished_at},
            {"status", status},
        };
    }

    static RunManifest from_json(const nlohmann::json& j) {
        RunManifest m;
        m.run_id = j.value("run_id", "");
        m.version = j.value("version", schema_version);
        m.toolkit = j.value("toolkit", "");
        m.mode = j.value("mode", "");
        m.endpoint = j.value("endpoint", "");
        m.model = j.value("model", "");
        m.config_digest = j.value("config_digest", "");
        m.dataset_digest = j.value("dataset_digest", "");
        if (j.contains("snapshot_digests"))
            for (auto& [k, v] : j.at("snapshot_digests").items())
                m.snapshot_digests[k] = v.get<std::string>();
        m.started_at = j.value("started_at", "");
        m.finished_at = j.value("finished_at", "");
        m.status = j.value("status", "");
        return m;
    }
};

// ------------------------------------------------------------------
// Row serialization
// ------------------------------------------------------------------

inline nlohmann::json sample_to_json(const CodeSample& s, size_t h2_dropped, size_t h3_dropped) {
    return {
        {"v", schema_version},    {"kind", "sample"},
        {"sample_id", s.sample_id}, {"model", s.model_id},
        {"prompt_id", s.prompt_id}, {"trial", s.trial},
        {"language", language_name(s.language)},
        {"body", s.body},         {"created_at", s.created_at},
        {"h2_dropped", h2_dropped}, {"h3_dropped", h3_dropped},
    };
}

inline CodeSample sample_from_json(const nlohmann::json& j) {
    CodeSample s;
    s.sample_id = j.at("sample_id").get<std::string>();
    s.model_id = j.at("model").get<std::string>();
    s.prompt_id = j.at("prompt_id").get<std::string>();
    s.trial = j.at("trial").get<int>();
    s.language = parse_language(j.at("language").get<std::string>());
    s.body = j.at("body").get<std::string>();
    s.created_at = j.value("created_at", "");
    return s;
}

inline nlohmann::json mention_to_json(const PackageMention& m, const PromptContext& ctx) {
    return {
        {"v", schema_version},   {"kind", "mention"},
        {"sample_id", m.sample_id}, {"model", m.model_id},
        {"trial", m.trial},      {"heuristic", heuristic_name(m.heuristic)},
        {"ecosystem", ecosystem_name(m.name.ecosystem)},
        {"raw", m.name.raw},     {"normalized", m.name.normalized},
        {"raw_span", m.raw_span},
        {"prompt_id", ctx.prompt_id},
        {"language", language_name(ctx.language)},
        {"source", source_name(ctx.source)},
        {"temporal", temporal_name(ctx.temporal)},
    };
}

inline std::pair<PackageMention, PromptContext> mention_from_json(const nlohmann::json& j) {
    PackageMention m;
    m.sample_id = j.at("sample_id").get<std::string>();
    m.model_id = j.at("model").get<std::string>();
    m.trial = j.at("trial").get<int>();
    m.heuristic = parse_heuristic(j.at("heuristic").get<std::string>());
    Ecosystem eco = parse_ecosystem(j.at("ecosystem").get<std::string>());
    m.name = PackageName{j.at("raw").get<std::string>(), j.at("normalized").get<std::string>(),
                         eco};
    m.raw_span = j.value("raw_span", "");
    PromptContext ctx;
    ctx.prompt_id = j.at("prompt_id").get<std::string>();
    ctx.language = parse_language(j.at("language").get<std::string>());
    ctx.source = parse_source(j.at("source").get<std::string>());
    ctx.temporal = parse_temporal(j.at("temporal").get<std::string>());
    return {std::move(m), std::move(ctx)};
}

inline nlohmann::json verdict_to_json(const Verdict& v) {
    return {
        {"v", schema_version},  {"kind", "verdict"},
        {"sample_id", v.sample_id}, {"model", v.model_id},
        {"trial", v.trial},     {"heuristic", heuristic_name(v.heuristic)},
        {"ecosystem", ecosystem_name(v.ecosystem)},
        {"raw", v.raw},         {"normalized", v.normalized},
        {"prompt_id", v.prompt_id},
        {"language", language_name(v.language)},
        {"source", source_name(v.source)},
        {"temporal", temporal_name(v.temporal)},
        {"is_hallucination", v.is_hallucination},
        {"nearest_name", v.nearest_name},
        {"nearest_distance", v.nearest_distance},
        {"cross_ecosystem_hits", v.cross_ecosystem_hits},
        {"was_deleted", v.was_deleted},
    };
}

inline Verdict verdict_from_json(const nlohmann::json& j) {
    Verdict v;
    v.sample_id = j.at("sample_id").get<std::string>();
    v.model_id = j.at("model").get<std::string>();
    v.trial = j.at("trial").get<int>();
    v.heuristic = parse_heuristic(j.at("heuristic").get<std::string>());
    v.ecosystem = parse_ecosystem(j.at("ecosystem").get<std::string>());
    v.raw = j.at("raw").get<std::string>();
    v.normalized = j.at("normalized").get<std::string>();
    v.prompt_id = j.at("prompt_id").get<std::string>();
    v.language = parse_language(j.at("language").get<std::string>());
    v.source = parse_source(j.at("source").get<std::string>());
    v.temporal = parse_temporal(j.at("temporal").get<std::string>());
    v.is_hallucination = j.at("is_hallucination").get<bool>();
    v.nearest_name = j.value("nearest_name", "");
    v.nearest_distance = j.value("nearest_distance", -1);
    if (j.contains("cross_ecosystem_hits"))
        for (const auto& e : j.at("cross_ecosystem_hits"))
            v.cross_ecosystem_hits.push_back(e.get<std::string>());
    v.was_deleted = j.value("was_deleted", false);
    return v;
}

// ------------------------------------------------------------------
// Advisory lock for mutating commands
// ------------------------------------------------------------------

class RunLock {
public:
    explicit RunLock(const std::filesystem::path& run_dir) {
        ensure_dir(run_dir);
        path_ = run_dir / ".lock";
        fd_ = ::open(path_.c_str(), O_CREAT | O_RDWR, 0644);
        if (fd_ < 0) throw Error(Errc::store_error, "cannot open lock file " + path_.string());
        if (::flock(fd_, LOCK_EX | LOCK_NB) != 0) {
            ::close(fd_);
            fd_ = -1;
            throw Error(Errc::store_error,
                        "run directory is locked by another process: " + run_dir.string());
        }
    }
    ~RunLock() {
        if (fd_ >= 0) {
            ::flock(fd_, LOCK_UN);
            ::close(fd_);
        }
    }
    RunLock(const RunLock&) = delete;
    RunLock& operator=(const RunLock&) = delete;

private:
    std::filesystem::path path_;
    int fd_ = -1;
};

// ------------------------------------------------------------------
// The store proper
// ------------------------------------------------------------------

// One directory per run: manifest.json plus append-only JSONL record files
// and a reports/ directory for emitted tables. Records are never rewritten;
// resumption presence-checks sample ids.
class RunStore {
public:
    explicit RunStore(std::filesystem::path dir) : dir_(std::move(dir)) {
        ensure_dir(dir_ / "records");
        ensure_dir(dir_ / "reports");
        // index existing samples for resumability
        std::filesystem::path samples = samples_path();
        if (std::filesystem::exists(samples)) {
            for (const auto& line : split_lines(read_file(samples))) {
                if (trim_view(line).empty()) continue;
                try {
                    sample_ids_.insert(
                        nlohmann::json::parse(line).at("sample_id").get<std::string>());
                } catch (const nlohmann::json::exception& e) {
                    throw Error(Errc::format_error,
                                "corrupt sample record in " + samples.string() + ": " + e.what());
                }
            }
        }
    }

    const std::filesystem::path& dir() const { return dir_; }

    // -------- manifest --------

    void write_manifest(const RunManifest& manifest) {
        write_file_atomic(dir_ / "manifest.json", manifest.to_json().dump(2) + "\n");
    }

    std::optional<RunManifest> read_manifest() const {
        std::filesystem::path p = dir_ / "manifest.json";
        if (!std::filesystem::exists(p)) return std::nullopt;
        try {
            return RunManifest::from_json(nlohmann::json::parse(read_file(p)));
        } catch (const nlohmann::json::exception& e) {
            throw Error(Errc::format_error, "corrupt manifest: " + std::string(e.what()));
        }
    }

    void finalize_manifest(const std::string& status) {
        auto manifest = read_manifest();
        if (!manifest) throw Error(Errc::store_error, "finalize without manifest");
        manifest->status = status;
        manifest->finished_at = now_iso8601_utc();
        write_manifest(*manifest);
    }

    // -------- appends --------

    bool has_sample(const std::string& sample_id) const { return sample_ids_.count(sample_id) > 0; }
    size_t sample_count() const { return sample_ids_.size(); }

    void append_sample(const CodeSample& sample, size_t h2_dropped, size_t h3_dropped) {
        append_line(samples_path(), sample_to_json(sample, h2_dropped, h3_dropped));
        sample_ids_.insert(sample.sample_id);
    }

    void append_mentions(const MentionSet& set, const PromptContext& ctx) {
        for (const auto& m : set.mentions) append_line(mentions_path(), mention_to_json(m, ctx));
    }

    void append_verdict(const Verdict& v) { append_line(verdicts_path(), verdict_to_json(v)); }

    void append_report(const std::string& name, const nlohmann::json& payload) {
        nlohmann::json row = {
            {"v", schema_version}, {"kind", "report"}, {"name", name}, {"payload", payload}};
        append_line(dir_ / "records" / "reports.jsonl", row);
    }

    void append_error(const std::string& sample_id, const std::string& code,
                      const std::string& message) {
        nlohmann::json row = {{"v", schema_version},
                              {"kind", "error"},
                              {"sample_id", sample_id},
                              {"code", code},
                              {"message", message}};
        append_line(dir_ / "records" / "errors.jsonl", row);
    }

    // -------- loads --------

    std::vector<CodeSample> load_samples() const {
        std::vector<CodeSample> out;
        for_each_row(samples_path(), [&](const nlohmann::json& j) {
            out.push_back(sample_from_json(j));
        });
        return out;
    }

    std::vector<std::pair<PackageMention, PromptContext>> load_mentions() const {
        std::vector<std::pair<PackageMention, PromptContext>> out;
        for_each_row(mentions_path(), [&](const nlohmann::json& j) {
            out.push_back(mention_from_json(j));
        });
        return out;
    }

    std::vector<Verdict> load_verdicts() const {
        std::vector<Verdict> out;
        for_each_row(verdicts_path(), [&](const nlohmann::json& j) {
            out.push_back(verdict_from_json(j));
        });
        return out;
    }

    std::vector<nlohmann::json> load_reports(const std::string& name = "") const {
        std::vector<nlohmann::json> out;
        for_each_row(dir_ / "records" / "reports.jsonl", [&](const nlohmann::json& j) {
            if (name.empty() || j.value("name", "") == name) out.push_back(j);
        });
        return out;
    }

    // Reports directory for emitted tables and plot series.
    std::filesystem::path reports_dir() const { return dir_ / "reports"; }

private:
    std::filesystem::path samples_path() const { return dir_ / "records" / "samples.jsonl"; }
    std::filesystem::path mentions_path() const { return dir_ / "records" / "mentions.jsonl"; }
    std::filesystem::path verdicts_path() const { return dir_ / "records" / "verdicts.jsonl"; }

    void append_line(const std::filesystem::path& path, const nlohmann::json& row) {
        std::ofstream out(path, std::ios::binary | std::ios::app);
        if (!out) throw Error(Errc::store_error, "cannot append to " + path.string());
        out << row.dump() << "\n";
        if (!out) throw Error(Errc::store_error, "append failed for " + path.string());
    }

    template <typename Fn>
    void for_each_row(const std::filesystem::path& path, Fn&& fn) const {
        if (!std::filesystem::exists(path)) return;
        for (const auto& line : split_lines(read_file(path))) {
            if (trim_view(line).empty()) continue;
            try {
                fn(nlohmann::json::parse(line));
            } catch (const nlohmann::json::exception& e) {
                throw Error(Errc::format_error,
                            "corrupt record in " + path.string() + ": " + e.what());
            }
        }
    }

    std::filesystem::path dir_;
    std::unordered_set<std::string> sample_ids_;
};

} // namespace pkghall
