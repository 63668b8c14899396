#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "pkghall/error.hpp"
#include "pkghall/gateway.hpp"
#include "pkghall/params.hpp"
#include "pkghall/sha256.hpp"
#include "pkghall/util.hpp"
#include "pkghall/version.hpp"

namespace pkghall {

struct SnapshotRef {
    std::string ecosystem;
    std::string path;
    std::string as_of;

    bool operator==(const SnapshotRef&) const = default;
};

struct PolicyDef {
    std::string name;
    std::string policy = "baseline"; // baseline | rag | self_refine | ensemble
    size_t k = 5;
    int max_iterations = 5;

    bool operator==(const PolicyDef&) const = default;
};

// The single declarative source of truth for a run. Secrets never live
// here: endpoints carry the *name* of the environment variable that holds
// their token, and validation rejects anything that doesn't look like one.
struct Config {
    int version = schema_version;
    std::string mode = "replay"; // live | record | replay
    std::string transcripts_dir = "transcripts";
    std::string runs_dir = "runs";
    std::string dataset_path;
    std::string knowledge_base_path;
    std::string deleted_ledger_path;
    int trials = 1;
    std::vector<ProviderEndpoint> endpoints;
    std::vector<SnapshotRef> snapshots;
    std::vector<PolicyDef> policies;
    GenerationParams code_params = GenerationParams::code_generation();
    GenerationParams query_params = GenerationParams::package_query();
    GenerationParams prompt_params = GenerationParams::prompt_generation();

    bool operator==(const Config&) const = default;
};

inline bool looks_like_env_name(const std::string& s) {
    if (s.empty()) return true; // unauthenticated endpoint is fine
    if (!(std::isalpha(static_cast<unsigned char>(s[0])) || s[0] == '_')) return false;
    for (char c : s)
        if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_')) return false;
    return true;
}

inline void validate_config(const Config& c) {
    if (c.mode != "live" && c.mode != "record" && c.mode != "replay")
        throw Error(Errc::config_error, "mode must be live, record or replay: " + c.mode);
    if (c.trials < 1) throw Error(Errc::config_error, "trials must be >= 1");
    for (const auto& e : c.endpoints) {
        if (e.name.empty()) throw Error(Errc::config_error, "endpoint with empty name");
        if (e.model_id.empty())
            throw Error(Errc::config_error, "endpoint " + e.name + " has no model");
        if (!looks_like_env_name(e.auth_env))
            throw Error(Errc::config_error,
                        "endpoint " + e.name +
                            ": auth_env must be an environment variable NAME, never a token");
        if (e.max_parallel < 1)
            throw Error(Errc::config_error, "endpoint " + e.name + ": max_parallel must be >= 1");
    }
    for (const auto& s : c.snapshots) {
        try {
            parse_ecosystem(s.ecosystem);
        } catch (const Error&) {
            throw Error(Errc::config_error, "snapshot with unknown ecosystem: " + s.ecosystem);
        }
        if (s.path.empty())
            throw Error(Errc::config_error, "snapshot for " + s.ecosystem + " has no path");
    }
    for (const auto& p : c.policies) {
        if (p.policy != "baseline" && p.policy != "rag" && p.policy != "self_refine" &&
            p.policy != "ensemble")
            throw Error(Errc::config_error, "unknown policy kind: " + p.policy);
        if (p.max_iterations < 1 || p.max_iterations > 5)
            throw Error(Errc::config_error,
                        "policy " + p.name + ": max_iterations must be in [1, 5]");
    }
}

inline nlohmann::json config_to_json(const Config& c) {
    nlohmann::json endpoints = nlohmann::json::array();
    for (const auto& e : c.endpoints) {
        nlohmann::json supports = nlohmann::json::array();
        for (const auto& s : e.supports) supports.push_back(s);
        endpoints.push_back({{"name", e.name},
                             {"base_url", e.base_url},
                             {"model", e.model_id},
                             {"auth_env", e.auth_env},
                             {"supports", supports},
                             {"max_parallel", e.max_parallel}});
    }
    nlohmann::json snapshots = nlohmann::json::array();
    for (const auto& s : c.snapshots)
        snapshots.push_back(
            {{"ecosystem", s.ecosystem}, {"path", s.path}, {"as_of", s.as_of}});
    nlohmann::json policies = nlohmann::json::array();
    for (const auto& p : c.policies)
        policies.push_back({{"name", p.name},
                            {"policy", p.policy},
                            {"k", p.k},
                            {"max_iterations", p.max_iterations}});
    return {{"version", c.version},
            {"mode", c.mode},
            {"transcripts_dir", c.transcripts_dir},
            {"runs_dir", c.runs_dir},
            {"dataset_path", c.dataset_path},
            {"knowledge_base_path", c.knowledge_base_path},
            {"deleted_ledger_path", c.deleted_ledger_path},
            {"trials", c.trials},
            {"endpoints", endpoints},
            {"snapshots", snapshots},
            {"policies", policies},
            {"params",
             {{"code_generation", c.code_params.to_json()},
              {"package_query", c.query_params.to_json()},
              {"prompt_generation", c.prompt_params.to_json()}}}};
}

inline Config config_from_json(const nlohmann::json& j) {
    Config c;
    try {
        c.version = j.value("version", schema_version);
        c.mode = j.value("mode", "replay");
        c.transcripts_dir = j.value("transcripts_dir", "transcripts");
        c.runs_dir = j.value("runs_dir", "runs");
        c.dataset_path = j.value("dataset_path", "");
        c.knowledge_base_path = j.value("knowledge_base_path", "");
        c.deleted_ledger_path = j.value("deleted_ledger_path", "");
        c.trials = j.value("trials", 1);
        if (j.contains("endpoints"))
            for (const auto& ej : j.at("endpoints")) {
                ProviderEndpoint e;
                e.name = ej.value("name", "");
                e.base_url = ej.value("base_url", "");
                e.model_id = ej.value("model", "");
                e.auth_env = ej.value("auth_env", "");
                if (ej.contains("supports")) {
                    e.supports.clear();
                    for (const auto& s : ej.at("supports")) e.supports.insert(s.get<std::string>());
                }
                e.max_parallel = ej.value("max_parallel", 4);
                c.endpoints.push_back(std::move(e));
            }
        if (j.contains("snapshots"))
            for (const auto& sj : j.at("snapshots"))
                c.snapshots.push_back({sj.value("ecosystem", ""), sj.value("path", ""),
                                       sj.value("as_of", "")});
        if (j.contains("policies"))
            for (const auto& pj : j.at("policies"))
                c.policies.push_back({pj.value("name", ""), pj.value("policy", "baseline"),
                                      pj.value("k", size_t{5}), pj.value("max_iterations", 5)});
        if (j.contains("params")) {
            const auto& pj = j.at("params");
            if (pj.contains("code_generation"))
                c.code_params = GenerationParams::from_json(pj.at("code_generation"));
            if (pj.contains("package_query"))
                c.query_params = GenerationParams::from_json(pj.at("package_query"));
            if (pj.contains("prompt_generation"))
                c.prompt_params = GenerationParams::from_json(pj.at("prompt_generation"));
        }
    } catch (const nlohmann::json::exception& e) {
        throw Error(Errc::config_error, std::string("malformed config: ") + e.what());
    }
    validate_config(c);
    return c;
}

inline void save_config(const Config& c, const std::filesystem::path& path) {
    write_file_atomic(path, config_to_json(c).dump(2) + "\n");
}

inline Config load_config(const std::filesystem::path& path) {
    try {
        return config_from_json(nlohmann::json::parse(read_file(path)));
    } catch (const nlohmann::json::exception& e) {
        throw Error(Errc::config_error, "malformed config " + path.string() + ": " + e.what());
    }
}

inline const ProviderEndpoint& find_endpoint(const Config& c, const std::string& name) {
    for (const auto& e : c.endpoints)
        if (e.name == name) return e;
    throw Error(Errc::config_error, "no endpoint named " + name + " in config");
}

inline std::string file_digest(const std::filesystem::path& path) {
    return sha256_hex(read_file(path));
}

} // namespace pkghall
