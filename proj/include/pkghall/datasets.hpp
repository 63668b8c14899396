#pragma once

#include <algorithm>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include <nlohmann/json.hpp>

#include "pkghall/csv.hpp"
#include "pkghall/ecosystem.hpp"
#include "pkghall/error.hpp"
#include "pkghall/gateway.hpp"
#include "pkghall/prompts.hpp"
#include "pkghall/sha256.hpp"
#include "pkghall/util.hpp"
#include "pkghall/version.hpp"

namespace pkghall {

enum class PromptSource { stackoverflow, llm_generated };

inline const char* source_name(PromptSource s) {
    return s == PromptSource::stackoverflow ? "stackoverflow" : "llm_generated";
}

inline PromptSource parse_source(std::string_view s) {
    if (s == "stackoverflow") return PromptSource::stackoverflow;
    if (s == "llm_generated") return PromptSource::llm_generated;
    throw Error(Errc::format_error, "unknown prompt source: " + std::string(s));
}

enum class Temporal { recent, all_time };

inline const char* temporal_name(Temporal t) {
    return t == Temporal::recent ? "recent" : "all_time";
}

inline Temporal parse_temporal(std::string_view s) {
    if (s == "recent") return Temporal::recent;
    if (s == "all_time") return Temporal::all_time;
    throw Error(Errc::format_error, "unknown temporal bucket: " + std::string(s));
}

struct PromptRecord {
    std::string prompt_id;
    std::string text;
    Language language = Language::python;
    PromptSource source = PromptSource::stackoverflow;
    Temporal temporal = Temporal::recent;
    std::string origin_ref; // SO tag, or the package the prompt derives from

    bool operator==(const PromptRecord&) const = default;
};

// Stable id derived from content so re-ingesting identical inputs yields
// identical datasets.
inline std::string derive_prompt_id(const PromptRecord& r) {
    std::string basis = std::string(language_name(r.language)) + "\x1f" + source_name(r.source) +
                        "\x1f" + temporal_name(r.temporal) + "\x1f" + r.origin_ref + "\x1f" +
                        r.text;
    return "p" + sha256_hex(basis).substr(0, 12);
}

struct PromptDataset {
    std::vector<PromptRecord> records;

    // counts per language/source/temporal
    std::map<std::string, size_t> manifest() const {
        std::map<std::string, size_t> m;
        for (const auto& r : records)
            ++m[std::string(language_name(r.language)) + "/" + source_name(r.source) + "/" +
                temporal_name(r.temporal)];
        return m;
    }
};

// ------------------------------------------------------------------
// Stack Overflow dump ingestion
// ------------------------------------------------------------------

struct IngestReport {
    size_t rows_total = 0;
    size_t accepted = 0;
    size_t below_threshold = 0;  // tag under the question-count floor
    size_t duplicates = 0;
    std::vector<std::string> rejected_tags;
};

inline constexpr size_t tag_question_floor = 5000;
inline constexpr size_t questions_per_bucket = 20;

namespace detail {

inline Temporal parse_year_bucket(std::string_view v) {
    if (v == "recent" || v == "2023") return Temporal::recent;
    if (v == "all_time" || v == "pre-2023" || v == "pre2023") return Temporal::all_time;
    throw Error(Errc::format_error, "unknown year_bucket: " + std::string(v));
}

} // namespace detail

// Reads a question dump (CSV: tag, question_title, question_body, score,
// year_bucket[, tag_question_count]) and keeps, per tag and bucket, the 20
// highest-scoring questions. Score ties at the boundary resolve by
// lexicographic title so re-runs select identically. Tags whose question
// count sits under the floor are rejected whole.
inline PromptDataset ingest_stackoverflow_dump(const std::filesystem::path& path,
                                               Language language,
                                               IngestReport* report = nullptr) {
    CsvTable table = parse_csv(read_file(path));
    size_t c_tag = table.col("tag");
    size_t c_title = table.col("question_title");
    size_t c_body = table.col("question_body");
    size_t c_score = table.col("score");
    size_t c_bucket = table.col("year_bucket");
    bool has_count = table.has_col("tag_question_count");
    size_t c_count = has_count ? table.col("tag_question_count") : 0;

    IngestReport local;
    IngestReport& rep = report ? *report : local;
    rep.rows_total = table.rows.size();

    struct Row {
        long long score;
        std::string title;
        std::string body;
    };
    std::map<std::pair<std::string, Temporal>, std::vector<Row>> groups;
    std::unordered_set<std::string> rejected;

    for (size_t i = 0; i < table.rows.size(); ++i) {
        const auto& row = table.rows[i];
        const std::string& tag = row[c_tag];
        if (has_count) {
            long long count = 0;
            try {
                count = std::stoll(row[c_count]);
            } catch (...) {
                throw Error(Errc::format_error,
                            "bad tag_question_count at data row " + std::to_string(i + 1));
            }
            if (count < static_cast<long long>(tag_question_floor)) {
                ++rep.below_threshold;
                if (rejected.insert(tag).second) rep.rejected_tags.push_back(tag);
                continue;
            }
        }
        long long score = 0;
        try {
            score = std::stoll(row[c_score]);
        } catch (...) {
            throw Error(Errc::format_error, "bad score at data row " + std::to_string(i + 1));
        }
        Temporal bucket = detail::parse_year_bucket(row[c_bucket]);
        groups[{tag, bucket}].push_back(Row{score, row[c_title], row[c_body]});
    }

    PromptDataset dataset;
    std::unordered_set<std::string> seen_ids;
    for (auto& [key, rows] : groups) {
        std::sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) {
            if (a.score != b.score) return a.score > b.score;
            return a.title < b.title;
        });
        size_t take = std::min(rows.size(), questions_per_bucket);
        for (size_t i = 0; i < take; ++i) {
            PromptRecord rec;
            rec.language = language;
            rec.source = PromptSource::stackoverflow;
            rec.temporal = key.second;
            rec.origin_ref = key.first;
            rec.text = rows[i].body.empty() ? rows[i].title
                                            : rows[i].title + "\n\n" + rows[i].body;
            rec.prompt_id = derive_prompt_id(rec);
            if (!seen_ids.insert(rec.prompt_id).second) {
                ++rep.duplicates;
                continue;
            }
            dataset.records.push_back(std::move(rec));
            ++rep.accepted;
        }
    }
    return dataset;
}

// ------------------------------------------------------------------
// LLM-written prompts from package descriptions
// ------------------------------------------------------------------

struct PackageDescription {
    std::string package;
    std::string description;
};

inline std::vector<PackageDescription> load_descriptions(const std::filesystem::path& path) {
    CsvTable table = parse_csv(read_file(path));
    size_t c_pkg = table.col("package");
    size_t c_desc = table.col("description");
    std::vector<PackageDescription> out;
    out.reserve(table.rows.size());
    for (const auto& row : table.rows) out.push_back({row[c_pkg], row[c_desc]});
    return out;
}

struct PromptGenReport {
    size_t requested = 0;
    size_t accepted = 0;
    size_t empty_description = 0;
    size_t bad_stem = 0;    // response did not open with the required stem
    size_t endpoint_error = 0;
};

// Asks a model to write one prompt per package description. Responses must
// open with "Generate <Language> code that"; everything else is discarded
// and counted, never patched up.
inline PromptDataset build_llm_generated_prompts(const std::vector<PackageDescription>& inputs,
                                                 Gateway& gateway,
                                                 const ProviderEndpoint& endpoint,
                                                 Language language, Temporal temporal,
                                                 PromptGenReport* report = nullptr) {
    PromptGenReport local;
    PromptGenReport& rep = report ? *report : local;
    rep.requested = inputs.size();

    std::string stem = prompts::generated_prompt_stem(language);
    PromptDataset dataset;
    std::unordered_set<std::string> seen_ids;

    for (const auto& input : inputs) {
        if (trim_view(input.description).empty()) {
            ++rep.empty_description;
            continue;
        }
        std::vector<ChatMessage> messages = {
            {"system", prompts::prompt_generation_system(language)},
            {"user", prompts::prompt_generation_user(language, input.description)},
        };
        CompletionResult res;
        try {
            res = gateway.complete(endpoint, messages, GenerationParams::prompt_generation(), 0);
        } catch (const Error&) {
            ++rep.endpoint_error;
            continue;
        }
        std::string text = trim(res.text);
        if (!starts_with(text, stem)) {
            ++rep.bad_stem;
            continue;
        }
        PromptRecord rec;
        rec.language = language;
        rec.source = PromptSource::llm_generated;
        rec.temporal = temporal;
        rec.origin_ref = input.package;
        rec.text = text;
        rec.prompt_id = derive_prompt_id(rec);
        if (!seen_ids.insert(rec.prompt_id).second) continue;
        dataset.records.push_back(std::move(rec));
        ++rep.accepted;
    }
    return dataset;
}

// ------------------------------------------------------------------
// Temporal split
// ------------------------------------------------------------------

// Joins the recent and all-time record lists, dropping from the all-time
// side every record whose origin_ref already appears in the recent side.
// The recent list is never filtered.
inline PromptDataset split_temporal(const std::vector<PromptRecord>& recent,
                                    const std::vector<PromptRecord>& all_time) {
    auto check_uniform = [](const std::vector<PromptRecord>& records, const PromptRecord& ref) {
        for (const auto& r : records) {
            if (r.language != ref.language)
                throw Error(Errc::mixed_language, "records mix languages");
            if (r.source != ref.source)
                throw Error(Errc::mixed_language, "records mix sources");
        }
    };
    if (!recent.empty()) check_uniform(recent, recent.front());
    if (!all_time.empty()) check_uniform(all_time, all_time.front());
    if (!recent.empty() && !all_time.empty()) {
        if (recent.front().language != all_time.front().language)
            throw Error(Errc::mixed_language, "recent and all_time lists differ in language");
        if (recent.front().source != all_time.front().source)
            throw Error(Errc::mixed_language, "recent and all_time lists differ in source");
    }

    std::unordered_set<std::string> recent_refs;
    for (const auto& r : recent) recent_refs.insert(r.origin_ref);

    PromptDataset dataset;
    for (const auto& r : recent) {
        PromptRecord rec = r;
        rec.temporal = Temporal::recent;
        rec.prompt_id = derive_prompt_id(rec);
        dataset.records.push_back(std::move(rec));
    }
    for (const auto& r : all_time) {
        if (recent_refs.count(r.origin_ref)) continue;
        PromptRecord rec = r;
        rec.temporal = Temporal::all_time;
        rec.prompt_id = derive_prompt_id(rec);
        dataset.records.push_back(std::move(rec));
    }
    return dataset;
}

// ------------------------------------------------------------------
// Dataset file round trip
// ------------------------------------------------------------------

inline nlohmann::json prompt_to_json(const PromptRecord& r) {
    return {
        {"prompt_id", r.prompt_id},
        {"text", r.text},
        {"language", language_name(r.language)},
        {"source", source_name(r.source)},
        {"temporal", temporal_name(r.temporal)},
        {"origin_ref", r.origin_ref},
    };
}

inline PromptRecord prompt_from_json(const nlohmann::json& rj) {
    PromptRecord r;
    r.prompt_id = rj.at("prompt_id").get<std::string>();
    r.text = rj.at("text").get<std::string>();
    r.language = parse_language(rj.at("language").get<std::string>());
    r.source = parse_source(rj.at("source").get<std::string>());
    r.temporal = parse_temporal(rj.at("temporal").get<std::string>());
    r.origin_ref = rj.at("origin_ref").get<std::string>();
    return r;
}

inline nlohmann::json dataset_to_json(const PromptDataset& dataset) {
    nlohmann::json records = nlohmann::json::array();
    for (const auto& r : dataset.records) records.push_back(prompt_to_json(r));
    nlohmann::json manifest = nlohmann::json::object();
    for (const auto& [key, count] : dataset.manifest()) manifest[key] = count;
    return {{"version", schema_version}, {"manifest", manifest}, {"records", records}};
}

inline PromptDataset dataset_from_json(const nlohmann::json& j) {
    PromptDataset dataset;
    try {
        for (const auto& rj : j.at("records")) dataset.records.push_back(prompt_from_json(rj));
    } catch (const nlohmann::json::exception& e) {
        throw Error(Errc::format_error, std::string("malformed dataset: ") + e.what());
    }
    return dataset;
}

inline void save_dataset(const PromptDataset& dataset, const std::filesystem::path& path) {
    write_file_atomic(path, dataset_to_json(dataset).dump(2) + "\n");
}

inline PromptDataset load_dataset(const std::filesystem::path& path) {
    try {
        return dataset_from_json(nlohmann::json::parse(read_file(path)));
    } catch (const nlohmann::json::exception& e) {
        throw Error(Errc::format_error, "malformed dataset " + path.string() + ": " + e.what());
    }
}

} // namespace pkghall
