#pragma once

#include <optional>
#include <string>
#include <vector>

#include "pkghall/classify.hpp"
#include "pkghall/datasets.hpp"
#include "pkghall/extraction.hpp"
#include "pkghall/gateway.hpp"
#include "pkghall/metrics.hpp"
#include "pkghall/prompts.hpp"
#include "pkghall/run_store.hpp"

namespace pkghall {

inline std::string make_sample_id(const std::string& prompt_id, const std::string& model_id,
                                  int trial, const std::string& tag = "") {
    std::string id = prompt_id + ":" + model_id + ":" + std::to_string(trial);
    if (!tag.empty()) id += ":" + tag;
    return id;
}

// One full pipeline pass for a single (prompt, trial): generate the code
// sample, then run all three extraction heuristics against it. The trial
// index doubles as the transcript nonce so repeated trials of the same
// prompt produce distinct transcripts while reruns of the same trial replay.
struct PipelineItem {
    CodeSample sample;
    MentionSet mentions;
    size_t h2_dropped = 0;
    size_t h3_dropped = 0;
};

inline PipelineItem run_pipeline_once(const PromptRecord& prompt, Gateway& gateway,
                                      const ProviderEndpoint& endpoint,
                                      const GenerationParams& code_params,
                                      const GenerationParams& query_params, int trial,
                                      const std::string& sample_tag = "",
                                      const std::string& user_prompt_override = "") {
    const std::string& user_prompt =
        user_prompt_override.empty() ? prompt.text : user_prompt_override;

    std::vector<ChatMessage> gen_messages = {
        {"system", prompts::code_generation_system(prompt.language)},
        {"user", user_prompt},
    };
    CompletionResult gen = gateway.complete(endpoint, gen_messages, code_params, trial);

    PipelineItem item;
    item.sample.sample_id = make_sample_id(prompt.prompt_id, endpoint.model_id, trial, sample_tag);
    item.sample.model_id = endpoint.model_id;
    item.sample.prompt_id = prompt.prompt_id;
    item.sample.trial = trial;
    item.sample.language = prompt.language;
    item.sample.body = gen.text;
    item.sample.created_at = gen.recorded_at;

    Ecosystem eco = primary_ecosystem(prompt.language);

    std::vector<PackageMention> h1 = extract_install_commands(item.sample);

    ChatRequest h2_req = build_package_query_from_code(item.sample);
    CompletionResult h2_res = gateway.complete(endpoint, h2_req.messages, query_params, trial);
    ParsedPackageList h2_list = parse_package_list_response(h2_res.text, eco);
    std::vector<PackageMention> h2 =
        mentions_from_names(h2_list.names, Heuristic::h2, item.sample);

    ChatRequest h3_req = build_package_query_from_prompt(prompt.language, user_prompt);
    CompletionResult h3_res = gateway.complete(endpoint, h3_req.messages, query_params, trial);
    ParsedPackageList h3_list = parse_package_list_response(h3_res.text, eco);
    std::vector<PackageMention> h3 =
        mentions_from_names(h3_list.names, Heuristic::h3, item.sample);

    item.mentions = merge_mentions(item.sample, h1, h2, h3);
    item.h2_dropped = h2_list.dropped;
    item.h3_dropped = h3_list.dropped;
    return item;
}

// ------------------------------------------------------------------
// Bulk generation over a dataset
// ------------------------------------------------------------------

struct GenerationOutcome {
    size_t generated = 0; // fresh samples persisted this invocation
    size_t skipped = 0;   // already present in the store (resume)
    size_t failed = 0;    // items that raised and were recorded as errors
};

// Resumable: items whose sample id is already in the store are skipped, so
// an interrupted run picks up where it stopped. Item failures are recorded
// and do not abort the run.
inline GenerationOutcome run_generation(const PromptDataset& dataset, Gateway& gateway,
                                        const ProviderEndpoint& endpoint,
                                        const GenerationParams& code_params,
                                        const GenerationParams& query_params, int trials,
                                        RunStore& store) {
    GenerationOutcome outcome;
    for (const auto& prompt : dataset.records) {
        for (int trial = 0; trial < trials; ++trial) {
            std::string sample_id = make_sample_id(prompt.prompt_id, endpoint.model_id, trial);
            if (store.has_sample(sample_id)) {
                ++outcome.skipped;
                continue;
            }
            try {
                PipelineItem item = run_pipeline_once(prompt, gateway, endpoint, code_params,
                                                      query_params, trial);
                store.append_sample(item.sample, item.h2_dropped, item.h3_dropped);
                store.append_mentions(item.mentions, PromptContext::from(prompt));
                ++outcome.generated;
            } catch (const Error& e) {
                // transient endpoint trouble is tallied and skipped so long
                // runs survive; a replay miss is a broken fixture and fatal
                if (e.code() == Errc::replay_miss) {
                    store.append_error(sample_id, errc_name(e.code()), e.what());
                    throw;
                }
                store.append_error(sample_id, errc_name(e.code()), e.what());
                ++outcome.failed;
            }
        }
    }
    return outcome;
}

// Classify every stored mention against the given snapshots and persist the
// verdicts. Returns the number of verdicts written.
inline size_t run_classification(RunStore& store, const Classifier& classifier) {
    size_t written = 0;
    for (const auto& [mention, ctx] : store.load_mentions()) {
        store.append_verdict(classifier.classify_one(mention, ctx));
        ++written;
    }
    return written;
}

// ------------------------------------------------------------------
// Persistence experiment: regenerate T times, count recurrences
// ------------------------------------------------------------------

struct PersistenceProbe {
    PromptRecord prompt;    // the prompt that originally elicited the name
    PackageName original;   // the hallucinated name being probed
};

inline nlohmann::json probe_to_json(const PersistenceProbe& p) {
    return {{"prompt", prompt_to_json(p.prompt)},
            {"package", p.original.raw},
            {"ecosystem", ecosystem_name(p.original.ecosystem)}};
}

inline PersistenceProbe probe_from_json(const nlohmann::json& j) {
    PersistenceProbe p;
    p.prompt = prompt_from_json(j.at("prompt"));
    Ecosystem eco = j.contains("ecosystem") ? parse_ecosystem(j.at("ecosystem").get<std::string>())
                                            : primary_ecosystem(p.prompt.language);
    p.original = make_package_name(j.at("package").get<std::string>(), eco);
    return p;
}

inline std::vector<PersistenceProbe> load_probes(const std::filesystem::path& path) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(read_file(path));
    } catch (const nlohmann::json::exception& e) {
        throw Error(Errc::format_error, "bad probe file " + path.string() + ": " + e.what());
    }
    if (!j.is_array()) throw Error(Errc::format_error, "probe file must be a JSON array");
    std::vector<PersistenceProbe> probes;
    for (const auto& item : j) probes.push_back(probe_from_json(item));
    return probes;
}

// For each probe, rerun the full pipeline `trials` times and count in how
// many regenerations the original name appears again (any heuristic). A
// probe whose regeneration fails at any trial is excluded from the
// aggregate and counted as a failure.
inline PersistenceReport persistence_experiment(const std::vector<PersistenceProbe>& probes,
                                                Gateway& gateway,
                                                const ProviderEndpoint& endpoint,
                                                const GenerationParams& code_params,
                                                const GenerationParams& query_params, int trials,
                                                RunStore* store = nullptr) {
    std::vector<int> ks;
    size_t failures = 0;
    for (const auto& probe : probes) {
        int k = 0;
        bool failed = false;
        for (int trial = 0; trial < trials; ++trial) {
            try {
                PipelineItem item = run_pipeline_once(probe.prompt, gateway, endpoint,
                                                      code_params, query_params, trial,
                                                      "persist");
                if (store) {
                    store->append_sample(item.sample, item.h2_dropped, item.h3_dropped);
                    store->append_mentions(item.mentions, PromptContext::from(probe.prompt));
                }
                for (const auto& m : item.mentions.mentions) {
                    if (m.name.ecosystem == probe.original.ecosystem &&
                        m.name.normalized == probe.original.normalized) {
                        ++k;
                        break;
                    }
                }
            } catch (const Error& e) {
                if (store)
                    store->append_error(make_sample_id(probe.prompt.prompt_id, endpoint.model_id,
                                                       trial, "persist"),
                                        errc_name(e.code()), e.what());
                failed = true;
                break;
            }
        }
        if (failed)
            ++failures;
        else
            ks.push_back(k);
    }
    return persistence_from_counts(ks, trials, failures);
}

// ------------------------------------------------------------------
// Self-detection: ask the generating model whether names are valid
// ------------------------------------------------------------------

// Each queried name gets a single-user-message validity question at the
// package-query sampling profile. `hallucinated` names answered "invalid"
// are true positives; `valid` names answered "invalid" are false positives.
inline SelfDetectionReport self_detection_experiment(Gateway& gateway,
                                                     const ProviderEndpoint& endpoint,
                                                     Language language,
                                                     const std::vector<std::string>& hallucinated,
                                                     const std::vector<std::string>& valid,
                                                     const GenerationParams& query_params,
                                                     int nonce = 0) {
    SelfDetectionReport report;
    auto ask = [&](const std::string& name) {
        std::vector<ChatMessage> messages = {
            {"user", prompts::validity_question(language, name)}};
        CompletionResult res = gateway.complete(endpoint, messages, query_params, nonce);
        return parse_validity_answer(res.text);
    };
    for (const auto& name : hallucinated) {
        switch (ask(name)) {
        case DetectAnswer::invalid: ++report.true_positive; break;
        case DetectAnswer::valid: ++report.false_negative; break;
        case DetectAnswer::unparseable: ++report.unparseable; break;
        }
    }
    for (const auto& name : valid) {
        switch (ask(name)) {
        case DetectAnswer::invalid: ++report.false_positive; break;
        case DetectAnswer::valid: ++report.true_negative; break;
        case DetectAnswer::unparseable: ++report.unparseable; break;
        }
    }
    return report;
}

// ------------------------------------------------------------------
// Sampling-parameter sweep
// ------------------------------------------------------------------

enum class SweepAxis { temperature, top_p, top_k, min_p };

inline std::string sweep_axis_name(SweepAxis a) {
    switch (a) {
    case SweepAxis::temperature: return "temperature";
    case SweepAxis::top_p: return "top_p";
    case SweepAxis::top_k: return "top_k";
    case SweepAxis::min_p: return "min_p";
    }
    return "?";
}

inline SweepAxis parse_sweep_axis(const std::string& s) {
    if (s == "temperature") return SweepAxis::temperature;
    if (s == "top_p") return SweepAxis::top_p;
    if (s == "top_k") return SweepAxis::top_k;
    if (s == "min_p") return SweepAxis::min_p;
    throw Error(Errc::usage_error, "unknown sweep axis: " + s);
}

struct SweepPoint {
    double value = 0.0;
    size_t hallucinated = 0;
    size_t total = 0;
    std::optional<double> rate; // percent
};

// Vary one sampling parameter over `values`, holding everything else fixed:
// same prompts, same trial nonces, same extraction and classification. An
// axis the endpoint cannot honor is rejected up front rather than silently
// producing an unswept curve.
inline std::vector<SweepPoint> parameter_sweep(const PromptDataset& dataset, Gateway& gateway,
                                               const ProviderEndpoint& endpoint,
                                               const GenerationParams& base_code_params,
                                               const GenerationParams& query_params,
                                               SweepAxis axis, const std::vector<double>& values,
                                               int trials, const Classifier& classifier,
                                               RunStore* store = nullptr) {
    if (axis == SweepAxis::top_k && !endpoint.supports_param("top_k"))
        throw Error(Errc::unsupported_param,
                    "endpoint " + endpoint.name + " does not support top_k");
    if (axis == SweepAxis::min_p && !endpoint.supports_param("min_p"))
        throw Error(Errc::unsupported_param,
                    "endpoint " + endpoint.name + " does not support min_p");

    std::vector<SweepPoint> points;
    for (double value : values) {
        GenerationParams params = base_code_params;
        switch (axis) {
        case SweepAxis::temperature: params.temperature = value; break;
        case SweepAxis::top_p: params.top_p = value; break;
        case SweepAxis::top_k: params.top_k = static_cast<int>(value); break;
        case SweepAxis::min_p: params.min_p = value; break;
        }
        std::string tag = sweep_axis_name(axis) + "=" + format_fixed(value, 3);

        SweepPoint point;
        point.value = value;
        for (const auto& prompt : dataset.records) {
            for (int trial = 0; trial < trials; ++trial) {
                PipelineItem item = run_pipeline_once(prompt, gateway, endpoint, params,
                                                      query_params, trial, tag);
                if (store) {
                    store->append_sample(item.sample, item.h2_dropped, item.h3_dropped);
                    store->append_mentions(item.mentions, PromptContext::from(prompt));
                }
                PromptContext ctx = PromptContext::from(prompt);
                for (const auto& m : item.mentions.mentions) {
                    Verdict v = classifier.classify_one(m, ctx);
                    if (store) store->append_verdict(v);
                    ++point.total;
                    if (v.is_hallucination) ++point.hallucinated;
                }
            }
        }
        if (point.total > 0)
            point.rate = 100.0 * static_cast<double>(point.hallucinated) /
                         static_cast<double>(point.total);
        points.push_back(point);
    }
    return points;
}

} // namespace pkghall
