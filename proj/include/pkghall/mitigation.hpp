#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "pkghall/classify.hpp"
#include "pkghall/datasets.hpp"
#include "pkghall/metrics.hpp"
#include "pkghall/registry.hpp"
#include "pkghall/runner.hpp"

namespace pkghall {

// ------------------------------------------------------------------
// Embeddings
// ------------------------------------------------------------------

class Embedder {
public:
    virtual ~Embedder() = default;
    virtual std::vector<double> embed(const std::string& text) const = 0;
    virtual size_t dimension() const = 0;
    virtual std::string name() const = 0;
};

// Deterministic local embedding: hashed term-frequency over lowercase word
// tokens, L2-normalized. No model, no network — identical text always maps
// to the identical vector, which is what replayed retrieval needs.
class LexicalEmbedder : public Embedder {
public:
    explicit LexicalEmbedder(size_t dim = 256) : dim_(dim) {}

    std::vector<double> embed(const std::string& text) const override {
        std::vector<double> v(dim_, 0.0);
        std::string token;
        auto flush = [&] {
            if (!token.empty()) {
                v[fnv1a64(token) % dim_] += 1.0;
                token.clear();
            }
        };
        for (char c : text) {
            if (std::isalnum(static_cast<unsigned char>(c)))
                token += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
            else
                flush();
        }
        flush();
        double norm = 0.0;
        for (double x : v) norm += x * x;
        if (norm > 0.0) {
            norm = std::sqrt(norm);
            for (double& x : v) x /= norm;
        }
        return v;
    }

    size_t dimension() const override { return dim_; }
    std::string name() const override { return "lexical-tf-" + std::to_string(dim_); }

private:
    size_t dim_;
};

inline double cosine_similarity(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size())
        throw Error(Errc::store_error, "embedding dimension mismatch");
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (size_t i = 0; i < a.size(); ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    if (na == 0.0 || nb == 0.0) return 0.0;
    return dot / (std::sqrt(na) * std::sqrt(nb));
}

// ------------------------------------------------------------------
// Knowledge base
// ------------------------------------------------------------------

struct KnowledgeStatement {
    PackageName package;
    std::string text;
    std::vector<double> embedding;
};

struct ScoredStatement {
    const KnowledgeStatement* statement = nullptr;
    double similarity = 0.0;
};

// Immutable after build; retrieval is brute-force cosine over the full
// store, which is exact and plenty fast at the sizes involved. Ties break
// by insertion order so retrieval is a total order.
class RetrievalStore {
public:
    RetrievalStore() = default;
    explicit RetrievalStore(size_t dimension, std::string embedder_name)
        : dimension_(dimension), embedder_name_(std::move(embedder_name)) {}

    size_t dimension() const { return dimension_; }
    const std::string& embedder_name() const { return embedder_name_; }
    size_t size() const { return statements_.size(); }
    bool empty() const { return statements_.empty(); }
    const std::vector<KnowledgeStatement>& statements() const { return statements_; }

    void add(KnowledgeStatement s) {
        if (s.embedding.size() != dimension_)
            throw Error(Errc::store_error, "statement embedding has wrong dimension");
        statements_.push_back(std::move(s));
    }

    std::vector<ScoredStatement> retrieve(const std::vector<double>& query, size_t k) const {
        if (statements_.empty()) throw Error(Errc::empty_store, "retrieval store is empty");
        std::vector<ScoredStatement> scored;
        scored.reserve(statements_.size());
        for (const auto& s : statements_)
            scored.push_back({&s, cosine_similarity(query, s.embedding)});
        // stable: equal similarities keep insertion order
        std::stable_sort(scored.begin(), scored.end(),
                         [](const ScoredStatement& a, const ScoredStatement& b) {
                             return a.similarity > b.similarity;
                         });
        if (scored.size() > k) scored.resize(k);
        return scored;
    }

private:
    size_t dimension_ = 0;
    std::string embedder_name_;
    std::vector<KnowledgeStatement> statements_;
};

inline std::vector<ScoredStatement> retrieve(const RetrievalStore& store, const Embedder& embedder,
                                             const std::string& query, size_t k = 5) {
    return store.retrieve(embedder.embed(query), k);
}

struct KbBuildReport {
    size_t packages_requested = 0;
    size_t packages_skipped = 0; // not in the primary snapshot
    size_t packages_failed = 0;  // endpoint errors, logged and skipped
    size_t statements = 0;
    size_t duplicates_collapsed = 0;
};

// Parse the question-topic list returned by the endpoint: one topic per
// line, bullets and numbering stripped, empties dropped, capped at `limit`.
inline std::vector<std::string> parse_topic_lines(const std::string& text, size_t limit) {
    std::vector<std::string> topics;
    for (const auto& line : split_lines(text)) {
        std::string t = trim(line);
        // strip leading bullet or "1." / "1)" numbering
        if (!t.empty() && (t[0] == '-' || t[0] == '*' || t[0] == '>')) t = trim(t.substr(1));
        size_t i = 0;
        while (i < t.size() && std::isdigit(static_cast<unsigned char>(t[i]))) ++i;
        if (i > 0 && i < t.size() && (t[i] == '.' || t[i] == ')')) t = trim(t.substr(i + 1));
        t = strip_surrounding_quotes(t);
        if (t.empty()) continue;
        topics.push_back(t);
        if (topics.size() >= limit) break;
    }
    return topics;
}

// For each described package that exists in the snapshot, ask the endpoint
// for question topics, render the fixed statement template, embed, and add
// to the store. Exact-duplicate statements collapse; per-package endpoint
// failures are counted and skipped rather than aborting the build.
inline RetrievalStore build_knowledge_base(const std::vector<PackageDescription>& packages,
                                           Gateway& gateway, const ProviderEndpoint& endpoint,
                                           Language language, const RegistrySnapshot& snapshot,
                                           const Embedder& embedder,
                                           size_t questions_per_package = 5,
                                           KbBuildReport* report = nullptr,
                                           const GenerationParams& params =
                                               GenerationParams::prompt_generation()) {
    KbBuildReport local;
    RetrievalStore store(embedder.dimension(), embedder.name());
    std::set<std::string> seen_statements;
    for (const auto& pkg : packages) {
        ++local.packages_requested;
        std::string normalized;
        if (!try_normalize(pkg.package, snapshot.ecosystem, normalized) ||
            !snapshot.contains_normalized(normalized)) {
            ++local.packages_skipped;
            continue;
        }
        PackageName name{pkg.package, normalized, snapshot.ecosystem};
        std::vector<ChatMessage> messages = {
            {"system", prompts::knowledge_question_system(language)},
            {"user", prompts::knowledge_question_user(language, pkg.package, pkg.description)},
        };
        std::string text;
        try {
            text = gateway.complete(endpoint, messages, params, 0).text;
        } catch (const Error&) {
            ++local.packages_failed;
            continue;
        }
        for (const auto& topic : parse_topic_lines(text, questions_per_package)) {
            std::string statement = prompts::knowledge_statement(pkg.package, topic);
            if (!seen_statements.insert(statement).second) {
                ++local.duplicates_collapsed;
                continue;
            }
            store.add({name, statement, embedder.embed(statement)});
            ++local.statements;
        }
    }
    if (report) *report = local;
    return store;
}

// -------- knowledge-base file round trip --------

inline void save_knowledge_base(const RetrievalStore& store, const std::filesystem::path& path) {
    nlohmann::json statements = nlohmann::json::array();
    for (const auto& s : store.statements())
        statements.push_back({{"package", s.package.raw},
                              {"normalized", s.package.normalized},
                              {"ecosystem", ecosystem_name(s.package.ecosystem)},
                              {"text", s.text},
                              {"embedding", s.embedding}});
    nlohmann::json j = {{"version", schema_version},
                        {"dimension", store.dimension()},
                        {"embedder", store.embedder_name()},
                        {"statements", statements}};
    write_file_atomic(path, j.dump() + "\n");
}

inline RetrievalStore load_knowledge_base(const std::filesystem::path& path) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(read_file(path));
    } catch (const nlohmann::json::exception& e) {
        throw Error(Errc::format_error, "bad knowledge base " + path.string() + ": " + e.what());
    }
    try {
        RetrievalStore store(j.at("dimension").get<size_t>(),
                             j.at("embedder").get<std::string>());
        for (const auto& sj : j.at("statements")) {
            KnowledgeStatement s;
            s.package = PackageName{sj.at("package").get<std::string>(),
                                    sj.at("normalized").get<std::string>(),
                                    parse_ecosystem(sj.at("ecosystem").get<std::string>())};
            s.text = sj.at("text").get<std::string>();
            s.embedding = sj.at("embedding").get<std::vector<double>>();
            store.add(std::move(s));
        }
        return store;
    } catch (const nlohmann::json::exception& e) {
        throw Error(Errc::format_error, "bad knowledge base " + path.string() + ": " + e.what());
    }
}

// ------------------------------------------------------------------
// RAG augmentation
// ------------------------------------------------------------------

// k = 0 is the identity: the prompt passes through untouched (and the store
// is never consulted, so an empty store is fine). Otherwise the original
// prompt survives byte-exact as a prefix, followed by the labeled section.
inline std::string rag_augment(const std::string& prompt, const RetrievalStore& store,
                               const Embedder& embedder, size_t k = 5) {
    if (k == 0) return prompt;
    std::vector<ScoredStatement> hits = retrieve(store, embedder, prompt, k);
    std::string out = prompt;
    out += "\n\n";
    out += prompts::rag_section_label;
    for (const auto& hit : hits) {
        out += "\n- ";
        out += hit.statement->text;
    }
    return out;
}

// ------------------------------------------------------------------
// Self-refinement
// ------------------------------------------------------------------

enum class RefinementTermination { clean, max_iterations, errored };

inline const char* termination_name(RefinementTermination t) {
    switch (t) {
    case RefinementTermination::clean: return "clean";
    case RefinementTermination::max_iterations: return "max_iterations";
    case RefinementTermination::errored: return "errored";
    }
    return "?";
}

struct RefinementIteration {
    std::string response;              // generated body this iteration
    MentionSet mentions;               // full three-heuristic extraction
    std::vector<std::string> flagged;  // names the model called invalid here
    std::string instruction;           // regeneration instruction rendered from
                                       // the accumulated excluded set ("" if clean)
};

struct RefinementTrace {
    std::vector<RefinementIteration> iterations;
    std::string final_response;
    MentionSet final_mentions;
    RefinementTermination terminated_by = RefinementTermination::clean;
    std::string error;

    size_t iteration_count() const { return iterations.size(); }
};

inline nlohmann::json trace_to_json(const RefinementTrace& t) {
    nlohmann::json iterations = nlohmann::json::array();
    for (const auto& it : t.iterations)
        iterations.push_back({{"response", it.response},
                              {"flagged", it.flagged},
                              {"instruction", it.instruction},
                              {"mention_count", it.mentions.mentions.size()}});
    return {{"iterations", iterations},
            {"terminated_by", termination_name(t.terminated_by)},
            {"error", t.error}};
}

inline constexpr int refinement_max_iterations = 5;

// Generate, extract, ask the model which extracted names are valid,
// regenerate excluding every name it has flagged so far; stop on a clean
// iteration or at the cap. Names the model flags stay excluded for the
// rest of the trace even if the flag was wrong — the model's own judgment
// is the oracle here. Unparseable validity answers do not flag.
inline RefinementTrace self_refine(const PromptRecord& prompt, Gateway& gateway,
                                   const ProviderEndpoint& endpoint,
                                   const GenerationParams& code_params,
                                   const GenerationParams& query_params, int trial,
                                   int max_iterations = refinement_max_iterations,
                                   const std::string& user_prompt_override = "",
                                   const std::string& sample_tag = "refine") {
    RefinementTrace trace;
    const std::string user_base =
        user_prompt_override.empty() ? prompt.text : user_prompt_override;
    std::string current_user = user_base;

    std::vector<std::string> excluded;          // raw names, first-flagged order
    std::set<std::string> excluded_keys;        // normalized + ecosystem
    std::map<std::string, DetectAnswer> answers; // validity cache within the trace

    for (int iter = 1; iter <= max_iterations; ++iter) {
        PipelineItem item;
        try {
            item = run_pipeline_once(prompt, gateway, endpoint, code_params, query_params, trial,
                                     sample_tag + ":i" + std::to_string(iter), current_user);
        } catch (const Error& e) {
            trace.terminated_by = RefinementTermination::errored;
            trace.error = e.what();
            return trace;
        }

        RefinementIteration record;
        record.response = item.sample.body;
        record.mentions = item.mentions;

        try {
            std::set<std::string> asked_this_iter;
            for (const auto& m : item.mentions.mentions) {
                std::string key =
                    m.name.normalized + "\x1f" + ecosystem_name(m.name.ecosystem);
                if (!asked_this_iter.insert(key).second) continue;
                auto found = answers.find(key);
                DetectAnswer answer;
                if (found != answers.end()) {
                    answer = found->second;
                } else {
                    std::vector<ChatMessage> q = {
                        {"user", prompts::validity_question(prompt.language, m.name.raw)}};
                    answer = parse_validity_answer(
                        gateway.complete(endpoint, q, query_params, trial).text);
                    answers.emplace(key, answer);
                }
                if (answer == DetectAnswer::invalid) {
                    record.flagged.push_back(m.name.raw);
                    if (excluded_keys.insert(key).second) excluded.push_back(m.name.raw);
                }
            }
        } catch (const Error& e) {
            trace.iterations.push_back(std::move(record));
            trace.terminated_by = RefinementTermination::errored;
            trace.error = e.what();
            return trace;
        }

        if (!record.flagged.empty())
            record.instruction = prompts::regeneration_instruction(excluded);

        bool clean = record.flagged.empty();
        trace.iterations.push_back(std::move(record));
        trace.final_response = item.sample.body;
        trace.final_mentions = item.mentions;

        if (clean) {
            trace.terminated_by = RefinementTermination::clean;
            return trace;
        }
        if (iter == max_iterations) {
            trace.terminated_by = RefinementTermination::max_iterations;
            return trace;
        }
        current_user = user_base + "\n\n" + prompts::regeneration_instruction(excluded);
    }
    return trace; // unreachable for max_iterations >= 1
}

// ------------------------------------------------------------------
// Ensemble: RAG first, then refinement over the augmented prompt
// ------------------------------------------------------------------

inline RefinementTrace ensemble(const PromptRecord& prompt, const RetrievalStore& store,
                                const Embedder& embedder, size_t k, Gateway& gateway,
                                const ProviderEndpoint& endpoint,
                                const GenerationParams& code_params,
                                const GenerationParams& query_params, int trial,
                                int max_iterations = refinement_max_iterations,
                                const std::string& sample_tag = "ensemble") {
    std::string augmented = rag_augment(prompt.text, store, embedder, k);
    return self_refine(prompt, gateway, endpoint, code_params, query_params, trial,
                       max_iterations, augmented, sample_tag);
}

// ------------------------------------------------------------------
// Policy evaluation
// ------------------------------------------------------------------

enum class MitigationPolicy { baseline, rag, self_refine, ensemble };

inline const char* policy_name(MitigationPolicy p) {
    switch (p) {
    case MitigationPolicy::baseline: return "baseline";
    case MitigationPolicy::rag: return "rag";
    case MitigationPolicy::self_refine: return "self_refine";
    case MitigationPolicy::ensemble: return "ensemble";
    }
    return "?";
}

inline MitigationPolicy parse_policy(const std::string& s) {
    if (s == "baseline") return MitigationPolicy::baseline;
    if (s == "rag") return MitigationPolicy::rag;
    if (s == "self_refine") return MitigationPolicy::self_refine;
    if (s == "ensemble") return MitigationPolicy::ensemble;
    throw Error(Errc::usage_error, "unknown mitigation policy: " + s);
}

struct PolicySpec {
    MitigationPolicy policy = MitigationPolicy::baseline;
    size_t k = 5;                                  // RAG retrieval depth
    int max_iterations = refinement_max_iterations; // refinement cap
};

struct PolicyEvaluation {
    MitigationPolicy policy = MitigationPolicy::baseline;
    RateReport report;
    size_t failures = 0; // errored items, excluded from the rate
    std::vector<Verdict> verdicts;
};

struct MitigationEvaluation {
    std::vector<PolicyEvaluation> policies;
    bool fairness_ok = true; // every policy consumed identical (prompt, nonce) pairs
};

// Run every policy over the same slice with the same trial nonces, classify
// the final mention set of each item, and report one rate per policy. The
// fairness audit asserts that no policy saw different work.
inline MitigationEvaluation evaluate_mitigation(const PromptDataset& slice, Gateway& gateway,
                                                const ProviderEndpoint& endpoint,
                                                const GenerationParams& code_params,
                                                const GenerationParams& query_params,
                                                const RetrievalStore* store,
                                                const Embedder& embedder,
                                                const std::vector<PolicySpec>& policies,
                                                int trials, const Classifier& classifier,
                                                RunStore* run_store = nullptr) {
    MitigationEvaluation evaluation;
    std::vector<std::vector<std::pair<std::string, int>>> consumed(policies.size());

    for (size_t pi = 0; pi < policies.size(); ++pi) {
        const PolicySpec& spec = policies[pi];
        if ((spec.policy == MitigationPolicy::rag || spec.policy == MitigationPolicy::ensemble) &&
            spec.k > 0 && (!store || store->empty()))
            throw Error(Errc::config_error,
                        std::string(policy_name(spec.policy)) +
                            " policy needs a non-empty knowledge base when k > 0");

        PolicyEvaluation pe;
        pe.policy = spec.policy;
        std::string tag = std::string("policy=") + policy_name(spec.policy);

        for (const auto& prompt : slice.records) {
            for (int trial = 0; trial < trials; ++trial) {
                consumed[pi].push_back({prompt.prompt_id, trial});
                std::optional<PipelineItem> final_item;
                std::optional<RefinementTrace> trace;
                try {
                    switch (spec.policy) {
                    case MitigationPolicy::baseline:
                        final_item = run_pipeline_once(prompt, gateway, endpoint, code_params,
                                                       query_params, trial, tag);
                        break;
                    case MitigationPolicy::rag: {
                        std::string augmented =
                            spec.k == 0 ? prompt.text
                                        : rag_augment(prompt.text, *store, embedder, spec.k);
                        final_item = run_pipeline_once(prompt, gateway, endpoint, code_params,
                                                       query_params, trial, tag, augmented);
                        break;
                    }
                    case MitigationPolicy::self_refine:
                        trace = self_refine(prompt, gateway, endpoint, code_params, query_params,
                                            trial, spec.max_iterations, "", tag);
                        break;
                    case MitigationPolicy::ensemble: {
                        std::string augmented =
                            spec.k == 0 ? prompt.text
                                        : rag_augment(prompt.text, *store, embedder, spec.k);
                        trace = self_refine(prompt, gateway, endpoint, code_params, query_params,
                                            trial, spec.max_iterations, augmented, tag);
                        break;
                    }
                    }
                } catch (const Error& e) {
                    ++pe.failures;
                    if (run_store)
                        run_store->append_error(
                            make_sample_id(prompt.prompt_id, endpoint.model_id, trial, tag),
                            errc_name(e.code()), e.what());
                    continue;
                }

                const MentionSet* mentions = nullptr;
                if (final_item) {
                    mentions = &final_item->mentions;
                } else if (trace) {
                    if (trace->terminated_by == RefinementTermination::errored) {
                        ++pe.failures;
                        if (run_store) {
                            run_store->append_error(
                                make_sample_id(prompt.prompt_id, endpoint.model_id, trial, tag),
                                "refinement_errored", trace->error);
                            run_store->append_report("refinement_trace", trace_to_json(*trace));
                        }
                        continue;
                    }
                    mentions = &trace->final_mentions;
                    if (run_store) run_store->append_report("refinement_trace",
                                                            trace_to_json(*trace));
                }
                if (!mentions) continue;

                PromptContext ctx = PromptContext::from(prompt);
                if (run_store && final_item) {
                    run_store->append_sample(final_item->sample, final_item->h2_dropped,
                                             final_item->h3_dropped);
                    run_store->append_mentions(final_item->mentions, ctx);
                }
                for (const auto& m : mentions->mentions) {
                    Verdict v = classifier.classify_one(m, ctx);
                    if (run_store) run_store->append_verdict(v);
                    pe.verdicts.push_back(std::move(v));
                }
            }
        }

        pe.report = hallucination_rate(pe.verdicts, RateScope{});
        pe.report.scope_label = tag;
        if (run_store) {
            nlohmann::json payload = {{"policy", policy_name(spec.policy)},
                                      {"hallucinated", pe.report.hallucinated},
                                      {"total", pe.report.total},
                                      {"failures", pe.failures}};
            if (auto pct = pe.report.rate_percent()) payload["rate_percent"] = *pct;
            run_store->append_report("mitigation", payload);
        }
        evaluation.policies.push_back(std::move(pe));
    }

    for (size_t pi = 1; pi < consumed.size(); ++pi)
        if (consumed[pi] != consumed[0]) evaluation.fairness_ok = false;
    return evaluation;
}

} // namespace pkghall
