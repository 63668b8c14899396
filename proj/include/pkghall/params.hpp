#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace pkghall {

// Sampling knobs sent with every completion. top_k, min_p and
// repetition_penalty are extension fields: endpoints declare support, and a
// requested-but-unsupported extension is an error rather than a silent drop.
// Neutral values (top_k 0, min_p 0, repetition_penalty 1) mean "not
// requested" and are never sent on the wire.
struct GenerationParams {
    double temperature = 1.0;
    double top_p = 1.0;
    int top_k = 0;
    double min_p = 0.0;
    double repetition_penalty = 1.0;
    int max_tokens = 1024;

    bool operator==(const GenerationParams&) const = default;

    // Profile used for code generation.
    static GenerationParams code_generation() {
        return GenerationParams{0.7, 0.9, 20, 0.0, 1.0, 2048};
    }

    // Profile used for short package-name queries (deterministic-ish, tiny).
    static GenerationParams package_query() {
        return GenerationParams{0.01, 0.9, 20, 0.0, 1.0, 64};
    }

    // Profile used when asking a model to write dataset prompts.
    static GenerationParams prompt_generation() {
        return GenerationParams{0.7, 0.9, 20, 0.0, 1.0, 256};
    }

    bool requests_top_k() const { return top_k > 0; }
    bool requests_min_p() const { return min_p > 0.0; }
    bool requests_repetition_penalty() const { return repetition_penalty != 1.0; }

    nlohmann::json to_json() const {
        return {
            {"temperature", temperature},
            {"top_p", top_p},
            {"top_k", top_k},
            {"min_p", min_p},
            {"repetition_penalty", repetition_penalty},
            {"max_tokens", max_tokens},
        };
    }

    static GenerationParams from_json(const nlohmann::json& j) {
        GenerationParams p;
        p.temperature = j.value("temperature", 1.0);
        p.top_p = j.value("top_p", 1.0);
        p.top_k = j.value("top_k", 0);
        p.min_p = j.value("min_p", 0.0);
        p.repetition_penalty = j.value("repetition_penalty", 1.0);
        p.max_tokens = j.value("max_tokens", 1024);
        return p;
    }
};

} // namespace pkghall
