#pragma once

// Pure report computations over verdict rows. Nothing in here talks to an
// endpoint or a store.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "pkghall/classify.hpp"

namespace pkghall {

inline std::string format_fixed(double value, int decimals) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", decimals, value);
    return buf;
}

// ------------------------------------------------------------------
// Hallucination rate
// ------------------------------------------------------------------

struct RateScope {
    std::optional<std::string> model;
    std::optional<Language> language;
    std::optional<PromptSource> source;
    std::optional<Temporal> temporal;
    std::optional<Heuristic> heuristic;

    bool matches(const Verdict& v) const {
        if (model && v.model_id != *model) return false;
        if (language && v.language != *language) return false;
        if (source && v.source != *source) return false;
        if (temporal && v.temporal != *temporal) return false;
        if (heuristic && v.heuristic != *heuristic) return false;
        return true;
    }

    std::string label() const {
        std::vector<std::string> parts;
        if (model) parts.push_back("model=" + *model);
        if (language) parts.push_back(std::string("language=") + language_name(*language));
        if (source) parts.push_back(std::string("source=") + source_name(*source));
        if (temporal) parts.push_back(std::string("temporal=") + temporal_name(*temporal));
        if (heuristic) parts.push_back(std::string("heuristic=") + heuristic_name(*heuristic));
        return parts.empty() ? "all" : join(parts, ",");
    }
};

// Mention-level rate plus the deduplicated view (unique normalized names),
// since both conventions appear in published counts.
struct RateReport {
    std::string scope_label = "all";
    size_t hallucinated = 0;
    size_t total = 0;
    std::optional<double> rate; // hallucinated / total, absent when total == 0
    size_t unique_hallucinations = 0;
    size_t unique_total = 0;
    std::optional<double> unique_rate;

    std::optional<double> rate_percent() const {
        if (!rate) return std::nullopt;
        return *rate * 100.0;
    }
};

inline RateReport hallucination_rate(const std::vector<Verdict>& verdicts,
                                     const RateScope& scope = {}) {
    RateReport rep;
    rep.scope_label = scope.label();
    std::unordered_set<std::string> unique_all, unique_hall;
    for (const auto& v : verdicts) {
        if (!scope.matches(v)) continue;
        ++rep.total;
        std::string key = std::string(ecosystem_name(v.ecosystem)) + "\x1f" + v.normalized;
        unique_all.insert(key);
        if (v.is_hallucination) {
            ++rep.hallucinated;
            unique_hall.insert(key);
        }
    }
    rep.unique_total = unique_all.size();
    rep.unique_hallucinations = unique_hall.size();
    if (rep.total > 0) rep.rate = static_cast<double>(rep.hallucinated) / rep.total;
    if (rep.unique_total > 0)
        rep.unique_rate = static_cast<double>(rep.unique_hallucinations) / rep.unique_total;
    return rep;
}

// Rate from bare counts; the published-table arithmetic goes through here.
inline RateReport hallucination_rate_from_counts(size_t hallucinated, size_t total) {
    RateReport rep;
    rep.hallucinated = hallucinated;
    rep.total = total;
    if (total > 0) rep.rate = static_cast<double>(hallucinated) / total;
    return rep;
}

// ------------------------------------------------------------------
// Persistence (repeated regeneration)
// ------------------------------------------------------------------

struct PersistenceReport {
    int trials = 10;
    size_t prompts = 0;
    size_t failures = 0;              // prompts excluded for failed regenerations
    std::vector<size_t> histogram;    // histogram[k]: prompts whose name recurred k times
    double fraction_all = 0.0;        // k == trials
    double fraction_none = 0.0;       // k == 0
    double fraction_repeated = 0.0;   // k >= 2
};

inline PersistenceReport persistence_from_counts(const std::vector<int>& recurrence_counts,
                                                 int trials, size_t failures = 0) {
    PersistenceReport rep;
    rep.trials = trials;
    rep.prompts = recurrence_counts.size();
    rep.failures = failures;
    rep.histogram.assign(static_cast<size_t>(trials) + 1, 0);
    for (int k : recurrence_counts) {
        if (k < 0 || k > trials)
            throw Error(Errc::format_error, "recurrence count out of range: " + std::to_string(k));
        ++rep.histogram[static_cast<size_t>(k)];
    }
    if (!recurrence_counts.empty()) {
        double n = static_cast<double>(recurrence_counts.size());
        size_t repeated = 0;
        for (int t = 2; t <= trials; ++t) repeated += rep.histogram[static_cast<size_t>(t)];
        rep.fraction_all = rep.histogram[static_cast<size_t>(trials)] / n;
        rep.fraction_none = rep.histogram[0] / n;
        rep.fraction_repeated = repeated / n;
    }
    return rep;
}

// ------------------------------------------------------------------
// Verbosity vs rate
// ------------------------------------------------------------------

inline std::optional<double> pearson_correlation(const std::vector<double>& xs,
                                                 const std::vector<double>& ys) {
    if (xs.size() != ys.size() || xs.size() < 2) return std::nullopt;
    double n = static_cast<double>(xs.size());
    double mx = 0, my = 0;
    for (size_t i = 0; i < xs.size(); ++i) {
        mx += xs[i];
        my += ys[i];
    }
    mx /= n;
    my /= n;
    double sxy = 0, sxx = 0, syy = 0;
    for (size_t i = 0; i < xs.size(); ++i) {
        sxy += (xs[i] - mx) * (ys[i] - my);
        sxx += (xs[i] - mx) * (xs[i] - mx);
        syy += (ys[i] - my) * (ys[i] - my);
    }
    if (sxx == 0.0 || syy == 0.0) return std::nullopt;
    return sxy / std::sqrt(sxx * syy);
}

struct VerbosityRow {
    std::string model;
    size_t unique_packages = 0;
    double rate = 0.0;
};

struct VerbosityReport {
    std::vector<VerbosityRow> rows; // sorted by model
    std::optional<double> pearson;
};

inline VerbosityReport verbosity_report(const std::vector<Verdict>& verdicts) {
    std::map<std::string, std::unordered_set<std::string>> unique_by_model;
    std::map<std::string, std::pair<size_t, size_t>> counts_by_model; // hallucinated, total
    for (const auto& v : verdicts) {
        unique_by_model[v.model_id].insert(std::string(ecosystem_name(v.ecosystem)) + "\x1f" +
                                           v.normalized);
        auto& [h, t] = counts_by_model[v.model_id];
        ++t;
        if (v.is_hallucination) ++h;
    }
    VerbosityReport rep;
    std::vector<double> xs, ys;
    for (const auto& [model, unique] : unique_by_model) {
        const auto& [h, t] = counts_by_model[model];
        VerbosityRow row{model, unique.size(), t ? static_cast<double>(h) / t : 0.0};
        xs.push_back(static_cast<double>(row.unique_packages));
        ys.push_back(row.rate);
        rep.rows.push_back(std::move(row));
    }
    rep.pearson = pearson_correlation(xs, ys);
    return rep;
}

// ------------------------------------------------------------------
// Self-detection answer parsing and scoring
// ------------------------------------------------------------------

enum class DetectAnswer { valid, invalid, unparseable };

// First-token reading of a yes/no style answer. "Hallucinated" is the
// positive class downstream, so an "invalid" answer on a hallucinated name
// is a true positive.
inline DetectAnswer parse_validity_answer(std::string_view text) {
    size_t b = 0;
    while (b < text.size() && !detail::is_alnum_ascii(text[b])) ++b;
    size_t e = b;
    while (e < text.size() && detail::is_alnum_ascii(text[e])) ++e;
    std::string token = to_lower_ascii(text.substr(b, e - b));
    if (token == "yes" || token == "valid" || token == "true") return DetectAnswer::valid;
    if (token == "no" || token == "invalid" || token == "not" || token == "false")
        return DetectAnswer::invalid;
    return DetectAnswer::unparseable;
}

struct SelfDetectionReport {
    size_t true_positive = 0;  // hallucinated name, answered invalid
    size_t false_positive = 0; // valid name, answered invalid
    size_t true_negative = 0;  // valid name, answered valid
    size_t false_negative = 0; // hallucinated name, answered valid
    size_t unparseable = 0;

    size_t scored() const {
        return true_positive + false_positive + true_negative + false_negative;
    }
    std::optional<double> accuracy() const {
        size_t n = scored();
        if (!n) return std::nullopt;
        return static_cast<double>(true_positive + true_negative) / n;
    }
    std::optional<double> precision_hallucinated() const {
        size_t d = true_positive + false_positive;
        if (!d) return std::nullopt;
        return static_cast<double>(true_positive) / d;
    }
    std::optional<double> recall_hallucinated() const {
        size_t d = true_positive + false_negative;
        if (!d) return std::nullopt;
        return static_cast<double>(true_positive) / d;
    }
    std::optional<double> precision_valid() const {
        size_t d = true_negative + false_negative;
        if (!d) return std::nullopt;
        return static_cast<double>(true_negative) / d;
    }
    std::optional<double> recall_valid() const {
        size_t d = true_negative + false_positive;
        if (!d) return std::nullopt;
        return static_cast<double>(true_negative) / d;
    }
};

// ------------------------------------------------------------------
// Edit-distance histogram over unique hallucinated names
// ------------------------------------------------------------------

struct DistanceHistogram {
    size_t unique_names = 0;
    size_t d1_2 = 0;
    size_t d3_5 = 0;
    size_t d6_9 = 0;
    size_t d10_plus = 0;

    double share(size_t bin_count) const {
        return unique_names ? static_cast<double>(bin_count) / unique_names : 0.0;
    }
};

inline DistanceHistogram distance_histogram(const std::vector<Verdict>& verdicts) {
    DistanceHistogram hist;
    std::unordered_set<std::string> seen;
    for (const auto& v : verdicts) {
        if (!v.is_hallucination || v.nearest_distance < 0) continue;
        std::string key = std::string(ecosystem_name(v.ecosystem)) + "\x1f" + v.normalized;
        if (!seen.insert(key).second) continue;
        ++hist.unique_names;
        int d = v.nearest_distance;
        if (d <= 2) ++hist.d1_2;
        else if (d <= 5) ++hist.d3_5;
        else if (d <= 9) ++hist.d6_9;
        else ++hist.d10_plus;
    }
    return hist;
}

// ------------------------------------------------------------------
// Cross-model overlap
// ------------------------------------------------------------------

struct OverlapReport {
    size_t models = 0;
    // index k (1-based): unique names generated by exactly k models
    std::vector<size_t> hallucinated;
    std::vector<size_t> valid;

    static double single_model_share(const std::vector<size_t>& hist) {
        size_t total = 0;
        for (size_t i = 1; i < hist.size(); ++i) total += hist[i];
        return total ? static_cast<double>(hist.size() > 1 ? hist[1] : 0) / total : 0.0;
    }
};

inline OverlapReport cross_model_overlap(const std::vector<Verdict>& verdicts) {
    std::set<std::string> models;
    struct NameInfo {
        std::set<std::string> models;
        bool hallucinated = false;
    };
    std::unordered_map<std::string, NameInfo> names;
    for (const auto& v : verdicts) {
        models.insert(v.model_id);
        std::string key = std::string(ecosystem_name(v.ecosystem)) + "\x1f" + v.normalized;
        auto& info = names[key];
        info.models.insert(v.model_id);
        info.hallucinated = v.is_hallucination;
    }
    OverlapReport rep;
    rep.models = models.size();
    rep.hallucinated.assign(rep.models + 1, 0);
    rep.valid.assign(rep.models + 1, 0);
    for (const auto& [key, info] : names) {
        size_t k = info.models.size();
        if (info.hallucinated) ++rep.hallucinated[k];
        else ++rep.valid[k];
    }
    return rep;
}

// ------------------------------------------------------------------
// Deleted-package attribution
// ------------------------------------------------------------------

struct DeletedReport {
    size_t hallucinated_unique = 0;
    size_t deleted_hits = 0;
    std::optional<double> share;
};

inline DeletedReport deleted_attribution(const std::vector<Verdict>& verdicts,
                                         const DeletedPackageLedger& ledger) {
    DeletedReport rep;
    std::unordered_set<std::string> seen;
    for (const auto& v : verdicts) {
        if (!v.is_hallucination || v.ecosystem != ledger.ecosystem) continue;
        if (!seen.insert(v.normalized).second) continue;
        ++rep.hallucinated_unique;
        if (ledger.contains_normalized(v.normalized)) ++rep.deleted_hits;
    }
    if (rep.hallucinated_unique)
        rep.share = static_cast<double>(rep.deleted_hits) / rep.hallucinated_unique;
    return rep;
}

// ------------------------------------------------------------------
// Cross-language hits
// ------------------------------------------------------------------

struct CrossLanguageRow {
    Ecosystem ecosystem = Ecosystem::npm;
    size_t hits = 0;
    double share = 0.0; // of unique hallucinated names
};

struct CrossLanguageReport {
    Ecosystem primary = Ecosystem::pypi;
    size_t hallucinated_unique = 0;
    std::vector<CrossLanguageRow> rows; // every non-primary ecosystem, fixed order
};

inline CrossLanguageReport cross_language_report(const std::vector<Verdict>& verdicts,
                                                 Ecosystem primary) {
    CrossLanguageReport rep;
    rep.primary = primary;
    std::unordered_set<std::string> seen;
    std::map<std::string, size_t> hit_counts;
    for (const auto& v : verdicts) {
        if (!v.is_hallucination || v.ecosystem != primary) continue;
        if (!seen.insert(v.normalized).second) continue;
        ++rep.hallucinated_unique;
        for (const auto& eco : v.cross_ecosystem_hits) ++hit_counts[eco];
    }
    for (Ecosystem eco : all_ecosystems) {
        if (eco == primary) continue;
        CrossLanguageRow row;
        row.ecosystem = eco;
        auto it = hit_counts.find(ecosystem_name(eco));
        row.hits = it == hit_counts.end() ? 0 : it->second;
        row.share = rep.hallucinated_unique
                        ? static_cast<double>(row.hits) / rep.hallucinated_unique
                        : 0.0;
        rep.rows.push_back(row);
    }
    return rep;
}

// ------------------------------------------------------------------
// Recency comparison
// ------------------------------------------------------------------

struct RecencyRow {
    std::string model;
    std::optional<double> recent_rate;
    std::optional<double> all_time_rate;
    std::optional<double> delta_pp; // (recent - all_time) * 100
};

inline std::vector<RecencyRow> recency_comparison(const std::vector<Verdict>& verdicts) {
    std::set<std::string> models;
    for (const auto& v : verdicts) models.insert(v.model_id);
    std::vector<RecencyRow> rows;
    for (const auto& model : models) {
        RateScope recent_scope;
        recent_scope.model = model;
        recent_scope.temporal = Temporal::recent;
        RateScope all_scope;
        all_scope.model = model;
        all_scope.temporal = Temporal::all_time;
        RateReport recent = hallucination_rate(verdicts, recent_scope);
        RateReport all_time = hallucination_rate(verdicts, all_scope);
        RecencyRow row;
        row.model = model;
        row.recent_rate = recent.rate;
        row.all_time_rate = all_time.rate;
        if (recent.rate && all_time.rate)
            row.delta_pp = (*recent.rate - *all_time.rate) * 100.0;
        rows.push_back(std::move(row));
    }
    return rows;
}

} // namespace pkghall
