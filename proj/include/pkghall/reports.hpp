#pragma once

#include <algorithm>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "pkghall/csv.hpp"
#include "pkghall/metrics.hpp"
#include "pkghall/run_store.hpp"
#include "pkghall/runner.hpp"

namespace pkghall {

// Everything emitted here must be byte-deterministic for a given store:
// fixed row orders, fixed number formatting, no timestamps.

inline std::string pct_or_empty(const std::optional<double>& fraction, int decimals = 4) {
    if (!fraction) return "";
    return format_fixed(*fraction * 100.0, decimals);
}

// -------- payload builders for stored report rows --------

inline nlohmann::json persistence_report_json(const PersistenceReport& r) {
    return {{"trials", r.trials},     {"prompts", r.prompts},
            {"failures", r.failures}, {"histogram", r.histogram},
            {"fraction_all", r.fraction_all},
            {"fraction_none", r.fraction_none},
            {"fraction_repeated", r.fraction_repeated}};
}

inline nlohmann::json sweep_report_json(SweepAxis axis, const std::vector<SweepPoint>& points) {
    nlohmann::json pts = nlohmann::json::array();
    for (const auto& p : points) {
        nlohmann::json pj = {{"value", p.value},
                             {"hallucinated", p.hallucinated},
                             {"total", p.total}};
        if (p.rate) pj["rate_percent"] = *p.rate;
        pts.push_back(std::move(pj));
    }
    return {{"axis", sweep_axis_name(axis)}, {"points", pts}};
}

inline nlohmann::json detection_report_json(const SelfDetectionReport& r) {
    return {{"true_positive", r.true_positive},   {"false_positive", r.false_positive},
            {"true_negative", r.true_negative},   {"false_negative", r.false_negative},
            {"unparseable", r.unparseable}};
}

// -------- emission --------

namespace detail {

inline void rate_table_rows(std::vector<std::vector<std::string>>& rows, const std::string& key,
                            const RateReport& r) {
    rows.push_back({key, std::to_string(r.hallucinated), std::to_string(r.total),
                    pct_or_empty(r.rate), std::to_string(r.unique_hallucinations),
                    std::to_string(r.unique_total), pct_or_empty(r.unique_rate)});
}

inline const std::vector<std::string> rate_header = {
    "scope",        "hallucinated",        "total",        "rate_percent",
    "unique_hallucinated", "unique_total", "unique_rate_percent"};

} // namespace detail

struct EmitResult {
    std::vector<std::string> files; // emitted file names, relative to the reports dir
};

// Materialize every table and plot-data series the store can support.
// Verdict-derived tables come straight from verdicts.jsonl; experiment
// summaries (persistence, sweep, detection, mitigation) come from stored
// report rows, keep-last per key.
inline EmitResult emit_reports(const RunStore& store) {
    const std::filesystem::path dir = store.reports_dir();
    EmitResult result;
    auto emit = [&](const std::string& name, const std::vector<std::string>& header,
                    const std::vector<std::vector<std::string>>& rows) {
        write_file_atomic(dir / name, write_csv(CsvTable{header, rows}));
        result.files.push_back(name);
    };
    auto emit_json = [&](const std::string& name, const nlohmann::json& payload) {
        nlohmann::json j = payload;
        j["version"] = schema_version;
        write_file_atomic(dir / name, j.dump(2) + "\n");
        result.files.push_back(name);
    };

    std::vector<Verdict> verdicts = store.load_verdicts();

    // ---- rate tables ----
    {
        std::vector<std::vector<std::string>> rows;
        detail::rate_table_rows(rows, "all", hallucination_rate(verdicts, RateScope{}));
        emit("rate_overall.csv", detail::rate_header, rows);
    }
    {
        std::set<std::string> models;
        for (const auto& v : verdicts) models.insert(v.model_id);
        std::vector<std::vector<std::string>> rows;
        for (const auto& m : models) {
            RateScope scope;
            scope.model = m;
            detail::rate_table_rows(rows, m, hallucination_rate(verdicts, scope));
        }
        emit("rate_by_model.csv", detail::rate_header, rows);
    }
    {
        std::vector<std::vector<std::string>> rows;
        for (Heuristic h : {Heuristic::h1, Heuristic::h2, Heuristic::h3}) {
            RateScope scope;
            scope.heuristic = h;
            detail::rate_table_rows(rows, heuristic_name(h), hallucination_rate(verdicts, scope));
        }
        emit("rate_by_heuristic.csv", detail::rate_header, rows);
    }
    {
        std::vector<std::vector<std::string>> rows;
        for (PromptSource s : {PromptSource::stackoverflow, PromptSource::llm_generated}) {
            RateScope scope;
            scope.source = s;
            detail::rate_table_rows(rows, source_name(s), hallucination_rate(verdicts, scope));
        }
        emit("rate_by_source.csv", detail::rate_header, rows);
    }
    {
        std::vector<std::vector<std::string>> rows;
        for (Temporal t : {Temporal::recent, Temporal::all_time}) {
            RateScope scope;
            scope.temporal = t;
            detail::rate_table_rows(rows, temporal_name(t), hallucination_rate(verdicts, scope));
        }
        emit("rate_by_temporal.csv", detail::rate_header, rows);
    }

    // ---- distance histogram ----
    {
        DistanceHistogram h = distance_histogram(verdicts);
        std::vector<std::vector<std::string>> rows;
        auto row = [&](const char* bin, size_t count) {
            rows.push_back({bin, std::to_string(count),
                            format_fixed(h.share(count) * 100.0, 4)});
        };
        row("1-2", h.d1_2);
        row("3-5", h.d3_5);
        row("6-9", h.d6_9);
        row("10+", h.d10_plus);
        emit("distance_histogram.csv", {"bin", "count", "share_percent"}, rows);
    }

    // ---- cross-model overlap histogram ----
    {
        OverlapReport o = cross_model_overlap(verdicts);
        std::vector<std::vector<std::string>> rows;
        for (size_t k = 1; k < o.hallucinated.size(); ++k)
            rows.push_back({std::to_string(k), std::to_string(o.hallucinated[k]),
                            std::to_string(o.valid[k])});
        emit("overlap_histogram.csv", {"models", "hallucinated_names", "valid_names"}, rows);
    }

    // ---- verbosity scatter ----
    {
        VerbosityReport v = verbosity_report(verdicts);
        std::vector<std::vector<std::string>> rows;
        for (const auto& r : v.rows)
            rows.push_back({r.model, std::to_string(r.unique_packages),
                            format_fixed(r.rate * 100.0, 4)});
        emit("verbosity.csv", {"model", "unique_packages", "rate_percent"}, rows);
        nlohmann::json summary = {{"models", v.rows.size()}};
        if (v.pearson) summary["pearson"] = *v.pearson;
        else summary["pearson"] = nullptr;
        emit_json("verbosity_summary.json", summary);
    }

    // ---- cross-language table (only meaningful when verdicts exist) ----
    {
        std::map<Ecosystem, size_t> primary_counts;
        for (const auto& v : verdicts)
            if (v.is_hallucination) ++primary_counts[v.ecosystem];
        Ecosystem primary = Ecosystem::pypi;
        size_t best = 0;
        for (const auto& [eco, n] : primary_counts)
            if (n > best) {
                best = n;
                primary = eco;
            }
        CrossLanguageReport c = cross_language_report(verdicts, primary);
        std::vector<std::vector<std::string>> rows;
        for (const auto& r : c.rows)
            rows.push_back({ecosystem_name(r.ecosystem), std::to_string(r.hits),
                            format_fixed(r.share * 100.0, 4)});
        emit("cross_language.csv", {"ecosystem", "hits", "share_percent"}, rows);
    }

    // ---- recency ----
    {
        std::vector<std::vector<std::string>> rows;
        for (const auto& r : recency_comparison(verdicts)) {
            std::string delta = r.delta_pp ? format_fixed(*r.delta_pp, 4) : "";
            rows.push_back({r.model, pct_or_empty(r.recent_rate), pct_or_empty(r.all_time_rate),
                            delta});
        }
        emit("recency.csv",
             {"model", "recent_rate_percent", "all_time_rate_percent", "delta_pp"}, rows);
    }

    // ---- deleted-package attribution (from verdict flags, per ecosystem) ----
    {
        std::map<std::string, std::pair<std::set<std::string>, std::set<std::string>>> per_eco;
        for (const auto& v : verdicts) {
            if (!v.is_hallucination) continue;
            auto& [uniq, deleted] = per_eco[ecosystem_name(v.ecosystem)];
            uniq.insert(v.normalized);
            if (v.was_deleted) deleted.insert(v.normalized);
        }
        std::vector<std::vector<std::string>> rows;
        for (const auto& [eco, sets] : per_eco) {
            const auto& [uniq, deleted] = sets;
            double share = uniq.empty() ? 0.0
                                        : static_cast<double>(deleted.size()) /
                                              static_cast<double>(uniq.size());
            rows.push_back({eco, std::to_string(uniq.size()), std::to_string(deleted.size()),
                            format_fixed(share * 100.0, 4)});
        }
        emit("deleted.csv", {"ecosystem", "hallucinated_unique", "deleted_hits", "share_percent"},
             rows);
    }

    // ---- persistence (stored rows; keep-last) ----
    {
        nlohmann::json last;
        for (const auto& row : store.load_reports("persistence")) last = row.at("payload");
        if (!last.is_null()) {
            std::vector<std::vector<std::string>> rows;
            const auto& hist = last.at("histogram");
            for (size_t k = 0; k < hist.size(); ++k)
                rows.push_back({std::to_string(k),
                                std::to_string(hist[k].get<size_t>())});
            emit("persistence_histogram.csv", {"recurrences", "prompts"}, rows);
            emit_json("persistence_summary.json",
                      {{"trials", last.at("trials")},
                       {"prompts", last.at("prompts")},
                       {"failures", last.at("failures")},
                       {"fraction_all", last.at("fraction_all")},
                       {"fraction_none", last.at("fraction_none")},
                       {"fraction_repeated", last.at("fraction_repeated")}});
        }
    }

    // ---- sampling sweeps (stored rows; keep-last per axis) ----
    {
        std::map<std::string, nlohmann::json> by_axis;
        for (const auto& row : store.load_reports("sweep"))
            by_axis[row.at("payload").at("axis").get<std::string>()] = row.at("payload");
        for (const auto& [axis, payload] : by_axis) {
            std::vector<std::vector<std::string>> rows;
            for (const auto& p : payload.at("points")) {
                std::string rate = p.contains("rate_percent")
                                       ? format_fixed(p.at("rate_percent").get<double>(), 4)
                                       : "";
                rows.push_back({format_fixed(p.at("value").get<double>(), 4),
                                std::to_string(p.at("hallucinated").get<size_t>()),
                                std::to_string(p.at("total").get<size_t>()), rate});
            }
            emit("rate_vs_" + axis + ".csv", {axis, "hallucinated", "total", "rate_percent"},
                 rows);
        }
    }

    // ---- mitigation comparison (stored rows; keep-last per policy) ----
    {
        std::map<std::string, nlohmann::json> by_policy;
        std::vector<std::string> order;
        for (const auto& row : store.load_reports("mitigation")) {
            std::string p = row.at("payload").at("policy").get<std::string>();
            if (!by_policy.count(p)) order.push_back(p);
            by_policy[p] = row.at("payload");
        }
        if (!by_policy.empty()) {
            std::vector<std::vector<std::string>> rows;
            for (const auto& p : order) {
                const auto& payload = by_policy[p];
                std::string rate = payload.contains("rate_percent")
                                       ? format_fixed(payload.at("rate_percent").get<double>(), 4)
                                       : "";
                rows.push_back({p,
                                std::to_string(payload.at("hallucinated").get<size_t>()),
                                std::to_string(payload.at("total").get<size_t>()), rate,
                                std::to_string(payload.at("failures").get<size_t>())});
            }
            emit("mitigation.csv", {"policy", "hallucinated", "total", "rate_percent", "failures"},
                 rows);
        }
    }

    // ---- self-detection (stored rows; keep-last) ----
    {
        nlohmann::json last;
        for (const auto& row : store.load_reports("self_detection")) last = row.at("payload");
        if (!last.is_null()) {
            SelfDetectionReport r;
            r.true_positive = last.value("true_positive", size_t{0});
            r.false_positive = last.value("false_positive", size_t{0});
            r.true_negative = last.value("true_negative", size_t{0});
            r.false_negative = last.value("false_negative", size_t{0});
            r.unparseable = last.value("unparseable", size_t{0});
            std::vector<std::vector<std::string>> rows;
            rows.push_back({std::to_string(r.true_positive), std::to_string(r.false_positive),
                            std::to_string(r.true_negative), std::to_string(r.false_negative),
                            std::to_string(r.unparseable), pct_or_empty(r.accuracy()),
                            pct_or_empty(r.precision_hallucinated()),
                            pct_or_empty(r.recall_hallucinated())});
            emit("self_detection.csv",
                 {"true_positive", "false_positive", "true_negative", "false_negative",
                  "unparseable", "accuracy_percent", "precision_hallucinated_percent",
                  "recall_hallucinated_percent"},
                 rows);
        }
    }

    // manifest of what was emitted, itself deterministic
    std::sort(result.files.begin(), result.files.end());
    nlohmann::json manifest = {{"version", schema_version}, {"files", result.files}};
    write_file_atomic(dir / "emit_manifest.json", manifest.dump(2) + "\n");
    result.files.push_back("emit_manifest.json");
    return result;
}

} // namespace pkghall
