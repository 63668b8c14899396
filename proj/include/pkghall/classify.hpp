#pragma once

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "pkghall/bk_tree.hpp"
#include "pkghall/datasets.hpp"
#include "pkghall/extraction.hpp"
#include "pkghall/registry.hpp"

namespace pkghall {

// A mention judged against the registry, with enough denormalized context
// to slice reports without re-joining stores.
struct Verdict {
    // mention
    std::string sample_id;
    std::string model_id;
    int trial = 0;
    Heuristic heuristic = Heuristic::h1;
    Ecosystem ecosystem = Ecosystem::pypi;
    std::string raw;
    std::string normalized;
    // prompt context
    std::string prompt_id;
    Language language = Language::python;
    PromptSource source = PromptSource::stackoverflow;
    Temporal temporal = Temporal::recent;
    // enrichment
    bool is_hallucination = false;
    std::string nearest_name;              // hallucinations only
    int nearest_distance = -1;             // -1 = not populated
    std::vector<std::string> cross_ecosystem_hits; // ecosystem names, primary excluded
    bool was_deleted = false;
};

struct PromptContext {
    std::string prompt_id;
    Language language = Language::python;
    PromptSource source = PromptSource::stackoverflow;
    Temporal temporal = Temporal::recent;

    static PromptContext from(const PromptRecord& r) {
        return PromptContext{r.prompt_id, r.language, r.source, r.temporal};
    }
};

// Judges mentions against a set of registry snapshots. The snapshot matching
// the mention's ecosystem is the primary; the others feed cross-ecosystem
// hits. Nearest-neighbor indexes build lazily, once per ecosystem.
class Classifier {
public:
    explicit Classifier(std::map<Ecosystem, const RegistrySnapshot*> snapshots,
                        const DeletedPackageLedger* ledger = nullptr)
        : snapshots_(std::move(snapshots)), ledger_(ledger) {}

    Verdict classify_one(const PackageMention& m, const PromptContext& ctx) const {
        auto it = snapshots_.find(m.name.ecosystem);
        if (it == snapshots_.end())
            throw Error(Errc::config_error,
                        std::string("no snapshot loaded for ecosystem ") +
                            ecosystem_name(m.name.ecosystem));
        const RegistrySnapshot& primary = *it->second;

        Verdict v;
        v.sample_id = m.sample_id;
        v.model_id = m.model_id;
        v.trial = m.trial;
        v.heuristic = m.heuristic;
        v.ecosystem = m.name.ecosystem;
        v.raw = m.name.raw;
        v.normalized = m.name.normalized;
        v.prompt_id = ctx.prompt_id;
        v.language = ctx.language;
        v.source = ctx.source;
        v.temporal = ctx.temporal;

        v.is_hallucination = !primary.contains_normalized(m.name.normalized);
        if (v.is_hallucination) {
            if (!primary.names.empty()) {
                NearestResult near = index_for(m.name.ecosystem, primary).nearest(m.name.normalized);
                v.nearest_name = near.name;
                v.nearest_distance = near.distance;
            }
            for (const auto& [eco, snap] : snapshots_) {
                if (eco == m.name.ecosystem) continue;
                if (snap->contains_normalized(m.name.normalized))
                    v.cross_ecosystem_hits.push_back(ecosystem_name(eco));
            }
        }
        if (ledger_ && ledger_->ecosystem == m.name.ecosystem)
            v.was_deleted = ledger_->contains_normalized(m.name.normalized);
        return v;
    }

    std::vector<Verdict> classify(const std::vector<PackageMention>& mentions,
                                  const PromptContext& ctx) const {
        std::vector<Verdict> out;
        out.reserve(mentions.size());
        for (const auto& m : mentions) out.push_back(classify_one(m, ctx));
        return out;
    }

    // Lazy per-ecosystem index; logically const (a cache over immutable
    // snapshot data).
    const MetricTreeIndex& index_for(Ecosystem eco, const RegistrySnapshot& snap) const {
        auto it = indexes_.find(eco);
        if (it == indexes_.end()) {
            std::vector<std::string> names(snap.names.begin(), snap.names.end());
            it = indexes_.emplace(eco, std::make_unique<MetricTreeIndex>(std::move(names))).first;
        }
        return *it->second;
    }

private:
    std::map<Ecosystem, const RegistrySnapshot*> snapshots_;
    const DeletedPackageLedger* ledger_;
    mutable std::map<Ecosystem, std::unique_ptr<MetricTreeIndex>> indexes_;
};

// Direct form of the enrichment lookup, for callers holding an index.
inline NearestResult nearest_valid(const std::string& normalized, const MetricTreeIndex& index) {
    return index.nearest(normalized);
}

} // namespace pkghall
