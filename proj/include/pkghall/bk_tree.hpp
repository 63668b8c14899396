#pragma once

// Exact nearest-neighbor search over normalized package names under edit
// distance, via a Burkhard-Keller tree. Every string in the subtree hanging
// off edge e of a node is at distance exactly e from that node, so a branch
// can be skipped when |d(query, node) - e| exceeds the best distance so far.
// Ties at the minimum distance resolve to the lexicographically smallest
// name regardless of traversal order.

#include <algorithm>
#include <cstdlib>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "pkghall/error.hpp"
#include "pkghall/levenshtein.hpp"

namespace pkghall {

struct NearestResult {
    std::string name;
    int distance = 0;
};

class MetricTreeIndex {
public:
    MetricTreeIndex() = default;

    // Builds from any range of normalized names. Input order does not affect
    // query results; duplicates are collapsed.
    explicit MetricTreeIndex(std::vector<std::string> names) {
        std::sort(names.begin(), names.end());
        names.erase(std::unique(names.begin(), names.end()), names.end());
        nodes_.reserve(names.size());
        for (auto& n : names) insert(std::move(n));
    }

    size_t size() const { return nodes_.size(); }
    bool empty() const { return nodes_.empty(); }

    void insert(std::string name) {
        if (nodes_.empty()) {
            nodes_.push_back(Node{std::move(name), {}});
            return;
        }
        size_t cur = 0;
        for (;;) {
            int d = levenshtein(name, nodes_[cur].name);
            if (d == 0) return; // already present
            size_t next = find_child(cur, d);
            if (next == npos) {
                nodes_.push_back(Node{std::move(name), {}});
                nodes_[cur].children.emplace_back(d, nodes_.size() - 1);
                return;
            }
            cur = next;
        }
    }

    // Exact nearest neighbor. Throws EmptyIndex on an empty tree.
    NearestResult nearest(std::string_view query) const {
        if (nodes_.empty()) throw Error(Errc::empty_index, "nearest on empty index");

        int best_dist = levenshtein(query, nodes_[0].name);
        const std::string* best_name = &nodes_[0].name;

        std::vector<std::pair<size_t, int>> stack; // (node, distance to query)
        stack.emplace_back(0, best_dist);

        while (!stack.empty()) {
            auto [idx, d] = stack.back();
            stack.pop_back();
            for (const auto& [edge, child] : nodes_[idx].children) {
                // Lower bound for the whole child subtree; keep equality so a
                // tying name with a smaller spelling is still reachable.
                if (std::abs(d - edge) > best_dist) continue;
                int cd = levenshtein(query, nodes_[child].name);
                if (cd < best_dist ||
                    (cd == best_dist && nodes_[child].name < *best_name)) {
                    best_dist = cd;
                    best_name = &nodes_[child].name;
                }
                stack.emplace_back(child, cd);
            }
        }
        return NearestResult{*best_name, best_dist};
    }

private:
    struct Node {
        std::string name;
        std::vector<std::pair<int, size_t>> children; // (edge distance, node index)
    };

    static constexpr size_t npos = static_cast<size_t>(-1);

    size_t find_child(size_t node, int edge) const {
        for (const auto& [e, idx] : nodes_[node].children)
            if (e == edge) return idx;
        return npos;
    }

    std::vector<Node> nodes_;
};

// Reference implementation used by the oracle tests: full scan with the same
// tie-break rule.
inline NearestResult nearest_by_scan(std::string_view query,
                                     const std::vector<std::string>& names) {
    if (names.empty()) throw Error(Errc::empty_index, "nearest on empty corpus");
    NearestResult best{names[0], levenshtein(query, names[0])};
    for (size_t i = 1; i < names.size(); ++i) {
        int d = levenshtein(query, names[i]);
        if (d < best.distance || (d == best.distance && names[i] < best.name)) {
            best.distance = d;
            best.name = names[i];
        }
    }
    return best;
}

} // namespace pkghall
