#pragma once

#include <algorithm>
#include <cstdint>
#include <string_view>
#include <vector>

namespace pkghall {

// Plain edit distance: unit-cost insert, delete, substitute. A transposition
// therefore costs 2. Two-row DP, O(|a|*|b|) time, O(min) space.
inline int levenshtein(std::string_view a, std::string_view b) {
    if (a.size() > b.size()) std::swap(a, b);
    if (a.empty()) return static_cast<int>(b.size());

    std::vector<int> prev(a.size() + 1), cur(a.size() + 1);
    for (size_t i = 0; i <= a.size(); ++i) prev[i] = static_cast<int>(i);

    for (size_t j = 1; j <= b.size(); ++j) {
        cur[0] = static_cast<int>(j);
        char bj = b[j - 1];
        for (size_t i = 1; i <= a.size(); ++i) {
            int cost = (a[i - 1] == bj) ? 0 : 1;
            cur[i] = std::min({prev[i] + 1, cur[i - 1] + 1, prev[i - 1] + cost});
        }
        std::swap(prev, cur);
    }
    return prev[a.size()];
}

} // namespace pkghall
