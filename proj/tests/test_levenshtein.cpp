#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <random>
#include <string>

#include "pkghall/levenshtein.hpp"

using namespace pkghall;

namespace {

// Plain recursive definition, the oracle the DP is checked against.
int reference_distance(std::string_view a, std::string_view b) {
    if (a.empty()) return static_cast<int>(b.size());
    if (b.empty()) return static_cast<int>(a.size());
    int del = reference_distance(a.substr(1), b) + 1;
    int ins = reference_distance(a, b.substr(1)) + 1;
    int sub = reference_distance(a.substr(1), b.substr(1)) + (a[0] == b[0] ? 0 : 1);
    return std::min({del, ins, sub});
}

std::string random_word(std::mt19937_64& rng, size_t max_len) {
    std::uniform_int_distribution<size_t> len(0, max_len);
    std::uniform_int_distribution<int> pick('a', 'd'); // small alphabet: more collisions
    std::string s;
    size_t n = len(rng);
    for (size_t i = 0; i < n; ++i) s += static_cast<char>(pick(rng));
    return s;
}

} // namespace

TEST_CASE("edit distance on known pairs", "[distance]") {
    CHECK(levenshtein("kitten", "sitting") == 3);
    CHECK(levenshtein("", "") == 0);
    CHECK(levenshtein("", "abc") == 3);
    CHECK(levenshtein("abc", "") == 3);
    CHECK(levenshtein("same", "same") == 0);
    CHECK(levenshtein("flask", "flsk") == 1);
    CHECK(levenshtein("requests", "request") == 1);
    CHECK(levenshtein("numpy", "numpi") == 1);
    CHECK(levenshtein("abcdef", "fedcba") == 6);
}

TEST_CASE("edit distance matches the recursive definition", "[distance][property]") {
    std::mt19937_64 rng(42);
    for (int i = 0; i < 400; ++i) {
        std::string a = random_word(rng, 7);
        std::string b = random_word(rng, 7);
        INFO("a=" << a << " b=" << b);
        REQUIRE(levenshtein(a, b) == reference_distance(a, b));
    }
}

TEST_CASE("edit distance is a metric", "[distance][property]") {
    std::mt19937_64 rng(43);
    for (int i = 0; i < 500; ++i) {
        std::string a = random_word(rng, 10);
        std::string b = random_word(rng, 10);
        std::string c = random_word(rng, 10);
        int ab = levenshtein(a, b);
        int bc = levenshtein(b, c);
        int ac = levenshtein(a, c);
        INFO("a=" << a << " b=" << b << " c=" << c);
        REQUIRE(ab == levenshtein(b, a));            // symmetry
        REQUIRE((ab == 0) == (a == b));              // identity
        REQUIRE(ac <= ab + bc);                      // triangle
        REQUIRE(ab >= std::abs(static_cast<int>(a.size()) - static_cast<int>(b.size())));
        REQUIRE(ab <= static_cast<int>(std::max(a.size(), b.size())));
    }
}

TEST_CASE("single edits are distance one", "[distance][property]") {
    std::mt19937_64 rng(44);
    for (int i = 0; i < 300; ++i) {
        std::string base = random_word(rng, 12);
        if (base.empty()) continue;
        std::uniform_int_distribution<size_t> at(0, base.size() - 1);
        size_t pos = at(rng);

        std::string deleted = base;
        deleted.erase(deleted.begin() + static_cast<long>(pos));
        REQUIRE(levenshtein(base, deleted) == 1);

        std::string substituted = base;
        substituted[pos] = substituted[pos] == 'z' ? 'y' : 'z'; // guaranteed different
        REQUIRE(levenshtein(base, substituted) == 1);

        std::string inserted = base;
        inserted.insert(inserted.begin() + static_cast<long>(pos), 'z');
        REQUIRE(levenshtein(base, inserted) == 1);
    }
}
