#pragma once

#include <string>
#include <string_view>

#include "pkghall/ecosystem.hpp"
#include "pkghall/error.hpp"
#include "pkghall/util.hpp"

namespace pkghall {

// A package name as it appeared plus its registry-comparable form.
// All comparisons, dedup keys and snapshot membership use `normalized`.
struct PackageName {
    std::string raw;
    std::string normalized;
    Ecosystem ecosystem = Ecosystem::pypi;

    bool operator==(const PackageName& other) const {
        return normalized == other.normalized && ecosystem == other.ecosystem;
    }
};

namespace detail {

inline bool is_alnum_ascii(char c) {
    return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9');
}

inline bool pypi_legal_char(char c) {
    return is_alnum_ascii(c) || c == '-' || c == '_' || c == '.';
}

inline bool npm_part_legal_char(char c) {
    return is_alnum_ascii(c) || c == '-' || c == '_' || c == '.' || c == '~';
}

// Generic registries cover a spread of conventions: go module paths carry
// slashes and dots, maven coordinates use group:artifact.
inline bool generic_legal_char(char c) {
    return is_alnum_ascii(c) || c == '-' || c == '_' || c == '.' || c == '~' ||
           c == '@' || c == '/' || c == ':' || c == '+';
}

inline bool has_alnum(std::string_view s) {
    for (char c : s)
        if (is_alnum_ascii(c)) return true;
    return false;
}

} // namespace detail

// Canonical registry form of a raw name. Leading/trailing whitespace and
// quotes are stripped before validation.
//   pypi: lowercase, runs of {-, _, .} collapse to a single "-"
//   npm:  lowercase, "@scope/name" shape preserved
//   rest: lowercase
// Throws EmptyName / IllegalName. Idempotent on its own output.
inline std::string normalize_name(std::string_view raw, Ecosystem eco) {
    std::string_view s = strip_surrounding_quotes(raw);
    if (s.empty()) throw Error(Errc::empty_name, "name is empty after trimming");

    switch (eco) {
    case Ecosystem::pypi: {
        std::string out;
        out.reserve(s.size());
        bool in_sep_run = false;
        for (char c : s) {
            if (!detail::pypi_legal_char(c))
                throw Error(Errc::illegal_name,
                            "illegal character in pypi name: " + std::string(s));
            if (c == '-' || c == '_' || c == '.') {
                if (!in_sep_run) out += '-';
                in_sep_run = true;
            } else {
                out += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
                in_sep_run = false;
            }
        }
        if (!detail::has_alnum(out))
            throw Error(Errc::illegal_name, "pypi name has no alphanumerics: " + std::string(s));
        return out;
    }
    case Ecosystem::npm: {
        std::string lower = to_lower_ascii(s);
        if (lower.front() == '@') {
            size_t slash = lower.find('/');
            if (slash == std::string::npos || slash == 1 || slash + 1 >= lower.size() ||
                lower.find('/', slash + 1) != std::string::npos)
                throw Error(Errc::illegal_name, "malformed scoped npm name: " + std::string(s));
            std::string_view scope = std::string_view(lower).substr(1, slash - 1);
            std::string_view name = std::string_view(lower).substr(slash + 1);
            for (char c : scope)
                if (!detail::npm_part_legal_char(c))
                    throw Error(Errc::illegal_name, "illegal npm scope: " + std::string(s));
            for (char c : name)
                if (!detail::npm_part_legal_char(c))
                    throw Error(Errc::illegal_name, "illegal npm name: " + std::string(s));
            if (!detail::has_alnum(name))
                throw Error(Errc::illegal_name, "npm name has no alphanumerics: " + std::string(s));
            return lower;
        }
        for (char c : lower)
            if (!detail::npm_part_legal_char(c))
                throw Error(Errc::illegal_name, "illegal npm name: " + std::string(s));
        if (!detail::has_alnum(lower))
            throw Error(Errc::illegal_name, "npm name has no alphanumerics: " + std::string(s));
        return lower;
    }
    default: {
        std::string lower = to_lower_ascii(s);
        for (char c : lower)
            if (!detail::generic_legal_char(c))
                throw Error(Errc::illegal_name, "illegal character in name: " + std::string(s));
        if (!detail::has_alnum(lower))
            throw Error(Errc::illegal_name, "name has no alphanumerics: " + std::string(s));
        return lower;
    }
    }
}

inline PackageName make_package_name(std::string_view raw, Ecosystem eco) {
    return PackageName{std::string(trim_view(raw)), normalize_name(raw, eco), eco};
}

// Non-throwing probe used where malformed candidates are simply dropped.
inline bool try_normalize(std::string_view raw, Ecosystem eco, std::string& out) {
    try {
        out = normalize_name(raw, eco);
        return true;
    } catch (const Error&) {
        return false;
    }
}

} // namespace pkghall
