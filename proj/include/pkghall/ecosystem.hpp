#pragma once

#include <array>
#include <string>
#include <string_view>

#include "pkghall/error.hpp"

namespace pkghall {

enum class Ecosystem {
    pypi,
    npm,
    cran,
    cargo,
    rubygems,
    packagist,
    cocoapods,
    nuget,
    go,
    maven,
};

inline constexpr std::array<Ecosystem, 10> all_ecosystems = {
    Ecosystem::pypi,      Ecosystem::npm,   Ecosystem::cran,  Ecosystem::cargo,
    Ecosystem::rubygems,  Ecosystem::packagist, Ecosystem::cocoapods,
    Ecosystem::nuget,     Ecosystem::go,    Ecosystem::maven,
};

inline const char* ecosystem_name(Ecosystem e) {
    switch (e) {
    case Ecosystem::pypi: return "pypi";
    case Ecosystem::npm: return "npm";
    case Ecosystem::cran: return "cran";
    case Ecosystem::cargo: return "cargo";
    case Ecosystem::rubygems: return "rubygems";
    case Ecosystem::packagist: return "packagist";
    case Ecosystem::cocoapods: return "cocoapods";
    case Ecosystem::nuget: return "nuget";
    case Ecosystem::go: return "go";
    case Ecosystem::maven: return "maven";
    }
    return "unknown";
}

inline Ecosystem parse_ecosystem(std::string_view token) {
    for (Ecosystem e : all_ecosystems)
        if (token == ecosystem_name(e)) return e;
    throw Error(Errc::format_error, "unknown ecosystem: " + std::string(token));
}

// The two languages the generation pipeline targets. pypi goes with python,
// npm with javascript.
enum class Language { python, javascript };

inline const char* language_name(Language l) {
    return l == Language::python ? "python" : "javascript";
}

// Display form used when splicing prompt templates.
inline const char* language_display(Language l) {
    return l == Language::python ? "Python" : "JavaScript";
}

inline Language parse_language(std::string_view token) {
    if (token == "python") return Language::python;
    if (token == "javascript") return Language::javascript;
    throw Error(Errc::format_error, "unknown language: " + std::string(token));
}

inline Ecosystem primary_ecosystem(Language l) {
    return l == Language::python ? Ecosystem::pypi : Ecosystem::npm;
}

} // namespace pkghall
