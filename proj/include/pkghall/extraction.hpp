#pragma once

// The three package-mention heuristics:
//   h1: parse install commands out of generated code/text
//   h2: ask the generating model which packages the code needs
//   h3: ask the model which packages the original prompt needs
// h1 is implemented here in full; h2/h3 build wire payloads whose responses
// feed parse_package_list_response.

#include <algorithm>
#include <cstdint>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include "pkghall/ecosystem.hpp"
#include "pkghall/error.hpp"
#include "pkghall/package_name.hpp"
#include "pkghall/params.hpp"
#include "pkghall/prompts.hpp"
#include "pkghall/util.hpp"

namespace pkghall {

enum class Heuristic { h1, h2, h3 };

inline const char* heuristic_name(Heuristic h) {
    switch (h) {
    case Heuristic::h1: return "h1";
    case Heuristic::h2: return "h2";
    case Heuristic::h3: return "h3";
    }
    return "?";
}

inline Heuristic parse_heuristic(std::string_view s) {
    if (s == "h1") return Heuristic::h1;
    if (s == "h2") return Heuristic::h2;
    if (s == "h3") return Heuristic::h3;
    throw Error(Errc::format_error, "unknown heuristic: " + std::string(s));
}

// One generated completion, the unit mentions hang off.
struct CodeSample {
    std::string sample_id;
    std::string model_id;
    std::string prompt_id;
    int trial = 0;
    Language language = Language::python;
    std::string body;       // preserved byte-exact
    std::string created_at; // ISO 8601 UTC
};

struct PackageMention {
    PackageName name;
    Heuristic heuristic = Heuristic::h1;
    std::string sample_id;
    std::string model_id;
    int trial = 0;
    std::string raw_span; // the argument as it appeared in the source text
};

struct MentionSet {
    std::string sample_id;
    std::vector<PackageMention> mentions;
    size_t h1_count = 0;
    size_t h2_count = 0;
    size_t h3_count = 0;
};

struct ChatRequest {
    std::vector<ChatMessage> messages;
    GenerationParams params;
};

// ------------------------------------------------------------------
// Heuristic 1: install-command grammar
// ------------------------------------------------------------------

namespace detail {

struct ScanUnit {
    std::string text;
    bool code_context = false; // fenced block, inline span, or prompt-prefixed line
};

// Body text is a mix of prose and code. Fenced blocks and inline spans are
// code; a bare line behind a shell prompt ($, !, >, %) is code; everything
// else is prose, where argument parsing is more conservative.
inline std::vector<ScanUnit> segment_body(std::string_view body) {
    std::vector<ScanUnit> units;
    bool in_fence = false;
    std::string pending_code; // joins backslash-continued lines

    auto flush_code = [&](std::string line) {
        if (!pending_code.empty()) {
            line = pending_code + " " + line;
            pending_code.clear();
        }
        std::string_view t = trim_view(line);
        if (ends_with(t, "\\")) {
            pending_code = std::string(t.substr(0, t.size() - 1));
            return;
        }
        if (!t.empty()) units.push_back(ScanUnit{std::string(t), true});
    };

    for (auto& line : split_lines(body)) {
        std::string_view t = trim_view(line);
        if (starts_with(t, "```") || starts_with(t, "~~~")) {
            if (!pending_code.empty()) {
                units.push_back(ScanUnit{pending_code, true});
                pending_code.clear();
            }
            in_fence = !in_fence;
            continue;
        }
        if (in_fence) {
            flush_code(line);
            continue;
        }
        // IPython "!" and shell "$"/"%"/">" prompt prefixes
        if (!t.empty() && (t[0] == '$' || t[0] == '!' || t[0] == '%' || t[0] == '>')) {
            size_t skip = 1;
            while (skip < t.size() && (t[skip] == '$' || t[skip] == '>' || t[skip] == ' '))
                ++skip;
            flush_code(std::string(t.substr(skip)));
            continue;
        }
        // Inline code spans become their own code units; the remainder of
        // the line stays prose.
        std::string prose;
        size_t pos = 0;
        while (pos < t.size()) {
            size_t open = t.find('`', pos);
            if (open == std::string_view::npos) {
                prose += t.substr(pos);
                break;
            }
            size_t close = t.find('`', open + 1);
            if (close == std::string_view::npos) {
                prose += t.substr(pos);
                break;
            }
            prose += t.substr(pos, open - pos);
            prose += ' ';
            std::string_view span = trim_view(t.substr(open + 1, close - open - 1));
            if (!span.empty()) units.push_back(ScanUnit{std::string(span), true});
            pos = close + 1;
        }
        if (!trim(prose).empty()) units.push_back(ScanUnit{trim(prose), false});
    }
    if (!pending_code.empty()) units.push_back(ScanUnit{pending_code, true});
    return units;
}

// Shell-ish tokenizer: whitespace-separated, quotes group, shell operators
// come out as standalone separator tokens. No expansion of any kind.
inline std::vector<std::string> shell_tokens(std::string_view text) {
    std::vector<std::string> tokens;
    std::string cur;
    bool any = false;
    char quote = 0;
    auto push = [&] {
        if (any) tokens.push_back(cur);
        cur.clear();
        any = false;
    };
    for (size_t i = 0; i < text.size(); ++i) {
        char c = text[i];
        if (quote) {
            if (c == quote) quote = 0;
            else cur += c, any = true;
            continue;
        }
        if (c == '\'' || c == '"') {
            quote = c;
            any = true;
            continue;
        }
        if (is_ascii_space(c)) {
            push();
            continue;
        }
        if (c == ';' || c == '|' || c == '&') {
            // separator; collapse && and || into one token
            push();
            std::string sep(1, c);
            if ((c == '&' || c == '|') && i + 1 < text.size() && text[i + 1] == c) {
                sep += c;
                ++i;
            }
            tokens.push_back(sep);
            continue;
        }
        cur += c;
        any = true;
    }
    push();
    return tokens;
}

inline bool is_separator_token(std::string_view t) {
    return t == ";" || t == "|" || t == "||" || t == "&" || t == "&&";
}

// In prose, an unmarked command tail like "... pip install foo to get
// started" must not swallow the sentence. Code contexts skip this cut.
inline bool is_prose_stopword(std::string_view t) {
    static const std::unordered_set<std::string_view> words = {
        "to",   "and",  "or",   "in",   "on",    "for",  "with", "the",  "a",
        "an",   "it",   "this", "that", "then",  "of",   "before", "after",
        "first", "now", "into", "as",   "so",    "if",   "via",  "using",
        "from", "by",   "at",   "is",   "you",   "your", "will", "which",
    };
    return words.count(t) > 0;
}

inline bool pip_flag_takes_value(std::string_view flag) {
    static const std::unordered_set<std::string_view> flags = {
        "-r", "--requirement", "-c", "--constraint", "-e", "--editable", "-t", "--target",
        "-i", "--index-url", "--extra-index-url", "-f", "--find-links", "--platform",
        "--python-version", "--implementation", "--abi", "--root", "--prefix", "--src",
        "--log", "--proxy", "--cache-dir", "--build", "--progress-bar", "--trusted-host",
        "--cert", "--client-cert", "--timeout", "--retries", "--no-binary", "--only-binary",
        "-C", "--config-settings", "--report", "--python", "-b",
    };
    return flags.count(flag) > 0;
}

inline bool npm_flag_takes_value(std::string_view flag) {
    static const std::unordered_set<std::string_view> flags = {
        "--registry", "--prefix", "--loglevel", "--tag", "--userconfig", "--cache",
        "--proxy", "--https-proxy", "--cwd", "--modules-folder",
    };
    return flags.count(flag) > 0;
}

// Peels prose punctuation off a token. Brackets only come off when they are
// unbalanced or wrap the whole token, so extras syntax like
// "requests[security]" survives while "(requests)" and "express," do not.
inline std::string strip_token_punctuation(std::string token) {
    auto count_of = [&](char c) {
        return std::count(token.begin(), token.end(), c);
    };
    auto opener_for = [](char c) { return c == ')' ? '(' : c == ']' ? '[' : '{'; };
    bool changed = true;
    while (changed && !token.empty()) {
        changed = false;
        char front = token.front();
        char back = token.back();
        if (token.size() >= 2 &&
            ((front == '(' && back == ')') || (front == '[' && back == ']') ||
             (front == '{' && back == '}') || (front == '\'' && back == '\'') ||
             (front == '"' && back == '"') || (front == '`' && back == '`'))) {
            token = token.substr(1, token.size() - 2);
            changed = true;
            continue;
        }
        if (back == ')' || back == ']' || back == '}') {
            if (count_of(opener_for(back)) < count_of(back)) {
                token.pop_back();
                changed = true;
            }
        } else if (back == '.' || back == ',' || back == ';' || back == ':' ||
                   back == '!' || back == '?' || back == '\'' || back == '"' ||
                   back == '`') {
            token.pop_back();
            changed = true;
        }
        if (token.empty()) break;
        front = token.front();
        if (front == '\'' || front == '"' || front == '`' ||
            (front == '(' && count_of('(') > count_of(')'))) {
            token.erase(token.begin());
            changed = true;
        }
    }
    return token;
}

// Cuts a pip argument down to its name: extras, version pins and
// environment markers drop.
inline std::string pip_name_part(std::string_view arg) {
    size_t cut = arg.size();
    for (std::string_view op : {"===", "==", ">=", "<=", "~=", "!=", ">", "<", ";", "["}) {
        size_t p = arg.find(op);
        if (p != std::string_view::npos) cut = std::min(cut, p);
    }
    return trim(arg.substr(0, cut));
}

// Cuts an npm argument down to its name: "pkg@^1.0" and "@scope/pkg@1.2"
// lose the version suffix.
inline std::string npm_name_part(std::string_view arg) {
    size_t from = starts_with(arg, "@") ? 1 : 0;
    size_t at = arg.find('@', from);
    if (at != std::string_view::npos) return std::string(arg.substr(0, at));
    return std::string(arg);
}

struct InstallCandidate {
    Ecosystem ecosystem = Ecosystem::pypi;
    std::string raw_span;
    std::string raw_name;
    std::string normalized;
};

inline void parse_args(const std::vector<std::string>& tokens, size_t start, Ecosystem eco,
                       bool code_context, std::vector<InstallCandidate>& out) {
    bool pip = eco == Ecosystem::pypi;
    for (size_t i = start; i < tokens.size(); ++i) {
        const std::string& tok = tokens[i];
        if (is_separator_token(tok)) return;
        if (tok == "#") return; // comment tail
        if (starts_with(tok, "#")) return;
        if (tok == "--") continue;
        if (tok == "@") { // PEP 508 direct reference: "pkg @ https://..."
            ++i;
            continue;
        }
        if (tok.size() > 1 && tok[0] == '-') {
            if (tok.find('=') != std::string::npos) continue; // --opt=value
            bool takes_value = pip ? pip_flag_takes_value(tok) : npm_flag_takes_value(tok);
            if (takes_value) ++i;
            continue;
        }

        std::string cleaned = strip_token_punctuation(tok);
        if (cleaned.empty()) continue;
        if (!code_context && is_prose_stopword(to_lower_ascii(cleaned))) return;
        if (contains(cleaned, "://") || starts_with(cleaned, "git+") ||
            starts_with(cleaned, "file:"))
            continue;
        if (cleaned.front() == '.' || cleaned.front() == '/' || cleaned.front() == '~')
            continue;

        std::string name = pip ? pip_name_part(cleaned) : npm_name_part(cleaned);
        if (name.empty()) continue;
        // a slash marks a path (pip) or a github shorthand (npm); scoped npm
        // names are the one exception
        if (contains(name, "/") && !(eco == Ecosystem::npm && name.front() == '@')) continue;

        std::string normalized;
        if (!try_normalize(name, eco, normalized)) continue;
        out.push_back(InstallCandidate{eco, cleaned, name, normalized});
    }
}

// Finds every install-command occurrence in one scan unit and collects its
// package arguments.
inline void scan_unit(const ScanUnit& unit, std::vector<InstallCandidate>& out) {
    std::vector<std::string> tokens = shell_tokens(unit.text);
    for (size_t i = 0; i < tokens.size(); ++i) {
        std::string t = to_lower_ascii(tokens[i]);
        if (t == "sudo" || t == "-h" || t == "--user") continue;

        // python -m pip install / python3 -m pip install; checked before the
        // bare form so its embedded "pip install" is not matched twice
        if ((t == "python" || t == "python3" || t == "py") && i + 3 < tokens.size() &&
            tokens[i + 1] == "-m" && to_lower_ascii(tokens[i + 2]) == "pip" &&
            to_lower_ascii(tokens[i + 3]) == "install") {
            parse_args(tokens, i + 4, Ecosystem::pypi, unit.code_context, out);
            i += 3;
            continue;
        }
        // pip install / pip3 install
        if ((t == "pip" || t == "pip3" || t == "pip2") && i + 1 < tokens.size() &&
            to_lower_ascii(tokens[i + 1]) == "install") {
            parse_args(tokens, i + 2, Ecosystem::pypi, unit.code_context, out);
            i += 1;
            continue;
        }
        // npm install / npm i
        if (t == "npm" && i + 1 < tokens.size()) {
            std::string sub = to_lower_ascii(tokens[i + 1]);
            if (sub == "install" || sub == "i") {
                parse_args(tokens, i + 2, Ecosystem::npm, unit.code_context, out);
                i += 1;
                continue;
            }
        }
        // yarn add
        if (t == "yarn" && i + 1 < tokens.size() && to_lower_ascii(tokens[i + 1]) == "add") {
            parse_args(tokens, i + 2, Ecosystem::npm, unit.code_context, out);
            i += 1;
            continue;
        }
    }
}

} // namespace detail

// Raw-text form, usable without a CodeSample wrapper (the parser corpus
// exercises this directly).
inline std::vector<detail::InstallCandidate> extract_install_candidates(std::string_view body) {
    std::vector<detail::InstallCandidate> out;
    for (const auto& unit : detail::segment_body(body)) detail::scan_unit(unit, out);
    return out;
}

// Heuristic 1. Every package argument of every install command in the body,
// in order of appearance; duplicates survive (dedup happens in
// merge_mentions, per heuristic).
inline std::vector<PackageMention> extract_install_commands(const CodeSample& sample) {
    std::vector<PackageMention> out;
    for (auto& cand : extract_install_candidates(sample.body)) {
        PackageMention m;
        m.name = PackageName{cand.raw_name, cand.normalized, cand.ecosystem};
        m.heuristic = Heuristic::h1;
        m.sample_id = sample.sample_id;
        m.model_id = sample.model_id;
        m.trial = sample.trial;
        m.raw_span = cand.raw_span;
        out.push_back(std::move(m));
    }
    return out;
}

// ------------------------------------------------------------------
// Heuristics 2 and 3: wire payload builders
// ------------------------------------------------------------------

inline ChatRequest build_package_query_from_code(const CodeSample& sample) {
    ChatRequest req;
    req.messages = {
        {"system", prompts::packages_from_code_system(sample.language)},
        {"user", prompts::packages_from_code_user(sample.language, sample.body)},
    };
    req.params = GenerationParams::package_query();
    return req;
}

inline ChatRequest build_package_query_from_prompt(Language language,
                                                   const std::string& prompt_text) {
    ChatRequest req;
    req.messages = {
        {"system", prompts::packages_from_prompt_system(language)},
        {"user", prompts::packages_from_prompt_user(language, prompt_text)},
    };
    req.params = GenerationParams::package_query();
    return req;
}

// ------------------------------------------------------------------
// List-response parsing
// ------------------------------------------------------------------

struct ParsedPackageList {
    std::vector<PackageName> names; // first-occurrence order, deduplicated
    size_t dropped = 0;             // entries that failed normalization
};

namespace detail {

inline std::string clean_list_entry(std::string entry) {
    std::string_view v = trim_view(entry);
    // leading bullets: "-", "*", "•", "1.", "2)"
    for (;;) {
        if (starts_with(v, "\xe2\x80\xa2")) { // U+2022
            v = trim_view(v.substr(3));
            continue;
        }
        if (!v.empty() && (v.front() == '-' || v.front() == '*' || v.front() == '>')) {
            v = trim_view(v.substr(1));
            continue;
        }
        size_t digits = 0;
        while (digits < v.size() && std::isdigit(static_cast<unsigned char>(v[digits])))
            ++digits;
        if (digits > 0 && digits < v.size() && (v[digits] == '.' || v[digits] == ')') &&
            (digits + 1 == v.size() || is_ascii_space(v[digits + 1]))) {
            v = trim_view(v.substr(digits + 1));
            continue;
        }
        break;
    }
    v = strip_surrounding_quotes(v);
    std::string s = strip_token_punctuation(std::string(v));
    // models sometimes answer with pins or extras; take the name part
    return pip_name_part(s);
}

} // namespace detail

// Splits a model's package-list answer on commas and newlines, trims list
// furniture, drops what will not normalize. A whole-response "None" (the
// instructed no-packages reply) yields the empty list.
inline ParsedPackageList parse_package_list_response(std::string_view text, Ecosystem eco) {
    ParsedPackageList out;
    std::string whole = trim(text);
    if (!whole.empty() && whole.back() == '.') whole.pop_back();
    if (whole.empty() || to_lower_ascii(strip_surrounding_quotes(whole)) == "none") return out;

    std::unordered_set<std::string> seen;
    for (const auto& piece : split_any(text, ",\n")) {
        std::string_view t = trim_view(piece);
        if (t.empty()) continue;
        std::string cleaned = detail::clean_list_entry(std::string(t));
        if (cleaned.empty()) {
            ++out.dropped;
            continue;
        }
        std::string normalized;
        if (!try_normalize(cleaned, eco, normalized)) {
            ++out.dropped;
            continue;
        }
        if (seen.insert(normalized).second)
            out.names.push_back(PackageName{cleaned, normalized, eco});
    }
    return out;
}

// Helper for turning parsed names into heuristic mentions.
inline std::vector<PackageMention> mentions_from_names(const std::vector<PackageName>& names,
                                                       Heuristic heuristic,
                                                       const CodeSample& sample) {
    std::vector<PackageMention> out;
    out.reserve(names.size());
    for (const auto& n : names) {
        PackageMention m;
        m.name = n;
        m.heuristic = heuristic;
        m.sample_id = sample.sample_id;
        m.model_id = sample.model_id;
        m.trial = sample.trial;
        m.raw_span = n.raw;
        out.push_back(std::move(m));
    }
    return out;
}

// ------------------------------------------------------------------
// Merge
// ------------------------------------------------------------------

// Combines the three heuristics' mentions for one sample. Within a
// heuristic, duplicates of the same normalized name collapse to the first
// occurrence; the same name surfacing via different heuristics stays as
// distinct mentions.
inline MentionSet merge_mentions(const CodeSample& sample,
                                 const std::vector<PackageMention>& h1,
                                 const std::vector<PackageMention>& h2,
                                 const std::vector<PackageMention>& h3) {
    MentionSet set;
    set.sample_id = sample.sample_id;

    auto add_all = [&](const std::vector<PackageMention>& mentions, size_t& count) {
        std::unordered_set<std::string> seen;
        for (const auto& m : mentions) {
            if (m.sample_id != sample.sample_id)
                throw Error(Errc::sample_mismatch,
                            "mention for " + m.sample_id + " merged into " + sample.sample_id);
            std::string key = m.name.normalized + "\x1f" +
                              ecosystem_name(m.name.ecosystem);
            if (!seen.insert(key).second) continue;
            set.mentions.push_back(m);
            ++count;
        }
    };
    add_all(h1, set.h1_count);
    add_all(h2, set.h2_count);
    add_all(h3, set.h3_count);
    return set;
}

} // namespace pkghall
