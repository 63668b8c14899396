#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <unordered_set>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "pkghall/ecosystem.hpp"
#include "pkghall/error.hpp"
#include "pkghall/package_name.hpp"
#include "pkghall/sha256.hpp"
#include "pkghall/util.hpp"
#include "pkghall/version.hpp"

namespace pkghall {

struct SkippedEntry {
    size_t line = 0;
    std::string raw;
    std::string reason;
};

struct LoadReport {
    size_t loaded = 0;
    size_t duplicates_collapsed = 0;
    std::vector<SkippedEntry> skipped;
};

// A registry master list frozen at a point in time. Membership is always
// over normalized names.
struct RegistrySnapshot {
    Ecosystem ecosystem = Ecosystem::pypi;
    std::string as_of;            // YYYY-MM-DD
    std::unordered_set<std::string> names;
    std::string source_digest;    // sha256 hex of the raw snapshot bytes

    bool contains_normalized(std::string_view normalized) const {
        return names.find(std::string(normalized)) != names.end();
    }
};

// In-memory construction for tests and synthetic corpora: entries are
// normalized on the way in.
inline RegistrySnapshot make_snapshot(Ecosystem eco, std::string as_of,
                                      const std::vector<std::string>& raw_names) {
    RegistrySnapshot snap;
    snap.ecosystem = eco;
    snap.as_of = std::move(as_of);
    for (const auto& raw : raw_names) snap.names.insert(normalize_name(raw, eco));
    snap.source_digest = "sha256:" + sha256_hex(join(raw_names, "\n"));
    return snap;
}

namespace detail {

// Extracts anchor texts from a PyPI simple-index page. Tolerates attributes
// and arbitrary whitespace inside the tag; nested markup inside anchor text
// is not a thing this index format produces.
inline std::vector<std::pair<size_t, std::string>> anchor_texts(std::string_view html) {
    std::vector<std::pair<size_t, std::string>> out;
    size_t line = 1;
    size_t pos = 0;
    auto advance_lines = [&](size_t from, size_t to) {
        for (size_t i = from; i < to; ++i)
            if (html[i] == '\n') ++line;
    };
    for (;;) {
        size_t open = html.find('<', pos);
        if (open == std::string_view::npos) break;
        advance_lines(pos, open);
        if (open + 2 < html.size() && (html[open + 1] == 'a' || html[open + 1] == 'A') &&
            (html[open + 2] == ' ' || html[open + 2] == '>' || html[open + 2] == '\t' ||
             html[open + 2] == '\n')) {
            size_t gt = html.find('>', open);
            if (gt == std::string_view::npos) break;
            size_t close = html.find("</a>", gt);
            if (close == std::string_view::npos) close = html.find("</A>", gt);
            if (close == std::string_view::npos) break;
            advance_lines(open, gt + 1);
            out.emplace_back(line, std::string(trim_view(html.substr(gt + 1, close - gt - 1))));
            advance_lines(gt + 1, close);
            pos = close + 4;
        } else {
            pos = open + 1;
        }
    }
    return out;
}

inline bool looks_like_html(std::string_view text) {
    std::string_view head = text.substr(0, std::min<size_t>(text.size(), 512));
    std::string lower = to_lower_ascii(head);
    return lower.find("<!doctype") != std::string::npos ||
           lower.find("<html") != std::string::npos || lower.find("<a ") != std::string::npos;
}

} // namespace detail

// Loads a snapshot file. Two accepted formats:
//   - one name per line, "#" starts a comment line, blank lines ignored
//   - PyPI simple-index HTML (anchor text per package)
// Illegal entries are skipped and reported with their line number; exact
// duplicates after normalization collapse silently into the report count.
inline RegistrySnapshot load_snapshot(const std::filesystem::path& path, Ecosystem eco,
                                      std::string as_of, LoadReport* report = nullptr) {
    if (!is_valid_date(as_of))
        throw Error(Errc::format_error, "as_of must be YYYY-MM-DD, got: " + as_of);
    std::string content = read_file(path);
    if (content.find('\0') != std::string::npos)
        throw Error(Errc::format_error, "snapshot contains NUL bytes: " + path.string());

    RegistrySnapshot snap;
    snap.ecosystem = eco;
    snap.as_of = std::move(as_of);
    snap.source_digest = "sha256:" + sha256_hex(content);

    LoadReport local;
    LoadReport& rep = report ? *report : local;

    auto add_entry = [&](size_t line, std::string_view raw) {
        std::string normalized;
        try {
            normalized = normalize_name(raw, eco);
        } catch (const Error& e) {
            rep.skipped.push_back(SkippedEntry{line, std::string(raw), e.what()});
            return;
        }
        if (!snap.names.insert(std::move(normalized)).second) ++rep.duplicates_collapsed;
    };

    if (detail::looks_like_html(content)) {
        for (const auto& [line, text] : detail::anchor_texts(content))
            if (!text.empty()) add_entry(line, text);
    } else {
        size_t line_no = 0;
        for (const auto& line : split_lines(content)) {
            ++line_no;
            std::string_view t = trim_view(line);
            if (t.empty() || t.front() == '#') continue;
            add_entry(line_no, t);
        }
    }
    rep.loaded = snap.names.size();
    return snap;
}

// Membership check; the query must already belong to this ecosystem.
inline bool contains(const RegistrySnapshot& snap, const PackageName& name) {
    if (name.ecosystem != snap.ecosystem)
        throw Error(Errc::ecosystem_mismatch,
                    std::string(ecosystem_name(name.ecosystem)) + " name queried against " +
                        ecosystem_name(snap.ecosystem) + " snapshot");
    return snap.contains_normalized(name.normalized);
}

// ------------------------------------------------------------------
// Snapshot diffing: names that existed earlier and are gone later.
// ------------------------------------------------------------------

struct DeletedPackageLedger {
    Ecosystem ecosystem = Ecosystem::pypi;
    std::string earlier_as_of;
    std::string later_as_of;
    std::unordered_set<std::string> deleted; // normalized

    bool contains_normalized(std::string_view normalized) const {
        return deleted.find(std::string(normalized)) != deleted.end();
    }
};

inline DeletedPackageLedger diff_snapshots(const RegistrySnapshot& earlier,
                                           const RegistrySnapshot& later) {
    if (earlier.ecosystem != later.ecosystem)
        throw Error(Errc::ecosystem_mismatch, "diff across ecosystems");
    if (earlier.as_of >= later.as_of)
        throw Error(Errc::date_order_error,
                    "earlier snapshot (" + earlier.as_of + ") must predate later (" +
                        later.as_of + ")");
    DeletedPackageLedger ledger;
    ledger.ecosystem = earlier.ecosystem;
    ledger.earlier_as_of = earlier.as_of;
    ledger.later_as_of = later.as_of;
    for (const auto& n : earlier.names)
        if (!later.contains_normalized(n)) ledger.deleted.insert(n);
    return ledger;
}

// Ledger file: plaintext names plus a comment header, loadable with the
// plaintext snapshot path.
inline void write_ledger(const DeletedPackageLedger& ledger, const std::filesystem::path& path) {
    std::vector<std::string> sorted(ledger.deleted.begin(), ledger.deleted.end());
    std::sort(sorted.begin(), sorted.end());
    std::string out = "# deleted packages: " + std::string(ecosystem_name(ledger.ecosystem)) +
                      " " + ledger.earlier_as_of + " -> " + ledger.later_as_of + "\n";
    for (const auto& n : sorted) out += n + "\n";
    write_file_atomic(path, out);
}

inline DeletedPackageLedger load_ledger(const std::filesystem::path& path, Ecosystem eco,
                                        std::string earlier, std::string later) {
    DeletedPackageLedger ledger;
    ledger.ecosystem = eco;
    ledger.earlier_as_of = std::move(earlier);
    ledger.later_as_of = std::move(later);
    for (const auto& line : split_lines(read_file(path))) {
        std::string_view t = trim_view(line);
        if (t.empty() || t.front() == '#') continue;
        ledger.deleted.insert(normalize_name(t, eco));
    }
    return ledger;
}

// Self-describing load: recovers ecosystem and dates from the header line
// write_ledger produces.
inline DeletedPackageLedger load_ledger(const std::filesystem::path& path) {
    auto lines = split_lines(read_file(path));
    if (lines.empty() || !starts_with(trim_view(lines[0]), "# deleted packages: "))
        throw Error(Errc::format_error, "ledger missing header line: " + path.string());
    std::vector<std::string> parts =
        split_any(trim(lines[0]).substr(std::string("# deleted packages: ").size()), " ");
    // "<ecosystem> <earlier> -> <later>"
    if (parts.size() != 4 || parts[2] != "->")
        throw Error(Errc::format_error, "malformed ledger header: " + path.string());
    return load_ledger(path, parse_ecosystem(parts[0]), parts[1], parts[3]);
}

// ------------------------------------------------------------------
// Sidecar metadata written next to snapshot files.
// ------------------------------------------------------------------

inline void write_snapshot_metadata(const RegistrySnapshot& snap, const LoadReport& report,
                                    const std::filesystem::path& snapshot_path) {
    nlohmann::json meta = {
        {"version", schema_version},
        {"ecosystem", ecosystem_name(snap.ecosystem)},
        {"as_of", snap.as_of},
        {"count", snap.names.size()},
        {"digest", snap.source_digest},
        {"skipped", report.skipped.size()},
        {"duplicates_collapsed", report.duplicates_collapsed},
    };
    std::filesystem::path meta_path = snapshot_path;
    meta_path += ".meta.json";
    write_file_atomic(meta_path, meta.dump(2) + "\n");
}

} // namespace pkghall
