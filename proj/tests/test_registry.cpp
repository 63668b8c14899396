#include <catch2/catch_amalgamated.hpp>

#include <nlohmann/json.hpp>

#include "pkghall/registry.hpp"

#include "support/errc_matcher.hpp"
#include "support/test_support.hpp"

using namespace pkghall;
using testsupport::ErrcMatcher;
using testsupport::TempDir;

TEST_CASE("in-memory snapshots normalize on the way in", "[registry]") {
    auto snap = make_snapshot(Ecosystem::pypi, "2023-06-10", {"Requests", "typing_extensions"});
    CHECK(snap.names.size() == 2);
    CHECK(snap.contains_normalized("requests"));
    CHECK(snap.contains_normalized("typing-extensions"));
    CHECK_FALSE(snap.contains_normalized("Requests")); // membership is over normalized form
    CHECK(starts_with(snap.source_digest, "sha256:"));
}

TEST_CASE("plaintext snapshot loading", "[registry]") {
    TempDir dir("registry");
    auto path = dir.path() / "names.txt";
    write_file_atomic(path, "# registry dump\nrequests\nFlask\n\nrequests\nc++\nzope.interface\n");

    LoadReport report;
    auto snap = load_snapshot(path, Ecosystem::pypi, "2023-06-10", &report);

    CHECK(snap.names.size() == 3); // requests, flask, zope-interface
    CHECK(snap.contains_normalized("flask"));
    CHECK(snap.contains_normalized("zope-interface"));
    CHECK(report.loaded == 3);
    CHECK(report.duplicates_collapsed == 1);
    REQUIRE(report.skipped.size() == 1);
    CHECK(report.skipped[0].line == 6); // 1-based, counting comment and blank lines
    CHECK(report.skipped[0].raw == "c++");

    SECTION("the digest covers the raw bytes") {
        CHECK(snap.source_digest == "sha256:" + sha256_hex(read_file(path)));
    }
    SECTION("a bad as_of date refuses") {
        CHECK_THROWS_MATCHES(load_snapshot(path, Ecosystem::pypi, "June 10"), Error,
                             ErrcMatcher(Errc::format_error));
    }
    SECTION("binary input refuses") {
        auto bin = dir.path() / "binary.txt";
        write_file_atomic(bin, std::string("abc\0def", 7));
        CHECK_THROWS_MATCHES(load_snapshot(bin, Ecosystem::pypi, "2023-06-10"), Error,
                             ErrcMatcher(Errc::format_error));
    }
}

TEST_CASE("simple-index html snapshot loading", "[registry]") {
    TempDir dir("registry_html");
    auto path = dir.path() / "simple.html";
    write_file_atomic(path,
                      "<!DOCTYPE html><html><body>\n"
                      "<a href=\"/simple/requests/\">requests</a>\n"
                      "<a href=\"/simple/flask/\">Flask</a>\n"
                      "<A HREF=\"x\">numpy</A>\n"
                      "</body></html>\n");
    LoadReport report;
    auto snap = load_snapshot(path, Ecosystem::pypi, "2023-06-10", &report);
    CHECK(snap.names.size() == 3);
    CHECK(snap.contains_normalized("requests"));
    CHECK(snap.contains_normalized("flask"));
    CHECK(snap.contains_normalized("numpy"));
    CHECK(report.skipped.empty());
}

TEST_CASE("membership refuses cross-ecosystem queries", "[registry]") {
    auto snap = make_snapshot(Ecosystem::pypi, "2023-06-10", {"requests"});
    CHECK(contains(snap, make_package_name("requests", Ecosystem::pypi)));
    CHECK_FALSE(contains(snap, make_package_name("nothere", Ecosystem::pypi)));
    CHECK_THROWS_MATCHES(contains(snap, make_package_name("requests", Ecosystem::npm)), Error,
                         ErrcMatcher(Errc::ecosystem_mismatch));
}

TEST_CASE("snapshot diffing finds deletions", "[registry]") {
    auto earlier = make_snapshot(Ecosystem::npm, "2020-01-01", {"left-pad", "express", "gone-soon"});
    auto later = make_snapshot(Ecosystem::npm, "2023-06-10", {"express", "left-pad", "brand-new"});

    auto ledger = diff_snapshots(earlier, later);
    CHECK(ledger.ecosystem == Ecosystem::npm);
    CHECK(ledger.deleted.size() == 1);
    CHECK(ledger.contains_normalized("gone-soon"));
    CHECK_FALSE(ledger.contains_normalized("brand-new")); // additions are not deletions

    SECTION("date order is enforced") {
        CHECK_THROWS_MATCHES(diff_snapshots(later, earlier), Error,
                             ErrcMatcher(Errc::date_order_error));
        CHECK_THROWS_MATCHES(diff_snapshots(earlier, earlier), Error,
                             ErrcMatcher(Errc::date_order_error));
    }
    SECTION("ecosystems must match") {
        auto other = make_snapshot(Ecosystem::pypi, "2024-01-01", {"x"});
        CHECK_THROWS_MATCHES(diff_snapshots(earlier, other), Error,
                             ErrcMatcher(Errc::ecosystem_mismatch));
    }
}

TEST_CASE("ledger files round-trip", "[registry]") {
    TempDir dir("ledger");
    auto earlier = make_snapshot(Ecosystem::pypi, "2020-01-01", {"a", "b", "keeper"});
    auto later = make_snapshot(Ecosystem::pypi, "2023-06-10", {"keeper"});
    auto ledger = diff_snapshots(earlier, later);
    auto path = dir.path() / "deleted.txt";
    write_ledger(ledger, path);

    SECTION("explicit-parameter load") {
        auto back = load_ledger(path, Ecosystem::pypi, "2020-01-01", "2023-06-10");
        CHECK(back.deleted == ledger.deleted);
    }
    SECTION("self-describing load recovers the header") {
        auto back = load_ledger(path);
        CHECK(back.ecosystem == Ecosystem::pypi);
        CHECK(back.earlier_as_of == "2020-01-01");
        CHECK(back.later_as_of == "2023-06-10");
        CHECK(back.deleted == ledger.deleted);
    }
    SECTION("a ledger without the header refuses self-describing load") {
        auto bare = dir.path() / "bare.txt";
        write_file_atomic(bare, "a\nb\n");
        CHECK_THROWS_MATCHES(load_ledger(bare), Error, ErrcMatcher(Errc::format_error));
    }
}

TEST_CASE("snapshot metadata sidecar", "[registry]") {
    TempDir dir("meta");
    auto path = dir.path() / "names.txt";
    write_file_atomic(path, "requests\nflask\n");
    LoadReport report;
    auto snap = load_snapshot(path, Ecosystem::pypi, "2023-06-10", &report);
    write_snapshot_metadata(snap, report, path);

    auto meta = nlohmann::json::parse(read_file(dir.path() / "names.txt.meta.json"));
    CHECK(meta.at("ecosystem") == "pypi");
    CHECK(meta.at("as_of") == "2023-06-10");
    CHECK(meta.at("count") == 2);
    CHECK(meta.at("digest") == snap.source_digest);
}
