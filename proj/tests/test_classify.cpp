#include <catch2/catch_amalgamated.hpp>

#include "pkghall/classify.hpp"

#include "support/errc_matcher.hpp"

using namespace pkghall;
using testsupport::ErrcMatcher;

namespace {

PackageMention mention(const char* raw, Ecosystem eco, Heuristic h = Heuristic::h1) {
    PackageMention m;
    m.name = make_package_name(raw, eco);
    m.heuristic = h;
    m.sample_id = "p1:m1:0";
    m.model_id = "m1";
    m.trial = 0;
    m.raw_span = raw;
    return m;
}

PromptContext context() {
    PromptContext ctx;
    ctx.prompt_id = "p1";
    ctx.language = Language::python;
    ctx.source = PromptSource::stackoverflow;
    ctx.temporal = Temporal::recent;
    return ctx;
}

} // namespace

TEST_CASE("classification against the primary snapshot", "[classify]") {
    auto pypi = make_snapshot(Ecosystem::pypi, "2023-06-10",
                              {"requests", "flask", "numpy", "pandas"});
    Classifier classifier({{Ecosystem::pypi, &pypi}});

    SECTION("a member name is valid") {
        Verdict v = classifier.classify_one(mention("Requests", Ecosystem::pypi), context());
        CHECK_FALSE(v.is_hallucination);
        CHECK(v.normalized == "requests");
        CHECK(v.raw == "Requests");
        CHECK(v.nearest_distance == -1); // enrichment is hallucination-only
        CHECK(v.prompt_id == "p1");
        CHECK(v.model_id == "m1");
        CHECK(v.heuristic == Heuristic::h1);
    }
    SECTION("a non-member is a hallucination with nearest valid name") {
        Verdict v = classifier.classify_one(mention("reqests", Ecosystem::pypi), context());
        CHECK(v.is_hallucination);
        CHECK(v.nearest_name == "requests");
        CHECK(v.nearest_distance == 1);
        CHECK_FALSE(v.was_deleted);
    }
    SECTION("missing snapshot for the mention's ecosystem refuses") {
        CHECK_THROWS_MATCHES(classifier.classify_one(mention("express", Ecosystem::npm),
                                                     context()),
                             Error, ErrcMatcher(Errc::config_error));
    }
}

TEST_CASE("cross-ecosystem hits name the other registries", "[classify]") {
    auto pypi = make_snapshot(Ecosystem::pypi, "2023-06-10", {"requests"});
    auto npm = make_snapshot(Ecosystem::npm, "2023-06-10", {"express", "ghost-lib"});
    auto cargo = make_snapshot(Ecosystem::cargo, "2023-06-10", {"serde", "ghost-lib"});
    Classifier classifier(
        {{Ecosystem::pypi, &pypi}, {Ecosystem::npm, &npm}, {Ecosystem::cargo, &cargo}});

    Verdict v = classifier.classify_one(mention("ghost-lib", Ecosystem::pypi), context());
    CHECK(v.is_hallucination);
    CHECK(v.cross_ecosystem_hits == std::vector<std::string>{"npm", "cargo"});

    SECTION("valid names get no cross-ecosystem enrichment") {
        Verdict ok = classifier.classify_one(mention("requests", Ecosystem::pypi), context());
        CHECK(ok.cross_ecosystem_hits.empty());
    }
    SECTION("the primary ecosystem is never listed") {
        Verdict w = classifier.classify_one(mention("ghost-lib", Ecosystem::npm), context());
        CHECK_FALSE(w.is_hallucination); // it's in npm, so no hits at all
        CHECK(w.cross_ecosystem_hits.empty());
    }
}

TEST_CASE("deleted-package attribution comes from the ledger", "[classify]") {
    auto pypi = make_snapshot(Ecosystem::pypi, "2023-06-10", {"requests"});
    DeletedPackageLedger ledger;
    ledger.ecosystem = Ecosystem::pypi;
    ledger.earlier_as_of = "2020-01-01";
    ledger.later_as_of = "2023-06-10";
    ledger.deleted = {"vanished-pkg"};
    Classifier classifier({{Ecosystem::pypi, &pypi}}, &ledger);

    Verdict gone = classifier.classify_one(mention("vanished-pkg", Ecosystem::pypi), context());
    CHECK(gone.is_hallucination);
    CHECK(gone.was_deleted);

    Verdict invented = classifier.classify_one(mention("neverwas", Ecosystem::pypi), context());
    CHECK(invented.is_hallucination);
    CHECK_FALSE(invented.was_deleted);

    SECTION("a ledger for another ecosystem is ignored") {
        DeletedPackageLedger npm_ledger;
        npm_ledger.ecosystem = Ecosystem::npm;
        npm_ledger.deleted = {"vanished-pkg"};
        Classifier other({{Ecosystem::pypi, &pypi}}, &npm_ledger);
        CHECK_FALSE(other.classify_one(mention("vanished-pkg", Ecosystem::pypi), context())
                        .was_deleted);
    }
}

TEST_CASE("classify maps a whole mention list", "[classify]") {
    auto pypi = make_snapshot(Ecosystem::pypi, "2023-06-10", {"requests"});
    Classifier classifier({{Ecosystem::pypi, &pypi}});
    std::vector<PackageMention> mentions = {mention("requests", Ecosystem::pypi),
                                            mention("fakepkg", Ecosystem::pypi, Heuristic::h2)};
    auto verdicts = classifier.classify(mentions, context());
    REQUIRE(verdicts.size() == 2);
    CHECK_FALSE(verdicts[0].is_hallucination);
    CHECK(verdicts[1].is_hallucination);
    CHECK(verdicts[1].heuristic == Heuristic::h2);
}
