#include <catch2/catch_amalgamated.hpp>

#include <fstream>
#include <sys/wait.h>
#include <unistd.h>

#include "pkghall/run_store.hpp"

#include "support/errc_matcher.hpp"
#include "support/test_support.hpp"

using namespace pkghall;
using testsupport::ErrcMatcher;
using testsupport::TempDir;

namespace {

CodeSample sample(const char* id, const char* body = "```\npip install x\n```") {
    CodeSample s;
    s.sample_id = id;
    s.model_id = "m1";
    s.prompt_id = "p1";
    s.trial = 0;
    s.language = Language::python;
    s.body = body;
    s.created_at = "2023-06-10T00:00:00Z";
    return s;
}

PromptContext context() {
    PromptContext ctx;
    ctx.prompt_id = "p1";
    ctx.language = Language::python;
    ctx.source = PromptSource::llm_generated;
    ctx.temporal = Temporal::all_time;
    return ctx;
}

} // namespace

TEST_CASE("manifest round-trips and finalizes", "[store]") {
    TempDir dir("store_manifest");
    RunStore store(dir.path());
    CHECK_FALSE(store.read_manifest().has_value());

    RunManifest m;
    m.run_id = "run-1";
    m.mode = "record";
    m.endpoint = "stub";
    m.model = "m1";
    m.config_digest = "sha256:aaa";
    m.dataset_digest = "sha256:bbb";
    m.snapshot_digests["pypi"] = "sha256:ccc";
    m.started_at = "2023-06-10T00:00:00Z";
    m.status = "running";
    store.write_manifest(m);

    auto back = store.read_manifest();
    REQUIRE(back.has_value());
    CHECK(back->run_id == "run-1");
    CHECK(back->mode == "record");
    CHECK(back->snapshot_digests.at("pypi") == "sha256:ccc");
    CHECK(back->status == "running");
    CHECK(back->finished_at.empty());

    store.finalize_manifest("complete");
    auto done = store.read_manifest();
    CHECK(done->status == "complete");
    CHECK_FALSE(done->finished_at.empty());
}

TEST_CASE("sample, mention and verdict rows round-trip", "[store]") {
    TempDir dir("store_rows");
    RunStore store(dir.path());

    CodeSample s = sample("p1:m1:0");
    store.append_sample(s, 2, 1);
    CHECK(store.has_sample("p1:m1:0"));
    CHECK_FALSE(store.has_sample("p1:m1:1"));
    CHECK(store.sample_count() == 1);

    PackageMention m;
    m.name = make_package_name("Ghost_Lib", Ecosystem::pypi);
    m.heuristic = Heuristic::h2;
    m.sample_id = s.sample_id;
    m.model_id = s.model_id;
    m.trial = 0;
    m.raw_span = "Ghost_Lib";
    MentionSet set;
    set.sample_id = s.sample_id;
    set.mentions = {m};
    store.append_mentions(set, context());

    Verdict v;
    v.sample_id = s.sample_id;
    v.model_id = s.model_id;
    v.trial = 0;
    v.heuristic = Heuristic::h2;
    v.ecosystem = Ecosystem::pypi;
    v.raw = "Ghost_Lib";
    v.normalized = "ghost-lib";
    v.prompt_id = "p1";
    v.language = Language::python;
    v.source = PromptSource::llm_generated;
    v.temporal = Temporal::all_time;
    v.is_hallucination = true;
    v.nearest_name = "ghost";
    v.nearest_distance = 4;
    v.cross_ecosystem_hits = {"npm"};
    v.was_deleted = true;
    store.append_verdict(v);

    SECTION("a reopened store sees the same rows") {
        RunStore reopened(dir.path());
        CHECK(reopened.has_sample("p1:m1:0")); // resume index rebuilt from disk

        auto samples = reopened.load_samples();
        REQUIRE(samples.size() == 1);
        CHECK(samples[0].sample_id == s.sample_id);
        CHECK(samples[0].body == s.body);
        CHECK(samples[0].created_at == s.created_at);

        auto mentions = reopened.load_mentions();
        REQUIRE(mentions.size() == 1);
        CHECK(mentions[0].first.name.raw == "Ghost_Lib");
        CHECK(mentions[0].first.name.normalized == "ghost-lib");
        CHECK(mentions[0].first.heuristic == Heuristic::h2);
        CHECK(mentions[0].second.source == PromptSource::llm_generated);
        CHECK(mentions[0].second.temporal == Temporal::all_time);

        auto verdicts = reopened.load_verdicts();
        REQUIRE(verdicts.size() == 1);
        CHECK(verdicts[0].is_hallucination);
        CHECK(verdicts[0].nearest_name == "ghost");
        CHECK(verdicts[0].nearest_distance == 4);
        CHECK(verdicts[0].cross_ecosystem_hits == std::vector<std::string>{"npm"});
        CHECK(verdicts[0].was_deleted);
    }

    SECTION("appending preserves earlier rows") {
        store.append_sample(sample("p1:m1:1"), 0, 0);
        RunStore reopened(dir.path());
        CHECK(reopened.load_samples().size() == 2);
        CHECK(reopened.sample_count() == 2);
    }
}

TEST_CASE("report and error rows", "[store]") {
    TempDir dir("store_reports");
    RunStore store(dir.path());
    store.append_report("persistence", {{"fraction_all", 0.4}});
    store.append_report("sweep", {{"axis", "temperature"}});
    store.append_report("persistence", {{"fraction_all", 0.5}});
    store.append_error("p1:m1:0", "NetworkError", "connection refused");

    auto all = store.load_reports();
    CHECK(all.size() == 3);
    auto persistence = store.load_reports("persistence");
    REQUIRE(persistence.size() == 2);
    CHECK(persistence[1].at("payload").at("fraction_all") == 0.5);
}

TEST_CASE("corrupt rows refuse loudly", "[store]") {
    TempDir dir("store_corrupt");
    {
        RunStore store(dir.path());
        store.append_sample(sample("x"), 0, 0);
    }
    auto path = dir.path() / "records" / "samples.jsonl";
    std::ofstream(path, std::ios::app) << "{broken\n";
    CHECK_THROWS_MATCHES(RunStore(dir.path()), Error, ErrcMatcher(Errc::format_error));
}

TEST_CASE("the run lock is exclusive per directory", "[store]") {
    TempDir dir("store_lock");
    RunLock first(dir.path());
    CHECK_THROWS_MATCHES(RunLock(dir.path()), Error, ErrcMatcher(Errc::store_error));
}

TEST_CASE("a second process cannot take the lock", "[store]") {
    TempDir dir("store_lock_proc");
    RunLock held(dir.path());
    // flock is per-open-file-description, so the conflict only shows across
    // processes; a child trying the same lock must fail
    pid_t pid = fork();
    REQUIRE(pid >= 0);
    if (pid == 0) {
        try {
            RunLock second(dir.path());
            _exit(0); // acquired: wrong
        } catch (const Error&) {
            _exit(7); // refused: right
        }
    }
    int status = 0;
    waitpid(pid, &status, 0);
    REQUIRE(WIFEXITED(status));
    CHECK(WEXITSTATUS(status) == 7);
}
