#include <catch2/catch_amalgamated.hpp>

#include <atomic>
#include <cmath>

#include "pkghall/mitigation.hpp"

#include "support/errc_matcher.hpp"
#include "support/test_support.hpp"

using namespace pkghall;
using testsupport::ErrcMatcher;
using testsupport::TempDir;

namespace {

ProviderEndpoint stub_endpoint() {
    ProviderEndpoint ep;
    ep.name = "stub";
    ep.base_url = "http://localhost:1";
    ep.model_id = "m";
    return ep;
}

PromptRecord prompt(const char* id, const std::string& text) {
    PromptRecord r;
    r.prompt_id = id;
    r.text = text;
    r.language = Language::python;
    r.source = PromptSource::llm_generated;
    r.temporal = Temporal::all_time;
    return r;
}

bool is_generation(const nlohmann::json& payload) {
    return payload.at("messages")[0].at("content").get<std::string>() ==
           prompts::code_generation_system(Language::python);
}

bool is_code_query(const nlohmann::json& payload) {
    return payload.at("messages")[0].at("content").get<std::string>() ==
           prompts::packages_from_code_system(Language::python);
}

bool is_validity_question(const nlohmann::json& payload) {
    return payload.at("messages").size() == 1;
}

std::string user_text(const nlohmann::json& payload) {
    return payload.at("messages").back().at("content").get<std::string>();
}

KnowledgeStatement statement(const Embedder& embedder, const char* pkg, const std::string& text) {
    return {make_package_name(pkg, Ecosystem::pypi), text, embedder.embed(text)};
}

} // namespace

TEST_CASE("the lexical embedder is deterministic and normalized", "[mitigation]") {
    LexicalEmbedder embedder(64);
    CHECK(embedder.dimension() == 64);
    CHECK(embedder.name() == "lexical-tf-64");

    auto v1 = embedder.embed("parse JSON with the requests library");
    auto v2 = embedder.embed("parse JSON with the requests library");
    REQUIRE(v1.size() == 64);
    CHECK(v1 == v2);

    double norm = 0.0;
    for (double x : v1) norm += x * x;
    CHECK(norm == Catch::Approx(1.0));

    SECTION("tokenization is case-insensitive and punctuation-blind") {
        CHECK(embedder.embed("Flask, App!") == embedder.embed("flask app"));
    }
    SECTION("text with no tokens maps to the zero vector") {
        auto zero = embedder.embed("!!! ...");
        CHECK(std::all_of(zero.begin(), zero.end(), [](double x) { return x == 0.0; }));
    }
    SECTION("different text differs somewhere") {
        CHECK(embedder.embed("flask web server") != embedder.embed("numpy array math"));
    }
}

TEST_CASE("cosine similarity basics", "[mitigation]") {
    CHECK(cosine_similarity({1, 0}, {1, 0}) == Catch::Approx(1.0));
    CHECK(cosine_similarity({1, 0}, {0, 1}) == Catch::Approx(0.0));
    CHECK(cosine_similarity({1, 1}, {1, 1}) == Catch::Approx(1.0));
    CHECK(cosine_similarity({0, 0}, {1, 1}) == 0.0);
    CHECK_THROWS_MATCHES(cosine_similarity({1, 0, 0}, {1, 0}), Error,
                         ErrcMatcher(Errc::store_error));
}

TEST_CASE("retrieval ranks by similarity with insertion-order ties", "[mitigation]") {
    LexicalEmbedder embedder(32);
    RetrievalStore store(32, embedder.name());
    CHECK(store.empty());
    CHECK_THROWS_MATCHES(store.retrieve(embedder.embed("anything"), 3), Error,
                         ErrcMatcher(Errc::empty_store));

    store.add(statement(embedder, "flask", "questions about flask web apps"));
    store.add(statement(embedder, "numpy", "questions about numpy arrays"));
    store.add(statement(embedder, "requests", "questions about requests http calls"));

    auto hits = retrieve(store, embedder, "how do I build flask web apps", 2);
    REQUIRE(hits.size() == 2);
    CHECK(hits[0].statement->package.normalized == "flask");
    CHECK(hits[0].similarity > hits[1].similarity);

    SECTION("k larger than the store returns everything") {
        CHECK(retrieve(store, embedder, "x", 10).size() == 3);
    }
    SECTION("exact ties keep insertion order") {
        RetrievalStore tied(32, embedder.name());
        tied.add(statement(embedder, "aaa", "identical text"));
        tied.add(statement(embedder, "bbb", "identical text"));
        auto out = retrieve(store, embedder, "identical text", 2);
        auto tied_out = tied.retrieve(embedder.embed("identical text"), 2);
        REQUIRE(tied_out.size() == 2);
        CHECK(tied_out[0].statement->package.normalized == "aaa");
        CHECK(tied_out[0].similarity == tied_out[1].similarity);
    }
    SECTION("statements must match the store dimension") {
        CHECK_THROWS_MATCHES(store.add({make_package_name("x", Ecosystem::pypi), "t", {1.0}}),
                             Error, ErrcMatcher(Errc::store_error));
    }
}

TEST_CASE("topic lines lose bullets, numbering and quotes", "[mitigation]") {
    auto topics = parse_topic_lines("- installing it\n"
                                    "* version pinning\n"
                                    "1. virtual environments\n"
                                    "2) import errors\n"
                                    "> proxies\n"
                                    "\"quoted topic\"\n"
                                    "\n"
                                    "plain topic\n",
                                    10);
    CHECK(topics == std::vector<std::string>{"installing it", "version pinning",
                                             "virtual environments", "import errors", "proxies",
                                             "quoted topic", "plain topic"});
    CHECK(parse_topic_lines("a\nb\nc\nd", 2) == std::vector<std::string>{"a", "b"});
    CHECK(parse_topic_lines("", 5).empty());
}

TEST_CASE("knowledge bases are built only from real packages", "[mitigation]") {
    LexicalEmbedder embedder(32);
    RegistrySnapshot snap = make_snapshot(Ecosystem::pypi, "2023-06-01", {"flask", "numpy"});
    auto transport = std::make_shared<FunctionTransport>(
        [](const ProviderEndpoint&, const nlohmann::json& payload) {
            std::string user = user_text(payload);
            if (contains(user, "numpy")) // scripted endpoint failure
                return nlohmann::json{{"choices", nlohmann::json::array()}};
            return chat_response_body("- deploying\n- deploying\n- routing\n");
        });
    Gateway gw(GatewayMode::live, TranscriptStore(), transport);

    std::vector<PackageDescription> packages = {
        {"flask", "web framework"},
        {"ghost-lib", "does not exist"},
        {"numpy", "arrays"},
    };
    KbBuildReport report;
    RetrievalStore store = build_knowledge_base(packages, gw, stub_endpoint(), Language::python,
                                                snap, embedder, 5, &report);
    CHECK(report.packages_requested == 3);
    CHECK(report.packages_skipped == 1);
    CHECK(report.packages_failed == 1);
    CHECK(report.duplicates_collapsed == 1);
    CHECK(report.statements == 2);
    REQUIRE(store.size() == 2);
    CHECK(store.statements()[0].package.normalized == "flask");
    CHECK(store.statements()[0].text == prompts::knowledge_statement("flask", "deploying"));
    CHECK(store.statements()[0].embedding ==
          embedder.embed(prompts::knowledge_statement("flask", "deploying")));
    CHECK(store.dimension() == 32);
    CHECK(store.embedder_name() == embedder.name());
}

TEST_CASE("knowledge bases round-trip through disk", "[mitigation]") {
    TempDir dir("kb_roundtrip");
    LexicalEmbedder embedder(16);
    RetrievalStore store(16, embedder.name());
    store.add(statement(embedder, "flask", "text one"));
    store.add(statement(embedder, "Numpy", "text two"));

    auto path = dir.path() / "kb.json";
    save_knowledge_base(store, path);
    RetrievalStore back = load_knowledge_base(path);
    CHECK(back.dimension() == 16);
    CHECK(back.embedder_name() == embedder.name());
    REQUIRE(back.size() == 2);
    CHECK(back.statements()[1].package.raw == "Numpy");
    CHECK(back.statements()[1].package.normalized == "numpy");
    CHECK(back.statements()[1].text == "text two");
    CHECK(back.statements()[1].embedding == store.statements()[1].embedding);

    write_file_atomic(path, "nonsense");
    CHECK_THROWS_MATCHES(load_knowledge_base(path), Error, ErrcMatcher(Errc::format_error));
    write_file_atomic(path, "{\"version\":1}");
    CHECK_THROWS_MATCHES(load_knowledge_base(path), Error, ErrcMatcher(Errc::format_error));
}

TEST_CASE("rag augmentation leaves the prompt intact", "[mitigation]") {
    LexicalEmbedder embedder(32);
    RetrievalStore store(32, embedder.name());
    store.add(statement(embedder, "flask", "statement about flask"));
    store.add(statement(embedder, "numpy", "statement about numpy"));

    const std::string prompt_text = "Write python code that serves a web page with flask.";
    SECTION("k = 0 is the identity and never touches the store") {
        RetrievalStore empty(32, embedder.name());
        CHECK(rag_augment(prompt_text, empty, embedder, 0) == prompt_text);
    }
    SECTION("retrieved statements append under the fixed label") {
        std::string out = rag_augment(prompt_text, store, embedder, 1);
        CHECK(starts_with(out, prompt_text + "\n\n"));
        CHECK(contains(out, prompts::rag_section_label));
        CHECK(contains(out, "\n- statement about flask"));
        CHECK_FALSE(contains(out, "statement about numpy"));
    }
}

TEST_CASE("self-refinement stops as soon as the model stops flagging", "[mitigation]") {
    // iteration 1 installs a package the model itself then calls invalid;
    // once the instruction excludes it, the regeneration comes back clean
    std::atomic<int> validity_calls{0};
    auto transport = std::make_shared<FunctionTransport>(
        [&validity_calls](const ProviderEndpoint&, const nlohmann::json& payload) {
            if (is_generation(payload))
                return chat_response_body(contains(user_text(payload), "fakelib")
                                              ? "```\npip install flask\n```"
                                              : "```\npip install fakelib\n```");
            if (is_validity_question(payload)) {
                ++validity_calls;
                return chat_response_body(contains(user_text(payload), "fakelib") ? "no" : "yes");
            }
            return chat_response_body("None");
        });
    Gateway gw(GatewayMode::live, TranscriptStore(), transport);

    RefinementTrace trace = self_refine(prompt("p1", "serve a page"), gw, stub_endpoint(),
                                        GenerationParams::code_generation(),
                                        GenerationParams::package_query(), 0);
    CHECK(trace.terminated_by == RefinementTermination::clean);
    REQUIRE(trace.iteration_count() == 2);
    CHECK(trace.iterations[0].flagged == std::vector<std::string>{"fakelib"});
    CHECK(trace.iterations[0].instruction ==
          prompts::regeneration_instruction({"fakelib"}));
    CHECK(trace.iterations[1].flagged.empty());
    CHECK(trace.iterations[1].instruction.empty());
    CHECK(trace.final_response == "```\npip install flask\n```");
    REQUIRE(trace.final_mentions.mentions.size() == 1);
    CHECK(trace.final_mentions.mentions[0].name.normalized == "flask");
    CHECK(validity_calls == 2); // fakelib once, flask once
}

TEST_CASE("flagged names accumulate across iterations", "[mitigation]") {
    auto transport = std::make_shared<FunctionTransport>(
        [](const ProviderEndpoint&, const nlohmann::json& payload) {
            std::string user = user_text(payload);
            if (is_generation(payload)) {
                if (contains(user, "liba") && contains(user, "libb"))
                    return chat_response_body("```\npip install flask\n```");
                if (contains(user, "liba"))
                    return chat_response_body("```\npip install libb\n```");
                return chat_response_body("```\npip install liba\n```");
            }
            if (is_validity_question(payload))
                return chat_response_body(contains(user, "lib") ? "no" : "yes");
            return chat_response_body("None");
        });
    Gateway gw(GatewayMode::live, TranscriptStore(), transport);

    RefinementTrace trace = self_refine(prompt("p1", "do things"), gw, stub_endpoint(),
                                        GenerationParams::code_generation(),
                                        GenerationParams::package_query(), 0);
    CHECK(trace.terminated_by == RefinementTermination::clean);
    REQUIRE(trace.iteration_count() == 3);
    CHECK(trace.iterations[0].flagged == std::vector<std::string>{"liba"});
    // the second instruction carries every name flagged so far, oldest first
    CHECK(trace.iterations[1].instruction ==
          prompts::regeneration_instruction({"liba", "libb"}));
    CHECK(trace.final_mentions.mentions[0].name.normalized == "flask");
}

TEST_CASE("refinement gives up at the iteration cap", "[mitigation]") {
    std::atomic<int> validity_calls{0};
    auto transport = std::make_shared<FunctionTransport>(
        [&validity_calls](const ProviderEndpoint&, const nlohmann::json& payload) {
            if (is_generation(payload)) return chat_response_body("```\npip install fakelib\n```");
            if (is_validity_question(payload)) {
                ++validity_calls;
                return chat_response_body("no");
            }
            return chat_response_body("None");
        });
    Gateway gw(GatewayMode::live, TranscriptStore(), transport);

    RefinementTrace trace = self_refine(prompt("p1", "x"), gw, stub_endpoint(),
                                        GenerationParams::code_generation(),
                                        GenerationParams::package_query(), 0, 3);
    CHECK(trace.terminated_by == RefinementTermination::max_iterations);
    CHECK(trace.iteration_count() == 3);
    for (const auto& it : trace.iterations)
        CHECK(it.flagged == std::vector<std::string>{"fakelib"});
    // the verdict for a name is cached within a trace
    CHECK(validity_calls == 1);
}

TEST_CASE("refinement reports endpoint trouble instead of looping", "[mitigation]") {
    auto transport = std::make_shared<FunctionTransport>(
        [](const ProviderEndpoint&, const nlohmann::json&) {
            return nlohmann::json{{"choices", nlohmann::json::array()}};
        });
    Gateway gw(GatewayMode::live, TranscriptStore(), transport);
    RefinementTrace trace = self_refine(prompt("p1", "x"), gw, stub_endpoint(),
                                        GenerationParams::code_generation(),
                                        GenerationParams::package_query(), 0);
    CHECK(trace.terminated_by == RefinementTermination::errored);
    CHECK(trace.iteration_count() == 0);
    CHECK_FALSE(trace.error.empty());
}

TEST_CASE("the ensemble refines over the augmented prompt", "[mitigation]") {
    LexicalEmbedder embedder(32);
    RetrievalStore store(32, embedder.name());
    store.add(statement(embedder, "flask", "statement about flask"));

    // with the retrieved section present the first generation is already
    // clean; without it the model starts with fakelib and needs one
    // exclusion round
    auto transport = std::make_shared<FunctionTransport>(
        [](const ProviderEndpoint&, const nlohmann::json& payload) {
            if (is_generation(payload)) {
                std::string user = user_text(payload);
                bool informed = contains(user, prompts::rag_section_label) ||
                                contains(user, "fakelib");
                return chat_response_body(informed ? "```\npip install flask\n```"
                                                   : "```\npip install fakelib\n```");
            }
            if (is_validity_question(payload))
                return chat_response_body(contains(user_text(payload), "fakelib") ? "no" : "yes");
            return chat_response_body("None");
        });
    Gateway gw(GatewayMode::live, TranscriptStore(), transport);

    RefinementTrace trace = ensemble(prompt("p1", "serve a page"), store, embedder, 1, gw,
                                     stub_endpoint(), GenerationParams::code_generation(),
                                     GenerationParams::package_query(), 0);
    CHECK(trace.terminated_by == RefinementTermination::clean);
    CHECK(trace.iteration_count() == 1);
    CHECK(trace.final_mentions.mentions[0].name.normalized == "flask");

    SECTION("k = 0 degrades to plain refinement") {
        RefinementTrace plain = ensemble(prompt("p1", "serve a page"), store, embedder, 0, gw,
                                         stub_endpoint(), GenerationParams::code_generation(),
                                         GenerationParams::package_query(), 0);
        CHECK(plain.iteration_count() == 2);
        CHECK(plain.iterations[0].flagged == std::vector<std::string>{"fakelib"});
    }
}

TEST_CASE("policy names parse both ways", "[mitigation]") {
    for (auto p : {MitigationPolicy::baseline, MitigationPolicy::rag,
                   MitigationPolicy::self_refine, MitigationPolicy::ensemble})
        CHECK(parse_policy(policy_name(p)) == p);
    CHECK_THROWS_MATCHES(parse_policy("prayer"), Error, ErrcMatcher(Errc::usage_error));
    CHECK(std::string(termination_name(RefinementTermination::max_iterations)) ==
          "max_iterations");
}

TEST_CASE("policy evaluation compares like with like", "[mitigation]") {
    LexicalEmbedder embedder(32);
    RetrievalStore store(32, embedder.name());
    store.add(statement(embedder, "flask", "statement about flask"));
    RegistrySnapshot snap = make_snapshot(Ecosystem::pypi, "2023-06-01", {"flask"});
    Classifier classifier({{Ecosystem::pypi, &snap}});

    auto transport = std::make_shared<FunctionTransport>(
        [](const ProviderEndpoint&, const nlohmann::json& payload) {
            if (is_generation(payload))
                return chat_response_body(contains(user_text(payload), prompts::rag_section_label)
                                              ? "```\npip install flask\n```"
                                              : "```\npip install fakelib\n```");
            return chat_response_body("None");
        });
    Gateway gw(GatewayMode::live, TranscriptStore(), transport);

    PromptDataset slice;
    slice.records = {prompt("p1", "serve a page")};

    TempDir dir("mitigation_eval");
    RunStore run_store(dir.path());
    auto evaluation = evaluate_mitigation(slice, gw, stub_endpoint(),
                                          GenerationParams::code_generation(),
                                          GenerationParams::package_query(), &store, embedder,
                                          {{MitigationPolicy::baseline},
                                           {MitigationPolicy::rag, 1}},
                                          2, classifier, &run_store);
    CHECK(evaluation.fairness_ok);
    REQUIRE(evaluation.policies.size() == 2);

    const auto& baseline = evaluation.policies[0];
    CHECK(baseline.policy == MitigationPolicy::baseline);
    CHECK(baseline.report.scope_label == "policy=baseline");
    CHECK(baseline.report.total == 2);
    CHECK(baseline.report.hallucinated == 2);
    CHECK(baseline.report.rate.value() == 1.0);
    CHECK(baseline.report.rate_percent().value() == 100.0);
    CHECK(baseline.failures == 0);

    const auto& rag = evaluation.policies[1];
    CHECK(rag.report.scope_label == "policy=rag");
    CHECK(rag.report.total == 2);
    CHECK(rag.report.hallucinated == 0);
    CHECK(rag.report.rate.value() == 0.0);

    CHECK(run_store.load_reports("mitigation").size() == 2);
    CHECK(run_store.load_verdicts().size() == 4);
}

TEST_CASE("rag-flavored policies insist on a usable knowledge base", "[mitigation]") {
    LexicalEmbedder embedder(32);
    RegistrySnapshot snap = make_snapshot(Ecosystem::pypi, "2023-06-01", {"flask"});
    Classifier classifier({{Ecosystem::pypi, &snap}});
    Gateway gw(GatewayMode::live, TranscriptStore(),
               std::make_shared<FunctionTransport>(
                   [](const ProviderEndpoint&, const nlohmann::json&) {
                       return chat_response_body("None");
                   }));
    PromptDataset slice;
    slice.records = {prompt("p1", "x")};

    CHECK_THROWS_MATCHES(evaluate_mitigation(slice, gw, stub_endpoint(),
                                             GenerationParams::code_generation(),
                                             GenerationParams::package_query(), nullptr, embedder,
                                             {{MitigationPolicy::rag, 5}}, 1, classifier),
                         Error, ErrcMatcher(Errc::config_error));
    RetrievalStore empty(32, embedder.name());
    CHECK_THROWS_MATCHES(evaluate_mitigation(slice, gw, stub_endpoint(),
                                             GenerationParams::code_generation(),
                                             GenerationParams::package_query(), &empty, embedder,
                                             {{MitigationPolicy::ensemble, 3}}, 1, classifier),
                         Error, ErrcMatcher(Errc::config_error));
    // k = 0 never retrieves, so no knowledge base is needed
    auto evaluation = evaluate_mitigation(slice, gw, stub_endpoint(),
                                          GenerationParams::code_generation(),
                                          GenerationParams::package_query(), nullptr, embedder,
                                          {{MitigationPolicy::rag, 0}}, 1, classifier);
    CHECK(evaluation.policies.size() == 1);
}

TEST_CASE("errored refinement items count as failures, not rates", "[mitigation]") {
    LexicalEmbedder embedder(32);
    RegistrySnapshot snap = make_snapshot(Ecosystem::pypi, "2023-06-01", {"flask"});
    Classifier classifier({{Ecosystem::pypi, &snap}});
    auto transport = std::make_shared<FunctionTransport>(
        [](const ProviderEndpoint&, const nlohmann::json&) {
            return nlohmann::json{{"choices", nlohmann::json::array()}};
        });
    Gateway gw(GatewayMode::live, TranscriptStore(), transport);
    PromptDataset slice;
    slice.records = {prompt("p1", "x"), prompt("p2", "y")};

    TempDir dir("mitigation_errored");
    RunStore run_store(dir.path());
    auto evaluation = evaluate_mitigation(slice, gw, stub_endpoint(),
                                          GenerationParams::code_generation(),
                                          GenerationParams::package_query(), nullptr, embedder,
                                          {{MitigationPolicy::self_refine}}, 1, classifier,
                                          &run_store);
    REQUIRE(evaluation.policies.size() == 1);
    CHECK(evaluation.policies[0].failures == 2);
    CHECK(evaluation.policies[0].verdicts.empty());
    CHECK_FALSE(evaluation.policies[0].report.rate.has_value());
    CHECK(contains(read_file(dir.path() / "records" / "errors.jsonl"), "refinement_errored"));
}
