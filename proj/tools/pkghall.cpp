// pkghall: package-hallucination measurement and mitigation toolkit.
//
// Subcommand surface:
//   registry fetch|load|diff
//   dataset  ingest|generate|split
//   run      generate|classify
//   analyze  rate|persistence|verbosity|detect|distance|overlap|deleted|crosslang|sweep|recency
//   mitigate build-kb|eval
//   report   emit
//
// Exit codes: 0 success, 1 operational error, 2 usage error, 3 config error.
// --replay forbids all network use: every completion must come from the
// transcript store or the command fails with a replay miss.

#include <CLI11.hpp>

#include <iostream>
#include <memory>
#include <string>
#include <vector>

#include "pkghall/pkghall.hpp"

using namespace pkghall;

namespace {

struct CliContext {
    std::string config_path;
    bool replay = false;
    Config config;
    bool config_loaded = false;

    // Lazy: config is demanded (and so validated) only by commands that
    // actually consult it, and always after option parsing filled
    // config_path.
    const Config& need_config() {
        if (!config_loaded) {
            if (config_path.empty())
                throw Error(Errc::config_error, "this command needs --config <file>");
            config = load_config(config_path);
            config_loaded = true;
        }
        return config;
    }

    GatewayMode mode() {
        if (replay) return GatewayMode::replay;
        return parse_gateway_mode(need_config().mode);
    }
};

const ProviderEndpoint& pick_endpoint(CliContext& ctx, const std::string& name) {
    const Config& c = ctx.need_config();
    if (c.endpoints.empty())
        throw Error(Errc::config_error, "config declares no endpoints");
    if (name.empty()) return c.endpoints.front();
    return find_endpoint(c, name);
}

Gateway make_gateway(CliContext& ctx) {
    const Config& c = ctx.need_config();
    TranscriptStore store{std::filesystem::path(c.transcripts_dir)};
    GatewayMode mode = ctx.mode();
    std::shared_ptr<Transport> transport;
    if (mode != GatewayMode::replay) transport = std::make_shared<HttpTransport>();
    return Gateway(mode, std::move(store), std::move(transport));
}

std::filesystem::path run_dir(CliContext& ctx, const std::string& run) {
    if (run.empty()) throw Error(Errc::usage_error, "--run is required");
    if (run.find('/') != std::string::npos) return std::filesystem::path(run);
    return std::filesystem::path(ctx.need_config().runs_dir) / run;
}

struct LoadedSnapshots {
    std::vector<std::unique_ptr<RegistrySnapshot>> owned;
    std::map<Ecosystem, const RegistrySnapshot*> by_ecosystem;
    std::unique_ptr<DeletedPackageLedger> ledger;
};

LoadedSnapshots load_config_snapshots(CliContext& ctx) {
    const Config& c = ctx.need_config();
    if (c.snapshots.empty())
        throw Error(Errc::config_error, "config declares no registry snapshots");
    LoadedSnapshots out;
    for (const auto& ref : c.snapshots) {
        Ecosystem eco = parse_ecosystem(ref.ecosystem);
        auto snap = std::make_unique<RegistrySnapshot>(
            load_snapshot(ref.path, eco, ref.as_of.empty() ? "1970-01-01" : ref.as_of));
        out.by_ecosystem[eco] = snap.get();
        out.owned.push_back(std::move(snap));
    }
    if (!c.deleted_ledger_path.empty())
        out.ledger = std::make_unique<DeletedPackageLedger>(load_ledger(c.deleted_ledger_path));
    return out;
}

void print_json(const nlohmann::json& j) { std::cout << j.dump(2) << "\n"; }

void print_table(const std::vector<std::string>& header,
                 const std::vector<std::vector<std::string>>& rows) {
    std::cout << write_csv(CsvTable{header, rows});
}

std::string rate_cell(const std::optional<double>& fraction) {
    return fraction ? format_fixed(*fraction * 100.0, 4) : "";
}

void print_rate_rows(const std::vector<std::pair<std::string, RateReport>>& reports) {
    std::vector<std::vector<std::string>> rows;
    for (const auto& [key, r] : reports)
        rows.push_back({key, std::to_string(r.hallucinated), std::to_string(r.total),
                        rate_cell(r.rate), std::to_string(r.unique_hallucinations),
                        std::to_string(r.unique_total), rate_cell(r.unique_rate)});
    print_table({"scope", "hallucinated", "total", "rate_percent", "unique_hallucinated",
                 "unique_total", "unique_rate_percent"},
                rows);
}

RunManifest start_manifest(CliContext& ctx, const std::string& run_id,
                           const ProviderEndpoint& endpoint) {
    const Config& c = ctx.need_config();
    RunManifest m;
    m.run_id = run_id;
    m.mode = gateway_mode_name(ctx.mode());
    m.endpoint = endpoint.name;
    m.model = endpoint.model_id;
    if (!ctx.config_path.empty() && std::filesystem::exists(ctx.config_path))
        m.config_digest = file_digest(ctx.config_path);
    if (!c.dataset_path.empty() && std::filesystem::exists(c.dataset_path))
        m.dataset_digest = file_digest(c.dataset_path);
    for (const auto& ref : c.snapshots)
        if (std::filesystem::exists(ref.path))
            m.snapshot_digests[ref.ecosystem] = file_digest(ref.path);
    m.started_at = now_iso8601_utc();
    return m;
}

std::vector<double> parse_values_list(const std::string& csv) {
    std::vector<double> out;
    for (const auto& piece : split(csv, ',')) {
        std::string t = trim(piece);
        if (t.empty()) continue;
        try {
            out.push_back(std::stod(t));
        } catch (const std::exception&) {
            throw Error(Errc::usage_error, "bad numeric value in --values: " + t);
        }
    }
    if (out.empty()) throw Error(Errc::usage_error, "--values is empty");
    return out;
}

std::vector<std::string> read_name_list(const std::filesystem::path& path) {
    std::vector<std::string> names;
    for (const auto& line : split_lines(read_file(path))) {
        std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        names.push_back(t);
    }
    return names;
}

} // namespace

int main(int argc, char** argv) {
    CliContext ctx;

    CLI::App app{"package hallucination measurement and mitigation toolkit"};
    app.require_subcommand(1);
    app.fallthrough(false);
    app.add_option("--config", ctx.config_path, "run configuration file (JSON)");
    app.add_flag("--replay", ctx.replay,
                 "replay transcripts only; any network-requiring step fails");

    // ---------------- registry ----------------
    auto* registry = app.add_subcommand("registry", "registry snapshots and diffs");
    registry->require_subcommand(1);

    struct {
        std::string url, ecosystem, out;
    } reg_fetch;
    auto* registry_fetch_cmd =
        registry->add_subcommand("fetch", "download a registry master list");
    registry_fetch_cmd->add_option("--url", reg_fetch.url, "source URL")->required();
    registry_fetch_cmd->add_option("--ecosystem", reg_fetch.ecosystem, "target ecosystem")
        ->required();
    registry_fetch_cmd->add_option("--out", reg_fetch.out, "output path")->required();
    registry_fetch_cmd->callback([&] {
        if (ctx.replay)
            throw Error(Errc::usage_error, "registry fetch needs the network; --replay forbids it");
        FetchResult res =
            fetch_snapshot(reg_fetch.url, parse_ecosystem(reg_fetch.ecosystem), reg_fetch.out);
        print_json({{"path", res.path.string()},
                    {"bytes", res.bytes},
                    {"digest", res.digest},
                    {"attempts", res.attempts}});
    });

    struct {
        std::string path, ecosystem, as_of;
        bool meta = false;
    } reg_load;
    auto* registry_load_cmd = registry->add_subcommand("load", "parse and validate a snapshot");
    registry_load_cmd->add_option("--path", reg_load.path, "snapshot file")->required();
    registry_load_cmd->add_option("--ecosystem", reg_load.ecosystem, "ecosystem")->required();
    registry_load_cmd->add_option("--as-of", reg_load.as_of, "snapshot date YYYY-MM-DD")
        ->required();
    registry_load_cmd->add_flag("--meta", reg_load.meta, "write <path>.meta.json sidecar");
    registry_load_cmd->callback([&] {
        LoadReport report;
        RegistrySnapshot snap =
            load_snapshot(reg_load.path, parse_ecosystem(reg_load.ecosystem), reg_load.as_of,
                          &report);
        if (reg_load.meta) write_snapshot_metadata(snap, report, reg_load.path);
        nlohmann::json skipped = nlohmann::json::array();
        for (const auto& s : report.skipped)
            skipped.push_back({{"line", s.line}, {"raw", s.raw}, {"reason", s.reason}});
        print_json({{"ecosystem", ecosystem_name(snap.ecosystem)},
                    {"as_of", snap.as_of},
                    {"names", snap.names.size()},
                    {"digest", snap.source_digest},
                    {"duplicates_collapsed", report.duplicates_collapsed},
                    {"skipped", skipped}});
    });

    struct {
        std::string earlier, later, ecosystem, earlier_as_of, later_as_of, out;
    } reg_diff;
    auto* registry_diff_cmd =
        registry->add_subcommand("diff", "deleted-package ledger between two snapshots");
    registry_diff_cmd->add_option("--earlier", reg_diff.earlier, "earlier snapshot file")
        ->required();
    registry_diff_cmd->add_option("--later", reg_diff.later, "later snapshot file")->required();
    registry_diff_cmd->add_option("--ecosystem", reg_diff.ecosystem, "ecosystem")->required();
    registry_diff_cmd->add_option("--earlier-as-of", reg_diff.earlier_as_of, "YYYY-MM-DD")
        ->required();
    registry_diff_cmd->add_option("--later-as-of", reg_diff.later_as_of, "YYYY-MM-DD")
        ->required();
    registry_diff_cmd->add_option("--out", reg_diff.out, "ledger output path")->required();
    registry_diff_cmd->callback([&] {
        Ecosystem eco = parse_ecosystem(reg_diff.ecosystem);
        RegistrySnapshot earlier = load_snapshot(reg_diff.earlier, eco, reg_diff.earlier_as_of);
        RegistrySnapshot later = load_snapshot(reg_diff.later, eco, reg_diff.later_as_of);
        DeletedPackageLedger ledger = diff_snapshots(earlier, later);
        write_ledger(ledger, reg_diff.out);
        print_json({{"deleted", ledger.deleted.size()}, {"out", reg_diff.out}});
    });

    // ---------------- dataset ----------------
    auto* dataset = app.add_subcommand("dataset", "prompt dataset construction");
    dataset->require_subcommand(1);

    struct {
        std::string dump, language = "python", out;
    } ds_ingest;
    auto* dataset_ingest_cmd =
        dataset->add_subcommand("ingest", "build prompts from a question dump");
    dataset_ingest_cmd->add_option("--dump", ds_ingest.dump, "question dump CSV")->required();
    dataset_ingest_cmd->add_option("--language", ds_ingest.language, "python|javascript");
    dataset_ingest_cmd->add_option("--out", ds_ingest.out, "dataset output path")->required();
    dataset_ingest_cmd->callback([&] {
        IngestReport report;
        PromptDataset ds =
            ingest_stackoverflow_dump(ds_ingest.dump, parse_language(ds_ingest.language), &report);
        save_dataset(ds, ds_ingest.out);
        print_json({{"rows_total", report.rows_total},
                    {"accepted", report.accepted},
                    {"below_threshold", report.below_threshold},
                    {"duplicates", report.duplicates},
                    {"rejected_tags", report.rejected_tags},
                    {"records", ds.records.size()},
                    {"out", ds_ingest.out}});
    });

    struct {
        std::string descriptions, endpoint, language = "python", temporal = "recent", out;
    } ds_gen;
    auto* dataset_generate_cmd =
        dataset->add_subcommand("generate", "ask a model to write prompts from descriptions");
    dataset_generate_cmd->add_option("--descriptions", ds_gen.descriptions,
                                     "CSV with package,description")
        ->required();
    dataset_generate_cmd->add_option("--endpoint", ds_gen.endpoint, "endpoint name from config");
    dataset_generate_cmd->add_option("--language", ds_gen.language, "python|javascript");
    dataset_generate_cmd->add_option("--temporal", ds_gen.temporal, "recent|all_time");
    dataset_generate_cmd->add_option("--out", ds_gen.out, "dataset output path")->required();
    dataset_generate_cmd->callback([&] {
        Gateway gateway = make_gateway(ctx);
        const ProviderEndpoint& ep = pick_endpoint(ctx, ds_gen.endpoint);
        PromptGenReport report;
        PromptDataset ds = build_llm_generated_prompts(
            load_descriptions(ds_gen.descriptions), gateway, ep,
            parse_language(ds_gen.language), parse_temporal(ds_gen.temporal), &report);
        save_dataset(ds, ds_gen.out);
        print_json({{"requested", report.requested},
                    {"accepted", report.accepted},
                    {"empty_description", report.empty_description},
                    {"bad_stem", report.bad_stem},
                    {"endpoint_error", report.endpoint_error},
                    {"out", ds_gen.out}});
    });

    struct {
        std::string recent, all_time, out;
    } ds_split;
    auto* dataset_split_cmd =
        dataset->add_subcommand("split", "temporal split with cross-bucket dedup");
    dataset_split_cmd->add_option("--recent", ds_split.recent, "recent dataset file")->required();
    dataset_split_cmd->add_option("--all-time", ds_split.all_time, "all-time dataset file")
        ->required();
    dataset_split_cmd->add_option("--out", ds_split.out, "combined dataset output")->required();
    dataset_split_cmd->callback([&] {
        PromptDataset recent = load_dataset(ds_split.recent);
        PromptDataset all_time = load_dataset(ds_split.all_time);
        PromptDataset combined = split_temporal(recent.records, all_time.records);
        save_dataset(combined, ds_split.out);
        nlohmann::json manifest = nlohmann::json::object();
        for (const auto& [k, v] : combined.manifest()) manifest[k] = v;
        print_json({{"records", combined.records.size()}, {"manifest", manifest},
                    {"out", ds_split.out}});
    });

    // ---------------- run ----------------
    auto* run = app.add_subcommand("run", "generation and classification runs");
    run->require_subcommand(1);

    struct {
        std::string run_id, endpoint, dataset_path;
        int trials = 0;
    } run_gen;
    auto* run_generate_cmd = run->add_subcommand("generate", "generate samples and extract");
    run_generate_cmd->add_option("--run", run_gen.run_id, "run id or directory")->required();
    run_generate_cmd->add_option("--endpoint", run_gen.endpoint, "endpoint name from config");
    run_generate_cmd->add_option("--dataset", run_gen.dataset_path,
                                 "dataset file (defaults to config)");
    run_generate_cmd->add_option("--trials", run_gen.trials, "trials per prompt");
    run_generate_cmd->callback([&] {
        const Config& c = ctx.need_config();
        std::string ds_path = run_gen.dataset_path.empty() ? c.dataset_path
                                                           : run_gen.dataset_path;
        if (ds_path.empty())
            throw Error(Errc::config_error, "no dataset: set dataset_path or pass --dataset");
        PromptDataset ds = load_dataset(ds_path);
        const ProviderEndpoint& ep = pick_endpoint(ctx, run_gen.endpoint);
        int trials = run_gen.trials > 0 ? run_gen.trials : c.trials;

        std::filesystem::path dir = run_dir(ctx, run_gen.run_id);
        RunLock lock(dir);
        RunStore store(dir);
        RunManifest manifest = start_manifest(ctx, run_gen.run_id, ep);
        store.write_manifest(manifest);

        Gateway gateway = make_gateway(ctx);
        try {
            GenerationOutcome outcome = run_generation(ds, gateway, ep, c.code_params,
                                                       c.query_params, trials, store);
            store.finalize_manifest("complete");
            print_json({{"generated", outcome.generated},
                        {"skipped", outcome.skipped},
                        {"failed", outcome.failed},
                        {"run_dir", dir.string()}});
        } catch (...) {
            store.finalize_manifest("failed");
            throw;
        }
    });

    struct {
        std::string run_id;
    } run_cls;
    auto* run_classify_cmd = run->add_subcommand("classify", "judge stored mentions");
    run_classify_cmd->add_option("--run", run_cls.run_id, "run id or directory")->required();
    run_classify_cmd->callback([&] {
        std::filesystem::path dir = run_dir(ctx, run_cls.run_id);
        RunLock lock(dir);
        RunStore store(dir);
        LoadedSnapshots snaps = load_config_snapshots(ctx);
        Classifier classifier(snaps.by_ecosystem, snaps.ledger.get());
        size_t written = run_classification(store, classifier);
        print_json({{"verdicts", written}, {"run_dir", dir.string()}});
    });

    // ---------------- analyze ----------------
    auto* analyze = app.add_subcommand("analyze", "reports over a run store");
    analyze->require_subcommand(1);

    struct {
        std::string run_id, by = "overall";
    } an_rate;
    auto* analyze_rate_cmd = analyze->add_subcommand("rate", "hallucination rate table");
    analyze_rate_cmd->add_option("--run", an_rate.run_id, "run id or directory")->required();
    analyze_rate_cmd->add_option("--by", an_rate.by,
                                 "overall|model|heuristic|source|temporal");
    analyze_rate_cmd->callback([&] {
        RunStore store(run_dir(ctx, an_rate.run_id));
        std::vector<Verdict> verdicts = store.load_verdicts();
        std::vector<std::pair<std::string, RateReport>> reports;
        if (an_rate.by == "overall") {
            reports.push_back({"all", hallucination_rate(verdicts, RateScope{})});
        } else if (an_rate.by == "model") {
            std::set<std::string> models;
            for (const auto& v : verdicts) models.insert(v.model_id);
            for (const auto& m : models) {
                RateScope s;
                s.model = m;
                reports.push_back({m, hallucination_rate(verdicts, s)});
            }
        } else if (an_rate.by == "heuristic") {
            for (Heuristic h : {Heuristic::h1, Heuristic::h2, Heuristic::h3}) {
                RateScope s;
                s.heuristic = h;
                reports.push_back({heuristic_name(h), hallucination_rate(verdicts, s)});
            }
        } else if (an_rate.by == "source") {
            for (PromptSource src :
                 {PromptSource::stackoverflow, PromptSource::llm_generated}) {
                RateScope s;
                s.source = src;
                reports.push_back({source_name(src), hallucination_rate(verdicts, s)});
            }
        } else if (an_rate.by == "temporal") {
            for (Temporal t : {Temporal::recent, Temporal::all_time}) {
                RateScope s;
                s.temporal = t;
                reports.push_back({temporal_name(t), hallucination_rate(verdicts, s)});
            }
        } else {
            throw Error(Errc::usage_error, "unknown --by: " + an_rate.by);
        }
        print_rate_rows(reports);
    });

    struct {
        std::string run_id, probes, endpoint;
        int trials = 10;
    } an_persist;
    auto* analyze_persistence_cmd =
        analyze->add_subcommand("persistence", "regeneration recurrence experiment");
    analyze_persistence_cmd->add_option("--run", an_persist.run_id, "run id or directory")
        ->required();
    analyze_persistence_cmd->add_option("--probes", an_persist.probes,
                                        "JSON file of {prompt, package} probes")
        ->required();
    analyze_persistence_cmd->add_option("--endpoint", an_persist.endpoint, "endpoint name");
    analyze_persistence_cmd->add_option("--trials", an_persist.trials, "regenerations per probe");
    analyze_persistence_cmd->callback([&] {
        const Config& c = ctx.need_config();
        std::filesystem::path dir = run_dir(ctx, an_persist.run_id);
        RunLock lock(dir);
        RunStore store(dir);
        Gateway gateway = make_gateway(ctx);
        const ProviderEndpoint& ep = pick_endpoint(ctx, an_persist.endpoint);
        std::vector<PersistenceProbe> probes = load_probes(an_persist.probes);
        PersistenceReport report = persistence_experiment(
            probes, gateway, ep, c.code_params, c.query_params, an_persist.trials, &store);
        store.append_report("persistence", persistence_report_json(report));
        print_json(persistence_report_json(report));
    });

    struct {
        std::string run_id;
    } an_verb;
    auto* analyze_verbosity_cmd =
        analyze->add_subcommand("verbosity", "unique packages vs rate per model");
    analyze_verbosity_cmd->add_option("--run", an_verb.run_id, "run id or directory")->required();
    analyze_verbosity_cmd->callback([&] {
        RunStore store(run_dir(ctx, an_verb.run_id));
        VerbosityReport report = verbosity_report(store.load_verdicts());
        nlohmann::json rows = nlohmann::json::array();
        for (const auto& r : report.rows)
            rows.push_back({{"model", r.model},
                            {"unique_packages", r.unique_packages},
                            {"rate_percent", r.rate * 100.0}});
        nlohmann::json j = {{"models", rows}};
        if (report.pearson) j["pearson"] = *report.pearson;
        else j["pearson"] = nullptr;
        print_json(j);
    });

    struct {
        std::string run_id, hallucinated, valid, endpoint, language = "python";
    } an_detect;
    auto* analyze_detect_cmd =
        analyze->add_subcommand("detect", "ask the model to judge name validity");
    analyze_detect_cmd->add_option("--run", an_detect.run_id, "run id or directory")->required();
    analyze_detect_cmd
        ->add_option("--hallucinated", an_detect.hallucinated, "file of hallucinated names")
        ->required();
    analyze_detect_cmd->add_option("--valid", an_detect.valid, "file of valid names")->required();
    analyze_detect_cmd->add_option("--endpoint", an_detect.endpoint, "endpoint name");
    analyze_detect_cmd->add_option("--language", an_detect.language, "python|javascript");
    analyze_detect_cmd->callback([&] {
        const Config& c = ctx.need_config();
        std::filesystem::path dir = run_dir(ctx, an_detect.run_id);
        RunLock lock(dir);
        RunStore store(dir);
        Gateway gateway = make_gateway(ctx);
        const ProviderEndpoint& ep = pick_endpoint(ctx, an_detect.endpoint);
        SelfDetectionReport report = self_detection_experiment(
            gateway, ep, parse_language(an_detect.language),
            read_name_list(an_detect.hallucinated), read_name_list(an_detect.valid),
            c.query_params);
        store.append_report("self_detection", detection_report_json(report));
        nlohmann::json j = detection_report_json(report);
        if (report.accuracy()) j["accuracy"] = *report.accuracy();
        if (report.precision_hallucinated())
            j["precision_hallucinated"] = *report.precision_hallucinated();
        if (report.recall_hallucinated())
            j["recall_hallucinated"] = *report.recall_hallucinated();
        print_json(j);
    });

    struct {
        std::string run_id;
    } an_dist;
    auto* analyze_distance_cmd =
        analyze->add_subcommand("distance", "edit-distance histogram of hallucinations");
    analyze_distance_cmd->add_option("--run", an_dist.run_id, "run id or directory")->required();
    analyze_distance_cmd->callback([&] {
        RunStore store(run_dir(ctx, an_dist.run_id));
        DistanceHistogram h = distance_histogram(store.load_verdicts());
        std::vector<std::vector<std::string>> rows;
        auto row = [&](const char* bin, size_t n) {
            rows.push_back({bin, std::to_string(n), format_fixed(h.share(n) * 100.0, 4)});
        };
        row("1-2", h.d1_2);
        row("3-5", h.d3_5);
        row("6-9", h.d6_9);
        row("10+", h.d10_plus);
        print_table({"bin", "count", "share_percent"}, rows);
    });

    struct {
        std::string run_id;
    } an_overlap;
    auto* analyze_overlap_cmd =
        analyze->add_subcommand("overlap", "names shared across models");
    analyze_overlap_cmd->add_option("--run", an_overlap.run_id, "run id or directory")
        ->required();
    analyze_overlap_cmd->callback([&] {
        RunStore store(run_dir(ctx, an_overlap.run_id));
        OverlapReport o = cross_model_overlap(store.load_verdicts());
        std::vector<std::vector<std::string>> rows;
        for (size_t k = 1; k < o.hallucinated.size(); ++k)
            rows.push_back({std::to_string(k), std::to_string(o.hallucinated[k]),
                            std::to_string(o.valid[k])});
        print_table({"models", "hallucinated_names", "valid_names"}, rows);
    });

    struct {
        std::string run_id;
    } an_deleted;
    auto* analyze_deleted_cmd =
        analyze->add_subcommand("deleted", "hallucinations that were once real packages");
    analyze_deleted_cmd->add_option("--run", an_deleted.run_id, "run id or directory")
        ->required();
    analyze_deleted_cmd->callback([&] {
        const Config& c = ctx.need_config();
        if (c.deleted_ledger_path.empty())
            throw Error(Errc::config_error, "config has no deleted_ledger_path");
        DeletedPackageLedger ledger = load_ledger(c.deleted_ledger_path);
        RunStore store(run_dir(ctx, an_deleted.run_id));
        DeletedReport report = deleted_attribution(store.load_verdicts(), ledger);
        std::vector<std::vector<std::string>> rows;
        rows.push_back({ecosystem_name(ledger.ecosystem),
                        std::to_string(report.hallucinated_unique),
                        std::to_string(report.deleted_hits), rate_cell(report.share)});
        print_table({"ecosystem", "hallucinated_unique", "deleted_hits", "share_percent"}, rows);
    });

    struct {
        std::string run_id, primary = "pypi";
    } an_cross;
    auto* analyze_crosslang_cmd =
        analyze->add_subcommand("crosslang", "hallucinations valid in other ecosystems");
    analyze_crosslang_cmd->add_option("--run", an_cross.run_id, "run id or directory")
        ->required();
    analyze_crosslang_cmd->add_option("--primary", an_cross.primary, "primary ecosystem");
    analyze_crosslang_cmd->callback([&] {
        RunStore store(run_dir(ctx, an_cross.run_id));
        CrossLanguageReport report =
            cross_language_report(store.load_verdicts(), parse_ecosystem(an_cross.primary));
        std::vector<std::vector<std::string>> rows;
        for (const auto& r : report.rows)
            rows.push_back({ecosystem_name(r.ecosystem), std::to_string(r.hits),
                            format_fixed(r.share * 100.0, 4)});
        print_table({"ecosystem", "hits", "share_percent"}, rows);
    });

    struct {
        std::string run_id, axis = "temperature", values, endpoint, dataset_path;
        int trials = 1;
    } an_sweep;
    auto* analyze_sweep_cmd =
        analyze->add_subcommand("sweep", "rate across one sampling parameter");
    analyze_sweep_cmd->add_option("--run", an_sweep.run_id, "run id or directory")->required();
    analyze_sweep_cmd->add_option("--axis", an_sweep.axis,
                                  "temperature|top_p|top_k|min_p");
    analyze_sweep_cmd->add_option("--values", an_sweep.values, "comma-separated values")
        ->required();
    analyze_sweep_cmd->add_option("--endpoint", an_sweep.endpoint, "endpoint name");
    analyze_sweep_cmd->add_option("--dataset", an_sweep.dataset_path,
                                  "dataset file (defaults to config)");
    analyze_sweep_cmd->add_option("--trials", an_sweep.trials, "trials per prompt per value");
    analyze_sweep_cmd->callback([&] {
        const Config& c = ctx.need_config();
        std::string ds_path =
            an_sweep.dataset_path.empty() ? c.dataset_path : an_sweep.dataset_path;
        if (ds_path.empty())
            throw Error(Errc::config_error, "no dataset: set dataset_path or pass --dataset");
        PromptDataset ds = load_dataset(ds_path);
        std::filesystem::path dir = run_dir(ctx, an_sweep.run_id);
        RunLock lock(dir);
        RunStore store(dir);
        Gateway gateway = make_gateway(ctx);
        const ProviderEndpoint& ep = pick_endpoint(ctx, an_sweep.endpoint);
        LoadedSnapshots snaps = load_config_snapshots(ctx);
        Classifier classifier(snaps.by_ecosystem, snaps.ledger.get());
        SweepAxis axis = parse_sweep_axis(an_sweep.axis);
        std::vector<SweepPoint> points = parameter_sweep(
            ds, gateway, ep, c.code_params, c.query_params, axis,
            parse_values_list(an_sweep.values), an_sweep.trials, classifier, &store);
        store.append_report("sweep", sweep_report_json(axis, points));
        std::vector<std::vector<std::string>> rows;
        for (const auto& p : points)
            rows.push_back({format_fixed(p.value, 4), std::to_string(p.hallucinated),
                            std::to_string(p.total),
                            p.rate ? format_fixed(*p.rate, 4) : ""});
        print_table({an_sweep.axis, "hallucinated", "total", "rate_percent"}, rows);
    });

    struct {
        std::string run_id;
    } an_recency;
    auto* analyze_recency_cmd =
        analyze->add_subcommand("recency", "recent vs all-time rates per model");
    analyze_recency_cmd->add_option("--run", an_recency.run_id, "run id or directory")
        ->required();
    analyze_recency_cmd->callback([&] {
        RunStore store(run_dir(ctx, an_recency.run_id));
        std::vector<std::vector<std::string>> rows;
        for (const auto& r : recency_comparison(store.load_verdicts()))
            rows.push_back({r.model, rate_cell(r.recent_rate), rate_cell(r.all_time_rate),
                            r.delta_pp ? format_fixed(*r.delta_pp, 4) : ""});
        print_table({"model", "recent_rate_percent", "all_time_rate_percent", "delta_pp"}, rows);
    });

    // ---------------- mitigate ----------------
    auto* mitigate = app.add_subcommand("mitigate", "mitigation pipelines");
    mitigate->require_subcommand(1);

    struct {
        std::string descriptions, endpoint, out, snapshot_ecosystem = "pypi",
                    language = "python";
        size_t questions = 5;
        size_t dim = 256;
    } mit_kb;
    auto* mitigate_buildkb_cmd =
        mitigate->add_subcommand("build-kb", "build the retrieval knowledge base");
    mitigate_buildkb_cmd
        ->add_option("--descriptions", mit_kb.descriptions, "CSV with package,description")
        ->required();
    mitigate_buildkb_cmd->add_option("--endpoint", mit_kb.endpoint, "endpoint name");
    mitigate_buildkb_cmd->add_option("--out", mit_kb.out, "knowledge base output path")
        ->required();
    mitigate_buildkb_cmd->add_option("--ecosystem", mit_kb.snapshot_ecosystem,
                                     "snapshot ecosystem for membership checks");
    mitigate_buildkb_cmd->add_option("--language", mit_kb.language, "python|javascript");
    mitigate_buildkb_cmd->add_option("--questions", mit_kb.questions, "questions per package");
    mitigate_buildkb_cmd->add_option("--dim", mit_kb.dim, "embedding dimension");
    mitigate_buildkb_cmd->callback([&] {
        const Config& c = ctx.need_config();
        Gateway gateway = make_gateway(ctx);
        const ProviderEndpoint& ep = pick_endpoint(ctx, mit_kb.endpoint);
        LoadedSnapshots snaps = load_config_snapshots(ctx);
        Ecosystem eco = parse_ecosystem(mit_kb.snapshot_ecosystem);
        auto it = snaps.by_ecosystem.find(eco);
        if (it == snaps.by_ecosystem.end())
            throw Error(Errc::config_error,
                        "config has no snapshot for " + mit_kb.snapshot_ecosystem);
        LexicalEmbedder embedder(mit_kb.dim);
        KbBuildReport report;
        RetrievalStore store = build_knowledge_base(
            load_descriptions(mit_kb.descriptions), gateway, ep,
            parse_language(mit_kb.language), *it->second, embedder, mit_kb.questions, &report,
            c.prompt_params);
        save_knowledge_base(store, mit_kb.out);
        print_json({{"packages_requested", report.packages_requested},
                    {"packages_skipped", report.packages_skipped},
                    {"packages_failed", report.packages_failed},
                    {"statements", report.statements},
                    {"duplicates_collapsed", report.duplicates_collapsed},
                    {"out", mit_kb.out}});
    });

    struct {
        std::string run_id, endpoint, dataset_path, policies = "baseline,rag,self_refine,ensemble",
                    kb_path;
        size_t k = 5;
        int max_iterations = 5;
        int trials = 1;
    } mit_eval;
    auto* mitigate_eval_cmd = mitigate->add_subcommand("eval", "compare mitigation policies");
    mitigate_eval_cmd->add_option("--run", mit_eval.run_id, "run id or directory")->required();
    mitigate_eval_cmd->add_option("--endpoint", mit_eval.endpoint, "endpoint name");
    mitigate_eval_cmd->add_option("--dataset", mit_eval.dataset_path,
                                  "dataset file (defaults to config)");
    mitigate_eval_cmd->add_option("--policies", mit_eval.policies,
                                  "comma list of baseline|rag|self_refine|ensemble");
    mitigate_eval_cmd->add_option("--kb", mit_eval.kb_path,
                                  "knowledge base file (defaults to config)");
    mitigate_eval_cmd->add_option("--k", mit_eval.k, "RAG retrieval depth");
    mitigate_eval_cmd->add_option("--max-iterations", mit_eval.max_iterations,
                                  "refinement iteration cap");
    mitigate_eval_cmd->add_option("--trials", mit_eval.trials, "trials per prompt");
    mitigate_eval_cmd->callback([&] {
        const Config& c = ctx.need_config();
        std::string ds_path =
            mit_eval.dataset_path.empty() ? c.dataset_path : mit_eval.dataset_path;
        if (ds_path.empty())
            throw Error(Errc::config_error, "no dataset: set dataset_path or pass --dataset");
        PromptDataset ds = load_dataset(ds_path);

        std::vector<PolicySpec> specs;
        for (const auto& piece : split(mit_eval.policies, ',')) {
            std::string name = trim(piece);
            if (name.empty()) continue;
            PolicySpec spec;
            spec.policy = parse_policy(name);
            spec.k = mit_eval.k;
            spec.max_iterations = mit_eval.max_iterations;
            specs.push_back(spec);
        }
        if (specs.empty()) throw Error(Errc::usage_error, "--policies is empty");

        std::string kb_path =
            mit_eval.kb_path.empty() ? c.knowledge_base_path : mit_eval.kb_path;
        std::optional<RetrievalStore> kb;
        bool needs_kb = false;
        for (const auto& s : specs)
            if ((s.policy == MitigationPolicy::rag || s.policy == MitigationPolicy::ensemble) &&
                s.k > 0)
                needs_kb = true;
        if (needs_kb) {
            if (kb_path.empty())
                throw Error(Errc::config_error,
                            "rag/ensemble with k > 0 needs a knowledge base (--kb)");
            kb = load_knowledge_base(kb_path);
        }

        std::filesystem::path dir = run_dir(ctx, mit_eval.run_id);
        RunLock lock(dir);
        RunStore store(dir);
        Gateway gateway = make_gateway(ctx);
        const ProviderEndpoint& ep = pick_endpoint(ctx, mit_eval.endpoint);
        LoadedSnapshots snaps = load_config_snapshots(ctx);
        Classifier classifier(snaps.by_ecosystem, snaps.ledger.get());
        LexicalEmbedder embedder(kb ? kb->dimension() : 256);

        MitigationEvaluation evaluation = evaluate_mitigation(
            ds, gateway, ep, c.code_params, c.query_params, kb ? &*kb : nullptr, embedder,
            specs, mit_eval.trials, classifier, &store);

        std::vector<std::vector<std::string>> rows;
        for (const auto& pe : evaluation.policies)
            rows.push_back({policy_name(pe.policy), std::to_string(pe.report.hallucinated),
                            std::to_string(pe.report.total), rate_cell(pe.report.rate),
                            std::to_string(pe.failures)});
        print_table({"policy", "hallucinated", "total", "rate_percent", "failures"}, rows);
        if (!evaluation.fairness_ok)
            throw Error(Errc::sample_mismatch,
                        "policies consumed different (prompt, trial) pairs");
    });

    // ---------------- report ----------------
    auto* report = app.add_subcommand("report", "emit tables and plot series");
    report->require_subcommand(1);

    struct {
        std::string run_id;
    } rep_emit;
    auto* report_emit_cmd = report->add_subcommand("emit", "write all reports for a run");
    report_emit_cmd->add_option("--run", rep_emit.run_id, "run id or directory")->required();
    report_emit_cmd->callback([&] {
        RunStore store(run_dir(ctx, rep_emit.run_id));
        EmitResult result = emit_reports(store);
        print_json({{"reports_dir", store.reports_dir().string()}, {"files", result.files}});
    });

    // ---------------- parse & dispatch ----------------
    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    } catch (const Error& e) {
        nlohmann::json err = {{"error", errc_name(e.code())}, {"message", e.what()}};
        std::cerr << err.dump() << "\n";
        switch (e.code()) {
        case Errc::usage_error: return 2;
        case Errc::config_error: return 3;
        default: return 1;
        }
    } catch (const std::exception& e) {
        nlohmann::json err = {{"error", "internal"}, {"message", e.what()}};
        std::cerr << err.dump() << "\n";
        return 1;
    }
    return 0;
}
