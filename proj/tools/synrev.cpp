// synrev: command-line entry point for the mining, filtering, generation and
// evaluation stages. Run `synrev --help` for the command list.

#include <synrev/annotation_server.hpp>
#include <synrev/error.hpp>
#include <synrev/pipeline.hpp>

#include <CLI11.hpp>
#include <fmt/format.h>

#include <csignal>
#include <cstdio>
#include <iostream>
#include <optional>

using namespace synrev;

namespace {

annotation::Server* g_server = nullptr;

void on_signal(int)
{
    if (g_server)
        g_server->stop();
}

void print(const json& summary, bool as_json)
{
    if (as_json) {
        std::cout << summary.dump(2, ' ', false, json::error_handler_t::replace) << "\n";
        return;
    }
    if (summary.contains("table") && summary.at("table").is_string()) {
        std::cout << summary.at("table").get<std::string>();
        return;
    }
    for (auto it = summary.begin(); it != summary.end(); ++it) {
        if (it->is_object() || it->is_array())
            std::cout << it.key() << ": " << it->dump() << "\n";
        else if (it->is_string())
            std::cout << it.key() << ": " << it->get<std::string>() << "\n";
        else
            std::cout << it.key() << ": " << it->dump() << "\n";
    }
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Mine vulnerability-fixing commits and synthesize review comments for them"};
    app.require_subcommand(1);

    std::string config_path = "synrev.json";
    bool as_json = false;
    bool verbose = false;
    std::string fixed_clock;
    app.fallthrough();
    app.add_option("-c,--config", config_path, "Pipeline config file (JSON)")->capture_default_str();
    app.add_flag("--json", as_json, "Print a machine-readable JSON summary");
    app.add_flag("-v,--verbose", verbose, "Print the effective configuration first");
    app.add_option("--fixed-clock", fixed_clock, "Use this UTC timestamp for every record (reproducible runs)");

    auto* mine = app.add_subcommand("mine", "Discover repositories and harvest commits and diffs");
    auto* filter = app.add_subcommand("filter", "Apply candidacy rules and keyword filtering");

    auto* kw = app.add_subcommand("keywords", "Keyword sampling and refinement");
    kw->require_subcommand(1);
    int kw_round = 1;
    std::string labels_path;
    auto* kw_sample = kw->add_subcommand("sample", "Draw the labeling sample for a refinement round");
    kw_sample->add_option("--round", kw_round, "Refinement round (1 or 2)")->capture_default_str();
    auto* kw_refine = kw->add_subcommand("refine", "Update keyword precision from exported labels");
    kw_refine->add_option("--round", kw_round, "Refinement round (1 or 2)")->capture_default_str();
    kw_refine->add_option("--labels", labels_path, "Label export (JSONL)")->required();

    auto* ann = app.add_subcommand("annotate", "Double-annotation sessions");
    ann->require_subcommand(1);
    std::string host = "127.0.0.1";
    int port = 8080;
    std::string static_dir;
    auto* serve = ann->add_subcommand("serve", "Serve the annotation API under /api/v1");
    serve->add_option("--host", host, "Bind address")->capture_default_str();
    serve->add_option("--port", port, "Port (0 picks a free one)")->capture_default_str();
    serve->add_option("--static", static_dir, "Directory of UI assets to serve at /");
    pipeline::AnnotateRequest areq;
    std::string predictions_path;
    std::string adjudicator;
    auto* create = ann->add_subcommand("create", "Create a session from a stage's output");
    create->add_option("--kind", areq.kind, "keyword_commit | review_suitability | external_vetting | final_evaluation")
        ->required();
    create->add_option("--annotators", areq.annotators, "The two annotator ids")->required()->expected(2);
    create->add_option("--adjudicator", adjudicator, "Adjudicator id");
    create->add_option("--round", areq.round, "Keyword round for keyword_commit sessions")->capture_default_str();
    create->add_option("--predictions", predictions_path, "Model outputs for final_evaluation sessions");
    create->add_option("--rubric-version", areq.rubric_version)->capture_default_str();

    auto* grid = app.add_subcommand("grid", "Provider x strategy grid");
    grid->require_subcommand(1);
    std::optional<std::size_t> stop_after;
    auto* grid_run = grid->add_subcommand("run", "Generate one review per (commit, provider, strategy) cell");
    grid_run->add_option("--stop-after", stop_after, "Abort after this many new cells, as a crash would");
    auto* grid_select = grid->add_subcommand("select", "Pick the winning combination from suitability labels");
    grid_select->add_option("--labels", labels_path, "Label export (JSONL)")->required();

    auto* ds = app.add_subcommand("dataset", "Synthetic dataset");
    ds->require_subcommand(1);
    auto* ds_build = ds->add_subcommand("build", "Generate the dataset with the winning combination");

    auto* ext = app.add_subcommand("external", "External test partitions");
    ext->require_subcommand(1);
    std::string keywords_override;
    auto* ext_filter = ext->add_subcommand("filter", "Flag review comments that match retained keywords");
    ext_filter->add_option("--keywords", keywords_override, "Keyword list to use instead of the refined one");

    std::string vetting_path;
    auto* evaluate = app.add_subcommand("evaluate", "Score model outputs against the flagged samples");
    evaluate->add_option("--predictions", predictions_path, "JSONL of {ref, review}")->required();
    evaluate->add_option("--labels", labels_path, "final_evaluation label export")->required();
    evaluate->add_option("--vetting", vetting_path, "external_vetting export; keeps confirmed samples only");

    auto* report = app.add_subcommand("report", "Summarize every stage that has run");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int rc = app.exit(e);
        return rc == 0 ? 0 : exit_code(ErrorCode::ConfigError);
    }

    try {
        auto config = PipelineConfig::load(config_path);
        pipeline::RunOptions opts;
        if (!fixed_clock.empty())
            opts.clock = std::make_shared<FixedClock>(fixed_clock);
        if (verbose)
            std::cerr << config.to_json().dump(2) << "\n";
        pipeline::Pipeline p(config, opts);

        if (serve->parsed()) {
            annotation::SessionStore store(p.sessions_dir(), opts.clock);
            std::optional<std::filesystem::path> assets;
            if (!static_dir.empty())
                assets = static_dir;
            annotation::Server server(store, assets);
            int bound = port;
            if (port == 0)
                bound = server.bind_any_port(host);
            else if (!server.bind(host, port))
                bound = -1;
            if (bound < 0)
                throw Error(ErrorCode::IoError, fmt::format("cannot bind {}:{}", host, port));
            g_server = &server;
            std::signal(SIGINT, on_signal);
            std::signal(SIGTERM, on_signal);
            std::cout << fmt::format("listening on http://{}:{}/api/v1", host, bound) << std::endl;
            server.run();
            g_server = nullptr;
            return 0;
        }
        if (report->parsed()) {
            print(p.report(), as_json);
            return 0;
        }

        pipeline::OutputLock lock(p.out(""));
        json summary;
        if (mine->parsed())
            summary = p.mine();
        else if (filter->parsed())
            summary = p.filter();
        else if (kw_sample->parsed())
            summary = p.keywords_sample(kw_round);
        else if (kw_refine->parsed())
            summary = p.keywords_refine(kw_round, labels_path);
        else if (create->parsed()) {
            if (!adjudicator.empty())
                areq.adjudicator = adjudicator;
            if (!predictions_path.empty())
                areq.predictions = predictions_path;
            summary = p.annotate_create(areq);
        } else if (grid_run->parsed()) {
            summary = p.grid_run(stop_after);
            if (stop_after) {
                // leave the output directory as a killed process would: no manifest, lock in place
                std::fflush(nullptr);
                std::_Exit(137);
            }
        } else if (grid_select->parsed())
            summary = p.grid_select(labels_path);
        else if (ds_build->parsed())
            summary = p.dataset_build();
        else if (ext_filter->parsed()) {
            std::optional<std::filesystem::path> over;
            if (!keywords_override.empty())
                over = keywords_override;
            summary = p.external_filter(over);
        } else if (evaluate->parsed()) {
            std::optional<std::filesystem::path> vet;
            if (!vetting_path.empty())
                vet = vetting_path;
            summary = p.evaluate(predictions_path, labels_path, vet);
        }
        print(summary, as_json);
        return 0;
    } catch (const Error& e) {
        if (as_json)
            std::cout << json{{"error", to_string(e.code())}, {"message", e.what()}}.dump() << "\n";
        std::cerr << "synrev: " << e.what() << "\n";
        return exit_code(e.code());
    } catch (const std::exception& e) {
        std::cerr << "synrev: internal error: " << e.what() << "\n";
        return 1;
    }
}
