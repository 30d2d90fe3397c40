#include "support.hpp"

#include <doctest.h>
#include <synrev/orchestrator.hpp>

#include <set>

using namespace synrev;
using namespace synrev::orchestrator;
using testsupport::error_of;
using testsupport::TempDir;

namespace {

std::shared_ptr<const Clock> fixed_clock()
{
    return std::make_shared<FixedClock>("2024-05-01T00:00:00Z");
}

void register_mocks(llm::Gateway& g, std::size_t n)
{
    for (std::size_t i = 0; i < n; ++i) {
        llm::ProviderConfig c;
        c.provider_id = "mock-" + std::string(1, static_cast<char>('a' + i));
        c.model_name = "mock-model-" + std::to_string(i);
        c.max_concurrency = 4;
        g.register_provider(c);
    }
}

GridSpec spec(std::size_t commits, std::size_t providers)
{
    GridSpec s;
    s.commits = testsupport::grid_commits(commits);
    for (std::size_t i = 0; i < providers; ++i)
        s.providers.push_back("mock-" + std::string(1, static_cast<char>('a' + i)));
    s.strategies = {"zero_shot", "chain_of_thought", "self_reflection"};
    s.seed = 7;
    return s;
}

std::map<std::string, std::string> dir_bytes(const std::filesystem::path& dir)
{
    std::map<std::string, std::string> out;
    for (const auto& e : std::filesystem::directory_iterator(dir))
        out[e.path().filename().string()] = read_file(e.path());
    return out;
}

// Fails every call whose prompt mentions a given marker.
class PickyProvider final : public llm::Provider {
public:
    llm::MockProvider inner;
    llm::ProviderReply complete(const llm::ProviderConfig& c, std::span<const llm::ChatMessage> conv,
                                const llm::CallContext& ctx) override
    {
        if (conv.front().content.find("String input3)") != std::string::npos)
            throw Error(ErrorCode::ProviderError, "refused");
        return inner.complete(c, conv, ctx);
    }
};

class BlankProvider final : public llm::Provider {
public:
    llm::ProviderReply complete(const llm::ProviderConfig&, std::span<const llm::ChatMessage>,
                                const llm::CallContext&) override
    {
        return {"   ", 1, 1};
    }
};

CellStatus cell(const std::string& p, const std::string& s, const std::string& sha)
{
    return {cell_id(p, s, sha), p, s, "o/r", sha, true, {}, {}};
}

} // namespace

TEST_SUITE("orchestrator")
{
    TEST_CASE("cell ids")
    {
        CHECK(cell_id("mock-a", "zero_shot", "abc") == "mock-a__zero_shot__abc");
    }

    TEST_CASE("grid enumerates every cell once, in order")
    {
        TempDir dir("grid");
        llm::GatewayOptions go;
        go.clock = fixed_clock();
        llm::Gateway g(go);
        register_mocks(g, 2);
        GridOptions opt;
        opt.results_dir = dir / "results";
        opt.clock = fixed_clock();
        auto s = spec(5, 2);
        auto out = run_grid(s, g, prompts::TemplateSet(), opt);
        CHECK(out.manifest.expected_cells == 30);
        CHECK(out.manifest.completed == 30);
        CHECK(out.manifest.failed == 0);
        CHECK(out.results.size() == 30);
        std::set<std::string> ids;
        for (const auto& c : out.manifest.cells)
            ids.insert(c.cell_id);
        CHECK(ids.size() == 30);
        CHECK(out.manifest.cells[0].provider_id == "mock-a");
        CHECK(out.manifest.cells[0].strategy == "zero_shot");
        CHECK(out.manifest.cells[1].strategy == "chain_of_thought");
        CHECK(out.manifest.cells[3].provider_id == "mock-b");
        CHECK(std::distance(std::filesystem::directory_iterator(dir / "results"), {}) == 30);
        for (const auto& r : out.results) {
            CHECK_FALSE(r.from_cache);
            CHECK(r.created_at == "2024-05-01T00:00:00Z");
        }
        auto m = GridManifest::from_json(out.manifest.to_json());
        CHECK(m.cells.size() == 30);
        CHECK(m.completed == 30);
    }

    TEST_CASE("interrupted grid resumes to the same bytes")
    {
        auto s = spec(6, 2);
        TempDir a("grid"), b("grid");
        {
            llm::GatewayOptions go;
            go.clock = fixed_clock();
            llm::Gateway g(go);
            register_mocks(g, 2);
            GridOptions opt;
            opt.results_dir = a / "results";
            opt.clock = fixed_clock();
            run_grid(s, g, prompts::TemplateSet(), opt);
        }
        {
            llm::GatewayOptions go;
            go.clock = fixed_clock();
            go.cache_dir = b / "cache";
            llm::Gateway g(go);
            register_mocks(g, 2);
            GridOptions opt;
            opt.results_dir = b / "results";
            opt.clock = fixed_clock();
            opt.max_new_cells = 13;
            auto partial = run_grid(s, g, prompts::TemplateSet(), opt);
            CHECK(partial.manifest.completed == 13);
            CHECK(partial.manifest.failed == 23);
        }
        // a write torn by the kill
        testsupport::write_text(b / "results/mock-a__zero_shot__x.json.tmp.4242", "{\"partial");
        {
            llm::GatewayOptions go;
            go.clock = fixed_clock();
            go.cache_dir = b / "cache";
            llm::Gateway g(go);
            register_mocks(g, 2);
            GridOptions opt;
            opt.results_dir = b / "results";
            opt.clock = fixed_clock();
            auto rest = run_grid(s, g, prompts::TemplateSet(), opt);
            CHECK(rest.manifest.resumed == 13);
            CHECK(rest.manifest.completed == 36);
        }
        CHECK(dir_bytes(a / "results") == dir_bytes(b / "results"));
    }

    TEST_CASE("per-cell failures are recorded, the rest proceeds")
    {
        TempDir dir("grid");
        llm::Gateway g;
        llm::ProviderConfig c;
        c.provider_id = "picky";
        c.max_retries = 0;
        g.register_provider(c, std::make_unique<PickyProvider>());
        GridSpec s = spec(5, 0);
        s.providers = {"picky"};
        GridOptions opt;
        opt.results_dir = dir / "results";
        auto out = run_grid(s, g, prompts::TemplateSet(), opt);
        CHECK(out.manifest.failed == 3);
        CHECK(out.manifest.completed == 12);
        for (const auto& st : out.manifest.cells)
            if (!st.ok)
                CHECK(st.error_code == "ProviderError");

        s.providers = {"ghost"};
        CHECK(error_of([&] { run_grid(s, g, prompts::TemplateSet(), opt); }) == ErrorCode::UnknownProvider);
    }

    TEST_CASE("winner by rate, then kappa, then ids")
    {
        std::vector<CellStatus> cells;
        std::map<std::string, CellLabels> labels;
        auto add = [&](const std::string& p, const std::string& s, int idx, bool fin, bool a, bool b) {
            auto c = cell(p, s, std::to_string(idx));
            labels[c.cell_id] = {fin, a, b};
            cells.push_back(c);
        };
        // p1/zero: 3 of 4
        add("p1", "zero_shot", 0, true, true, true);
        add("p1", "zero_shot", 1, true, true, true);
        add("p1", "zero_shot", 2, true, true, false);
        add("p1", "zero_shot", 3, false, false, false);
        // p2/cot: 2 of 4
        add("p2", "chain_of_thought", 0, true, true, true);
        add("p2", "chain_of_thought", 1, true, true, true);
        add("p2", "chain_of_thought", 2, false, false, false);
        add("p2", "chain_of_thought", 3, false, false, false);
        auto w = select_winner(cells, labels);
        CHECK(w.provider_id == "p1");
        CHECK(w.strategy == "zero_shot");
        CHECK(w.tie_break == "none");
        CHECK(w.ranking.size() == 2);
        CHECK(w.ranking[0].suitable == 3);

        // p3/sr: 3 of 4 with perfect agreement -> wins on kappa
        add("p3", "self_reflection", 0, true, true, true);
        add("p3", "self_reflection", 1, true, true, true);
        add("p3", "self_reflection", 2, true, true, true);
        add("p3", "self_reflection", 3, false, false, false);
        w = select_winner(cells, labels);
        CHECK(w.provider_id == "p3");
        CHECK(w.tie_break == "kappa");

        // identical twin of p3 under a smaller provider id
        add("p0", "self_reflection", 0, true, true, true);
        add("p0", "self_reflection", 1, true, true, true);
        add("p0", "self_reflection", 2, true, true, true);
        add("p0", "self_reflection", 3, false, false, false);
        w = select_winner(cells, labels);
        CHECK(w.provider_id == "p0");
        CHECK(w.tie_break == "provider_id");

        labels.erase(cells.front().cell_id);
        CHECK(error_of([&] { select_winner(cells, labels); }) == ErrorCode::IncompleteLabels);
    }

    TEST_CASE("strategy is the last tie-break")
    {
        std::vector<CellStatus> cells{cell("p", "zero_shot", "1"), cell("p", "chain_of_thought", "1")};
        std::map<std::string, CellLabels> labels{{cells[0].cell_id, {true, true, true}},
                                                 {cells[1].cell_id, {true, true, true}}};
        auto w = select_winner(cells, labels);
        CHECK(w.strategy == "chain_of_thought");
        CHECK(w.tie_break == "strategy");
    }

    TEST_CASE("dataset build reports oversize and empty reviews")
    {
        llm::GatewayOptions go;
        go.clock = fixed_clock();
        llm::Gateway g(go);
        register_mocks(g, 1);
        llm::ProviderConfig blank;
        blank.provider_id = "blank";
        g.register_provider(blank, std::make_unique<BlankProvider>());

        auto commits = testsupport::grid_commits(10);
        commits[4].diff += std::string(5000, 'x');
        BuildOptions opt;
        opt.provider_id = "mock-a";
        opt.strategy = "chain_of_thought";
        opt.diff_cap_bytes = 4096;
        opt.clock = fixed_clock();
        auto out = build_dataset(commits, g, prompts::TemplateSet(), opt);
        CHECK(out.samples.size() == 9);
        CHECK(out.provenance.size() == 9);
        CHECK(out.report.input_commits == 10);
        CHECK(out.report.skipped_oversize == 1);
        REQUIRE(out.report.failures.size() == 1);
        CHECK(out.report.failures[0].error_code == "DiffTooLarge");
        CHECK(out.report.failures[0].sha == commits[4].commit.sha);
        for (std::size_t i = 0; i < out.samples.size(); ++i) {
            CHECK_NOTHROW(out.samples[i].validate());
            CHECK(out.provenance[i].sample_id == out.samples[i].id);
            CHECK(out.provenance[i].prompt_hash.size() == 64);
            CHECK(out.samples[i].synthetic_review.find("Final review") == std::string::npos);
        }
        // input order kept
        CHECK(out.samples[4].sha == commits[5].commit.sha);

        opt.provider_id = "blank";
        auto empty = build_dataset(commits, g, prompts::TemplateSet(), opt);
        CHECK(empty.samples.empty());
        CHECK(empty.report.failures.size() == 10);
        CHECK(empty.report.failures[0].error_code == "EmptyReview");
    }
}
