#include <synrev/error.hpp>
#include <synrev/orchestrator.hpp>

#include <fmt/format.h>

#include <algorithm>
#include <atomic>
#include <thread>

namespace synrev::orchestrator {

namespace {

/// Runs fn(i) for i in [0, n) on up to `workers` threads.
template <typename F>
void parallel_for(std::size_t n, std::size_t workers, F fn)
{
    workers = std::max<std::size_t>(1, std::min(workers, n));
    std::atomic<std::size_t> next{0};
    auto loop = [&] {
        for (std::size_t i = next++; i < n; i = next++)
            fn(i);
    };
    if (workers == 1) {
        loop();
        return;
    }
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w)
        pool.emplace_back(loop);
}

std::optional<llm::GenerationResult> load_result(const std::filesystem::path& path)
{
    if (!std::filesystem::exists(path))
        return std::nullopt;
    auto j = json::parse(read_file(path), nullptr, false);
    if (j.is_discarded())
        return std::nullopt;
    try {
        return llm::GenerationResult::from_json(j);
    } catch (const Error&) {
        return std::nullopt;
    }
}

std::string result_text(const llm::GenerationResult& r)
{
    return r.to_json().dump(2, ' ', false, json::error_handler_t::replace) + "\n";
}

} // namespace

std::string cell_id(std::string_view provider_id, std::string_view strategy, std::string_view sha)
{
    return fmt::format("{}__{}__{}", provider_id, strategy, sha);
}

std::filesystem::path result_path(const std::filesystem::path& results_dir, std::string_view id)
{
    return results_dir / (std::string(id) + ".json");
}

json GridManifest::to_json() const
{
    json cells_j = json::array();
    for (const auto& c : cells) {
        json cj{{"cell_id", c.cell_id}, {"provider_id", c.provider_id}, {"strategy", c.strategy},
                {"repo", c.repo},       {"sha", c.sha},                 {"ok", c.ok}};
        if (!c.ok)
            cj["error"] = {{"code", c.error_code}, {"message", c.error_message}};
        cells_j.push_back(std::move(cj));
    }
    return json{{"seed", seed},
                {"expected_cells", expected_cells},
                {"completed", completed},
                {"failed", failed},
                {"resumed", resumed},
                {"cells", cells_j}};
}

GridManifest GridManifest::from_json(const json& j)
{
    try {
        GridManifest m;
        m.seed = j.at("seed").get<std::uint64_t>();
        m.expected_cells = j.at("expected_cells").get<std::size_t>();
        m.completed = j.at("completed").get<std::size_t>();
        m.failed = j.at("failed").get<std::size_t>();
        m.resumed = j.at("resumed").get<std::size_t>();
        for (const auto& cj : j.at("cells")) {
            CellStatus c;
            c.cell_id = cj.at("cell_id").get<std::string>();
            c.provider_id = cj.at("provider_id").get<std::string>();
            c.strategy = cj.at("strategy").get<std::string>();
            c.repo = cj.at("repo").get<std::string>();
            c.sha = cj.at("sha").get<std::string>();
            c.ok = cj.at("ok").get<bool>();
            if (cj.contains("error")) {
                c.error_code = cj.at("error").at("code").get<std::string>();
                c.error_message = cj.at("error").at("message").get<std::string>();
            }
            m.cells.push_back(std::move(c));
        }
        return m;
    } catch (const json::exception& e) {
        throw Error(ErrorCode::SchemaError, std::string("grid manifest: ") + e.what());
    }
}

GridOutcome run_grid(const GridSpec& spec, llm::Gateway& gateway, const prompts::TemplateSet& templates,
                     const GridOptions& options)
{
    for (const auto& p : spec.providers)
        gateway.config(p);  // UnknownProvider before any work
    for (const auto& s : spec.strategies)
        prompts::strategy_from_string(s);
    std::filesystem::create_directories(options.results_dir);
    remove_stale_temporaries(options.results_dir);  // from a run killed mid-write

    GridManifest manifest;
    manifest.seed = spec.seed;
    manifest.expected_cells = spec.expected_cells();
    struct Cell {
        const CommitWithDiff* commit;
        std::string provider;
        std::string strategy;
    };
    std::vector<Cell> cells;
    cells.reserve(manifest.expected_cells);
    for (const auto& c : spec.commits)
        for (const auto& p : spec.providers)
            for (const auto& s : spec.strategies) {
                cells.push_back({&c, p, s});
                manifest.cells.push_back({cell_id(p, s, c.commit.sha), p, s, c.commit.repo_ref, c.commit.sha, false, {}, {}});
            }

    std::vector<std::optional<llm::GenerationResult>> results(cells.size());
    std::vector<char> resumed(cells.size(), 0);
    std::atomic<std::size_t> started{0};

    parallel_for(cells.size(), options.workers, [&](std::size_t i) {
        const auto& cell = cells[i];
        auto& status = manifest.cells[i];
        auto path = result_path(options.results_dir, status.cell_id);
        if (auto done = load_result(path)) {
            results[i] = std::move(done);
            resumed[i] = 1;
            status.ok = true;
            return;
        }
        if (options.max_new_cells && started++ >= *options.max_new_cells) {
            status.error_code = "Interrupted";
            status.error_message = "run stopped before this cell";
            return;
        }
        try {
            const auto strategy = prompts::strategy_from_string(cell.strategy);
            const auto& tmpl = templates.get(strategy);
            llm::GenerationRequest req;
            req.provider_id = cell.provider;
            req.plan = prompts::plan(tmpl, cell.commit->diff, cell.commit->commit.message);
            req.commit_ref = {cell.commit->commit.repo_ref, cell.commit->commit.sha};
            req.strategy = cell.strategy;
            req.template_version = tmpl.template_version();
            auto r = gateway.generate(req);
            // The cell file records the generation itself, whichever layer served it.
            r.from_cache = false;
            write_file_atomic(path, result_text(r));
            results[i] = std::move(r);
            status.ok = true;
        } catch (const Error& e) {
            status.error_code = std::string(to_string(e.code()));
            status.error_message = e.what();
        }
    });

    GridOutcome out;
    for (std::size_t i = 0; i < cells.size(); ++i) {
        if (resumed[i])
            ++manifest.resumed;
        if (results[i]) {
            ++manifest.completed;
            out.results.push_back(std::move(*results[i]));
        } else {
            ++manifest.failed;
        }
    }
    out.manifest = std::move(manifest);
    return out;
}

json ComboScore::to_json() const
{
    return json{{"provider_id", provider_id},
                {"strategy", strategy},
                {"suitable", suitable},
                {"total", total},
                {"rate", rate()},
                {"kappa", kappa ? json(*kappa) : json(nullptr)}};
}

json WinnerReport::to_json() const
{
    json r = json::array();
    for (const auto& c : ranking)
        r.push_back(c.to_json());
    return json{{"provider_id", provider_id}, {"strategy", strategy}, {"tie_break", tie_break}, {"ranking", r}};
}

std::map<std::string, CellLabels> cell_labels_from_export(std::span<const annotation::ExportedItem> items)
{
    std::map<std::string, CellLabels> out;
    for (const auto& it : items) {
        CellLabels l;
        if (it.final_label)
            l.final_verdict = it.final_label->verdict;
        if (auto a = it.labels.find(it.annotators[0]); a != it.labels.end())
            l.annotator_a = a->second.verdict;
        if (auto b = it.labels.find(it.annotators[1]); b != it.labels.end())
            l.annotator_b = b->second.verdict;
        out[it.ref] = l;
    }
    return out;
}

WinnerReport select_winner(std::span<const CellStatus> cells, const std::map<std::string, CellLabels>& labels)
{
    struct Acc {
        ComboScore score;
        std::vector<bool> a, b;
    };
    std::map<std::pair<std::string, std::string>, Acc> combos;
    std::size_t missing = 0;
    std::string first_missing;
    for (const auto& c : cells) {
        auto& acc = combos[{c.provider_id, c.strategy}];
        acc.score.provider_id = c.provider_id;
        acc.score.strategy = c.strategy;
        auto it = labels.find(c.cell_id);
        if (it == labels.end() || !it->second.final_verdict) {
            if (!missing++)
                first_missing = c.cell_id;
            continue;
        }
        ++acc.score.total;
        if (*it->second.final_verdict)
            ++acc.score.suitable;
        if (it->second.annotator_a && it->second.annotator_b) {
            acc.a.push_back(*it->second.annotator_a);
            acc.b.push_back(*it->second.annotator_b);
        }
    }
    if (missing)
        throw Error(ErrorCode::IncompleteLabels,
                    fmt::format("{} of {} cells have no final label (first: {})", missing, cells.size(), first_missing));
    if (combos.empty())
        throw Error(ErrorCode::IncompleteLabels, "no cells to rank");

    WinnerReport report;
    for (auto& [key, acc] : combos) {
        if (!acc.a.empty())
            acc.score.kappa = metrics::cohen_kappa(acc.a, acc.b).kappa;
        report.ranking.push_back(acc.score);
    }
    // rates compared by cross-multiplication so equal fractions tie exactly
    auto rate_cmp = [](const ComboScore& x, const ComboScore& y) {
        auto lhs = static_cast<unsigned __int128>(x.suitable) * y.total;
        auto rhs = static_cast<unsigned __int128>(y.suitable) * x.total;
        return lhs < rhs ? -1 : lhs > rhs ? 1 : 0;
    };
    auto kappa_of = [](const ComboScore& c) { return c.kappa.value_or(-2.0); };
    std::sort(report.ranking.begin(), report.ranking.end(), [&](const ComboScore& x, const ComboScore& y) {
        if (int r = rate_cmp(x, y))
            return r > 0;
        if (kappa_of(x) != kappa_of(y))
            return kappa_of(x) > kappa_of(y);
        if (x.provider_id != y.provider_id)
            return x.provider_id < y.provider_id;
        return x.strategy < y.strategy;
    });
    const auto& w = report.ranking.front();
    report.provider_id = w.provider_id;
    report.strategy = w.strategy;
    report.tie_break = "none";
    if (report.ranking.size() > 1) {
        const auto& r = report.ranking[1];
        if (rate_cmp(w, r) != 0)
            report.tie_break = "none";
        else if (kappa_of(w) != kappa_of(r))
            report.tie_break = "kappa";
        else if (w.provider_id != r.provider_id)
            report.tie_break = "provider_id";
        else
            report.tie_break = "strategy";
    }
    return report;
}

json RunReport::to_json() const
{
    json f = json::array();
    for (const auto& x : failures)
        f.push_back({{"repo", x.repo}, {"sha", x.sha}, {"error", x.error_code}, {"message", x.message}});
    return json{{"input_commits", input_commits},
                {"samples", samples},
                {"skipped_oversize", skipped_oversize},
                {"failure_count", failures.size()},
                {"failures", f}};
}

json Provenance::to_json() const
{
    return json{{"id", sample_id}, {"prompt_hash", prompt_hash}, {"model_name", model_name}};
}

BuildOutcome build_dataset(std::span<const CommitWithDiff> commits, llm::Gateway& gateway,
                           const prompts::TemplateSet& templates, const BuildOptions& options)
{
    gateway.config(options.provider_id);
    const auto strategy = prompts::strategy_from_string(options.strategy);
    const auto& tmpl = templates.get(strategy);
    const auto version = tmpl.template_version();

    struct Slot {
        std::optional<datasets::DatasetSample> sample;
        Provenance provenance;
        std::optional<BuildFailure> failure;
        bool oversize = false;
    };
    std::vector<Slot> slots(commits.size());

    parallel_for(commits.size(), options.workers, [&](std::size_t i) {
        const auto& c = commits[i];
        auto& slot = slots[i];
        auto fail = [&](std::string code, std::string msg) {
            slot.failure = BuildFailure{c.commit.repo_ref, c.commit.sha, std::move(code), std::move(msg)};
        };
        if (c.diff.size() > options.diff_cap_bytes) {
            slot.oversize = true;
            fail("DiffTooLarge", fmt::format("diff is {} bytes, cap is {}", c.diff.size(), options.diff_cap_bytes));
            return;
        }
        try {
            llm::GenerationRequest req;
            req.provider_id = options.provider_id;
            req.plan = prompts::plan(tmpl, c.diff, c.commit.message);
            req.commit_ref = {c.commit.repo_ref, c.commit.sha};
            req.strategy = options.strategy;
            req.template_version = version;
            auto r = gateway.generate(req);
            if (r.final_review.empty()) {
                fail("EmptyReview", "the provider returned an empty review");
                return;
            }
            datasets::DatasetSample s;
            s.repo = c.commit.repo_ref;
            s.sha = c.commit.sha;
            s.diff = c.diff;
            s.message = c.commit.message;
            s.synthetic_review = r.final_review;
            s.provider_id = options.provider_id;
            s.strategy = options.strategy;
            s.template_version = version;
            s.created_at = options.clock->now_utc();
            s.assign_id();
            s.validate();
            slot.provenance = {s.id, r.prompt_hash, r.model_name};
            slot.sample = std::move(s);
        } catch (const Error& e) {
            fail(std::string(to_string(e.code())), e.what());
        }
    });

    BuildOutcome out;
    out.report.input_commits = commits.size();
    for (auto& slot : slots) {
        if (slot.sample) {
            out.samples.push_back(std::move(*slot.sample));
            out.provenance.push_back(std::move(slot.provenance));
        } else {
            out.report.failures.push_back(std::move(*slot.failure));
            if (slot.oversize)
                ++out.report.skipped_oversize;
        }
    }
    out.report.samples = out.samples.size();
    return out;
}

} // namespace synrev::orchestrator
