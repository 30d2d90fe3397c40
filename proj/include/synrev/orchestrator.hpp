#pragma once

#include <synrev/annotation.hpp>
#include <synrev/datasets.hpp>
#include <synrev/llm.hpp>
#include <synrev/prompts.hpp>
#include <synrev/records.hpp>

#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace synrev::orchestrator {

struct GridSpec {
    std::vector<CommitWithDiff> commits;
    std::vector<std::string> providers;
    std::vector<std::string> strategies;
    std::uint64_t seed = 0;

    std::size_t expected_cells() const { return commits.size() * providers.size() * strategies.size(); }
};

/// "<provider>__<strategy>__<sha>"
std::string cell_id(std::string_view provider_id, std::string_view strategy, std::string_view sha);

struct CellStatus {
    std::string cell_id;
    std::string provider_id;
    std::string strategy;
    std::string repo;
    std::string sha;
    bool ok = false;
    std::string error_code;  // empty when ok
    std::string error_message;
};

struct GridManifest {
    std::uint64_t seed = 0;
    std::size_t expected_cells = 0;
    std::size_t completed = 0;
    std::size_t failed = 0;
    std::size_t resumed = 0;  // cells found on disk from an earlier run
    std::vector<CellStatus> cells;  // enumeration order

    json to_json() const;
    static GridManifest from_json(const json& j);
};

struct GridOptions {
    std::filesystem::path results_dir;
    std::size_t workers = 4;
    /// Stop after this many newly generated cells; simulates an interruption.
    std::optional<std::size_t> max_new_cells;
    std::shared_ptr<const Clock> clock = std::make_shared<SystemClock>();
};

struct GridOutcome {
    GridManifest manifest;
    std::vector<llm::GenerationResult> results;  // enumeration order, successful cells only
};

/// One result file per cell under results_dir. Cells whose file exists are
/// loaded, not regenerated, so a rerun after an interruption fills in only the
/// missing cells. Per-cell errors land in the manifest.
GridOutcome run_grid(const GridSpec& spec, llm::Gateway& gateway, const prompts::TemplateSet& templates,
                     const GridOptions& options);

std::filesystem::path result_path(const std::filesystem::path& results_dir, std::string_view cell_id);

struct ComboScore {
    std::string provider_id;
    std::string strategy;
    std::size_t suitable = 0;
    std::size_t total = 0;
    std::optional<double> kappa;  // between the two annotators on this combination

    double rate() const { return total ? static_cast<double>(suitable) / static_cast<double>(total) : 0.0; }
    json to_json() const;
};

struct WinnerReport {
    std::string provider_id;
    std::string strategy;
    /// "none", "kappa", "provider_id" or "strategy": the first key that separated
    /// the winner from the runner-up.
    std::string tie_break;
    std::vector<ComboScore> ranking;

    json to_json() const;
};

/// Per-cell labels keyed by cell id.
struct CellLabels {
    std::optional<bool> final_verdict;  // adjudicated, else agreed
    std::optional<bool> annotator_a;
    std::optional<bool> annotator_b;
};

std::map<std::string, CellLabels> cell_labels_from_export(std::span<const annotation::ExportedItem> items);

/// Combination precision is adjudicated-suitable cells over all cells of the
/// combination. Ties go to the higher inter-annotator kappa, then the smaller
/// provider id, then the smaller strategy id. Throws IncompleteLabels when any
/// cell lacks a final verdict.
WinnerReport select_winner(std::span<const CellStatus> cells, const std::map<std::string, CellLabels>& labels);

struct BuildFailure {
    std::string repo;
    std::string sha;
    std::string error_code;
    std::string message;
};

struct RunReport {
    std::size_t input_commits = 0;
    std::size_t samples = 0;
    std::size_t skipped_oversize = 0;
    std::vector<BuildFailure> failures;

    json to_json() const;
};

struct Provenance {
    std::string sample_id;
    std::string prompt_hash;
    std::string model_name;

    json to_json() const;
};

struct BuildOptions {
    std::string provider_id;
    std::string strategy;
    std::uint64_t diff_cap_bytes = 1 << 20;
    std::size_t workers = 4;
    std::shared_ptr<const Clock> clock = std::make_shared<SystemClock>();
};

struct BuildOutcome {
    std::vector<datasets::DatasetSample> samples;  // input order
    std::vector<Provenance> provenance;            // parallel to samples
    RunReport report;
};

/// Generates one sample per commit with the winning combination. Oversized
/// diffs and generation errors are reported, never dropped silently.
BuildOutcome build_dataset(std::span<const CommitWithDiff> commits, llm::Gateway& gateway,
                           const prompts::TemplateSet& templates, const BuildOptions& options);

} // namespace synrev::orchestrator
