#pragma once

#include <synrev/datasets.hpp>
#include <synrev/llm.hpp>

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace synrev {

struct MiningConfig {
    std::string host = "github";  // "github" or "fixture"
    std::filesystem::path fixture_path;
    std::string api_base = "https://api.github.com";
    std::string token_env = "GITHUB_TOKEN";
    std::string language = "Java";
    std::uint64_t min_prs = 50;
    std::optional<std::uint32_t> page_limit;
    std::vector<std::string> search_slices{""};
    bool include_forks = false;
    std::size_t workers = 4;
    double requests_per_minute = 60;
    std::uint32_t max_retries = 3;
    std::optional<std::size_t> max_repos;
};

struct FiltersConfig {
    std::uint64_t diff_cap_bytes = 1 << 20;
    std::string extension = ".java";
    std::string test_substring = "test";
    bool test_case_insensitive = true;
};

struct KeywordsConfig {
    std::filesystem::path seed_list;
    double confidence = 0.95;
    double margin = 0.05;
    double retention_threshold = 0.75;
};

struct GridConfig {
    std::size_t sample_size = 100;
    std::vector<std::string> providers;   // empty: every configured provider
    std::vector<std::string> strategies;  // empty: all three
    std::size_t workers = 4;
};

struct ExternalConfig {
    std::filesystem::path partition_path;
    std::string partition_name = "test";
    datasets::ColumnMapping columns;
};

struct SeedsConfig {
    std::uint64_t keyword_sample = 1;
    std::uint64_t grid_sample = 2;
    std::uint64_t annotation = 3;
};

/// The declarative pipeline config. Relative paths resolve against the config
/// file's directory. Unknown keys and bad values are ConfigErrors, raised
/// before any stage runs.
struct PipelineConfig {
    std::filesystem::path base_dir;
    std::filesystem::path output_dir = "out";
    MiningConfig mining;
    FiltersConfig filters;
    KeywordsConfig keywords;
    std::vector<llm::ProviderConfig> providers;
    std::optional<std::filesystem::path> templates_dir;
    GridConfig grid;
    ExternalConfig external;
    SeedsConfig seeds;

    static PipelineConfig from_json(const json& j, const std::filesystem::path& base_dir);
    static PipelineConfig load(const std::filesystem::path& path);
    void validate() const;
    /// Effective configuration after defaulting, paths resolved.
    json to_json() const;

    std::filesystem::path resolve(const std::filesystem::path& p) const;
    std::vector<std::string> grid_providers() const;
    std::vector<std::string> grid_strategies() const;
};

} // namespace synrev
