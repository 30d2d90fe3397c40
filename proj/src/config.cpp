#include <synrev/config.hpp>
#include <synrev/error.hpp>
#include <synrev/prompts.hpp>

#include <set>

namespace synrev {

namespace {

class Section {
public:
    Section(const json& j, std::string name) : j_(j), name_(std::move(name))
    {
        if (!j_.is_object())
            throw Error(ErrorCode::ConfigError, name_ + " must be an object");
    }

    template <typename T>
    void get(const char* key, T& out)
    {
        seen_.insert(key);
        auto it = j_.find(key);
        if (it == j_.end() || it->is_null())
            return;
        try {
            out = it->get<T>();
        } catch (const json::exception&) {
            throw Error(ErrorCode::ConfigError, name_ + "." + key + " has the wrong type");
        }
    }

    template <typename T>
    void get(const char* key, std::optional<T>& out)
    {
        seen_.insert(key);
        auto it = j_.find(key);
        if (it == j_.end() || it->is_null())
            return;
        T v;
        get(key, v);
        out = v;
    }

    void path(const char* key, std::filesystem::path& out)
    {
        std::string s;
        get(key, s);
        if (!s.empty())
            out = s;
    }

    const json* sub(const char* key)
    {
        seen_.insert(key);
        auto it = j_.find(key);
        return it == j_.end() || it->is_null() ? nullptr : &*it;
    }

    void finish() const
    {
        for (auto it = j_.begin(); it != j_.end(); ++it)
            if (!seen_.count(it.key()))
                throw Error(ErrorCode::ConfigError, name_ + ": unknown key '" + it.key() + "'");
    }

private:
    const json& j_;
    std::string name_;
    std::set<std::string> seen_;
};

void require(bool ok, const std::string& why)
{
    if (!ok)
        throw Error(ErrorCode::ConfigError, why);
}

} // namespace

PipelineConfig PipelineConfig::from_json(const json& j, const std::filesystem::path& base_dir)
{
    PipelineConfig c;
    c.base_dir = base_dir;
    Section top(j, "config");
    top.path("output_dir", c.output_dir);
    if (auto m = top.sub("mining")) {
        Section s(*m, "mining");
        s.get("host", c.mining.host);
        s.path("fixture_path", c.mining.fixture_path);
        s.get("api_base", c.mining.api_base);
        s.get("token_env", c.mining.token_env);
        s.get("language", c.mining.language);
        s.get("min_prs", c.mining.min_prs);
        s.get("page_limit", c.mining.page_limit);
        s.get("search_slices", c.mining.search_slices);
        s.get("include_forks", c.mining.include_forks);
        s.get("workers", c.mining.workers);
        s.get("requests_per_minute", c.mining.requests_per_minute);
        s.get("max_retries", c.mining.max_retries);
        s.get("max_repos", c.mining.max_repos);
        s.finish();
    }
    if (auto f = top.sub("filters")) {
        Section s(*f, "filters");
        s.get("diff_cap_bytes", c.filters.diff_cap_bytes);
        s.get("extension", c.filters.extension);
        s.get("test_substring", c.filters.test_substring);
        s.get("test_case_insensitive", c.filters.test_case_insensitive);
        s.finish();
    }
    if (auto k = top.sub("keywords")) {
        Section s(*k, "keywords");
        s.path("seed_list", c.keywords.seed_list);
        s.get("confidence", c.keywords.confidence);
        s.get("margin", c.keywords.margin);
        s.get("retention_threshold", c.keywords.retention_threshold);
        s.finish();
    }
    if (auto p = top.sub("providers")) {
        require(p->is_array(), "providers must be an array");
        for (const auto& pj : *p)
            c.providers.push_back(llm::ProviderConfig::from_json(pj));
    }
    std::string templates;
    top.get("templates_dir", templates);
    if (!templates.empty())
        c.templates_dir = templates;
    if (auto g = top.sub("grid")) {
        Section s(*g, "grid");
        s.get("sample_size", c.grid.sample_size);
        s.get("providers", c.grid.providers);
        s.get("strategies", c.grid.strategies);
        s.get("workers", c.grid.workers);
        s.finish();
    }
    if (auto e = top.sub("external")) {
        Section s(*e, "external");
        s.path("partition_path", c.external.partition_path);
        s.get("partition_name", c.external.partition_name);
        if (auto cols = s.sub("columns"))
            c.external.columns = datasets::ColumnMapping::from_json(*cols);
        s.finish();
    }
    if (auto sd = top.sub("seeds")) {
        Section s(*sd, "seeds");
        s.get("keyword_sample", c.seeds.keyword_sample);
        s.get("grid_sample", c.seeds.grid_sample);
        s.get("annotation", c.seeds.annotation);
        s.finish();
    }
    top.finish();
    c.validate();
    return c;
}

PipelineConfig PipelineConfig::load(const std::filesystem::path& path)
{
    if (!std::filesystem::exists(path))
        throw Error(ErrorCode::ConfigError, "config file not found: " + path.string());
    auto j = json::parse(read_file(path), nullptr, false, true);
    if (j.is_discarded())
        throw Error(ErrorCode::ConfigError, "config file is not valid JSON: " + path.string());
    return from_json(j, std::filesystem::absolute(path).parent_path());
}

void PipelineConfig::validate() const
{
    require(mining.host == "github" || mining.host == "fixture", "mining.host must be 'github' or 'fixture'");
    require(mining.host != "fixture" || !mining.fixture_path.empty(), "mining.fixture_path is required for a fixture host");
    require(!mining.language.empty(), "mining.language is empty");
    require(mining.workers >= 1, "mining.workers must be >= 1");
    require(!mining.search_slices.empty(), "mining.search_slices must not be empty");
    require(filters.diff_cap_bytes > 0, "filters.diff_cap_bytes must be > 0");
    require(!filters.extension.empty(), "filters.extension is empty");
    require(keywords.confidence > 0 && keywords.confidence < 1, "keywords.confidence must be in (0, 1)");
    require(keywords.margin > 0 && keywords.margin < 1, "keywords.margin must be in (0, 1)");
    require(keywords.retention_threshold >= 0 && keywords.retention_threshold <= 1,
            "keywords.retention_threshold must be in [0, 1]");
    require(!keywords.seed_list.empty(), "keywords.seed_list is required");
    std::set<std::string> ids;
    for (const auto& p : providers)
        require(ids.insert(p.provider_id).second, "duplicate provider '" + p.provider_id + "'");
    for (const auto& p : grid.providers)
        require(ids.count(p), "grid.providers names unknown provider '" + p + "'");
    for (const auto& s : grid.strategies)
        prompts::strategy_from_string(s);
    require(grid.sample_size >= 1, "grid.sample_size must be >= 1");
    require(grid.workers >= 1, "grid.workers must be >= 1");
    require(!external.partition_name.empty(), "external.partition_name is empty");
}

std::filesystem::path PipelineConfig::resolve(const std::filesystem::path& p) const
{
    if (p.empty() || p.is_absolute())
        return p;
    return (base_dir / p).lexically_normal();
}

std::vector<std::string> PipelineConfig::grid_providers() const
{
    if (!grid.providers.empty())
        return grid.providers;
    std::vector<std::string> out;
    for (const auto& p : providers)
        out.push_back(p.provider_id);
    return out;
}

std::vector<std::string> PipelineConfig::grid_strategies() const
{
    if (!grid.strategies.empty())
        return grid.strategies;
    std::vector<std::string> out;
    for (auto s : prompts::list_strategies())
        out.emplace_back(prompts::to_string(s));
    return out;
}

json PipelineConfig::to_json() const
{
    auto opt = [](const auto& o) { return o ? json(*o) : json(nullptr); };
    json providers_j = json::array();
    for (const auto& p : providers)
        providers_j.push_back(p.to_json());
    return json{
        {"output_dir", resolve(output_dir).string()},
        {"mining",
         {{"host", mining.host},
          {"fixture_path", resolve(mining.fixture_path).string()},
          {"api_base", mining.api_base},
          {"token_env", mining.token_env},
          {"language", mining.language},
          {"min_prs", mining.min_prs},
          {"page_limit", opt(mining.page_limit)},
          {"search_slices", mining.search_slices},
          {"include_forks", mining.include_forks},
          {"workers", mining.workers},
          {"requests_per_minute", mining.requests_per_minute},
          {"max_retries", mining.max_retries},
          {"max_repos", opt(mining.max_repos)}}},
        {"filters",
         {{"diff_cap_bytes", filters.diff_cap_bytes},
          {"extension", filters.extension},
          {"test_substring", filters.test_substring},
          {"test_case_insensitive", filters.test_case_insensitive}}},
        {"keywords",
         {{"seed_list", resolve(keywords.seed_list).string()},
          {"confidence", keywords.confidence},
          {"margin", keywords.margin},
          {"retention_threshold", keywords.retention_threshold}}},
        {"providers", providers_j},
        {"templates_dir", templates_dir ? json(resolve(*templates_dir).string()) : json(nullptr)},
        {"grid",
         {{"sample_size", grid.sample_size},
          {"providers", grid_providers()},
          {"strategies", grid_strategies()},
          {"workers", grid.workers}}},
        {"external",
         {{"partition_path", resolve(external.partition_path).string()},
          {"partition_name", external.partition_name},
          {"columns", external.columns.to_json()}}},
        {"seeds",
         {{"keyword_sample", seeds.keyword_sample}, {"grid_sample", seeds.grid_sample}, {"annotation", seeds.annotation}}},
    };
}

} // namespace synrev
