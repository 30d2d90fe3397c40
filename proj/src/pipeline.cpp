#include <synrev/annotation.hpp>
#include <synrev/datasets.hpp>
#include <synrev/diffkit.hpp>
#include <synrev/error.hpp>
#include <synrev/kernels.hpp>
#include <synrev/keywords.hpp>
#include <synrev/metrics.hpp>
#include <synrev/mining.hpp>
#include <synrev/orchestrator.hpp>
#include <synrev/pipeline.hpp>

#include <fmt/format.h>

#include <algorithm>
#include <cerrno>
#include <csignal>
#include <cstdlib>
#include <fcntl.h>
#include <set>
#include <unistd.h>

namespace synrev::pipeline {

namespace fs = std::filesystem;

// --- hashing, manifests, lock ------------------------------------------------

std::string hash_path(const fs::path& p)
{
    if (!fs::exists(p))
        throw Error(ErrorCode::IntegrityError, "missing artifact " + p.string());
    if (!fs::is_directory(p))
        return sha256_hex(read_file(p));
    std::vector<std::string> rels;
    for (const auto& e : fs::recursive_directory_iterator(p))
        if (e.is_regular_file())
            rels.push_back(fs::relative(e.path(), p).generic_string());
    std::sort(rels.begin(), rels.end());
    Sha256 h;
    for (const auto& r : rels)
        h.field(r).field(sha256_hex(read_file(p / r)));
    return h.hex_digest();
}

json StageManifest::to_json() const
{
    return json{{"stage", stage}, {"created_at", created_at}, {"inputs", inputs}, {"outputs", outputs},
                {"summary", summary}};
}

StageManifest StageManifest::from_json(const json& j)
{
    try {
        StageManifest m;
        m.stage = j.at("stage").get<std::string>();
        m.created_at = j.at("created_at").get<std::string>();
        m.inputs = j.at("inputs").get<std::map<std::string, std::string>>();
        m.outputs = j.at("outputs").get<std::map<std::string, std::string>>();
        m.summary = j.at("summary");
        return m;
    } catch (const json::exception& e) {
        throw Error(ErrorCode::IntegrityError, std::string("unreadable stage manifest: ") + e.what());
    }
}

OutputLock::OutputLock(const fs::path& output_dir) : path_(output_dir / ".lock")
{
    fs::create_directories(output_dir);
    for (int attempt = 0; attempt < 2; ++attempt) {
        int fd = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
        if (fd >= 0) {
            auto pid = std::to_string(::getpid()) + "\n";
            [[maybe_unused]] auto n = ::write(fd, pid.data(), pid.size());
            ::close(fd);
            return;
        }
        if (errno != EEXIST)
            throw Error(ErrorCode::IoError, "cannot create lock " + path_.string());
        long holder = 0;
        try {
            holder = std::stol(trim(read_file(path_)));
        } catch (const std::exception&) {
        }
        if (holder > 0 && (::kill(static_cast<pid_t>(holder), 0) == 0 || errno == EPERM))
            throw Error(ErrorCode::LockHeld, fmt::format("{} is locked by process {}", output_dir.string(), holder));
        fs::remove(path_);  // stale: the holder is gone
    }
    throw Error(ErrorCode::LockHeld, "could not take " + path_.string());
}

OutputLock::~OutputLock()
{
    std::error_code ec;
    fs::remove(path_, ec);
}

// --- pipeline ----------------------------------------------------------------

struct Pipeline::SecurityCommit {
    CommitRecord commit;
    std::vector<std::string> matched_keywords;
};

namespace {

void ensure_file(const fs::path& p)
{
    if (!fs::exists(p))
        write_file_atomic(p, "");
}

std::string jsonl(const std::vector<json>& rows)
{
    std::string out;
    for (const auto& r : rows)
        out += r.dump(-1, ' ', false, json::error_handler_t::replace) + "\n";
    return out;
}

std::string pretty(const json& j)
{
    return j.dump(2, ' ', false, json::error_handler_t::replace) + "\n";
}

json read_json(const fs::path& p)
{
    auto j = json::parse(read_file(p), nullptr, false);
    if (j.is_discarded())
        throw Error(ErrorCode::SchemaError, "not JSON: " + p.string());
    return j;
}

void require_input(const fs::path& p, const std::string& what)
{
    if (!fs::exists(p))
        throw Error(ErrorCode::MissingStageInput, what + " not found: " + p.string());
}

constexpr std::string_view kNegativeStratum = "(no keyword)";

std::string ext_ref(std::size_t i)
{
    return fmt::format("ext-{:05}", i);
}

} // namespace

Pipeline::Pipeline(PipelineConfig config, RunOptions options)
    : config_(std::move(config)), options_(std::move(options)), out_(config_.resolve(config_.output_dir))
{
}

fs::path Pipeline::out(const fs::path& rel) const
{
    return out_ / rel;
}

StageManifest Pipeline::require_stage(const std::string& stage) const
{
    auto path = out("manifests/" + stage + ".json");
    if (!fs::exists(path))
        throw Error(ErrorCode::MissingStageInput, "stage '" + stage + "' has not run (no " + path.string() + ")");
    auto m = StageManifest::from_json(read_json(path));
    for (const auto& [rel, hash] : m.outputs) {
        if (!fs::exists(out(rel)))
            throw Error(ErrorCode::IntegrityError, "output of stage '" + stage + "' is missing: " + rel);
        if (hash_path(out(rel)) != hash)
            throw Error(ErrorCode::IntegrityError,
                        "output of stage '" + stage + "' changed since it ran: " + rel + " (rerun the stage)");
    }
    return m;
}

void Pipeline::write_manifest(const std::string& stage, const std::vector<std::string>& outputs,
                              const std::vector<const StageManifest*>& upstream, json summary)
{
    StageManifest m;
    m.stage = stage;
    m.created_at = options_.clock->now_utc();
    for (const auto* u : upstream)
        for (const auto& [rel, hash] : u->outputs)
            m.inputs[rel] = hash;
    for (const auto& rel : outputs)
        m.outputs[rel] = hash_path(out(rel));
    m.summary = std::move(summary);
    write_file_atomic(out("manifests/" + stage + ".json"), pretty(m.to_json()));
}

std::vector<std::string> Pipeline::keyword_list(std::string& version) const
{
    auto state_path = out("keywords/state.json");
    if (fs::exists(state_path)) {
        auto state = keywords::RefinementState::from_json(read_json(state_path));
        version = fmt::format("{}+r{}", state.seed_list_version, state.completed_rounds);
        return state.active();
    }
    auto seed_path = config_.resolve(config_.keywords.seed_list);
    require_input(seed_path, "keyword seed list");
    version = "seed-" + sha256_hex(read_file(seed_path)).substr(0, 12);
    return keywords::load_keyword_list(seed_path);
}

std::string Pipeline::diff_for(const CommitRecord& c) const
{
    mining::RecordStore store(out("mining"));
    auto d = store.diff(c.repo_ref, c.sha);
    if (!d)
        throw Error(ErrorCode::MissingStageInput, "no diff stored for " + c.repo_ref + "@" + c.sha);
    return *d;
}

std::vector<Pipeline::SecurityCommit> Pipeline::load_security() const
{
    std::vector<SecurityCommit> out_rows;
    datasets::for_each_jsonl(out("filter/security.jsonl"), [&](const json& j, std::size_t) {
        out_rows.push_back({commit_from_json(j.at("commit")), j.at("matched_keywords").get<std::vector<std::string>>()});
    });
    return out_rows;
}

json Pipeline::mine()
{
    const auto& mc = config_.mining;
    std::unique_ptr<mining::CodeHost> host;
    if (mc.host == "fixture") {
        host = std::make_unique<mining::FixtureHost>(mining::FixtureHost::load(config_.resolve(mc.fixture_path)));
    } else {
        mining::GitHubOptions gh;
        gh.api_base = mc.api_base;
        if (const char* tok = std::getenv(mc.token_env.c_str()))
            gh.token = tok;
        gh.requests_per_minute = mc.requests_per_minute;
        gh.max_retries = mc.max_retries;
        gh.sleep = options_.sleep;
        host = std::make_unique<mining::GitHubHost>(gh);
    }
    mining::RecordStore store(out("mining"));
    mining::MiningOptions mo;
    mo.discover.language = mc.language;
    mo.discover.min_pr_count = mc.min_prs;
    mo.discover.page_limit = mc.page_limit;
    mo.discover.slices = mc.search_slices;
    mo.discover.include_forks = mc.include_forks;
    mo.discover.max_repos = mc.max_repos;
    mo.workers = mc.workers;
    mo.diff_cap_bytes = config_.filters.diff_cap_bytes;
    mo.policy = {config_.filters.extension, config_.filters.test_substring, config_.filters.test_case_insensitive};
    auto report = mining::run_mining(*host, store, mo, *options_.clock);
    ensure_file(out("mining/repos.jsonl"));
    ensure_file(out("mining/commits.jsonl"));
    json summary = report.to_json();
    summary["host"] = host->host_id();
    write_manifest("mine", {"mining/repos.jsonl", "mining/commits.jsonl", "mining/diffs"}, {}, summary);
    return summary;
}

json Pipeline::filter()
{
    auto upstream = require_stage("mine");
    mining::RecordStore store(out("mining"));
    auto commits = store.commits();
    diffkit::CandidacyPolicy policy{config_.filters.extension, config_.filters.test_substring,
                                    config_.filters.test_case_insensitive};
    auto result = diffkit::filter_candidates(commits, policy);

    std::string version;
    auto kw = keyword_list(version);
    keywords::Matcher matcher(kw);
    std::vector<std::string> messages;
    for (const auto& c : result.accepted)
        messages.push_back(c.message);
    auto matches = kernels::match_batch(matcher, messages);

    std::vector<json> candidates, security;
    std::size_t missing_diff = 0;
    for (std::size_t i = 0; i < result.accepted.size(); ++i) {
        const auto& c = result.accepted[i];
        candidates.push_back(to_json(c));
        if (!fs::exists(store.diff_path(c.repo_ref, c.sha))) {
            ++missing_diff;
            continue;
        }
        if (!matches[i].empty())
            security.push_back({{"commit", to_json(c)}, {"matched_keywords", matches[i]}});
    }
    write_file_atomic(out("filter/candidates.jsonl"), jsonl(candidates));
    write_file_atomic(out("filter/security.jsonl"), jsonl(security));
    write_file_atomic(out("filter/funnel.json"), pretty(result.report.to_json()));
    json summary{{"funnel", result.report.to_json()},
                 {"input_commits", commits.size()},
                 {"candidates", result.accepted.size()},
                 {"missing_diff", missing_diff},
                 {"security_commits", security.size()},
                 {"keyword_count", kw.size()},
                 {"keyword_list_version", version}};
    write_manifest("filter", {"filter/candidates.jsonl", "filter/security.jsonl", "filter/funnel.json"}, {&upstream},
                   summary);
    return summary;
}

json Pipeline::keywords_sample(int round)
{
    auto upstream = require_stage("filter");
    keywords::RefinementState state;
    const bool have_state = fs::exists(out("keywords/state.json"));
    if (have_state)
        state = keywords::RefinementState::from_json(read_json(out("keywords/state.json")));
    if (round != state.completed_rounds + 1 || round < 1 || round > 2)
        throw Error(ErrorCode::RoundOrderViolation,
                    fmt::format("cannot sample round {} after {} completed round(s)", round, state.completed_rounds));

    std::string version;
    auto active = keyword_list(version);
    // keywords measured this round: the seed list first, then whatever is still a candidate
    std::vector<std::string> to_measure;
    if (!have_state) {
        to_measure = active;
    } else {
        for (const auto& e : state.entries)
            if (e.status == keywords::Status::Candidate)
                to_measure.push_back(e.text);
    }

    keywords::Matcher matcher(active);
    mining::RecordStore store(out("mining"));
    std::vector<CommitRecord> population;
    std::vector<std::vector<std::string>> matched;
    datasets::for_each_jsonl(out("filter/candidates.jsonl"), [&](const json& j, std::size_t) {
        auto c = commit_from_json(j);
        if (!fs::exists(store.diff_path(c.repo_ref, c.sha)))
            return;
        matched.push_back(matcher.match(c.message));
        population.push_back(std::move(c));
    });

    auto stratum_seed = [&](std::string_view name) {
        Sha256 h;
        h.field(std::to_string(config_.seeds.keyword_sample)).field(std::to_string(round)).field(name);
        return std::stoull(h.hex_digest().substr(0, 15), nullptr, 16);
    };
    std::map<std::string, std::vector<std::string>> drawn_for;  // commit ref -> strata
    json strata = json::array();
    auto draw = [&](const std::string& name, const std::vector<std::size_t>& members) {
        json row{{"stratum", name}, {"population", members.size()}, {"sample_size", 0}};
        if (!members.empty()) {
            std::vector<std::string> ids;
            for (auto i : members)
                ids.push_back(population[i].repo_ref + "@" + population[i].sha);
            auto plan = keywords::SamplePlan::make(ids.size(), stratum_seed(name), config_.keywords.confidence,
                                                   config_.keywords.margin);
            for (const auto& id : keywords::draw_sample(ids, plan))
                drawn_for[id].push_back(name);
            row["sample_size"] = plan.sample_size;
            row["seed"] = plan.seed;
        }
        strata.push_back(row);
    };
    for (const auto& k : to_measure) {
        std::vector<std::size_t> members;
        for (std::size_t i = 0; i < population.size(); ++i)
            if (std::binary_search(matched[i].begin(), matched[i].end(), k))
                members.push_back(i);
        draw(k, members);
    }
    // commits without any keyword, read for new keyword proposals
    std::vector<std::size_t> negatives;
    for (std::size_t i = 0; i < population.size(); ++i)
        if (matched[i].empty())
            negatives.push_back(i);
    draw(std::string(kNegativeStratum), negatives);

    if (drawn_for.empty())
        throw Error(ErrorCode::MissingStageInput, "no candidate commits to sample");

    std::vector<json> rows;
    for (std::size_t i = 0; i < population.size(); ++i) {
        const auto& c = population[i];
        auto ref = c.repo_ref + "@" + c.sha;
        auto it = drawn_for.find(ref);
        if (it == drawn_for.end())
            continue;
        rows.push_back({{"ref", ref},
                        {"repo", c.repo_ref},
                        {"sha", c.sha},
                        {"message", c.message},
                        {"matched_keywords", matched[i]},
                        {"strata", it->second}});
    }
    const auto dir = fmt::format("keywords/round{}", round);
    write_file_atomic(out(dir + "/sample.jsonl"), jsonl(rows));
    json summary{{"round", round},
                 {"population", population.size()},
                 {"sampled_commits", rows.size()},
                 {"confidence", config_.keywords.confidence},
                 {"margin", config_.keywords.margin},
                 {"strata", strata},
                 {"keyword_list_version", version}};
    write_file_atomic(out(dir + "/plan.json"), pretty(summary));
    write_manifest(fmt::format("keywords-sample-r{}", round), {dir + "/sample.jsonl", dir + "/plan.json"},
                   {&upstream}, summary);
    return summary;
}

json Pipeline::keywords_refine(int round, const fs::path& labels_path)
{
    auto upstream = require_stage(fmt::format("keywords-sample-r{}", round));
    require_input(labels_path, "label export");
    std::map<std::string, std::vector<std::string>> sample;
    datasets::for_each_jsonl(out(fmt::format("keywords/round{}/sample.jsonl", round)), [&](const json& j, std::size_t) {
        std::vector<std::string> measured;
        for (const auto& st : j.at("strata"))
            if (st.get<std::string>() != kNegativeStratum)
                measured.push_back(st.get<std::string>());
        sample[j.at("ref").get<std::string>()] = std::move(measured);
    });

    auto items = annotation::read_export(labels_path);
    std::vector<keywords::LabeledCommit> labeled;
    std::vector<std::string> proposals;
    std::size_t unresolved = 0;
    for (const auto& it : items) {
        if (it.kind != annotation::Kind::KeywordCommit)
            throw Error(ErrorCode::SchemaError, "label export is not from a keyword_commit session");
        auto s = sample.find(it.ref);
        if (s == sample.end())
            throw Error(ErrorCode::SchemaError, "labeled item '" + it.ref + "' is not in the round sample");
        if (!it.final_label) {
            ++unresolved;
            continue;
        }
        labeled.push_back({s->second, it.final_label->verdict});
        for (const auto& k : it.proposed_keywords)
            if (std::find(proposals.begin(), proposals.end(), k) == proposals.end())
                proposals.push_back(k);
    }
    if (unresolved)
        throw Error(ErrorCode::IncompleteLabels, fmt::format("{} sampled commits lack a final label", unresolved));

    keywords::RefinementState state;
    if (fs::exists(out("keywords/state.json"))) {
        state = keywords::RefinementState::from_json(read_json(out("keywords/state.json")));
    } else {
        auto seed_path = config_.resolve(config_.keywords.seed_list);
        auto seed = keywords::load_keyword_list(seed_path);
        state = keywords::RefinementState::from_seed(seed, "seed-" + sha256_hex(read_file(seed_path)).substr(0, 12),
                                                     config_.keywords.retention_threshold);
    }
    state = keywords::refinement_round(state, labeled, proposals, round);
    write_file_atomic(out("keywords/state.json"), pretty(state.to_json()));
    std::vector<std::string> outputs{"keywords/state.json"};
    if (state.terminal()) {
        std::string body = fmt::format("# retained after {} rounds, threshold {}\n", state.completed_rounds,
                                       state.threshold);
        for (const auto& k : state.retained())
            body += k + "\n";
        write_file_atomic(out("keywords/retained.txt"), body);
        outputs.push_back("keywords/retained.txt");
    }
    json summary{{"round", round},
                 {"labeled", labeled.size()},
                 {"proposals", proposals},
                 {"retained", state.retained()},
                 {"active", state.active()},
                 {"state", state.to_json()}};
    write_manifest(fmt::format("keywords-refine-r{}", round), outputs, {&upstream}, summary);
    return summary;
}

json Pipeline::annotate_create(const AnnotateRequest& request)
{
    annotation::SessionRequest sr;
    sr.kind = annotation::kind_from_string(request.kind);
    sr.annotators = request.annotators;
    sr.adjudicator = request.adjudicator;
    sr.rubric_version = request.rubric_version;
    sr.seed = config_.seeds.annotation;
    json source;
    switch (sr.kind) {
    case annotation::Kind::KeywordCommit: {
        auto m = require_stage(fmt::format("keywords-sample-r{}", request.round));
        datasets::for_each_jsonl(out(fmt::format("keywords/round{}/sample.jsonl", request.round)),
                                 [&](const json& j, std::size_t) {
                                     CommitRecord c;
                                     c.repo_ref = j.at("repo").get<std::string>();
                                     c.sha = j.at("sha").get<std::string>();
                                     sr.items.push_back({"",
                                                         {{"message", j.at("message")}, {"diff", diff_for(c)}},
                                                         j.at("ref").get<std::string>()});
                                 });
        source = fmt::format("keywords round {}", request.round);
        break;
    }
    case annotation::Kind::ReviewSuitability: {
        require_stage("grid-run");
        auto gm = orchestrator::GridManifest::from_json(read_json(out("grid/manifest.json")));
        std::map<std::string, SecurityCommit> by_key;
        for (auto& s : load_security())
            by_key[s.commit.repo_ref + "@" + s.commit.sha] = s;
        for (const auto& cell : gm.cells) {
            if (!cell.ok)
                continue;
            auto r = llm::GenerationResult::from_json(
                read_json(orchestrator::result_path(out("grid/results"), cell.cell_id)));
            const auto& c = by_key.at(cell.repo + "@" + cell.sha).commit;
            sr.items.push_back(
                {"", {{"message", c.message}, {"diff", diff_for(c)}, {"review", r.final_review}}, cell.cell_id});
        }
        source = "grid results";
        break;
    }
    case annotation::Kind::ExternalVetting:
    case annotation::Kind::FinalEvaluation: {
        require_stage("external-filter");
        auto flagged = datasets::read_flagged_jsonl(out("external/flagged.jsonl"));
        std::map<std::string, std::string> predictions;
        if (sr.kind == annotation::Kind::FinalEvaluation) {
            if (!request.predictions)
                throw Error(ErrorCode::MissingStageInput, "final_evaluation sessions need --predictions");
            require_input(*request.predictions, "predictions file");
            datasets::for_each_jsonl(*request.predictions, [&](const json& j, std::size_t) {
                predictions[j.at("ref").get<std::string>()] = j.at("review").get<std::string>();
            });
        }
        for (std::size_t i = 0; i < flagged.size(); ++i) {
            const auto& f = flagged[i];
            json payload{{"diff", f.sample.diff_hunk}, {"review_comment", f.sample.review_comment}};
            if (sr.kind == annotation::Kind::FinalEvaluation) {
                auto p = predictions.find(ext_ref(i));
                if (p == predictions.end())
                    continue;
                payload = {{"diff", f.sample.diff_hunk}, {"ground_truth", f.sample.review_comment}, {"generated", p->second}};
            }
            sr.items.push_back({"", payload, ext_ref(i)});
        }
        source = "external partition";
        break;
    }
    }
    annotation::SessionStore store(sessions_dir(), options_.clock);
    auto s = store.create(sr);
    json tokens = json::object();
    json adj = nullptr;
    for (const auto& [tok, who] : s.tokens) {
        if (s.adjudicator && who == *s.adjudicator)
            adj = tok;
        else
            tokens[who] = tok;
    }
    return json{{"session_id", s.session_id},
                {"kind", request.kind},
                {"source", source},
                {"item_count", s.items.size()},
                {"annotator_tokens", tokens},
                {"adjudicator_token", adj},
                {"owner_token", s.owner_token}};
}

json Pipeline::grid_run(std::optional<std::size_t> stop_after)
{
    auto upstream = require_stage("filter");
    auto security = load_security();
    if (security.empty())
        throw Error(ErrorCode::MissingStageInput, "no keyword-filtered commits to sample for the grid");
    std::vector<std::string> ids;
    std::map<std::string, std::size_t> index;
    for (std::size_t i = 0; i < security.size(); ++i) {
        ids.push_back(security[i].commit.repo_ref + "@" + security[i].commit.sha);
        index[ids.back()] = i;
    }
    keywords::SamplePlan plan;
    plan.population_size = ids.size();
    plan.sample_size = std::min<std::uint64_t>(config_.grid.sample_size, ids.size());
    plan.seed = config_.seeds.grid_sample;
    auto sample = keywords::draw_sample(ids, plan);

    orchestrator::GridSpec spec;
    spec.seed = plan.seed;
    spec.providers = config_.grid_providers();
    spec.strategies = config_.grid_strategies();
    for (const auto& id : sample) {
        const auto& c = security[index.at(id)].commit;
        spec.commits.push_back({c, diff_for(c)});
    }

    llm::GatewayOptions go;
    go.cache_dir = out("cache");
    go.clock = options_.clock;
    go.sleep = options_.sleep;
    llm::Gateway gateway(go);
    for (const auto& p : config_.providers)
        gateway.register_provider(p);
    prompts::TemplateSet templates = config_.templates_dir ? prompts::TemplateSet(config_.resolve(*config_.templates_dir))
                                                           : prompts::TemplateSet();

    orchestrator::GridOptions gopt;
    gopt.results_dir = out("grid/results");
    gopt.workers = config_.grid.workers;
    gopt.max_new_cells = stop_after;
    gopt.clock = options_.clock;
    auto outcome = orchestrator::run_grid(spec, gateway, templates, gopt);

    json summary{{"expected_cells", outcome.manifest.expected_cells},
                 {"completed", outcome.manifest.completed},
                 {"failed", outcome.manifest.failed},
                 {"resumed", outcome.manifest.resumed},
                 {"commits", spec.commits.size()},
                 {"providers", spec.providers},
                 {"strategies", spec.strategies}};
    if (stop_after) {
        summary["interrupted"] = true;
        return summary;
    }
    write_file_atomic(out("grid/manifest.json"), pretty(outcome.manifest.to_json()));
    write_file_atomic(out("grid/sample.json"), pretty(json{{"seed", plan.seed}, {"commits", sample}}));
    write_manifest("grid-run", {"grid/results", "grid/manifest.json", "grid/sample.json"}, {&upstream}, summary);
    return summary;
}

json Pipeline::grid_select(const fs::path& labels_path)
{
    auto upstream = require_stage("grid-run");
    require_input(labels_path, "label export");
    auto gm = orchestrator::GridManifest::from_json(read_json(out("grid/manifest.json")));
    auto items = annotation::read_export(labels_path);
    for (const auto& it : items)
        if (it.kind != annotation::Kind::ReviewSuitability)
            throw Error(ErrorCode::SchemaError, "label export is not from a review_suitability session");
    auto report = orchestrator::select_winner(gm.cells, orchestrator::cell_labels_from_export(items));
    auto summary = report.to_json();
    write_file_atomic(out("grid/winner.json"), pretty(summary));
    write_manifest("grid-select", {"grid/winner.json"}, {&upstream}, summary);
    return summary;
}

json Pipeline::dataset_build()
{
    auto sel = require_stage("grid-select");
    auto filt = require_stage("filter");
    auto winner = read_json(out("grid/winner.json"));
    std::vector<CommitWithDiff> commits;
    for (const auto& s : load_security())
        commits.push_back({s.commit, diff_for(s.commit)});

    llm::GatewayOptions go;
    go.cache_dir = out("cache");
    go.clock = options_.clock;
    go.sleep = options_.sleep;
    llm::Gateway gateway(go);
    for (const auto& p : config_.providers)
        gateway.register_provider(p);
    prompts::TemplateSet templates = config_.templates_dir ? prompts::TemplateSet(config_.resolve(*config_.templates_dir))
                                                           : prompts::TemplateSet();
    orchestrator::BuildOptions bo;
    bo.provider_id = winner.at("provider_id").get<std::string>();
    bo.strategy = winner.at("strategy").get<std::string>();
    bo.diff_cap_bytes = config_.filters.diff_cap_bytes;
    bo.workers = config_.grid.workers;
    bo.clock = options_.clock;
    auto outcome = orchestrator::build_dataset(commits, gateway, templates, bo);

    datasets::write_jsonl(outcome.samples, out("dataset/dataset.jsonl"));
    std::vector<json> prov;
    for (const auto& p : outcome.provenance)
        prov.push_back(p.to_json());
    write_file_atomic(out("dataset/provenance.jsonl"), jsonl(prov));
    write_file_atomic(out("dataset/run_report.json"), pretty(outcome.report.to_json()));
    datasets::DatasetManifest dm;
    dm.sample_count = outcome.samples.size();
    dm.failure_count = outcome.report.failures.size();
    dm.keyword_list_version = filt.summary.value("keyword_list_version", std::string());
    dm.template_versions = {templates.get(prompts::strategy_from_string(bo.strategy)).template_version()};
    dm.created_at = options_.clock->now_utc();
    write_file_atomic(out("dataset/manifest.json"), pretty(dm.to_json()));
    json summary = dm.to_json();
    summary["provider_id"] = bo.provider_id;
    summary["strategy"] = bo.strategy;
    summary["skipped_oversize"] = outcome.report.skipped_oversize;
    write_manifest("dataset-build",
                   {"dataset/dataset.jsonl", "dataset/provenance.jsonl", "dataset/run_report.json", "dataset/manifest.json"},
                   {&sel, &filt}, summary);
    return summary;
}

json Pipeline::external_filter(const std::optional<fs::path>& keywords_override)
{
    auto partition = config_.resolve(config_.external.partition_path);
    if (partition.empty())
        throw Error(ErrorCode::MissingStageInput, "external.partition_path is not configured");
    require_input(partition, "external partition");
    std::vector<std::string> kw;
    std::string version;
    if (keywords_override) {
        require_input(*keywords_override, "keyword list");
        kw = keywords::load_keyword_list(*keywords_override);
        version = "file-" + sha256_hex(read_file(*keywords_override)).substr(0, 12);
    } else {
        auto state_path = out("keywords/state.json");
        if (!fs::exists(state_path))
            throw Error(ErrorCode::MissingStageInput, "keyword refinement has not run (or pass --keywords)");
        auto state = keywords::RefinementState::from_json(read_json(state_path));
        if (!state.terminal())
            throw Error(ErrorCode::MissingStageInput, "keyword refinement is not complete (or pass --keywords)");
        kw = state.retained();
        version = fmt::format("{}+r{}", state.seed_list_version, state.completed_rounds);
    }
    auto samples = datasets::read_external_partition(partition, config_.external.columns, config_.external.partition_name);
    auto flagged = datasets::filter_external_partition(samples, kw);
    datasets::write_flagged_jsonl(flagged, out("external/flagged.jsonl"));
    json summary{{"partition", config_.external.partition_name},
                 {"partition_size", samples.size()},
                 {"flagged", flagged.size()},
                 {"keyword_count", kw.size()},
                 {"keyword_list_version", version}};
    write_manifest("external-filter", {"external/flagged.jsonl"}, {}, summary);
    return summary;
}

json Pipeline::evaluate(const fs::path& predictions_path, const fs::path& labels_path,
                        const std::optional<fs::path>& vetting_path)
{
    auto upstream = require_stage("external-filter");
    auto flagged = datasets::read_flagged_jsonl(out("external/flagged.jsonl"));
    if (flagged.empty())
        throw Error(ErrorCode::MissingStageInput, "no external samples to evaluate");
    require_input(predictions_path, "predictions file");
    require_input(labels_path, "label export");

    std::set<std::string> vetted;
    if (vetting_path) {
        require_input(*vetting_path, "vetting export");
        for (const auto& it : annotation::read_export(*vetting_path))
            if (it.final_label && it.final_label->verdict)
                vetted.insert(it.ref);
    }
    std::map<std::string, std::string> predictions;
    datasets::for_each_jsonl(predictions_path, [&](const json& j, std::size_t) {
        predictions[j.at("ref").get<std::string>()] = j.at("review").get<std::string>();
    });
    std::map<std::string, annotation::ExportedItem> labels;
    for (auto& it : annotation::read_export(labels_path)) {
        if (it.kind != annotation::Kind::FinalEvaluation)
            throw Error(ErrorCode::SchemaError, "label export is not from a final_evaluation session");
        labels.emplace(it.ref, std::move(it));
    }

    std::vector<metrics::EvalPair> pairs;
    std::vector<metrics::PairLabels> pair_labels;
    std::vector<std::string> refs;
    for (std::size_t i = 0; i < flagged.size(); ++i) {
        auto ref = ext_ref(i);
        if (vetting_path && !vetted.count(ref))
            continue;
        auto p = predictions.find(ref);
        if (p == predictions.end())
            throw Error(ErrorCode::MissingStageInput, "no prediction for " + ref);
        auto l = labels.find(ref);
        if (l == labels.end())
            throw Error(ErrorCode::MissingLabels, "no manual labels for " + ref);
        const auto& item = l->second;
        auto a = item.labels.find(item.annotators[0]);
        auto b = item.labels.find(item.annotators[1]);
        if (a == item.labels.end() || b == item.labels.end())
            throw Error(ErrorCode::MissingLabels, ref + " is not double-labeled");
        auto manual = [](const annotation::Label& x) {
            return metrics::ManualLabel{x.evaluation->semantic_equivalence, x.evaluation->applicability};
        };
        metrics::PairLabels pl{manual(a->second), manual(b->second), std::nullopt};
        if (item.adjudicated)
            pl.adjudicated = manual(*item.adjudicated);
        pairs.push_back({p->second, flagged[i].sample.review_comment});
        pair_labels.push_back(pl);
        refs.push_back(ref);
    }
    if (pairs.empty())
        throw Error(ErrorCode::MissingStageInput, "no vetted external samples to evaluate");
    auto report = metrics::eval_report(pairs, pair_labels);
    json summary = report.to_json();
    summary["refs"] = refs;
    write_file_atomic(out("evaluation/report.json"), pretty(summary));
    write_file_atomic(out("evaluation/report.txt"), report.to_table());
    write_manifest("evaluate", {"evaluation/report.json", "evaluation/report.txt"}, {&upstream}, summary);
    summary["table"] = report.to_table();
    return summary;
}

json Pipeline::report() const
{
    json stages = json::object();
    auto dir = out("manifests");
    if (fs::exists(dir)) {
        std::vector<fs::path> files;
        for (const auto& e : fs::directory_iterator(dir))
            if (e.path().extension() == ".json")
                files.push_back(e.path());
        std::sort(files.begin(), files.end());
        for (const auto& f : files) {
            auto m = StageManifest::from_json(read_json(f));
            bool intact = true;
            for (const auto& [rel, hash] : m.outputs)
                if (!fs::exists(out(rel)) || hash_path(out(rel)) != hash)
                    intact = false;
            stages[m.stage] = {{"created_at", m.created_at}, {"intact", intact}, {"summary", m.summary}};
        }
    }
    return json{{"output_dir", out_.string()}, {"stages", stages}};
}

} // namespace synrev::pipeline
