#include <synrev/error.hpp>
#include <synrev/http.hpp>
#include <synrev/mining.hpp>

#include <fmt/format.h>

#include <algorithm>
#include <chrono>
#include <fstream>
#include <set>
#include <sstream>
#include <thread>

namespace synrev::mining {

namespace {

std::string percent_encode(std::string_view s)
{
    std::string out;
    for (unsigned char c : s) {
        if (std::isalnum(c) || c == '-' || c == '_' || c == '.' || c == '~')
            out.push_back(static_cast<char>(c));
        else
            out += fmt::format("%{:02X}", c);
    }
    return out;
}

ChangeKind github_status(std::string_view s)
{
    if (s == "added" || s == "copied")
        return ChangeKind::Added;
    if (s == "removed")
        return ChangeKind::Deleted;
    if (s == "renamed")
        return ChangeKind::Renamed;
    return ChangeKind::Modified;
}

std::string repo_dir_name(const std::string& repo_key)
{
    auto slash = repo_key.find('/');
    if (slash == std::string::npos)
        return repo_key;
    return repo_key.substr(0, slash) + "__" + repo_key.substr(slash + 1);
}

} // namespace

// --- operations --------------------------------------------------------------

void discover_repos(CodeHost& host, const DiscoverOptions& options, const Clock& clock,
                    const std::function<void(RepoRecord)>& emit)
{
    if (options.language.empty())
        throw Error(ErrorCode::ConfigError, "mining language is empty");
    std::set<std::string> seen;
    std::size_t emitted = 0;
    for (const auto& slice : options.slices) {
        for (std::uint32_t page = 1; !options.page_limit || page <= *options.page_limit; ++page) {
            auto batch = host.search_repos(options.language, slice, page);
            if (batch.empty())
                break;
            for (auto& cand : batch) {
                if (cand.fork && !options.include_forks)
                    continue;
                if (to_lower_ascii(cand.record.primary_language) != to_lower_ascii(options.language))
                    continue;
                if (!seen.insert(cand.record.key()).second)
                    continue;
                auto rec = std::move(cand.record);
                rec.primary_language = options.language;
                rec.pr_count = host.count_pull_requests(rec);
                if (rec.pr_count < options.min_pr_count)
                    continue;
                rec.mined_at = clock.now_utc();
                emit(std::move(rec));
                if (options.max_repos && ++emitted >= *options.max_repos)
                    return;
            }
        }
    }
}

std::vector<CommitRecord> enumerate_commits(CodeHost& host, const RepoRecord& repo)
{
    std::vector<CommitRecord> out;
    std::set<std::string> seen;
    host.list_commits(
        repo, [](std::uint32_t parents) { return parents <= 1; },
        [&](CommitRecord c) {
            c.sha = to_lower_ascii(c.sha);
            if (!is_valid_sha(c.sha))
                throw Error(ErrorCode::SchemaError, "host returned malformed sha '" + c.sha + "'");
            if (!seen.insert(c.sha).second)
                return;
            c.repo_ref = repo.key();
            out.push_back(std::move(c));
        });
    return out;
}

std::string fetch_commit_diff(CodeHost& host, const RepoRecord& repo, const std::string& sha, std::uint64_t cap_bytes)
{
    auto diff = host.commit_diff(repo, sha);
    if (diff.size() > cap_bytes) {
        Error e(ErrorCode::DiffTooLarge,
                fmt::format("{}@{}: diff is {} bytes, cap is {}", repo.key(), sha, diff.size(), cap_bytes));
        throw e;
    }
    return diff;
}

// --- GitHub ------------------------------------------------------------------

std::optional<std::string> link_rel(std::string_view header, std::string_view rel)
{
    // <https://...?page=2>; rel="next", <...>; rel="last"
    std::size_t pos = 0;
    while (pos < header.size()) {
        auto open = header.find('<', pos);
        if (open == std::string_view::npos)
            break;
        auto close = header.find('>', open);
        if (close == std::string_view::npos)
            break;
        auto next = header.find(',', close);
        auto params = header.substr(close + 1, next == std::string_view::npos ? std::string_view::npos : next - close - 1);
        if (params.find("rel=\"" + std::string(rel) + "\"") != std::string_view::npos)
            return std::string(header.substr(open + 1, close - open - 1));
        if (next == std::string_view::npos)
            break;
        pos = next + 1;
    }
    return std::nullopt;
}

std::optional<std::uint64_t> page_param(std::string_view url)
{
    auto q = url.find('?');
    if (q == std::string_view::npos)
        return std::nullopt;
    for (const auto& kv : split(url.substr(q + 1), '&')) {
        if (kv.rfind("page=", 0) == 0) {
            try {
                return std::stoull(kv.substr(5));
            } catch (const std::exception&) {
                return std::nullopt;
            }
        }
    }
    return std::nullopt;
}

GitHubHost::GitHubHost(GitHubOptions options)
    : options_(std::move(options)), bucket_(options_.requests_per_minute / 60.0,
                                            std::max(1.0, options_.requests_per_minute / 60.0))
{
}

GitHubHost::Reply GitHubHost::get(const std::string& path_or_url, const std::string& accept, const RepoRecord* repo,
                                  const std::string* sha)
{
    http::Request req;
    req.url = path_or_url.rfind("http", 0) == 0 ? path_or_url : options_.api_base + path_or_url;
    req.timeout = std::chrono::milliseconds(static_cast<std::int64_t>(options_.timeout_s * 1000));
    req.headers.emplace("Accept", accept);
    req.headers.emplace("User-Agent", "synrev-miner");
    req.headers.emplace("X-GitHub-Api-Version", "2022-11-28");
    if (!options_.token.empty())
        req.headers.emplace("Authorization", "Bearer " + options_.token);

    for (std::uint32_t attempt = 0;; ++attempt) {
        const bool last = attempt >= options_.max_retries;
        std::chrono::milliseconds wait(1000LL << std::min(attempt, 6u));
        try {
            bucket_.acquire();
            ++requests_;
            auto res = http::send(req);
            if (res.status >= 200 && res.status < 300)
                return {res.status, std::move(res.body), res.header("link")};
            if (res.status == 401)
                throw Error(ErrorCode::AuthError, "GitHub rejected the credentials (HTTP 401)");
            const bool exhausted = res.header("x-ratelimit-remaining") == std::optional<std::string>("0");
            if (res.status == 429 || (res.status == 403 && (exhausted || res.header("retry-after")))) {
                Error e(ErrorCode::RateLimited, "GitHub rate limit hit on " + req.url);
                e.http_status = res.status;
                e.retry_after_s = http::retry_after_seconds(res);
                if (!e.retry_after_s) {
                    if (auto reset = res.header("x-ratelimit-reset")) {
                        auto now = std::chrono::duration_cast<std::chrono::seconds>(
                                       std::chrono::system_clock::now().time_since_epoch())
                                       .count();
                        try {
                            e.retry_after_s = std::max<double>(0.0, std::stod(*reset) - static_cast<double>(now));
                        } catch (const std::exception&) {
                        }
                    }
                }
                if (last)
                    throw e;
                if (e.retry_after_s)
                    wait = std::chrono::milliseconds(static_cast<std::int64_t>(*e.retry_after_s * 1000));
                bucket_.penalize(wait);
                options_.sleep(wait);
                continue;
            }
            if (res.status == 403)
                throw Error(ErrorCode::AuthError, "GitHub refused access to " + req.url + " (HTTP 403)");
            if (res.status == 404 || res.status == 422) {
                if (sha)
                    throw Error(ErrorCode::CommitNotFound, (repo ? repo->key() : std::string()) + "@" + *sha);
                if (repo)
                    throw Error(ErrorCode::RepoGone, repo->key() + " is gone or renamed upstream");
                return {res.status, std::move(res.body), std::nullopt};
            }
            if (res.status == 409)
                return {res.status, std::move(res.body), std::nullopt};
            if (res.status >= 500) {
                Error e(ErrorCode::HostUnavailable, fmt::format("GitHub returned HTTP {} for {}", res.status, req.url));
                e.http_status = res.status;
                throw e;
            }
            Error e(ErrorCode::HostUnavailable, fmt::format("unexpected HTTP {} for {}", res.status, req.url));
            e.http_status = res.status;
            throw e;
        } catch (const Error& e) {
            const bool transient = e.code() == ErrorCode::HostUnavailable || e.code() == ErrorCode::Timeout;
            if (!transient || last)
                throw;
            options_.sleep(wait);
        }
    }
}

std::vector<RepoCandidate> GitHubHost::search_repos(const std::string& language, const std::string& slice,
                                                    std::uint32_t page)
{
    std::string q = "language:" + language + " fork:" + "false";
    if (!slice.empty())
        q += " " + slice;
    auto reply = get(fmt::format("/search/repositories?q={}&sort=stars&order=desc&per_page={}&page={}",
                                 percent_encode(q), options_.per_page, page),
                     "application/vnd.github+json", nullptr, nullptr);
    std::vector<RepoCandidate> out;
    if (reply.status == 422)  // past the search window
        return out;
    auto j = json::parse(reply.body, nullptr, false);
    if (j.is_discarded() || !j.contains("items"))
        throw Error(ErrorCode::HostUnavailable, "unexpected search response");
    for (const auto& it : j.at("items")) {
        RepoCandidate c;
        c.record.host_id = "github:" + std::to_string(it.value("id", std::uint64_t{0}));
        c.record.owner = it.at("owner").at("login").get<std::string>();
        c.record.name = it.at("name").get<std::string>();
        c.record.primary_language = it.value("language", json()).is_string() ? it.at("language").get<std::string>() : "";
        c.record.default_branch = it.value("default_branch", std::string("main"));
        c.fork = it.value("fork", false);
        out.push_back(std::move(c));
    }
    return out;
}

std::uint64_t GitHubHost::count_pull_requests(const RepoRecord& repo)
{
    auto reply = get(fmt::format("/repos/{}/{}/pulls?state=all&per_page=1", repo.owner, repo.name),
                     "application/vnd.github+json", &repo, nullptr);
    if (reply.link)
        if (auto last = link_rel(*reply.link, "last"))
            if (auto n = page_param(*last))
                return *n;
    auto j = json::parse(reply.body, nullptr, false);
    return j.is_array() ? j.size() : 0;
}

void GitHubHost::list_commits(const RepoRecord& repo, const std::function<bool(std::uint32_t)>& want_files,
                              const std::function<void(CommitRecord)>& emit)
{
    std::string url = fmt::format("/repos/{}/{}/commits?per_page={}", repo.owner, repo.name, options_.per_page);
    while (!url.empty()) {
        auto reply = get(url, "application/vnd.github+json", &repo, nullptr);
        if (reply.status == 409)  // empty repository
            return;
        auto page = json::parse(reply.body, nullptr, false);
        if (page.is_discarded() || !page.is_array())
            throw Error(ErrorCode::HostUnavailable, "unexpected commit list for " + repo.key());
        for (const auto& it : page) {
            CommitRecord c;
            c.sha = it.at("sha").get<std::string>();
            c.message = it.at("commit").at("message").get<std::string>();
            c.authored_at = it.at("commit").at("author").value("date", std::string());
            c.parent_count = static_cast<std::uint32_t>(it.at("parents").size());
            if (want_files(c.parent_count)) {
                auto detail = get(fmt::format("/repos/{}/{}/commits/{}", repo.owner, repo.name, c.sha),
                                  "application/vnd.github+json", &repo, &c.sha);
                auto dj = json::parse(detail.body, nullptr, false);
                if (dj.is_discarded())
                    throw Error(ErrorCode::HostUnavailable, "unexpected commit detail for " + c.sha);
                for (const auto& f : dj.value("files", json::array()))
                    c.changed_files.push_back({f.at("filename").get<std::string>(),
                                               github_status(f.value("status", std::string("modified")))});
            }
            emit(std::move(c));
        }
        url = reply.link ? link_rel(*reply.link, "next").value_or("") : "";
    }
}

std::string GitHubHost::commit_diff(const RepoRecord& repo, const std::string& sha)
{
    return get(fmt::format("/repos/{}/{}/commits/{}", repo.owner, repo.name, sha), "application/vnd.github.diff",
               &repo, &sha)
        .body;
}

// --- fixture host ------------------------------------------------------------

FixtureHost::FixtureHost(const json& doc) : host_id_(doc.value("host_id", std::string("fixture"))), doc_(doc)
{
    if (!doc_.contains("repos") || !doc_.at("repos").is_array())
        throw Error(ErrorCode::ConfigError, "fixture host document needs a 'repos' array");
}

FixtureHost FixtureHost::load(const std::filesystem::path& path)
{
    auto j = json::parse(read_file(path), nullptr, false);
    if (j.is_discarded())
        throw Error(ErrorCode::ConfigError, "fixture host file is not JSON: " + path.string());
    return FixtureHost(j);
}

std::vector<RepoCandidate> FixtureHost::search_repos(const std::string&, const std::string&, std::uint32_t page)
{
    std::vector<RepoCandidate> out;
    if (page != 1)
        return out;
    for (const auto& r : doc_.at("repos")) {
        RepoCandidate c;
        c.record.owner = r.at("owner").get<std::string>();
        c.record.name = r.at("name").get<std::string>();
        c.record.host_id = host_id_ + ":" + c.record.owner + "/" + c.record.name;
        c.record.primary_language = r.value("language", std::string());
        c.record.default_branch = r.value("default_branch", std::string("main"));
        c.fork = r.value("fork", false);
        out.push_back(std::move(c));
    }
    return out;
}

const json& FixtureHost::repo_doc(const RepoRecord& repo) const
{
    for (const auto& r : doc_.at("repos"))
        if (r.at("owner") == repo.owner && r.at("name") == repo.name) {
            if (r.value("gone", false))
                throw Error(ErrorCode::RepoGone, repo.key() + " is gone");
            return r;
        }
    throw Error(ErrorCode::RepoGone, repo.key() + " is not on the fixture host");
}

std::uint64_t FixtureHost::count_pull_requests(const RepoRecord& repo)
{
    return repo_doc(repo).value("pr_count", std::uint64_t{0});
}

void FixtureHost::list_commits(const RepoRecord& repo, const std::function<bool(std::uint32_t)>& want_files,
                               const std::function<void(CommitRecord)>& emit)
{
    for (const auto& cj : repo_doc(repo).value("commits", json::array())) {
        CommitRecord c;
        c.sha = cj.at("sha").get<std::string>();
        c.message = cj.at("message").get<std::string>();
        c.parent_count = cj.value("parents", 1u);
        c.authored_at = cj.value("authored_at", std::string());
        if (want_files(c.parent_count))
            for (const auto& f : cj.value("files", json::array()))
                c.changed_files.push_back(
                    {f.at("path").get<std::string>(), change_kind_from_string(f.value("status", std::string("modified")))});
        emit(std::move(c));
    }
}

std::string FixtureHost::commit_diff(const RepoRecord& repo, const std::string& sha)
{
    for (const auto& cj : repo_doc(repo).value("commits", json::array()))
        if (cj.at("sha") == sha)
            return cj.value("diff", std::string());
    throw Error(ErrorCode::CommitNotFound, repo.key() + "@" + sha);
}

// --- record store ------------------------------------------------------------

RecordStore::RecordStore(std::filesystem::path dir) : dir_(std::move(dir))
{
    std::filesystem::create_directories(dir_ / "diffs");
    auto progress = dir_ / "progress.json";
    if (std::filesystem::exists(progress)) {
        auto j = json::parse(read_file(progress), nullptr, false);
        if (j.is_discarded())
            throw Error(ErrorCode::SchemaError, "corrupt " + progress.string());
        for (const auto& k : j.value("done", json::array()))
            done_[k.get<std::string>()] = true;
    }
}

void RecordStore::append(const std::filesystem::path& file, const json& j)
{
    std::lock_guard lock(mu_);
    std::ofstream out(file, std::ios::app | std::ios::binary);
    out << j.dump(-1, ' ', false, json::error_handler_t::replace) << '\n';
    out.flush();
    if (!out)
        throw Error(ErrorCode::IoError, "append failed: " + file.string());
}

void RecordStore::put_repo(const RepoRecord& r)
{
    append(dir_ / "repos.jsonl", to_json(r));
}

void RecordStore::put_commit(const CommitRecord& c)
{
    append(dir_ / "commits.jsonl", to_json(c));
}

std::filesystem::path RecordStore::diff_path(const std::string& repo_key, const std::string& sha) const
{
    return dir_ / "diffs" / repo_dir_name(repo_key) / (sha + ".diff");
}

void RecordStore::put_diff(const RepoRecord& repo, const std::string& sha, std::string_view diff)
{
    write_file_atomic(diff_path(repo.key(), sha), diff);
}

std::optional<std::string> RecordStore::diff(const std::string& repo_key, const std::string& sha) const
{
    auto p = diff_path(repo_key, sha);
    if (!std::filesystem::exists(p))
        return std::nullopt;
    return read_file(p);
}

void RecordStore::mark_repo_done(const std::string& repo_key)
{
    std::lock_guard lock(mu_);
    done_[repo_key] = true;
    json keys = json::array();
    for (const auto& [k, v] : done_)
        keys.push_back(k);
    write_file_atomic(dir_ / "progress.json", json{{"done", keys}}.dump(1) + "\n");
}

bool RecordStore::repo_done(const std::string& repo_key) const
{
    std::lock_guard lock(mu_);
    return done_.count(repo_key) > 0;
}

namespace {

/// Complete lines of an append-only file; a torn final line is ignored.
template <typename T, typename Parse, typename Key>
std::vector<T> load_last_write_wins(const std::filesystem::path& file, Parse parse, Key key)
{
    std::vector<T> out;
    if (!std::filesystem::exists(file))
        return out;
    auto text = read_file(file);
    std::map<std::string, std::size_t> index;
    std::size_t line_no = 0, pos = 0;
    while (pos < text.size()) {
        auto nl = text.find('\n', pos);
        if (nl == std::string::npos)
            break;
        ++line_no;
        std::string_view line(text.data() + pos, nl - pos);
        pos = nl + 1;
        if (trim(line).empty())
            continue;
        auto j = json::parse(line, nullptr, false);
        if (j.is_discarded()) {
            Error e(ErrorCode::SchemaError, fmt::format("{}:{}: invalid JSON", file.filename().string(), line_no));
            e.line = line_no;
            throw e;
        }
        T rec = parse(j);
        auto k = key(rec);
        if (auto it = index.find(k); it != index.end())
            out[it->second] = std::move(rec);
        else {
            index[k] = out.size();
            out.push_back(std::move(rec));
        }
    }
    return out;
}

} // namespace

std::vector<RepoRecord> RecordStore::repos() const
{
    std::lock_guard lock(mu_);
    return load_last_write_wins<RepoRecord>(dir_ / "repos.jsonl", repo_from_json,
                                            [](const RepoRecord& r) { return r.key(); });
}

std::vector<CommitRecord> RecordStore::commits() const
{
    std::lock_guard lock(mu_);
    return load_last_write_wins<CommitRecord>(dir_ / "commits.jsonl", commit_from_json,
                                              [](const CommitRecord& c) { return c.repo_ref + "@" + c.sha; });
}

// --- run ---------------------------------------------------------------------

json MiningReport::to_json() const
{
    return json{{"repos", repos},
                {"repos_skipped_done", repos_skipped_done},
                {"repos_gone", repos_gone},
                {"commits", commits},
                {"diffs", diffs},
                {"diffs_too_large", diffs_too_large},
                {"commits_missing", commits_missing},
                {"errors", errors}};
}

MiningReport run_mining(CodeHost& host, RecordStore& store, const MiningOptions& options, const Clock& clock)
{
    MiningReport report;
    std::map<std::string, RepoRecord> known;
    for (auto& r : store.repos())
        known.emplace(r.key(), std::move(r));

    std::vector<RepoRecord> repos;
    discover_repos(host, options.discover, clock, [&](RepoRecord r) {
        auto it = known.find(r.key());
        if (it == known.end()) {
            store.put_repo(r);
            repos.push_back(std::move(r));
        } else {
            repos.push_back(it->second);  // keep the first mined_at on resume
        }
    });
    report.repos = repos.size();

    std::mutex mu;
    std::atomic<std::size_t> next{0};
    std::exception_ptr fatal;
    auto worker = [&] {
        for (std::size_t i = next++; i < repos.size(); i = next++) {
            const auto& repo = repos[i];
            if (store.repo_done(repo.key())) {
                std::lock_guard lock(mu);
                ++report.repos_skipped_done;
                continue;
            }
            try {
                auto commits = enumerate_commits(host, repo);
                std::size_t diffs = 0, too_large = 0, missing = 0;
                for (const auto& c : commits) {
                    store.put_commit(c);
                    if (!diffkit::judge_candidacy(c, options.policy).accepted)
                        continue;
                    try {
                        store.put_diff(repo, c.sha, fetch_commit_diff(host, repo, c.sha, options.diff_cap_bytes));
                        ++diffs;
                    } catch (const Error& e) {
                        if (e.code() == ErrorCode::DiffTooLarge)
                            ++too_large;
                        else if (e.code() == ErrorCode::CommitNotFound)
                            ++missing;
                        else
                            throw;
                    }
                }
                store.mark_repo_done(repo.key());
                std::lock_guard lock(mu);
                report.commits += commits.size();
                report.diffs += diffs;
                report.diffs_too_large += too_large;
                report.commits_missing += missing;
            } catch (const Error& e) {
                std::lock_guard lock(mu);
                if (e.code() == ErrorCode::RepoGone) {
                    ++report.repos_gone;
                    store.mark_repo_done(repo.key());
                } else if (e.code() == ErrorCode::AuthError) {
                    if (!fatal)
                        fatal = std::current_exception();
                    next = repos.size();
                } else {
                    report.errors.push_back(repo.key() + ": " + e.what());
                }
            }
        }
    };
    const auto n = std::max<std::size_t>(1, std::min(options.workers, repos.size()));
    {
        std::vector<std::jthread> pool;
        for (std::size_t w = 0; w < n; ++w)
            pool.emplace_back(worker);
    }
    if (fatal)
        std::rethrow_exception(fatal);
    return report;
}

} // namespace synrev::mining
