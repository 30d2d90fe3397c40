#include "support.hpp"

#include <doctest.h>
#include <httplib.h>
#include <synrev/mining.hpp>

#include <atomic>
#include <thread>

using namespace synrev;
using namespace synrev::mining;
using testsupport::error_of;
using testsupport::TempDir;

namespace {

// Minimal stand-in for the GitHub REST API on a loopback port.
class FakeGitHub {
public:
    std::atomic<int> rate_limit_hits{0};  // answer this many requests with 403 + exhausted quota
    std::atomic<int> requests{0};
    bool reject_auth = false;
    std::vector<std::string> auth_headers;

    FakeGitHub()
    {
        server_.set_pre_routing_handler([this](const httplib::Request& req, httplib::Response& res) {
            ++requests;
            {
                std::lock_guard lock(mu_);
                auth_headers.push_back(req.get_header_value("Authorization"));
            }
            if (reject_auth) {
                res.status = 401;
                return httplib::Server::HandlerResponse::Handled;
            }
            if (rate_limit_hits > 0) {
                --rate_limit_hits;
                res.status = 403;
                res.set_header("X-RateLimit-Remaining", "0");
                res.set_header("Retry-After", "1");
                return httplib::Server::HandlerResponse::Handled;
            }
            return httplib::Server::HandlerResponse::Unhandled;
        });
        server_.Get("/search/repositories", [this](const httplib::Request& req, httplib::Response& res) {
            auto page = req.get_param_value("page");
            queries.push_back(req.get_param_value("q"));
            json items = json::array();
            if (page == "1") {
                items.push_back(repo(1, "acme", "vault", "Java", false));
                items.push_back(repo(2, "acme", "fork", "Java", true));
                items.push_back(repo(3, "acme", "kt", "Kotlin", false));
            } else if (page == "2") {
                items.push_back(repo(1, "acme", "vault", "Java", false));  // duplicate across pages
                items.push_back(repo(4, "acme", "tiny", "Java", false));
                items.push_back(repo(5, "acme", "gone", "java", false));
            }
            res.set_content(json{{"items", items}}.dump(), "application/json");
        });
        server_.Get(R"(/repos/acme/(\w+)/pulls)", [this](const httplib::Request& req, httplib::Response& res) {
            auto name = req.matches[1].str();
            if (name == "tiny") {
                res.set_content("[{}, {}]", "application/json");
                return;
            }
            res.set_header("Link", "<" + base() + "/repos/acme/" + name + "/pulls?state=all&per_page=1&page=2>; "
                                   "rel=\"next\", <" + base() + "/repos/acme/" + name
                                   + "/pulls?state=all&per_page=1&page=137>; rel=\"last\"");
            res.set_content("[{}]", "application/json");
        });
        server_.Get(R"(/repos/acme/gone/commits)", [](const httplib::Request&, httplib::Response& res) {
            res.status = 404;
        });
        server_.Get(R"(/repos/acme/vault/commits)", [this](const httplib::Request& req, httplib::Response& res) {
            auto page = req.has_param("page") ? req.get_param_value("page") : "1";
            json arr = json::array();
            if (page == "1") {
                arr.push_back(commit(sha(0), "Fix XSS in view", 1));
                arr.push_back(commit(sha(1), "Merge branch 'dev'", 2));
                res.set_header("Link", "<" + base() + "/repos/acme/vault/commits?per_page=2&page=2>; rel=\"next\"");
            } else {
                arr.push_back(commit(sha(2), "Prevent SQL injection", 1));
                arr.push_back(commit(sha(3), "Tidy imports", 1));
            }
            res.set_content(arr.dump(), "application/json");
        });
        server_.Get(R"(/repos/acme/vault/commits/([0-9a-f]+))", [this](const httplib::Request& req,
                                                                        httplib::Response& res) {
            auto s = req.matches[1].str();
            ++detail_requests;
            if (s == sha(2) && req.get_header_value("Accept") == "application/vnd.github.diff") {
                res.status = 404;
                return;
            }
            if (req.get_header_value("Accept") == "application/vnd.github.diff") {
                res.set_content(testsupport::java_diff("src/main/java/A.java", 1), "text/plain");
                return;
            }
            json files = json::array({{{"filename", "src/main/java/A.java"}, {"status", "modified"}}});
            res.set_content(json{{"sha", s}, {"files", files}}.dump(), "application/json");
        });
        port_ = server_.bind_to_any_port("127.0.0.1");
        thread_ = std::thread([this] { server_.listen_after_bind(); });
        server_.wait_until_ready();
    }
    ~FakeGitHub()
    {
        server_.stop();
        thread_.join();
    }

    std::string base() const { return "http://127.0.0.1:" + std::to_string(port_); }
    static std::string sha(int i) { return testsupport::fake_sha("gh" + std::to_string(i)); }

    std::vector<std::string> queries;
    std::atomic<int> detail_requests{0};

private:
    static json repo(int id, const std::string& owner, const std::string& name, const std::string& lang, bool fork)
    {
        return {{"id", id},
                {"name", name},
                {"owner", {{"login", owner}}},
                {"language", lang},
                {"fork", fork},
                {"default_branch", "main"}};
    }
    static json commit(const std::string& s, const std::string& msg, int parents)
    {
        json ps = json::array();
        for (int i = 0; i < parents; ++i)
            ps.push_back({{"sha", sha(100 + i)}});
        return {{"sha", s},
                {"commit", {{"message", msg}, {"author", {{"date", "2023-03-01T10:00:00Z"}}}}},
                {"parents", ps}};
    }

    httplib::Server server_;
    int port_ = 0;
    std::thread thread_;
    std::mutex mu_;
};

GitHubOptions options(const FakeGitHub& gh, std::vector<std::chrono::milliseconds>* sleeps = nullptr)
{
    GitHubOptions o;
    o.api_base = gh.base();
    o.token = "tok-123";
    o.per_page = 2;
    o.timeout_s = 5;
    o.sleep = [sleeps](std::chrono::milliseconds d) {
        if (sleeps)
            sleeps->push_back(d);
    };
    return o;
}

RepoRecord vault()
{
    RepoRecord r;
    r.owner = "acme";
    r.name = "vault";
    r.primary_language = "Java";
    return r;
}

std::filesystem::path funnel_fixture()
{
    return std::filesystem::path(SYNREV_SOURCE_DIR) / "tests/fixtures/funnel_host.json";
}

} // namespace

TEST_SUITE("mining")
{
    TEST_CASE("link header parsing")
    {
        std::string h = "<https://api.github.com/x?page=2&per_page=1>; rel=\"next\", "
                        "<https://api.github.com/x?per_page=1&page=57>; rel=\"last\"";
        CHECK(link_rel(h, "next") == std::optional<std::string>("https://api.github.com/x?page=2&per_page=1"));
        CHECK(page_param(*link_rel(h, "last")) == std::optional<std::uint64_t>(57));
        CHECK_FALSE(link_rel(h, "prev"));
        CHECK_FALSE(page_param("https://x/y"));
    }

    TEST_CASE("discovery filters forks, language, duplicates and small repos")
    {
        FakeGitHub gh;
        GitHubHost host(options(gh));
        DiscoverOptions d;
        d.language = "Java";
        d.min_pr_count = 50;
        FixedClock clock("2024-02-02T00:00:00Z");
        std::vector<RepoRecord> got;
        discover_repos(host, d, clock, [&](RepoRecord r) { got.push_back(r); });
        REQUIRE(got.size() == 2);
        CHECK(got[0].key() == "acme/vault");
        CHECK(got[0].pr_count == 137);
        CHECK(got[0].mined_at == "2024-02-02T00:00:00Z");
        CHECK(got[0].host_id == "github:1");
        CHECK(got[1].key() == "acme/gone");
        CHECK(got[1].primary_language == "Java");
        REQUIRE_FALSE(gh.queries.empty());
        CHECK(gh.queries[0] == "language:Java fork:false");
        CHECK(gh.auth_headers.front() == "Bearer tok-123");

        d.include_forks = true;
        d.min_pr_count = 0;
        got.clear();
        discover_repos(host, d, clock, [&](RepoRecord r) { got.push_back(r); });
        CHECK(got.size() == 4);
        d.language.clear();
        CHECK(error_of([&] { discover_repos(host, d, clock, [](RepoRecord) {}); }) == ErrorCode::ConfigError);
    }

    TEST_CASE("commit listing follows pagination and skips files for merges")
    {
        FakeGitHub gh;
        GitHubHost host(options(gh));
        auto commits = enumerate_commits(host, vault());
        REQUIRE(commits.size() == 4);
        CHECK(commits[0].sha == FakeGitHub::sha(0));
        CHECK(commits[0].repo_ref == "acme/vault");
        CHECK(commits[0].changed_files.size() == 1);
        CHECK(commits[1].parent_count == 2);
        CHECK(commits[1].changed_files.empty());
        CHECK(commits[3].message == "Tidy imports");
        CHECK(gh.detail_requests == 3);
    }

    TEST_CASE("rate limits are waited out")
    {
        FakeGitHub gh;
        gh.rate_limit_hits = 2;
        std::vector<std::chrono::milliseconds> sleeps;
        GitHubHost host(options(gh, &sleeps));
        CHECK(host.count_pull_requests(vault()) == 137);
        CHECK(gh.requests == 3);
        REQUIRE(sleeps.size() == 2);
        for (auto s : sleeps)
            CHECK(s >= std::chrono::milliseconds(1000));

        gh.rate_limit_hits = 10;
        auto o = options(gh);
        o.max_retries = 1;
        GitHubHost strict(o);
        CHECK(error_of([&] { strict.count_pull_requests(vault()); }) == ErrorCode::RateLimited);
    }

    TEST_CASE("auth failures and missing resources")
    {
        FakeGitHub gh;
        GitHubHost host(options(gh));
        RepoRecord gone = vault();
        gone.name = "gone";
        CHECK(error_of([&] { enumerate_commits(host, gone); }) == ErrorCode::RepoGone);
        CHECK(error_of([&] { host.commit_diff(vault(), FakeGitHub::sha(2)); }) == ErrorCode::CommitNotFound);
        CHECK(host.commit_diff(vault(), FakeGitHub::sha(0)).rfind("diff --git", 0) == 0);
        CHECK(error_of([&] { fetch_commit_diff(host, vault(), FakeGitHub::sha(0), 10); }) == ErrorCode::DiffTooLarge);
        gh.reject_auth = true;
        CHECK(error_of([&] { host.count_pull_requests(vault()); }) == ErrorCode::AuthError);
    }

    TEST_CASE("run over the fake host stores commits and candidate diffs")
    {
        FakeGitHub gh;
        GitHubHost host(options(gh));
        TempDir dir("mine");
        RecordStore store(dir.path());
        MiningOptions mo;
        mo.discover.language = "Java";
        auto report = run_mining(host, store, mo, FixedClock("2024-02-02T00:00:00Z"));
        CHECK(report.repos == 2);
        CHECK(report.repos_gone == 1);
        CHECK(report.commits == 4);
        CHECK(report.diffs == 2);
        CHECK(report.commits_missing == 1);
        CHECK(report.errors.empty());
        CHECK(store.diff("acme/vault", FakeGitHub::sha(0)).has_value());
        CHECK_FALSE(store.diff("acme/vault", FakeGitHub::sha(1)).has_value());
        CHECK(store.repo_done("acme/vault"));

        gh.reject_auth = true;
        TempDir other("mine");
        RecordStore fresh(other.path());
        CHECK(error_of([&] { run_mining(host, fresh, mo, SystemClock()); }) == ErrorCode::AuthError);
    }

    TEST_CASE("fixture host funnel")
    {
        auto host = FixtureHost::load(funnel_fixture());
        TempDir dir("mine");
        RecordStore store(dir.path());
        MiningOptions mo;
        mo.discover.language = "Java";
        auto report = run_mining(host, store, mo, FixedClock("2024-02-02T00:00:00Z"));
        CHECK(report.repos == 1);
        CHECK(report.commits == 10);
        CHECK(store.repos().size() == 1);
        CHECK(store.repos()[0].pr_count == 120);
        CHECK(store.commits().size() == 10);
        CHECK(report.diffs == 3);

        // a second run skips the finished repo and writes nothing new
        auto before = read_file(dir / "commits.jsonl");
        RecordStore again(dir.path());
        auto second = run_mining(host, again, mo, FixedClock("2030-01-01T00:00:00Z"));
        CHECK(second.repos_skipped_done == 1);
        CHECK(read_file(dir / "commits.jsonl") == before);
        CHECK(again.repos()[0].mined_at == "2024-02-02T00:00:00Z");
    }

    TEST_CASE("record store keeps the last write per key")
    {
        TempDir dir("store");
        RecordStore store(dir.path());
        CommitRecord c;
        c.repo_ref = "acme/vault";
        c.sha = FakeGitHub::sha(7);
        c.message = "first";
        c.parent_count = 1;
        store.put_commit(c);
        c.message = "second";
        store.put_commit(c);
        auto all = store.commits();
        REQUIRE(all.size() == 1);
        CHECK(all[0].message == "second");
        store.put_diff(vault(), c.sha, "diff body\n");
        CHECK(store.diff("acme/vault", c.sha) == std::optional<std::string>("diff body\n"));
        CHECK(store.diff_path("acme/vault", c.sha).parent_path().filename() == "acme__vault");
        store.mark_repo_done("acme/vault");
        RecordStore reopened(dir.path());
        CHECK(reopened.repo_done("acme/vault"));
        CHECK_FALSE(reopened.repo_done("acme/other"));
    }
}
