#pragma once

#include <synrev/diffkit.hpp>
#include <synrev/ratelimit.hpp>
#include <synrev/records.hpp>
#include <synrev/util.hpp>

#include <atomic>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

namespace synrev::mining {

struct RepoCandidate {
    RepoRecord record;  // pr_count not yet filled
    bool fork = false;
};

/// Raw access to a code host. Implementations throw AuthError, RateLimited,
/// HostUnavailable, RepoGone and CommitNotFound.
class CodeHost {
public:
    virtual ~CodeHost() = default;
    virtual std::string host_id() const = 0;
    /// One page of repositories in the language; an empty page ends the listing.
    /// `slice` selects an extra search qualifier (e.g. a creation-date range).
    virtual std::vector<RepoCandidate> search_repos(const std::string& language, const std::string& slice,
                                                    std::uint32_t page) = 0;
    /// All pull requests, open and closed.
    virtual std::uint64_t count_pull_requests(const RepoRecord& repo) = 0;
    /// Reverse-chronological; `want_files(parent_count)` says whether changed
    /// files are needed for a commit.
    virtual void list_commits(const RepoRecord& repo, const std::function<bool(std::uint32_t)>& want_files,
                              const std::function<void(CommitRecord)>& emit) = 0;
    virtual std::string commit_diff(const RepoRecord& repo, const std::string& sha) = 0;
};

struct DiscoverOptions {
    std::string language;
    std::uint64_t min_pr_count = 50;
    std::optional<std::uint32_t> page_limit;
    std::vector<std::string> slices{""};
    bool include_forks = false;
    std::optional<std::size_t> max_repos;
};

/// Language-matched, deduplicated on (owner, name), pr_count >= min_pr_count.
void discover_repos(CodeHost& host, const DiscoverOptions& options, const Clock& clock,
                    const std::function<void(RepoRecord)>& emit);

/// Every commit once, with parent_count populated; changed files for
/// non-merge commits.
std::vector<CommitRecord> enumerate_commits(CodeHost& host, const RepoRecord& repo);

/// Throws DiffTooLarge past the cap.
std::string fetch_commit_diff(CodeHost& host, const RepoRecord& repo, const std::string& sha,
                              std::uint64_t cap_bytes = 1 << 20);

// --- hosts -------------------------------------------------------------------

struct GitHubOptions {
    std::string api_base = "https://api.github.com";
    std::string token;  // empty for anonymous access
    double requests_per_minute = 0;
    std::uint32_t max_retries = 3;
    std::uint32_t per_page = 100;
    double timeout_s = 30;
    SleepFn sleep = real_sleep;
};

class GitHubHost final : public CodeHost {
public:
    explicit GitHubHost(GitHubOptions options);

    std::string host_id() const override { return "github"; }
    std::vector<RepoCandidate> search_repos(const std::string& language, const std::string& slice,
                                            std::uint32_t page) override;
    std::uint64_t count_pull_requests(const RepoRecord& repo) override;
    void list_commits(const RepoRecord& repo, const std::function<bool(std::uint32_t)>& want_files,
                      const std::function<void(CommitRecord)>& emit) override;
    std::string commit_diff(const RepoRecord& repo, const std::string& sha) override;

    std::uint64_t requests_sent() const { return requests_; }

private:
    struct Reply {
        int status = 0;
        std::string body;
        std::optional<std::string> link;
    };
    /// GET with rate limiting and retry on RateLimited / transport errors.
    Reply get(const std::string& path_or_url, const std::string& accept, const RepoRecord* repo,
              const std::string* sha);

    GitHubOptions options_;
    TokenBucket bucket_;
    std::atomic<std::uint64_t> requests_{0};
};

/// Next-page URL from an RFC 8288 Link header, and the page number of rel="last".
std::optional<std::string> link_rel(std::string_view link_header, std::string_view rel);
std::optional<std::uint64_t> page_param(std::string_view url);

/// Offline host backed by a JSON document:
/// {"host_id": "...", "repos": [{"owner", "name", "language", "fork", "pr_count",
///   "default_branch", "gone", "commits": [{"sha", "message", "parents",
///   "authored_at", "files": [{"path", "status"}], "diff"}]}]}
/// Commits are listed newest first. search_repos returns all repos on page 1.
class FixtureHost final : public CodeHost {
public:
    explicit FixtureHost(const json& doc);
    static FixtureHost load(const std::filesystem::path& path);

    std::string host_id() const override { return host_id_; }
    std::vector<RepoCandidate> search_repos(const std::string& language, const std::string& slice,
                                            std::uint32_t page) override;
    std::uint64_t count_pull_requests(const RepoRecord& repo) override;
    void list_commits(const RepoRecord& repo, const std::function<bool(std::uint32_t)>& want_files,
                      const std::function<void(CommitRecord)>& emit) override;
    std::string commit_diff(const RepoRecord& repo, const std::string& sha) override;

private:
    const json& repo_doc(const RepoRecord& repo) const;

    std::string host_id_;
    json doc_;
};

// --- persistence -------------------------------------------------------------

/// Append-only JSONL record store with last-write-wins on identical keys.
/// Layout: repos.jsonl, commits.jsonl, diffs/<owner>__<name>/<sha>.diff, progress.json.
class RecordStore {
public:
    explicit RecordStore(std::filesystem::path dir);

    void put_repo(const RepoRecord& r);
    void put_commit(const CommitRecord& c);
    void put_diff(const RepoRecord& repo, const std::string& sha, std::string_view diff);
    void mark_repo_done(const std::string& repo_key);

    /// Deduplicated, in first-seen order.
    std::vector<RepoRecord> repos() const;
    std::vector<CommitRecord> commits() const;
    std::optional<std::string> diff(const std::string& repo_key, const std::string& sha) const;
    std::filesystem::path diff_path(const std::string& repo_key, const std::string& sha) const;
    bool repo_done(const std::string& repo_key) const;

    const std::filesystem::path& dir() const { return dir_; }

private:
    void append(const std::filesystem::path& file, const json& j);

    std::filesystem::path dir_;
    mutable std::mutex mu_;
    std::map<std::string, bool> done_;
};

struct MiningOptions {
    DiscoverOptions discover;
    std::size_t workers = 4;
    std::uint64_t diff_cap_bytes = 1 << 20;
    /// Diffs are fetched only for commits this policy accepts.
    diffkit::CandidacyPolicy policy;
};

struct MiningReport {
    std::size_t repos = 0;
    std::size_t repos_skipped_done = 0;
    std::size_t repos_gone = 0;
    std::size_t commits = 0;
    std::size_t diffs = 0;
    std::size_t diffs_too_large = 0;
    std::size_t commits_missing = 0;
    std::vector<std::string> errors;

    json to_json() const;
};

/// Discovers repositories, then mines them on a bounded worker pool. Repos
/// already marked done in the store are skipped, so an interrupted run resumes.
MiningReport run_mining(CodeHost& host, RecordStore& store, const MiningOptions& options, const Clock& clock);

} // namespace synrev::mining
