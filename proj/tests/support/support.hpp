#pragma once

#include <synrev/error.hpp>
#include <synrev/records.hpp>
#include <synrev/util.hpp>

#include <cstdlib>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <unistd.h>

namespace testsupport {

namespace fs = std::filesystem;
using synrev::json;

// Removed on scope exit unless SYNREV_KEEP_TMP is set.
class TempDir {
public:
    explicit TempDir(const std::string& tag = "t")
    {
        std::string tmpl = (fs::temp_directory_path() / ("synrev-" + tag + "-XXXXXX")).string();
        if (!mkdtemp(tmpl.data()))
            throw std::runtime_error("mkdtemp failed");
        path_ = tmpl;
    }
    ~TempDir()
    {
        if (!std::getenv("SYNREV_KEEP_TMP")) {
            std::error_code ec;
            fs::remove_all(path_, ec);
        }
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const fs::path& path() const { return path_; }
    fs::path operator/(const std::string& rel) const { return path_ / rel; }

private:
    fs::path path_;
};

// Error code of whatever f throws; nullopt when it returns normally.
inline std::optional<synrev::ErrorCode> error_of(const std::function<void()>& f)
{
    try {
        f();
    } catch (const synrev::Error& e) {
        return e.code();
    }
    return std::nullopt;
}

inline std::string fake_sha(const std::string& seed)
{
    return synrev::sha256_hex(seed).substr(0, 40);
}

inline std::string java_diff(const std::string& path, int i)
{
    auto n = std::to_string(i);
    return "diff --git a/" + path + " b/" + path + "\n"
         + "index 0a1b2c3..4d5e6f7 100644\n--- a/" + path + "\n+++ b/" + path + "\n"
         + "@@ -" + std::to_string(10 + i % 7) + ",4 +" + std::to_string(10 + i % 7) + ",5 @@\n"
         + "     public String render(String input" + n + ") {\n"
         + "-        return \"<div>\" + input" + n + " + \"</div>\";\n"
         + "+        String safe = Encoder.forHtml(input" + n + ");\n"
         + "+        return \"<div>\" + safe + \"</div>\";\n"
         + "     }\n"
         + " \n"
         + " }\n";
}

inline const std::vector<std::string>& security_phrases()
{
    static const std::vector<std::string> p{"Fix XSS in view",        "Prevent SQL injection in dao",
                                            "Fix path traversal in",  "Guard against buffer overflow in",
                                            "Fix security issue in",  "Sanitize input for",
                                            "Close CSRF hole in",     "Fix denial of service in parser for"};
    return p;
}

// A fixture code host with one Java repo holding `n_security` single-file
// security commits and `n_plain` unrelated ones, interleaved.
inline json grid_host(std::size_t n_security, std::size_t n_plain = 0)
{
    json commits = json::array();
    std::size_t s = 0, p = 0;
    for (std::size_t i = 0; s < n_security || p < n_plain; ++i) {
        bool sec = s < n_security && (p >= n_plain || i % 3 != 2);
        std::string cls = "Widget" + std::to_string(i);
        std::string path = "src/main/java/org/acme/ledger/" + cls + ".java";
        json c{{"sha", fake_sha("ledger-" + std::to_string(i))},
               {"parents", 1},
               {"authored_at", "2022-01-01T00:00:00Z"},
               {"files", json::array({{{"path", path}, {"status", "modified"}}})},
               {"diff", java_diff(path, static_cast<int>(i))}};
        if (sec) {
            c["message"] = security_phrases()[s % security_phrases().size()] + " " + cls;
            ++s;
        } else {
            c["message"] = "Tidy up formatting in " + cls;
            ++p;
        }
        commits.push_back(c);
    }
    return json{{"host_id", "fixture"},
                {"repos", json::array({{{"owner", "acme"},
                                        {"name", "ledger"},
                                        {"language", "Java"},
                                        {"pr_count", 500},
                                        {"commits", commits}}})}};
}

inline std::vector<synrev::CommitWithDiff> grid_commits(std::size_t n)
{
    auto host = grid_host(n);
    std::vector<synrev::CommitWithDiff> out;
    for (const auto& c : host["repos"][0]["commits"]) {
        synrev::CommitWithDiff cd;
        cd.commit.repo_ref = "acme/ledger";
        cd.commit.sha = c["sha"];
        cd.commit.message = c["message"];
        cd.commit.parent_count = 1;
        cd.commit.changed_files = {{c["files"][0]["path"], synrev::ChangeKind::Modified}};
        cd.commit.authored_at = c["authored_at"];
        cd.diff = c["diff"];
        out.push_back(std::move(cd));
    }
    return out;
}

// Config for the fixture pipeline, written next to the host document.
inline json fixture_config(const fs::path& host_path, const fs::path& seed_list, std::size_t providers = 4,
                           std::size_t sample_size = 100)
{
    json provs = json::array();
    for (std::size_t i = 0; i < providers; ++i)
        provs.push_back({{"provider_id", "mock-" + std::string(1, static_cast<char>('a' + i))},
                         {"kind", "mock"},
                         {"max_concurrency", 4}});
    return json{{"output_dir", "out"},
                {"mining", {{"host", "fixture"}, {"fixture_path", host_path.string()}, {"workers", 2}}},
                {"keywords", {{"seed_list", seed_list.string()}}},
                {"providers", provs},
                {"grid", {{"sample_size", sample_size}, {"workers", 4}}},
                {"seeds", {{"keyword_sample", 11}, {"grid_sample", 12}, {"annotation", 13}}}};
}

inline void write_text(const fs::path& p, const std::string& text)
{
    fs::create_directories(p.parent_path());
    synrev::write_file_atomic(p, text);
}

// Runs a command through the shell; returns the exit status (or -1).
inline int run_cmd(const std::string& cmd)
{
    int rc = std::system(cmd.c_str());
    if (rc == -1)
        return -1;
    if (WIFEXITED(rc))
        return WEXITSTATUS(rc);
    return 128 + WTERMSIG(rc);
}

inline std::string shell_quote(const std::string& s)
{
    std::string out = "'";
    for (char c : s) {
        if (c == '\'')
            out += "'\\''";
        else
            out += c;
    }
    return out + "'";
}

} // namespace testsupport
