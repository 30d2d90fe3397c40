#pragma once

#include <nlohmann/json.hpp>

#include <cstdint>
#include <string>
#include <vector>

namespace synrev {

using json = nlohmann::json;

struct RepoRecord {
    std::string host_id;
    std::string owner;
    std::string name;
    std::string primary_language;
    std::uint64_t pr_count = 0;
    std::string default_branch;
    std::string mined_at;

    /// "owner/name"; unique within a mining run.
    std::string key() const { return owner + "/" + name; }

    bool operator==(const RepoRecord&) const = default;
};

enum class ChangeKind { Added, Modified, Deleted, Renamed };

std::string_view to_string(ChangeKind kind);
ChangeKind change_kind_from_string(std::string_view s);

struct ChangedFile {
    std::string path;
    ChangeKind change_kind = ChangeKind::Modified;

    bool operator==(const ChangedFile&) const = default;
};

struct CommitRecord {
    std::string repo_ref;  // RepoRecord::key()
    std::string sha;
    std::string message;
    std::uint32_t parent_count = 0;
    std::vector<ChangedFile> changed_files;
    std::string authored_at;

    bool operator==(const CommitRecord&) const = default;
};

/// 40 lowercase hex characters.
bool is_valid_sha(std::string_view sha);

// Field names match the record types one-to-one; unknown or missing keys throw SchemaError.
json to_json(const RepoRecord& r);
json to_json(const CommitRecord& c);
RepoRecord repo_from_json(const json& j);
CommitRecord commit_from_json(const json& j);

/// A commit together with its diff text, the unit the generation stages consume.
struct CommitWithDiff {
    CommitRecord commit;
    std::string diff;
};

} // namespace synrev
