#include <synrev/error.hpp>
#include <synrev/records.hpp>

#include <set>

namespace synrev {

std::string_view to_string(ChangeKind kind)
{
    switch (kind) {
    case ChangeKind::Added: return "added";
    case ChangeKind::Modified: return "modified";
    case ChangeKind::Deleted: return "deleted";
    case ChangeKind::Renamed: return "renamed";
    }
    return "modified";
}

ChangeKind change_kind_from_string(std::string_view s)
{
    if (s == "added")
        return ChangeKind::Added;
    if (s == "modified")
        return ChangeKind::Modified;
    if (s == "deleted")
        return ChangeKind::Deleted;
    if (s == "renamed")
        return ChangeKind::Renamed;
    throw Error(ErrorCode::SchemaError, "unknown change_kind '" + std::string(s) + "'");
}

bool is_valid_sha(std::string_view sha)
{
    if (sha.size() != 40)
        return false;
    for (char c : sha)
        if (!((c >= '0' && c <= '9') || (c >= 'a' && c <= 'f')))
            return false;
    return true;
}

namespace {

void expect_keys(const json& j, std::initializer_list<const char*> keys, const char* what)
{
    if (!j.is_object())
        throw Error(ErrorCode::SchemaError, std::string(what) + " is not an object");
    std::set<std::string> allowed(keys.begin(), keys.end());
    for (const auto& k : allowed)
        if (!j.contains(k))
            throw Error(ErrorCode::SchemaError, std::string(what) + " missing '" + k + "'");
    for (auto it = j.begin(); it != j.end(); ++it)
        if (!allowed.count(it.key()))
            throw Error(ErrorCode::SchemaError, std::string(what) + " has unknown key '" + it.key() + "'");
}

template <typename T>
T get_as(const json& j, const char* key)
{
    try {
        return j.at(key).get<T>();
    } catch (const json::exception& e) {
        throw Error(ErrorCode::SchemaError, std::string("field '") + key + "': " + e.what());
    }
}

} // namespace

json to_json(const RepoRecord& r)
{
    return json{{"host_id", r.host_id},
                {"owner", r.owner},
                {"name", r.name},
                {"primary_language", r.primary_language},
                {"pr_count", r.pr_count},
                {"default_branch", r.default_branch},
                {"mined_at", r.mined_at}};
}

json to_json(const CommitRecord& c)
{
    json files = json::array();
    for (const auto& f : c.changed_files)
        files.push_back({{"path", f.path}, {"change_kind", std::string(to_string(f.change_kind))}});
    return json{{"repo_ref", c.repo_ref},
                {"sha", c.sha},
                {"message", c.message},
                {"parent_count", c.parent_count},
                {"changed_files", files},
                {"authored_at", c.authored_at}};
}

RepoRecord repo_from_json(const json& j)
{
    expect_keys(j, {"host_id", "owner", "name", "primary_language", "pr_count", "default_branch", "mined_at"},
                "RepoRecord");
    RepoRecord r;
    r.host_id = get_as<std::string>(j, "host_id");
    r.owner = get_as<std::string>(j, "owner");
    r.name = get_as<std::string>(j, "name");
    r.primary_language = get_as<std::string>(j, "primary_language");
    r.pr_count = get_as<std::uint64_t>(j, "pr_count");
    r.default_branch = get_as<std::string>(j, "default_branch");
    r.mined_at = get_as<std::string>(j, "mined_at");
    return r;
}

CommitRecord commit_from_json(const json& j)
{
    expect_keys(j, {"repo_ref", "sha", "message", "parent_count", "changed_files", "authored_at"}, "CommitRecord");
    CommitRecord c;
    c.repo_ref = get_as<std::string>(j, "repo_ref");
    c.sha = get_as<std::string>(j, "sha");
    if (!is_valid_sha(c.sha))
        throw Error(ErrorCode::SchemaError, "sha '" + c.sha + "' is not 40 lowercase hex chars");
    c.message = get_as<std::string>(j, "message");
    c.parent_count = get_as<std::uint32_t>(j, "parent_count");
    c.authored_at = get_as<std::string>(j, "authored_at");
    const auto& files = j.at("changed_files");
    if (!files.is_array())
        throw Error(ErrorCode::SchemaError, "changed_files is not an array");
    for (const auto& f : files) {
        expect_keys(f, {"path", "change_kind"}, "changed_files entry");
        c.changed_files.push_back(
            {get_as<std::string>(f, "path"), change_kind_from_string(get_as<std::string>(f, "change_kind"))});
    }
    return c;
}

} // namespace synrev
