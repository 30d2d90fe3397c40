#include <synrev/datasets.hpp>
#include <synrev/error.hpp>
#include <synrev/keywords.hpp>
#include <synrev/util.hpp>

#include <fstream>
#include <set>

namespace synrev::datasets {

namespace {

constexpr const char* kSampleKeys[] = {"id",          "repo",     "sha",              "diff",      "message",
                                       "synthetic_review", "provider_id", "strategy", "template_version", "created_at"};

std::string dump_line(const json& j)
{
    return j.dump(-1, ' ', false, json::error_handler_t::replace) + "\n";
}

const std::string& string_field(const json& j, const char* key)
{
    auto it = j.find(key);
    if (it == j.end())
        throw Error(ErrorCode::SchemaError, std::string("missing key '") + key + "'");
    if (!it->is_string())
        throw Error(ErrorCode::SchemaError, std::string("key '") + key + "' is not a string");
    return it->get_ref<const std::string&>();
}

void write_lines(const std::filesystem::path& path, const std::string& body)
{
    try {
        write_file_atomic(path, body);
    } catch (const Error&) {
        throw;
    } catch (const std::exception& e) {
        throw Error(ErrorCode::IoError, path.string() + ": " + e.what());
    }
}

} // namespace

std::string DatasetSample::compute_id(std::string_view repo, std::string_view sha, std::string_view provider_id,
                                      std::string_view strategy, std::string_view template_version)
{
    Sha256 h;
    h.field(repo).field(sha).field(provider_id).field(strategy).field(template_version);
    return h.hex_digest();
}

void DatasetSample::assign_id()
{
    id = compute_id(repo, sha, provider_id, strategy, template_version);
}

void DatasetSample::validate() const
{
    const std::pair<const char*, const std::string*> fields[] = {
        {"id", &id},
        {"repo", &repo},
        {"sha", &sha},
        {"diff", &diff},
        {"message", &message},
        {"synthetic_review", &synthetic_review},
        {"provider_id", &provider_id},
        {"strategy", &strategy},
        {"template_version", &template_version},
        {"created_at", &created_at},
    };
    for (const auto& [name, value] : fields)
        if (value->empty())
            throw Error(ErrorCode::SchemaError, std::string("field '") + name + "' is empty");
    if (id != compute_id(repo, sha, provider_id, strategy, template_version))
        throw Error(ErrorCode::SchemaError, "id does not match (repo, sha, provider_id, strategy, template_version)");
}

json DatasetSample::to_json() const
{
    json j;
    j["id"] = id;
    j["repo"] = repo;
    j["sha"] = sha;
    j["diff"] = diff;
    j["message"] = message;
    j["synthetic_review"] = synthetic_review;
    j["provider_id"] = provider_id;
    j["strategy"] = strategy;
    j["template_version"] = template_version;
    j["created_at"] = created_at;
    return j;
}

DatasetSample DatasetSample::from_json(const json& j)
{
    if (!j.is_object())
        throw Error(ErrorCode::SchemaError, "sample is not an object");
    std::set<std::string> known(std::begin(kSampleKeys), std::end(kSampleKeys));
    for (auto it = j.begin(); it != j.end(); ++it)
        if (!known.count(it.key()))
            throw Error(ErrorCode::SchemaError, "unknown key '" + it.key() + "'");
    DatasetSample s;
    s.id = string_field(j, "id");
    s.repo = string_field(j, "repo");
    s.sha = string_field(j, "sha");
    s.diff = string_field(j, "diff");
    s.message = string_field(j, "message");
    s.synthetic_review = string_field(j, "synthetic_review");
    s.provider_id = string_field(j, "provider_id");
    s.strategy = string_field(j, "strategy");
    s.template_version = string_field(j, "template_version");
    s.created_at = string_field(j, "created_at");
    s.validate();
    return s;
}

void for_each_jsonl(const std::filesystem::path& path, const std::function<void(const json&, std::size_t)>& fn)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw Error(ErrorCode::IoError, "cannot open " + path.string());
    std::string line;
    std::size_t n = 0;
    while (std::getline(in, line)) {
        ++n;
        if (!line.empty() && line.back() == '\r')
            line.pop_back();
        if (trim(line).empty())
            continue;
        auto fail = [&](const std::string& why) {
            Error e(ErrorCode::SchemaError, path.filename().string() + ":" + std::to_string(n) + ": " + why);
            e.line = n;
            throw e;
        };
        json j = json::parse(line, nullptr, false);
        if (j.is_discarded())
            fail("invalid JSON");
        try {
            fn(j, n);
        } catch (const Error& e) {
            if (e.code() != ErrorCode::SchemaError || e.line)
                throw;
            fail(e.what());
        } catch (const json::exception& e) {
            fail(e.what());
        }
    }
    if (in.bad())
        throw Error(ErrorCode::IoError, "read failed: " + path.string());
}

std::size_t write_jsonl(std::span<const DatasetSample> samples, const std::filesystem::path& path)
{
    std::set<std::string> seen;
    std::string body;
    for (const auto& s : samples) {
        s.validate();
        if (!seen.insert(s.id).second)
            throw Error(ErrorCode::DuplicateId, "duplicate sample id " + s.id + " (" + s.repo + "@" + s.sha + ")");
        body += dump_line(s.to_json());
    }
    write_lines(path, body);
    return samples.size();
}

std::vector<DatasetSample> read_jsonl(const std::filesystem::path& path)
{
    std::vector<DatasetSample> out;
    std::set<std::string> seen;
    for_each_jsonl(path, [&](const json& j, std::size_t) {
        auto s = DatasetSample::from_json(j);
        if (!seen.insert(s.id).second)
            throw Error(ErrorCode::DuplicateId, "duplicate sample id " + s.id);
        out.push_back(std::move(s));
    });
    return out;
}

json FlaggedSample::to_json() const
{
    return json{{"diff_hunk", sample.diff_hunk},
                {"review_comment", sample.review_comment},
                {"source_partition", sample.source_partition},
                {"matched_keywords", matched_keywords}};
}

FlaggedSample FlaggedSample::from_json(const json& j)
{
    FlaggedSample f;
    f.sample.diff_hunk = string_field(j, "diff_hunk");
    f.sample.review_comment = string_field(j, "review_comment");
    f.sample.source_partition = string_field(j, "source_partition");
    if (!j.contains("matched_keywords") || !j.at("matched_keywords").is_array())
        throw Error(ErrorCode::SchemaError, "matched_keywords must be an array");
    f.matched_keywords = j.at("matched_keywords").get<std::vector<std::string>>();
    if (j.size() != 4)
        throw Error(ErrorCode::SchemaError, "unexpected keys in flagged sample");
    return f;
}

json ColumnMapping::to_json() const
{
    return json{{"diff_hunk", diff_hunk}, {"review_comment", review_comment}};
}

ColumnMapping ColumnMapping::from_json(const json& j)
{
    ColumnMapping m;
    for (auto it = j.begin(); it != j.end(); ++it) {
        if (it.key() == "diff_hunk")
            m.diff_hunk = it->get<std::string>();
        else if (it.key() == "review_comment")
            m.review_comment = it->get<std::string>();
        else
            throw Error(ErrorCode::ConfigError, "column mapping: unknown key '" + it.key() + "'");
    }
    return m;
}

std::vector<ExternalReviewSample> read_external_partition(const std::filesystem::path& path,
                                                          const ColumnMapping& mapping,
                                                          const std::string& partition_name)
{
    std::vector<ExternalReviewSample> out;
    for_each_jsonl(path, [&](const json& j, std::size_t) {
        ExternalReviewSample s;
        s.diff_hunk = string_field(j, mapping.diff_hunk.c_str());
        s.review_comment = string_field(j, mapping.review_comment.c_str());
        s.source_partition = partition_name;
        if (s.diff_hunk.empty() || s.review_comment.empty())
            throw Error(ErrorCode::SchemaError, "empty diff hunk or review comment");
        out.push_back(std::move(s));
    });
    return out;
}

std::vector<FlaggedSample> filter_external_partition(std::span<const ExternalReviewSample> samples,
                                                     std::span<const std::string> keywords)
{
    keywords::Matcher matcher(keywords);
    std::vector<FlaggedSample> out;
    for (const auto& s : samples) {
        auto hits = matcher.match(s.review_comment);
        if (!hits.empty())
            out.push_back({s, std::move(hits)});
    }
    return out;
}

std::size_t write_flagged_jsonl(std::span<const FlaggedSample> samples, const std::filesystem::path& path)
{
    std::string body;
    for (const auto& s : samples)
        body += dump_line(s.to_json());
    write_lines(path, body);
    return samples.size();
}

std::vector<FlaggedSample> read_flagged_jsonl(const std::filesystem::path& path)
{
    std::vector<FlaggedSample> out;
    for_each_jsonl(path, [&](const json& j, std::size_t) { out.push_back(FlaggedSample::from_json(j)); });
    return out;
}

json DatasetManifest::to_json() const
{
    return json{{"sample_count", sample_count},
                {"failure_count", failure_count},
                {"keyword_list_version", keyword_list_version},
                {"template_versions", template_versions},
                {"created_at", created_at}};
}

} // namespace synrev::datasets
