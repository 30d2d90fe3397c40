#pragma once

#include <synrev/records.hpp>

#include <cstddef>
#include <filesystem>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace synrev::datasets {

/// One fine-tune-ready tuple. Field names are the JSONL keys, exactly.
struct DatasetSample {
    std::string id;
    std::string repo;
    std::string sha;
    std::string diff;
    std::string message;
    std::string synthetic_review;
    std::string provider_id;
    std::string strategy;
    std::string template_version;
    std::string created_at;

    static std::string compute_id(std::string_view repo, std::string_view sha, std::string_view provider_id,
                                  std::string_view strategy, std::string_view template_version);
    /// Fills id from the provenance fields.
    void assign_id();
    /// SchemaError when a field is empty or the id does not match the provenance.
    void validate() const;

    json to_json() const;
    static DatasetSample from_json(const json& j);

    bool operator==(const DatasetSample&) const = default;
};

/// Reads non-blank lines as JSON objects. Parse failures and exceptions thrown by
/// `fn` are rethrown as SchemaError with the 1-based line number attached.
void for_each_jsonl(const std::filesystem::path& path, const std::function<void(const json&, std::size_t)>& fn);

/// Writes one object per line, newline-terminated. Throws DuplicateId, SchemaError, IoError.
std::size_t write_jsonl(std::span<const DatasetSample> samples, const std::filesystem::path& path);
std::vector<DatasetSample> read_jsonl(const std::filesystem::path& path);

struct ExternalReviewSample {
    std::string diff_hunk;
    std::string review_comment;
    std::string source_partition;

    bool operator==(const ExternalReviewSample&) const = default;
};

struct FlaggedSample {
    ExternalReviewSample sample;
    std::vector<std::string> matched_keywords;

    json to_json() const;
    static FlaggedSample from_json(const json& j);
    bool operator==(const FlaggedSample&) const = default;
};

/// Which source keys hold the two text fields in an upstream partition.
struct ColumnMapping {
    std::string diff_hunk = "diff_hunk";
    std::string review_comment = "review_comment";

    json to_json() const;
    static ColumnMapping from_json(const json& j);
};

/// JSONL partition with arbitrary extra keys; rows with an empty mapped field are a SchemaError.
std::vector<ExternalReviewSample> read_external_partition(const std::filesystem::path& path,
                                                          const ColumnMapping& mapping,
                                                          const std::string& partition_name);

/// Keeps samples whose review comment matches a keyword. The diff hunk is never inspected.
std::vector<FlaggedSample> filter_external_partition(std::span<const ExternalReviewSample> samples,
                                                     std::span<const std::string> keywords);

std::size_t write_flagged_jsonl(std::span<const FlaggedSample> samples, const std::filesystem::path& path);
std::vector<FlaggedSample> read_flagged_jsonl(const std::filesystem::path& path);

struct DatasetManifest {
    std::size_t sample_count = 0;
    std::size_t failure_count = 0;
    std::string keyword_list_version;
    std::vector<std::string> template_versions;
    std::string created_at;

    json to_json() const;
};

} // namespace synrev::datasets
