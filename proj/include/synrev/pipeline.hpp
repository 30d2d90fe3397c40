#pragma once

#include <synrev/config.hpp>
#include <synrev/util.hpp>

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace synrev::pipeline {

/// SHA-256 of a file, or of a directory tree as (relative path, file hash) pairs.
std::string hash_path(const std::filesystem::path& p);

/// Written by every stage to <output>/manifests/<stage>.json. Paths are relative
/// to the output directory.
struct StageManifest {
    std::string stage;
    std::string created_at;
    std::map<std::string, std::string> inputs;
    std::map<std::string, std::string> outputs;
    json summary;

    json to_json() const;
    static StageManifest from_json(const json& j);
};

/// Exclusive per-output-directory lock. A lock left by a dead process is taken over.
class OutputLock {
public:
    explicit OutputLock(const std::filesystem::path& output_dir);
    ~OutputLock();
    OutputLock(const OutputLock&) = delete;
    OutputLock& operator=(const OutputLock&) = delete;

private:
    std::filesystem::path path_;
};

struct RunOptions {
    std::shared_ptr<const Clock> clock = std::make_shared<SystemClock>();
    SleepFn sleep = real_sleep;
};

struct AnnotateRequest {
    std::string kind;
    std::vector<std::string> annotators;
    std::optional<std::string> adjudicator;
    int round = 1;                                   // keyword_commit
    std::optional<std::filesystem::path> predictions;  // final_evaluation
    std::string rubric_version = "1";
};

/// The pipeline stages. Each returns a JSON summary; each refuses to run when
/// an upstream stage is missing (MissingStageInput) or its outputs changed
/// since that stage ran (IntegrityError).
class Pipeline {
public:
    Pipeline(PipelineConfig config, RunOptions options = {});

    json mine();
    json filter();
    json keywords_sample(int round);
    json keywords_refine(int round, const std::filesystem::path& labels);
    json annotate_create(const AnnotateRequest& request);
    /// With stop_after set, returns after that many new cells without writing
    /// manifests, as an interrupted run would leave things.
    json grid_run(std::optional<std::size_t> stop_after = std::nullopt);
    json grid_select(const std::filesystem::path& labels);
    json dataset_build();
    json external_filter(const std::optional<std::filesystem::path>& keywords_override = std::nullopt);
    json evaluate(const std::filesystem::path& predictions, const std::filesystem::path& labels,
                  const std::optional<std::filesystem::path>& vetting = std::nullopt);
    json report() const;

    const PipelineConfig& config() const { return config_; }
    std::filesystem::path out(const std::filesystem::path& rel) const;
    std::filesystem::path sessions_dir() const { return out("annotation/sessions"); }

private:
    struct SecurityCommit;

    StageManifest require_stage(const std::string& stage) const;
    void write_manifest(const std::string& stage, const std::vector<std::string>& outputs,
                        const std::vector<const StageManifest*>& upstream, json summary);
    std::vector<std::string> keyword_list(std::string& version) const;
    std::vector<SecurityCommit> load_security() const;
    std::string diff_for(const CommitRecord& c) const;

    PipelineConfig config_;
    RunOptions options_;
    std::filesystem::path out_;
};

} // namespace synrev::pipeline
