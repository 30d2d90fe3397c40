#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace synrev {

enum class ErrorCode {
    // configuration and stage plumbing
    ConfigError,
    MissingStageInput,
    IntegrityError,
    LockHeld,
    IoError,
    // mining
    AuthError,
    RateLimited,
    HostUnavailable,
    RepoGone,
    CommitNotFound,
    DiffTooLarge,
    // diffkit
    MalformedDiff,
    // keywords
    DomainError,
    NoLabels,
    RoundOrderViolation,
    // prompts
    MissingPlaceholderValue,
    UnknownPlaceholder,
    TemplateError,
    // llm gateway
    DuplicateProvider,
    UnknownProvider,
    ProviderError,
    Timeout,
    PromptTooLarge,
    // orchestrator
    IncompleteLabels,
    // metrics
    EmptyCandidate,
    EmptyReference,
    LengthMismatch,
    SingleItemDegenerate,
    MissingLabels,
    // datasets
    SchemaError,
    DuplicateId,
    // annotation
    EmptyItems,
    DuplicateAnnotators,
    UnknownSession,
    NotYourSession,
    AlreadyLabeled,
    UnknownItem,
    NotDisagreed,
    ConflictOfInterest,
    Incomplete,
    InvalidLabel,
};

std::string_view to_string(ErrorCode code);

/// Process exit code for a given error class. Distinct per class family.
int exit_code(ErrorCode code);

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code)
    {
    }

    ErrorCode code() const noexcept { return code_; }

    // Context attached by some error kinds.
    std::optional<std::size_t> byte_offset;  // MalformedDiff
    std::optional<std::size_t> line;         // SchemaError
    std::optional<double> retry_after_s;     // RateLimited
    std::optional<int> http_status;          // ProviderError, host errors
    std::string payload;                     // ProviderError body

private:
    ErrorCode code_;
};

} // namespace synrev
