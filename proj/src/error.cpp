#include <synrev/error.hpp>

namespace synrev {

std::string_view to_string(ErrorCode code)
{
    switch (code) {
    case ErrorCode::ConfigError: return "ConfigError";
    case ErrorCode::MissingStageInput: return "MissingStageInput";
    case ErrorCode::IntegrityError: return "IntegrityError";
    case ErrorCode::LockHeld: return "LockHeld";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::AuthError: return "AuthError";
    case ErrorCode::RateLimited: return "RateLimited";
    case ErrorCode::HostUnavailable: return "HostUnavailable";
    case ErrorCode::RepoGone: return "RepoGone";
    case ErrorCode::CommitNotFound: return "CommitNotFound";
    case ErrorCode::DiffTooLarge: return "DiffTooLarge";
    case ErrorCode::MalformedDiff: return "MalformedDiff";
    case ErrorCode::DomainError: return "DomainError";
    case ErrorCode::NoLabels: return "NoLabels";
    case ErrorCode::RoundOrderViolation: return "RoundOrderViolation";
    case ErrorCode::MissingPlaceholderValue: return "MissingPlaceholderValue";
    case ErrorCode::UnknownPlaceholder: return "UnknownPlaceholder";
    case ErrorCode::TemplateError: return "TemplateError";
    case ErrorCode::DuplicateProvider: return "DuplicateProvider";
    case ErrorCode::UnknownProvider: return "UnknownProvider";
    case ErrorCode::ProviderError: return "ProviderError";
    case ErrorCode::Timeout: return "Timeout";
    case ErrorCode::PromptTooLarge: return "PromptTooLarge";
    case ErrorCode::IncompleteLabels: return "IncompleteLabels";
    case ErrorCode::EmptyCandidate: return "EmptyCandidate";
    case ErrorCode::EmptyReference: return "EmptyReference";
    case ErrorCode::LengthMismatch: return "LengthMismatch";
    case ErrorCode::SingleItemDegenerate: return "SingleItemDegenerate";
    case ErrorCode::MissingLabels: return "MissingLabels";
    case ErrorCode::SchemaError: return "SchemaError";
    case ErrorCode::DuplicateId: return "DuplicateId";
    case ErrorCode::EmptyItems: return "EmptyItems";
    case ErrorCode::DuplicateAnnotators: return "DuplicateAnnotators";
    case ErrorCode::UnknownSession: return "UnknownSession";
    case ErrorCode::NotYourSession: return "NotYourSession";
    case ErrorCode::AlreadyLabeled: return "AlreadyLabeled";
    case ErrorCode::UnknownItem: return "UnknownItem";
    case ErrorCode::NotDisagreed: return "NotDisagreed";
    case ErrorCode::ConflictOfInterest: return "ConflictOfInterest";
    case ErrorCode::Incomplete: return "Incomplete";
    case ErrorCode::InvalidLabel: return "InvalidLabel";
    }
    return "UnknownError";
}

int exit_code(ErrorCode code)
{
    switch (code) {
    case ErrorCode::ConfigError: return 2;
    case ErrorCode::MissingStageInput: return 3;
    case ErrorCode::IntegrityError: return 4;
    case ErrorCode::LockHeld: return 5;
    case ErrorCode::IoError: return 6;
    case ErrorCode::AuthError: return 7;
    case ErrorCode::RateLimited: return 8;
    case ErrorCode::HostUnavailable:
    case ErrorCode::RepoGone:
    case ErrorCode::CommitNotFound:
    case ErrorCode::DiffTooLarge: return 9;
    case ErrorCode::MalformedDiff:
    case ErrorCode::SchemaError:
    case ErrorCode::DuplicateId: return 10;
    case ErrorCode::DomainError:
    case ErrorCode::NoLabels:
    case ErrorCode::RoundOrderViolation: return 11;
    case ErrorCode::MissingPlaceholderValue:
    case ErrorCode::UnknownPlaceholder:
    case ErrorCode::TemplateError: return 12;
    case ErrorCode::DuplicateProvider:
    case ErrorCode::UnknownProvider:
    case ErrorCode::ProviderError:
    case ErrorCode::Timeout:
    case ErrorCode::PromptTooLarge: return 13;
    case ErrorCode::IncompleteLabels:
    case ErrorCode::MissingLabels:
    case ErrorCode::Incomplete: return 14;
    case ErrorCode::EmptyCandidate:
    case ErrorCode::EmptyReference:
    case ErrorCode::LengthMismatch:
    case ErrorCode::SingleItemDegenerate: return 15;
    case ErrorCode::EmptyItems:
    case ErrorCode::DuplicateAnnotators:
    case ErrorCode::UnknownSession:
    case ErrorCode::NotYourSession:
    case ErrorCode::AlreadyLabeled:
    case ErrorCode::UnknownItem:
    case ErrorCode::NotDisagreed:
    case ErrorCode::ConflictOfInterest:
    case ErrorCode::InvalidLabel: return 16;
    }
    return 1;
}

} // namespace synrev
