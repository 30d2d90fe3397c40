#pragma once

#include <synrev/records.hpp>

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace synrev::diffkit {

enum class LineTag : std::uint8_t { Context, Add, Del };

struct HunkLine {
    LineTag tag = LineTag::Context;
    std::string text;
    // Followed by "\ No newline at end of file".
    bool no_newline = false;

    bool operator==(const HunkLine&) const = default;
};

struct Hunk {
    std::uint64_t old_start = 0;
    std::uint64_t old_len = 0;
    std::uint64_t new_start = 0;
    std::uint64_t new_len = 0;
    std::string section;  // text after the closing "@@", if any
    std::vector<HunkLine> lines;

    bool operator==(const Hunk&) const = default;
};

/// One file section of a unified diff. Paths are stripped of the a/ b/ prefixes;
/// a missing side is "/dev/null". Binary and header-only sections (pure renames,
/// mode changes, empty files) carry no hunks; every other section has at least one.
struct FileDiff {
    std::string old_path;
    std::string new_path;
    std::vector<Hunk> hunks;
    bool is_binary = false;
    bool header_only = false;

    bool operator==(const FileDiff&) const = default;
};

/// Parses git-style or plain unified diff text. Text before the first file
/// header is ignored (commit headers, email preambles). Throws Error(MalformedDiff)
/// with byte_offset set on a bad hunk header or a hunk whose body does not match
/// its declared line counts.
std::vector<FileDiff> parse_unified_diff(std::string_view text);

/// Re-emits parsed sections as git-style unified diff text.
std::string serialize_unified_diff(std::span<const FileDiff> files);

/// Structural form served to the annotation UI.
json to_json(const FileDiff& f);

/// Parses a single "@@ -a,b +c,d @@" header. Returns false when malformed.
bool parse_hunk_header(std::string_view line, Hunk& out);

// --- candidacy -------------------------------------------------------------

enum class Reason : std::uint8_t { OK, MergeCommit, MultiFile, NotJava, TestFile, NotSource };

inline constexpr std::array<Reason, 6> kAllReasons{Reason::OK,      Reason::MergeCommit, Reason::MultiFile,
                                                   Reason::NotJava, Reason::TestFile,    Reason::NotSource};

std::string_view to_string(Reason r);

struct CandidacyVerdict {
    bool accepted = false;
    Reason reason = Reason::OK;

    bool operator==(const CandidacyVerdict&) const = default;
};

struct CandidacyPolicy {
    std::string extension = ".java";
    std::string test_substring = "test";
    bool test_case_insensitive = true;
};

/// Rules in fixed order: merge, file count, extension, test substring, deletion/rename.
CandidacyVerdict judge_candidacy(const CommitRecord& commit, const CandidacyPolicy& policy = {});

struct FunnelReport {
    std::array<std::uint64_t, kAllReasons.size()> counts{};

    std::uint64_t& operator[](Reason r) { return counts[static_cast<std::size_t>(r)]; }
    std::uint64_t operator[](Reason r) const { return counts[static_cast<std::size_t>(r)]; }
    std::uint64_t total() const;
    FunnelReport& operator+=(const FunnelReport& other);

    json to_json() const;
    static FunnelReport from_json(const json& j);

    bool operator==(const FunnelReport&) const = default;
};

struct FilterResult {
    std::vector<CommitRecord> accepted;
    FunnelReport report;
};

/// Applies judge_candidacy to every commit; output preserves input order.
FilterResult filter_candidates(std::span<const CommitRecord> commits, const CandidacyPolicy& policy = {});

} // namespace synrev::diffkit
