#pragma once

#include <synrev/records.hpp>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace synrev::keywords {

enum class Origin { SeedList, ProposedIter1, ProposedIter2 };
enum class Status { Candidate, Retained, Dropped };

std::string_view to_string(Origin o);
std::string_view to_string(Status s);

struct KeywordStats {
    std::uint64_t labeled = 0;
    std::uint64_t true_positive = 0;

    /// Defined only once at least one label has been recorded.
    std::optional<double> precision() const
    {
        if (labeled == 0)
            return std::nullopt;
        return static_cast<double>(true_positive) / static_cast<double>(labeled);
    }

    bool operator==(const KeywordStats&) const = default;
};

struct KeywordEntry {
    std::string text;  // lowercase
    Origin origin = Origin::SeedList;
    Status status = Status::Candidate;
    KeywordStats stats;

    bool operator==(const KeywordEntry&) const = default;
};

inline constexpr double kDefaultRetentionThreshold = 0.75;

/// Lowercased maximal runs of ASCII letters/digits. Bytes >= 0x80 count as
/// letters so UTF-8 words stay whole.
std::vector<std::string> tokenize_words(std::string_view text);

/// Precompiled word-boundary matcher. Multi-word keywords ("denial of service",
/// "cross-site") match as adjacent token sequences.
class Matcher {
public:
    Matcher() = default;
    explicit Matcher(std::span<const std::string> keywords);
    explicit Matcher(std::span<const KeywordEntry> keywords);

    /// Matched keyword texts, sorted and unique.
    std::vector<std::string> match(std::string_view message) const;
    bool any(std::string_view message) const;

    std::size_t size() const { return keywords_.size(); }

private:
    void add(const std::string& keyword);

    std::vector<std::string> keywords_;
    std::vector<std::vector<std::string>> token_seqs_;
    std::unordered_map<std::string, std::vector<std::size_t>> by_first_token_;
};

std::set<std::string> match_keywords(std::string_view message, std::span<const KeywordEntry> keywords);

/// Two-sided standard normal quantile for a confidence level, rounded to 6 decimals
/// (0.95 -> 1.959964).
double z_for_confidence(double confidence);

/// Cochran's formula with p = 0.5 and finite-population correction, capped at
/// the population. Throws DomainError for out-of-range inputs.
std::uint64_t required_sample_size(std::uint64_t population, double confidence, double margin);

struct SamplePlan {
    std::uint64_t population_size = 0;
    double confidence = 0.95;
    double margin = 0.05;
    std::uint64_t sample_size = 0;
    std::uint64_t seed = 0;

    static SamplePlan make(std::uint64_t population, std::uint64_t seed, double confidence = 0.95,
                           double margin = 0.05);
};

/// Sample without replacement; the result keeps the population's order.
std::vector<std::string> draw_sample(std::span<const std::string> population_ids, const SamplePlan& plan);

/// Adds the verdicts to the entry's stats and sets retained iff precision > threshold.
KeywordEntry update_precision(KeywordEntry keyword, std::span<const bool> labels,
                              double threshold = kDefaultRetentionThreshold);

/// One adjudicated commit judgment and the keywords its message contains.
struct LabeledCommit {
    std::vector<std::string> keywords;
    bool vulnerability = false;
};

struct RefinementState {
    std::vector<KeywordEntry> entries;
    int completed_rounds = 0;
    double threshold = kDefaultRetentionThreshold;
    std::string seed_list_version;

    static RefinementState from_seed(std::span<const std::string> seed_keywords, std::string version = {},
                                     double threshold = kDefaultRetentionThreshold);

    bool terminal() const { return completed_rounds >= 2; }
    std::vector<std::string> retained() const;
    /// Keywords a matching pass should use now: the retained list once
    /// refinement is over, otherwise every entry that is not dropped.
    std::vector<std::string> active() const;
    const KeywordEntry* find(std::string_view text) const;

    json to_json() const;
    static RefinementState from_json(const json& j);
};

/// Runs round 1 or 2. Round 2 resolves every remaining candidate: unmeasured
/// ones (including round-2 proposals, which no later round can measure) are dropped.
RefinementState refinement_round(const RefinementState& state, std::span<const LabeledCommit> labels,
                                 std::span<const std::string> proposed_keywords, int round);

/// One lowercase keyword per line; '#' starts a comment.
std::vector<std::string> parse_keyword_list(std::string_view text);
std::vector<std::string> load_keyword_list(const std::filesystem::path& path);

} // namespace synrev::keywords
