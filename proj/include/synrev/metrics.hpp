#pragma once

#include <synrev/error.hpp>
#include <synrev/records.hpp>

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace synrev::metrics {

inline constexpr int kMaxOrder = 4;

/// Clipped n-gram match counts for one candidate/reference pair. Summable for corpus BLEU.
struct BleuStats {
    std::array<std::uint64_t, kMaxOrder> matches{};
    std::array<std::uint64_t, kMaxOrder> totals{};
    std::uint64_t candidate_length = 0;
    std::uint64_t reference_length = 0;

    BleuStats& operator+=(const BleuStats& o);
};

struct BleuScore {
    double score = 0.0;
    std::array<double, kMaxOrder> n_gram_precisions{};
    double brevity_penalty = 1.0;
};

BleuStats bleu_stats(std::span<const std::string> candidate, std::span<const std::string> reference);

/// Geometric mean of the four precisions times the brevity penalty. Orders 2..4
/// with zero matches use (0 + 1) / (total + 1); unigram precision is never smoothed.
BleuScore bleu_from_stats(const BleuStats& stats);

/// Sentence-level BLEU-4. Throws EmptyCandidate / EmptyReference.
BleuScore bleu4(std::span<const std::string> candidate, std::span<const std::string> reference);

/// Lowercases, splits on whitespace, and splits punctuation into single-character
/// tokens. Backtick-delimited code spans are kept verbatim as one token.
std::vector<std::string> tokenize_review(std::string_view text);

struct AgreementReport {
    double kappa = 0.0;
    double observed_agreement = 0.0;
    double expected_agreement = 0.0;
    std::uint64_t n_items = 0;

    json to_json() const;
};

/// Two-rater Cohen's kappa over the union of observed categories.
template <typename Category>
AgreementReport cohen_kappa(std::span<const Category> labels_a, std::span<const Category> labels_b)
{
    if (labels_a.size() != labels_b.size())
        throw Error(ErrorCode::LengthMismatch, "label vectors differ in length (" + std::to_string(labels_a.size())
                                                   + " vs " + std::to_string(labels_b.size()) + ")");
    if (labels_a.empty())
        throw Error(ErrorCode::LengthMismatch, "label vectors are empty");

    const auto n = static_cast<std::uint64_t>(labels_a.size());
    std::uint64_t agree = 0;
    std::map<Category, std::pair<std::uint64_t, std::uint64_t>> marginals;
    for (std::size_t i = 0; i < labels_a.size(); ++i) {
        if (labels_a[i] == labels_b[i])
            ++agree;
        ++marginals[labels_a[i]].first;
        ++marginals[labels_b[i]].second;
    }
    std::uint64_t chance = 0;
    for (const auto& [cat, m] : marginals)
        chance += m.first * m.second;

    AgreementReport r;
    r.n_items = n;
    r.observed_agreement = static_cast<double>(agree) / static_cast<double>(n);
    r.expected_agreement = static_cast<double>(chance) / (static_cast<double>(n) * static_cast<double>(n));
    if (chance == n * n) {
        if (agree != n)
            throw Error(ErrorCode::SingleItemDegenerate, "expected agreement is 1 but observed is not; kappa undefined");
        r.kappa = 1.0;
        return r;
    }
    r.kappa = (r.observed_agreement - r.expected_agreement) / (1.0 - r.expected_agreement);
    return r;
}

inline AgreementReport cohen_kappa(const std::vector<bool>& a, const std::vector<bool>& b)
{
    std::vector<int> ia(a.begin(), a.end()), ib(b.begin(), b.end());
    return cohen_kappa<int>(ia, ib);
}

struct ManualLabel {
    bool semantic_equivalence = false;
    bool applicability = false;

    bool operator==(const ManualLabel&) const = default;
};

struct PairLabels {
    ManualLabel annotator_a;
    ManualLabel annotator_b;
    std::optional<ManualLabel> adjudicated;

    /// Adjudicated label, else the agreed one; nullopt on an unresolved disagreement.
    std::optional<ManualLabel> final_label() const;
};

struct EvalPair {
    std::string generated;
    std::string ground_truth;
};

struct EvalReport {
    std::uint64_t n_pairs = 0;
    double mean_sentence_bleu = 0.0;
    double corpus_bleu = 0.0;
    double semantic_equivalence_rate = 0.0;
    double applicability_rate = 0.0;
    AgreementReport kappa_semantic_equivalence;
    AgreementReport kappa_applicability;
    std::vector<double> sentence_bleu;

    json to_json() const;
    std::string to_table() const;
};

/// BLEU over the pairs plus rates and kappas from the dual annotations. An empty
/// generated review scores BLEU 0. Throws MissingLabels when labels are absent,
/// misaligned, or disagree without adjudication.
EvalReport eval_report(std::span<const EvalPair> pairs, std::span<const PairLabels> labels);

} // namespace synrev::metrics
