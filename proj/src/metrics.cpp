#include <synrev/kernels.hpp>
#include <synrev/metrics.hpp>

#include <fmt/format.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <map>

namespace synrev::metrics {

BleuStats& BleuStats::operator+=(const BleuStats& o)
{
    for (int n = 0; n < kMaxOrder; ++n) {
        matches[n] += o.matches[n];
        totals[n] += o.totals[n];
    }
    candidate_length += o.candidate_length;
    reference_length += o.reference_length;
    return *this;
}

namespace {

using Gram = std::span<const std::string>;

struct GramLess {
    bool operator()(Gram a, Gram b) const
    {
        return std::lexicographical_compare(a.begin(), a.end(), b.begin(), b.end());
    }
};

std::map<Gram, std::uint64_t, GramLess> count_ngrams(std::span<const std::string> tokens, std::size_t n)
{
    std::map<Gram, std::uint64_t, GramLess> counts;
    if (tokens.size() < n)
        return counts;
    for (std::size_t i = 0; i + n <= tokens.size(); ++i)
        ++counts[tokens.subspan(i, n)];
    return counts;
}

} // namespace

BleuStats bleu_stats(std::span<const std::string> candidate, std::span<const std::string> reference)
{
    BleuStats s;
    s.candidate_length = candidate.size();
    s.reference_length = reference.size();
    for (int n = 1; n <= kMaxOrder; ++n) {
        auto cand = count_ngrams(candidate, static_cast<std::size_t>(n));
        auto ref = count_ngrams(reference, static_cast<std::size_t>(n));
        std::uint64_t matched = 0;
        for (const auto& [gram, c] : cand) {
            auto it = ref.find(gram);
            if (it != ref.end())
                matched += std::min(c, it->second);
        }
        s.matches[n - 1] = matched;
        s.totals[n - 1] = candidate.size() >= static_cast<std::size_t>(n) ? candidate.size() - n + 1 : 0;
    }
    return s;
}

BleuScore bleu_from_stats(const BleuStats& stats)
{
    BleuScore out;
    double log_sum = 0.0;
    bool zero = false;
    for (int n = 0; n < kMaxOrder; ++n) {
        double p;
        if (n > 0 && stats.matches[n] == 0)
            p = 1.0 / static_cast<double>(stats.totals[n] + 1);
        else if (stats.totals[n] == 0)
            p = 0.0;
        else
            p = static_cast<double>(stats.matches[n]) / static_cast<double>(stats.totals[n]);
        out.n_gram_precisions[n] = p;
        if (p == 0.0)
            zero = true;
        else
            log_sum += std::log(p);
    }
    const auto c = static_cast<double>(stats.candidate_length);
    const auto r = static_cast<double>(stats.reference_length);
    out.brevity_penalty = (stats.candidate_length > 0 && c < r) ? std::exp(1.0 - r / c) : 1.0;
    if (stats.candidate_length == 0)
        out.brevity_penalty = 0.0;
    out.score = zero ? 0.0 : out.brevity_penalty * std::exp(log_sum / kMaxOrder);
    return out;
}

BleuScore bleu4(std::span<const std::string> candidate, std::span<const std::string> reference)
{
    if (candidate.empty())
        throw Error(ErrorCode::EmptyCandidate, "candidate has no tokens");
    if (reference.empty())
        throw Error(ErrorCode::EmptyReference, "reference has no tokens");
    return bleu_from_stats(bleu_stats(candidate, reference));
}

std::vector<std::string> tokenize_review(std::string_view text)
{
    std::vector<std::string> tokens;
    std::string current;
    auto flush = [&] {
        if (!current.empty()) {
            tokens.push_back(std::move(current));
            current.clear();
        }
    };
    for (std::size_t i = 0; i < text.size(); ++i) {
        auto c = static_cast<unsigned char>(text[i]);
        if (std::isspace(c)) {
            flush();
        } else if (c == '`') {
            auto close = text.find('`', i + 1);
            flush();
            if (close != std::string_view::npos) {
                tokens.emplace_back(text.substr(i, close - i + 1));
                i = close;
            } else {
                tokens.emplace_back("`");
            }
        } else if (c < 0x80 && std::ispunct(c) && c != '_') {
            flush();
            tokens.emplace_back(1, static_cast<char>(c));
        } else {
            current.push_back(c >= 'A' && c <= 'Z' ? static_cast<char>(c - 'A' + 'a') : static_cast<char>(c));
        }
    }
    flush();
    return tokens;
}

json AgreementReport::to_json() const
{
    return json{{"kappa", kappa},
                {"observed_agreement", observed_agreement},
                {"expected_agreement", expected_agreement},
                {"n_items", n_items}};
}

std::optional<ManualLabel> PairLabels::final_label() const
{
    if (adjudicated)
        return adjudicated;
    if (annotator_a == annotator_b)
        return annotator_a;
    return std::nullopt;
}

EvalReport eval_report(std::span<const EvalPair> pairs, std::span<const PairLabels> labels)
{
    if (pairs.empty())
        throw Error(ErrorCode::MissingLabels, "no evaluation pairs");
    if (labels.size() != pairs.size())
        throw Error(ErrorCode::MissingLabels, std::to_string(pairs.size()) + " pairs but "
                                                  + std::to_string(labels.size()) + " label sets");

    EvalReport rep;
    rep.n_pairs = pairs.size();

    std::uint64_t semantic = 0, applicable = 0;
    std::vector<int> sem_a, sem_b, app_a, app_b;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        auto fin = labels[i].final_label();
        if (!fin)
            throw Error(ErrorCode::MissingLabels, "pair " + std::to_string(i) + " has an unresolved disagreement");
        semantic += fin->semantic_equivalence ? 1 : 0;
        applicable += fin->applicability ? 1 : 0;
        sem_a.push_back(labels[i].annotator_a.semantic_equivalence);
        sem_b.push_back(labels[i].annotator_b.semantic_equivalence);
        app_a.push_back(labels[i].annotator_a.applicability);
        app_b.push_back(labels[i].annotator_b.applicability);
    }
    const auto n = static_cast<double>(pairs.size());
    rep.semantic_equivalence_rate = static_cast<double>(semantic) / n;
    rep.applicability_rate = static_cast<double>(applicable) / n;
    rep.kappa_semantic_equivalence = cohen_kappa<int>(sem_a, sem_b);
    rep.kappa_applicability = cohen_kappa<int>(app_a, app_b);

    for (const auto& p : pairs)
        if (tokenize_review(p.ground_truth).empty())
            throw Error(ErrorCode::EmptyReference, "ground-truth review has no tokens");
    auto scored = kernels::bleu_batch(pairs);
    BleuStats corpus;
    double sum = 0.0;
    for (const auto& s : scored) {
        rep.sentence_bleu.push_back(s.score.score);
        sum += s.score.score;
        corpus += s.stats;
    }
    rep.mean_sentence_bleu = sum / n;
    rep.corpus_bleu = bleu_from_stats(corpus).score;
    return rep;
}

json EvalReport::to_json() const
{
    return json{{"n_pairs", n_pairs},
                {"bleu4", {{"mean_sentence", mean_sentence_bleu}, {"corpus", corpus_bleu}}},
                {"semantic_equivalence_rate", semantic_equivalence_rate},
                {"applicability_rate", applicability_rate},
                {"kappa",
                 {{"semantic_equivalence", kappa_semantic_equivalence.to_json()},
                  {"applicability", kappa_applicability.to_json()}}},
                {"sentence_bleu", sentence_bleu}};
}

std::string EvalReport::to_table() const
{
    std::string out;
    out += fmt::format("{:<32}{:>12}\n", "metric", "value");
    out += fmt::format("{:<32}{:>12}\n", "pairs", n_pairs);
    out += fmt::format("{:<32}{:>12.4f}\n", "BLEU-4 (mean sentence)", mean_sentence_bleu);
    out += fmt::format("{:<32}{:>12.4f}\n", "BLEU-4 (corpus)", corpus_bleu);
    out += fmt::format("{:<32}{:>12.4f}\n", "semantic equivalence rate", semantic_equivalence_rate);
    out += fmt::format("{:<32}{:>12.4f}\n", "applicability rate", applicability_rate);
    out += fmt::format("{:<32}{:>12.4f}\n", "kappa (semantic equivalence)", kappa_semantic_equivalence.kappa);
    out += fmt::format("{:<32}{:>12.4f}\n", "kappa (applicability)", kappa_applicability.kappa);
    return out;
}

} // namespace synrev::metrics
