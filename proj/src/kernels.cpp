#include <synrev/kernels.hpp>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace synrev::kernels {

namespace {

ScoredPair score_pair(const metrics::EvalPair& pair)
{
    auto cand = metrics::tokenize_review(pair.generated);
    auto ref = metrics::tokenize_review(pair.ground_truth);
    ScoredPair out;
    out.stats = metrics::bleu_stats(cand, ref);
    if (cand.empty() || ref.empty()) {
        out.score.brevity_penalty = 0.0;
        return out;
    }
    out.score = metrics::bleu_from_stats(out.stats);
    return out;
}

} // namespace

std::vector<diffkit::CandidacyVerdict> judge_batch(std::span<const CommitRecord> commits,
                                                   const diffkit::CandidacyPolicy& policy)
{
    std::vector<diffkit::CandidacyVerdict> out(commits.size());
    const auto n = static_cast<std::ptrdiff_t>(commits.size());
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t i = 0; i < n; ++i)
        out[i] = diffkit::judge_candidacy(commits[i], policy);
    return out;
}

std::vector<diffkit::CandidacyVerdict> judge_batch_serial(std::span<const CommitRecord> commits,
                                                          const diffkit::CandidacyPolicy& policy)
{
    std::vector<diffkit::CandidacyVerdict> out;
    out.reserve(commits.size());
    for (const auto& c : commits)
        out.push_back(diffkit::judge_candidacy(c, policy));
    return out;
}

std::vector<std::vector<std::string>> match_batch(const keywords::Matcher& matcher,
                                                  std::span<const std::string> texts)
{
    std::vector<std::vector<std::string>> out(texts.size());
    const auto n = static_cast<std::ptrdiff_t>(texts.size());
#pragma omp parallel for schedule(dynamic, 64)
    for (std::ptrdiff_t i = 0; i < n; ++i)
        out[i] = matcher.match(texts[i]);
    return out;
}

std::vector<std::vector<std::string>> match_batch_serial(const keywords::Matcher& matcher,
                                                         std::span<const std::string> texts)
{
    std::vector<std::vector<std::string>> out;
    out.reserve(texts.size());
    for (const auto& t : texts)
        out.push_back(matcher.match(t));
    return out;
}

std::vector<ScoredPair> bleu_batch(std::span<const metrics::EvalPair> pairs)
{
    std::vector<ScoredPair> out(pairs.size());
    const auto n = static_cast<std::ptrdiff_t>(pairs.size());
#pragma omp parallel for schedule(dynamic, 16)
    for (std::ptrdiff_t i = 0; i < n; ++i)
        out[i] = score_pair(pairs[i]);
    return out;
}

std::vector<ScoredPair> bleu_batch_serial(std::span<const metrics::EvalPair> pairs)
{
    std::vector<ScoredPair> out;
    out.reserve(pairs.size());
    for (const auto& p : pairs)
        out.push_back(score_pair(p));
    return out;
}

int max_threads()
{
#ifdef _OPENMP
    return omp_get_max_threads();
#else
    return 1;
#endif
}

} // namespace synrev::kernels
