#pragma once

// Data-parallel batch kernels. Each OpenMP kernel has a serial twin with the same
// contract; the serial versions are the reference the tests compare against.

#include <synrev/diffkit.hpp>
#include <synrev/keywords.hpp>
#include <synrev/metrics.hpp>

#include <span>
#include <string>
#include <vector>

namespace synrev::kernels {

std::vector<diffkit::CandidacyVerdict> judge_batch(std::span<const CommitRecord> commits,
                                                   const diffkit::CandidacyPolicy& policy);
std::vector<diffkit::CandidacyVerdict> judge_batch_serial(std::span<const CommitRecord> commits,
                                                          const diffkit::CandidacyPolicy& policy);

/// Matched keywords per text, index-aligned with the input.
std::vector<std::vector<std::string>> match_batch(const keywords::Matcher& matcher,
                                                  std::span<const std::string> texts);
std::vector<std::vector<std::string>> match_batch_serial(const keywords::Matcher& matcher,
                                                         std::span<const std::string> texts);

struct ScoredPair {
    metrics::BleuStats stats;
    metrics::BleuScore score;
};

/// Tokenizes and scores each pair. A generated text with no tokens scores 0.
std::vector<ScoredPair> bleu_batch(std::span<const metrics::EvalPair> pairs);
std::vector<ScoredPair> bleu_batch_serial(std::span<const metrics::EvalPair> pairs);

/// Threads OpenMP will use; 1 when built without OpenMP.
int max_threads();

} // namespace synrev::kernels
