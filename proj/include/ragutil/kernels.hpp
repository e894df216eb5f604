#pragma once

#include <vector>

#include "ragutil/semscore.hpp"

namespace ragutil::kernels {

// Row and column maxima of the candidate x reference cosine matrix.
struct GreedyMatch {
  std::vector<double> candidate_best;  // per candidate token: max over reference
  std::vector<double> reference_best;  // per reference token: max over candidate
};

GreedyMatch greedy_match_serial(const TokenEmbeddings& candidate, const TokenEmbeddings& reference);

// OpenMP over candidate rows with per-thread column maxima merged afterwards.
// max is exact, so the result is bit-identical to the serial kernel.
GreedyMatch greedy_match(const TokenEmbeddings& candidate, const TokenEmbeddings& reference);

struct ScoringPair {
  std::size_t candidate;
  std::size_t reference;
};

// F1 for many (candidate, reference) pairs; OpenMP across pairs.
std::vector<double> f1_batch(const std::vector<TokenEmbeddings>& candidates,
                             const std::vector<TokenEmbeddings>& references,
                             const std::vector<ScoringPair>& pairs, const ScoreOptions& options);
std::vector<double> f1_batch_serial(const std::vector<TokenEmbeddings>& candidates,
                                    const std::vector<TokenEmbeddings>& references,
                                    const std::vector<ScoringPair>& pairs,
                                    const ScoreOptions& options);

}  // namespace ragutil::kernels
