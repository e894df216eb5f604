#include "ragutil/kernels.hpp"

#include <algorithm>
#include <limits>

#include "ragutil/error.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace ragutil::kernels {

double pair_f1(const TokenEmbeddings& candidate, const TokenEmbeddings& reference,
               const ScoreOptions& options);  // semscore.cpp

namespace {

inline double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

constexpr double kLowest = -std::numeric_limits<double>::infinity();

}  // namespace

GreedyMatch greedy_match_serial(const TokenEmbeddings& candidate, const TokenEmbeddings& reference) {
  GreedyMatch m;
  m.candidate_best.assign(candidate.size(), kLowest);
  m.reference_best.assign(reference.size(), kLowest);
  for (std::size_t i = 0; i < candidate.size(); ++i) {
    const auto ci = candidate.row(i);
    for (std::size_t j = 0; j < reference.size(); ++j) {
      const double s = dot(ci, reference.row(j));
      m.candidate_best[i] = std::max(m.candidate_best[i], s);
      m.reference_best[j] = std::max(m.reference_best[j], s);
    }
  }
  return m;
}

GreedyMatch greedy_match(const TokenEmbeddings& candidate, const TokenEmbeddings& reference) {
  const auto rows = static_cast<std::ptrdiff_t>(candidate.size());
  const std::size_t cols = reference.size();
  GreedyMatch m;
  m.candidate_best.assign(candidate.size(), kLowest);
  m.reference_best.assign(cols, kLowest);
  // Small matrices are not worth a parallel region.
  if (candidate.size() * cols * candidate.dim() < 200'000) return greedy_match_serial(candidate, reference);

#pragma omp parallel
  {
    std::vector<double> local(cols, kLowest);
#pragma omp for schedule(static)
    for (std::ptrdiff_t i = 0; i < rows; ++i) {
      const auto ci = candidate.row(static_cast<std::size_t>(i));
      double best = kLowest;
      for (std::size_t j = 0; j < cols; ++j) {
        const double s = dot(ci, reference.row(j));
        best = std::max(best, s);
        local[j] = std::max(local[j], s);
      }
      m.candidate_best[static_cast<std::size_t>(i)] = best;
    }
#pragma omp critical
    for (std::size_t j = 0; j < cols; ++j) m.reference_best[j] = std::max(m.reference_best[j], local[j]);
  }
  return m;
}

std::vector<double> f1_batch_serial(const std::vector<TokenEmbeddings>& candidates,
                                    const std::vector<TokenEmbeddings>& references,
                                    const std::vector<ScoringPair>& pairs,
                                    const ScoreOptions& options) {
  std::vector<double> out(pairs.size());
  for (std::size_t p = 0; p < pairs.size(); ++p) {
    out[p] = pair_f1(candidates.at(pairs[p].candidate), references.at(pairs[p].reference), options);
  }
  return out;
}

std::vector<double> f1_batch(const std::vector<TokenEmbeddings>& candidates,
                             const std::vector<TokenEmbeddings>& references,
                             const std::vector<ScoringPair>& pairs, const ScoreOptions& options) {
  for (const auto& p : pairs) {
    if (p.candidate >= candidates.size() || p.reference >= references.size()) {
      throw DataError("scoring pair index out of range");
    }
  }
  std::vector<double> out(pairs.size());
  const auto n = static_cast<std::ptrdiff_t>(pairs.size());
  bool failed = false;
#pragma omp parallel for schedule(dynamic, 16)
  for (std::ptrdiff_t p = 0; p < n; ++p) {
    const auto& pair = pairs[static_cast<std::size_t>(p)];
    try {
      out[static_cast<std::size_t>(p)] =
          pair_f1(candidates[pair.candidate], references[pair.reference], options);
    } catch (...) {
#pragma omp atomic write
      failed = true;
    }
  }
  // Rerun serially to surface the original exception.
  if (failed) return f1_batch_serial(candidates, references, pairs, options);
  return out;
}

}  // namespace ragutil::kernels
