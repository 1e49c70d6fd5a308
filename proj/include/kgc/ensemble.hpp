#pragma once

// Score normalization, weighted combination, greedy grid-search weight
// selection, and the low-frequency candidate filter.

#include <cstdint>
#include <filesystem>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "kgc/core.hpp"
#include "kgc/features.hpp"

namespace kgc {

struct WeightEntry {
  std::string source;
  double weight = 0.0;
};

/// Source weights in selection order; unlisted sources weigh 0.
struct EnsembleWeights {
  std::vector<WeightEntry> entries;
  std::optional<double> validation_mrr;

  double weight(std::string_view source) const;
  void validate() const;
};

/// Per-row min-max scaling to [0, 1]; constant rows become all zeros.
ScoreMatrix normalize_scores(const ScoreMatrix& m);

/// sum_k w_k m_k, accumulated in the order of weights.entries. Zero
/// weights are skipped.
ScoreMatrix combine(std::span<const ScoreMatrix> sources, const EnsembleWeights& weights);

/// Per-candidate flag: true when the candidate is demoted.
using DemotionMask = std::vector<std::vector<bool>>;

/// Lowest finite double: strictly below every other finite score.
inline constexpr double kDemotedScore = std::numeric_limits<double>::lowest();

DemotionMask low_frequency_mask(const CandidateQuerySet& queries, const CandidateFrequency& freq,
                                std::uint64_t threshold);
ScoreMatrix apply_demotion(const ScoreMatrix& m, const DemotionMask& mask);
/// Candidates seen fewer than `threshold` times get kDemotedScore.
ScoreMatrix low_frequency_filter(const ScoreMatrix& m, const CandidateQuerySet& queries,
                                 const CandidateFrequency& freq, std::uint64_t threshold);

std::vector<double> default_weight_grid();  // 0.05, 0.10, ..., 1.00

struct GridSearchOptions {
  std::vector<double> grid = default_weight_grid();
  std::size_t max_rounds = 0;  // 0: until no improvement
  std::size_t threads = 1;
  const DemotionMask* demotion = nullptr;  // applied to every combined matrix
  std::optional<EnsembleWeights> initial;  // warm start: skips the single-source round
};

inline constexpr double kMinImprovement = 1e-9;

/// Greedy forward selection. The first round keeps the best single source at
/// weight 1; each later round adds the (source, grid weight) pair with the
/// largest strict MRR gain, earlier weights frozen. Ties go to the earlier
/// source, then the smaller weight.
EnsembleWeights grid_search(std::span<const ScoreMatrix> sources, const CandidateQuerySet& queries,
                            const GridSearchOptions& options = {});

/// "source weight" lines in selection order plus a "# validation_mrr=" comment.
void write_weights(const EnsembleWeights& weights, const std::filesystem::path& path);
EnsembleWeights read_weights(const std::filesystem::path& path);

/// Indices of the k best candidates, best first, ties to the smaller index.
std::vector<std::size_t> top_k(std::span<const double> scores, std::size_t k);

}  // namespace kgc
