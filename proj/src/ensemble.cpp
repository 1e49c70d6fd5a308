#include "kgc/ensemble.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "parallel.hpp"
#include "text_util.hpp"

namespace kgc {

double EnsembleWeights::weight(std::string_view source) const {
  for (const auto& e : entries) {
    if (e.source == source) return e.weight;
  }
  return 0.0;
}

void EnsembleWeights::validate() const {
  bool positive = false;
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const auto& e = entries[i];
    if (!(e.weight >= 0.0) || !std::isfinite(e.weight)) {
      throw DataError("weight of '" + e.source + "' must be finite and non-negative");
    }
    positive = positive || e.weight > 0.0;
    for (std::size_t j = 0; j < i; ++j) {
      if (entries[j].source == e.source) throw DataError("duplicate weight for '" + e.source + "'");
    }
  }
  if (!positive) throw DataError("ensemble weights need at least one positive weight");
}

ScoreMatrix normalize_scores(const ScoreMatrix& m) {
  ScoreMatrix out;
  out.source = m.source;
  out.rows.reserve(m.rows.size());
  for (std::size_t q = 0; q < m.rows.size(); ++q) {
    const auto& row = m.rows[q];
    for (double v : row) {
      if (!std::isfinite(v)) {
        throw DataError("normalize_scores: non-finite value in '" + m.source + "' row " +
                        std::to_string(q));
      }
    }
    std::vector<double> norm(row.size(), 0.0);
    if (!row.empty()) {
      const auto [lo, hi] = std::minmax_element(row.begin(), row.end());
      const double span = *hi - *lo;
      if (span > 0.0) {
        for (std::size_t i = 0; i < row.size(); ++i) norm[i] = (row[i] - *lo) / span;
      }
    }
    out.rows.push_back(std::move(norm));
  }
  return out;
}

namespace {

const ScoreMatrix& find_source(std::span<const ScoreMatrix> sources, const std::string& name) {
  for (const auto& s : sources) {
    if (s.source == name) return s;
  }
  std::string known;
  for (const auto& s : sources) known += (known.empty() ? "" : ", ") + s.source;
  throw DataError("weights name unknown source '" + name + "' (have: " + known + ")");
}

void check_same_shape(const ScoreMatrix& a, const ScoreMatrix& b) {
  if (a.rows.size() != b.rows.size()) {
    throw DataError("shape mismatch: '" + a.source + "' has " + std::to_string(a.rows.size()) +
                    " rows, '" + b.source + "' has " + std::to_string(b.rows.size()));
  }
  for (std::size_t q = 0; q < a.rows.size(); ++q) {
    if (a.rows[q].size() != b.rows[q].size()) {
      throw DataError("shape mismatch in row " + std::to_string(q) + " between '" + a.source +
                      "' and '" + b.source + "'");
    }
  }
}

}  // namespace

ScoreMatrix combine(std::span<const ScoreMatrix> sources, const EnsembleWeights& weights) {
  if (sources.empty()) throw DataError("combine: no sources");
  for (const auto& s : sources) check_same_shape(sources.front(), s);
  ScoreMatrix out;
  out.source = "ensemble";
  out.rows.resize(sources.front().rows.size());
  for (std::size_t q = 0; q < out.rows.size(); ++q) {
    out.rows[q].assign(sources.front().rows[q].size(), 0.0);
  }
  for (const auto& entry : weights.entries) {
    const ScoreMatrix& m = find_source(sources, entry.source);
    if (entry.weight == 0.0) continue;
    for (std::size_t q = 0; q < out.rows.size(); ++q) {
      auto& row = out.rows[q];
      for (std::size_t i = 0; i < row.size(); ++i) row[i] += entry.weight * m.rows[q][i];
    }
  }
  return out;
}

DemotionMask low_frequency_mask(const CandidateQuerySet& queries, const CandidateFrequency& freq,
                                std::uint64_t threshold) {
  DemotionMask mask(queries.size());
  for (std::size_t q = 0; q < queries.size(); ++q) {
    const auto& cands = queries[q].candidates;
    mask[q].resize(cands.size());
    for (std::size_t i = 0; i < cands.size(); ++i) {
      mask[q][i] = frequency_of(freq, cands[i]) < threshold;
    }
  }
  return mask;
}

ScoreMatrix apply_demotion(const ScoreMatrix& m, const DemotionMask& mask) {
  if (mask.size() != m.rows.size()) throw DataError("demotion mask shape mismatch");
  ScoreMatrix out = m;
  for (std::size_t q = 0; q < out.rows.size(); ++q) {
    if (mask[q].size() != out.rows[q].size()) throw DataError("demotion mask shape mismatch");
    for (std::size_t i = 0; i < out.rows[q].size(); ++i) {
      if (mask[q][i]) out.rows[q][i] = kDemotedScore;
    }
  }
  return out;
}

ScoreMatrix low_frequency_filter(const ScoreMatrix& m, const CandidateQuerySet& queries,
                                 const CandidateFrequency& freq, std::uint64_t threshold) {
  check_aligned(queries, m);
  if (threshold == 0) return m;
  return apply_demotion(m, low_frequency_mask(queries, freq, threshold));
}

std::vector<double> default_weight_grid() {
  std::vector<double> grid;
  for (int i = 1; i <= 20; ++i) grid.push_back(i * 0.05);
  return grid;
}

namespace {

// MRR of base + weight * extra (extra may be null), with optional demotion.
double trial_mrr(const CandidateQuerySet& queries, const ScoreMatrix& base,
                 const ScoreMatrix* extra, double weight, const DemotionMask* demotion) {
  double total = 0.0;
  std::vector<double> row;
  for (std::size_t q = 0; q < queries.size(); ++q) {
    row = base.rows[q];
    if (extra) {
      for (std::size_t i = 0; i < row.size(); ++i) row[i] += weight * extra->rows[q][i];
    }
    if (demotion) {
      for (std::size_t i = 0; i < row.size(); ++i) {
        if ((*demotion)[q][i]) row[i] = kDemotedScore;
      }
    }
    total += 1.0 / static_cast<double>(rank_of_true(row, *queries[q].true_index));
  }
  return total / static_cast<double>(queries.size());
}

}  // namespace

EnsembleWeights grid_search(std::span<const ScoreMatrix> sources, const CandidateQuerySet& queries,
                            const GridSearchOptions& options) {
  if (sources.empty()) throw DataError("grid_search: no sources");
  if (!queries.labeled()) throw DataError("grid_search: queries lack true_index");
  for (const auto& s : sources) check_aligned(queries, s);
  for (double w : options.grid) {
    if (!(w > 0.0)) throw UsageError("grid_search: grid weights must be positive");
  }
  if (options.demotion) {
    ScoreMatrix probe;
    probe.rows.resize(queries.size());
    for (std::size_t q = 0; q < queries.size(); ++q) probe.rows[q].resize(queries[q].candidates.size());
    apply_demotion(probe, *options.demotion);  // shape check
  }

  EnsembleWeights weights;
  std::vector<bool> selected(sources.size(), false);
  double best_mrr = 0.0;
  std::size_t rounds = 0;

  if (options.initial) {
    weights = *options.initial;
    weights.validate();
    for (const auto& e : weights.entries) {
      const ScoreMatrix& m = find_source(sources, e.source);
      selected[static_cast<std::size_t>(&m - sources.data())] = true;
    }
  } else {
    std::vector<double> solo(sources.size());
    ScoreMatrix zero = combine(sources, EnsembleWeights{});
    detail::parallel_for(sources.size(), options.threads, [&](std::size_t s) {
      solo[s] = trial_mrr(queries, zero, &sources[s], 1.0, options.demotion);
    });
    std::size_t pick = 0;
    for (std::size_t s = 1; s < sources.size(); ++s) {
      if (solo[s] > solo[pick]) pick = s;
    }
    weights.entries.push_back({sources[pick].source, 1.0});
    selected[pick] = true;
    rounds = 1;
  }
  ScoreMatrix current = combine(sources, weights);
  best_mrr = trial_mrr(queries, current, nullptr, 0.0, options.demotion);

  const std::size_t grid_size = options.grid.size();
  while (options.max_rounds == 0 || rounds < options.max_rounds) {
    std::vector<std::size_t> open;
    for (std::size_t s = 0; s < sources.size(); ++s) {
      if (!selected[s]) open.push_back(s);
    }
    if (open.empty() || grid_size == 0) break;
    std::vector<double> result(open.size() * grid_size);
    detail::parallel_for(result.size(), options.threads, [&](std::size_t k) {
      result[k] = trial_mrr(queries, current, &sources[open[k / grid_size]],
                            options.grid[k % grid_size], options.demotion);
    });
    // Trials are laid out by (registration order, grid position); the first
    // maximum wins, and ties go to the smaller weight within a source.
    std::optional<std::size_t> best;
    for (std::size_t k = 0; k < result.size(); ++k) {
      if (!(result[k] > best_mrr + kMinImprovement)) continue;
      if (!best) {
        best = k;
        continue;
      }
      const double w_best = options.grid[*best % grid_size];
      const double w_k = options.grid[k % grid_size];
      const bool same_source = k / grid_size == *best / grid_size;
      if (result[k] > result[*best] ||
          (result[k] == result[*best] && same_source && w_k < w_best)) {
        best = k;
      }
    }
    ++rounds;
    if (!best) break;
    const std::size_t s = open[*best / grid_size];
    const double w = options.grid[*best % grid_size];
    weights.entries.push_back({sources[s].source, w});
    selected[s] = true;
    for (std::size_t q = 0; q < current.rows.size(); ++q) {
      for (std::size_t i = 0; i < current.rows[q].size(); ++i) {
        current.rows[q][i] += w * sources[s].rows[q][i];
      }
    }
    best_mrr = result[*best];
  }
  weights.validation_mrr = best_mrr;
  return weights;
}

void write_weights(const EnsembleWeights& weights, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  if (weights.validation_mrr) {
    out << "# validation_mrr=" << detail::format_double(*weights.validation_mrr) << '\n';
  }
  for (const auto& e : weights.entries) {
    out << e.source << ' ' << detail::format_double(e.weight) << '\n';
  }
  if (!out) throw DataError("write failed: " + path.string());
}

EnsembleWeights read_weights(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open weights file " + path.string());
  EnsembleWeights w;
  std::string line;
  std::size_t line_no = 0;
  const std::string tag = "# validation_mrr=";
  while (std::getline(in, line)) {
    ++line_no;
    const std::string where = path.string() + ":" + std::to_string(line_no);
    if (line.rfind(tag, 0) == 0) {
      w.validation_mrr = detail::parse_double(detail::trim(line.substr(tag.size())), where);
      continue;
    }
    if (detail::is_blank_or_comment(line)) continue;
    const auto f = detail::split_fields(line);
    if (f.size() != 2) throw DataError(where + ": expected 'source weight'");
    w.entries.push_back({std::string(f[0]), detail::parse_double(f[1], where)});
  }
  w.validate();
  return w;
}

std::vector<std::size_t> top_k(std::span<const double> scores, std::size_t k) {
  std::vector<std::size_t> idx(scores.size());
  std::iota(idx.begin(), idx.end(), 0);
  k = std::min(k, idx.size());
  std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k), idx.end(),
                    [&](std::size_t a, std::size_t b) {
                      return scores[a] != scores[b] ? scores[a] > scores[b] : a < b;
                    });
  idx.resize(k);
  return idx;
}

}  // namespace kgc
