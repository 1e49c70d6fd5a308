#pragma once

// Directional frequency indices and the path-probability features built on
// them.
//
// A triple (h, r, t) is counted once in each of six directions:
//   HT: h -> t   TH: t -> h   HR: h -> r   RH: r -> h   RT: r -> t   TR: t -> r
// P_d(a, b) = S_d(a, b) / sum_x S_d(a, x), and 0 when a has no d-row.

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "kgc/core.hpp"

namespace kgc {

enum class Direction { HT, HR, RH, RT, TH, TR };

inline constexpr std::array<Direction, 6> kAllDirections = {
    Direction::HT, Direction::HR, Direction::RH, Direction::RT, Direction::TH, Direction::TR};

enum class SlotKind { Entity, Relation };

std::string_view to_string(Direction d);
SlotKind source_kind(Direction d);
SlotKind target_kind(Direction d);
/// HT <-> TH, HR <-> RH, RT <-> TR.
Direction transpose(Direction d);

enum class FeatureKind {
  F_HT,
  F_TH,
  F_TH_HT,
  F_HT_HT,
  F_HT_TH,
  F_TH_TH,
  F_HT_HT_TH,
  F_RT,
  F_RH,
  F_RT_TR_RT,
  F_RH_HR_RT,
  F_RT_HR_RT,
  CAND_FREQ,
};

inline constexpr std::array<FeatureKind, 13> kAllFeatureKinds = {
    FeatureKind::F_HT,       FeatureKind::F_TH,       FeatureKind::F_TH_HT,
    FeatureKind::F_HT_HT,    FeatureKind::F_HT_TH,    FeatureKind::F_TH_TH,
    FeatureKind::F_HT_HT_TH, FeatureKind::F_RT,       FeatureKind::F_RH,
    FeatureKind::F_RT_TR_RT, FeatureKind::F_RH_HR_RT, FeatureKind::F_RT_HR_RT,
    FeatureKind::CAND_FREQ};

std::string_view to_string(FeatureKind kind);
/// Accepts the names printed by to_string ("F_HT_HT", "CAND_FREQ", ...).
std::optional<FeatureKind> parse_feature_kind(std::string_view name);
bool is_head_tail(FeatureKind kind);
bool is_relation_tail(FeatureKind kind);

struct FeatureSource {
  bool include_training = true;
  bool include_candidates = false;

  void validate() const;
};

class DirectionalIndex {
 public:
  struct Entry {
    std::uint32_t target = 0;
    std::uint64_t count = 0;
  };

  /// Counts every selected triple once per direction. Candidates contribute
  /// a pseudo-triple (head, relation, c) per list entry, duplicates included.
  static DirectionalIndex build(const TripletStore& store, const CandidateQuerySet* queries,
                                FeatureSource source);

  std::size_t source_count(Direction d) const { return table(d).sums.size(); }
  /// Row of d-source `source`, sorted by target id.
  std::span<const Entry> row(Direction d, std::uint32_t source) const;
  std::uint64_t row_sum(Direction d, std::uint32_t source) const;
  std::uint64_t count(Direction d, std::uint32_t source, std::uint32_t target) const;
  double prob(Direction d, std::uint32_t source, std::uint32_t target) const;

  std::size_t entity_count() const { return entity_count_; }
  std::size_t relation_count() const { return relation_count_; }

 private:
  struct Table {
    std::vector<std::size_t> offsets;
    std::vector<Entry> entries;
    std::vector<std::uint64_t> sums;
  };
  const Table& table(Direction d) const { return tables_[static_cast<std::size_t>(d)]; }
  void check_source(Direction d, std::uint32_t source) const;

  std::array<Table, 6> tables_;
  std::size_t entity_count_ = 0;
  std::size_t relation_count_ = 0;
};

double prob(const DirectionalIndex& index, Direction d, std::uint32_t e1, std::uint32_t e2);

struct FeatureOptions {
  /// When non-zero, the first hop of a multi-hop feature iterates only the
  /// `max_row_support` highest-count entries of its row.
  std::size_t max_row_support = 0;
};

double feature_head_tail(const DirectionalIndex& index, FeatureKind kind, EntityId h, EntityId t,
                         const FeatureOptions& options = {});
double feature_relation_tail(const DirectionalIndex& index, FeatureKind kind, RelationId r,
                             EntityId t, const FeatureOptions& options = {});

using CandidateFrequency = std::map<EntityId, std::uint64_t>;

CandidateFrequency candidate_frequency(const CandidateQuerySet& queries);
std::uint64_t frequency_of(const CandidateFrequency& freq, EntityId e);
void write_candidate_frequency(const CandidateFrequency& freq, const std::filesystem::path& path);
CandidateFrequency read_candidate_frequency(const std::filesystem::path& path);

/// One ScoreMatrix per kind, named after the kind, rows aligned with
/// candidate order. CAND_FREQ counts over `queries` itself.
std::vector<ScoreMatrix> compute_feature_matrix(const DirectionalIndex& index,
                                                const CandidateQuerySet& queries,
                                                std::span<const FeatureKind> kinds,
                                                const FeatureOptions& options = {},
                                                std::size_t threads = 1);

}  // namespace kgc
