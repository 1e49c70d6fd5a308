#include "kgc/features.hpp"

#include <algorithm>
#include <fstream>

#include "parallel.hpp"
#include "text_util.hpp"

namespace kgc {

std::string_view to_string(Direction d) {
  switch (d) {
    case Direction::HT: return "HT";
    case Direction::HR: return "HR";
    case Direction::RH: return "RH";
    case Direction::RT: return "RT";
    case Direction::TH: return "TH";
    case Direction::TR: return "TR";
  }
  return "?";
}

SlotKind source_kind(Direction d) {
  return d == Direction::RH || d == Direction::RT ? SlotKind::Relation : SlotKind::Entity;
}

SlotKind target_kind(Direction d) {
  return d == Direction::HR || d == Direction::TR ? SlotKind::Relation : SlotKind::Entity;
}

Direction transpose(Direction d) {
  switch (d) {
    case Direction::HT: return Direction::TH;
    case Direction::TH: return Direction::HT;
    case Direction::HR: return Direction::RH;
    case Direction::RH: return Direction::HR;
    case Direction::RT: return Direction::TR;
    case Direction::TR: return Direction::RT;
  }
  return d;
}

std::string_view to_string(FeatureKind kind) {
  switch (kind) {
    case FeatureKind::F_HT: return "F_HT";
    case FeatureKind::F_TH: return "F_TH";
    case FeatureKind::F_TH_HT: return "F_TH_HT";
    case FeatureKind::F_HT_HT: return "F_HT_HT";
    case FeatureKind::F_HT_TH: return "F_HT_TH";
    case FeatureKind::F_TH_TH: return "F_TH_TH";
    case FeatureKind::F_HT_HT_TH: return "F_HT_HT_TH";
    case FeatureKind::F_RT: return "F_RT";
    case FeatureKind::F_RH: return "F_RH";
    case FeatureKind::F_RT_TR_RT: return "F_RT_TR_RT";
    case FeatureKind::F_RH_HR_RT: return "F_RH_HR_RT";
    case FeatureKind::F_RT_HR_RT: return "F_RT_HR_RT";
    case FeatureKind::CAND_FREQ: return "CAND_FREQ";
  }
  return "?";
}

std::optional<FeatureKind> parse_feature_kind(std::string_view name) {
  for (FeatureKind k : kAllFeatureKinds) {
    if (name == to_string(k)) return k;
  }
  return std::nullopt;
}

bool is_head_tail(FeatureKind kind) { return kind <= FeatureKind::F_HT_HT_TH; }

bool is_relation_tail(FeatureKind kind) {
  return kind >= FeatureKind::F_RT && kind <= FeatureKind::F_RT_HR_RT;
}

void FeatureSource::validate() const {
  if (!include_training && !include_candidates) {
    throw UsageError("feature source must include training triples, candidates, or both");
  }
}

DirectionalIndex DirectionalIndex::build(const TripletStore& store,
                                         const CandidateQuerySet* queries,
                                         FeatureSource source) {
  source.validate();
  if (source.include_candidates && !queries) {
    throw UsageError("feature source includes candidates but no query set was given");
  }
  DirectionalIndex index;
  index.entity_count_ = store.vocab().entity_count;
  index.relation_count_ = store.vocab().relation_count;
  if (source.include_candidates) {
    index.entity_count_ = std::max(index.entity_count_, queries->vocab().entity_count);
    index.relation_count_ = std::max(index.relation_count_, queries->vocab().relation_count);
  }

  std::vector<Triple> triples;
  if (source.include_training) triples = store.triples();
  if (source.include_candidates) {
    for (const CandidateQuery& q : queries->queries()) {
      for (EntityId c : q.candidates) triples.push_back({q.head, q.relation, c});
    }
  }
  for (const Triple& t : triples) {
    if (t.head >= index.entity_count_ || t.tail >= index.entity_count_ ||
        t.relation >= index.relation_count_) {
      throw DataError("build_index: triple (" + std::to_string(t.head) + ", " +
                      std::to_string(t.relation) + ", " + std::to_string(t.tail) +
                      ") outside vocab");
    }
  }

  std::vector<std::pair<std::uint32_t, std::uint32_t>> pairs(triples.size());
  for (Direction d : kAllDirections) {
    for (std::size_t i = 0; i < triples.size(); ++i) {
      const Triple& t = triples[i];
      switch (d) {
        case Direction::HT: pairs[i] = {t.head, t.tail}; break;
        case Direction::TH: pairs[i] = {t.tail, t.head}; break;
        case Direction::HR: pairs[i] = {t.head, t.relation}; break;
        case Direction::RH: pairs[i] = {t.relation, t.head}; break;
        case Direction::RT: pairs[i] = {t.relation, t.tail}; break;
        case Direction::TR: pairs[i] = {t.tail, t.relation}; break;
      }
    }
    std::sort(pairs.begin(), pairs.end());
    const std::size_t sources =
        source_kind(d) == SlotKind::Entity ? index.entity_count_ : index.relation_count_;
    Table& tab = index.tables_[static_cast<std::size_t>(d)];
    tab.offsets.assign(sources + 1, 0);
    tab.sums.assign(sources, 0);
    tab.entries.clear();
    for (std::size_t i = 0; i < pairs.size();) {
      std::size_t j = i;
      while (j < pairs.size() && pairs[j] == pairs[i]) ++j;
      tab.entries.push_back({pairs[i].second, static_cast<std::uint64_t>(j - i)});
      ++tab.offsets[pairs[i].first + 1];
      tab.sums[pairs[i].first] += j - i;
      i = j;
    }
    for (std::size_t s = 0; s < sources; ++s) tab.offsets[s + 1] += tab.offsets[s];
  }
  return index;
}

void DirectionalIndex::check_source(Direction d, std::uint32_t source) const {
  if (source >= source_count(d)) {
    throw DataError(std::string("index: ") + std::string(to_string(d)) + " source " +
                    std::to_string(source) + " outside vocab");
  }
}

std::span<const DirectionalIndex::Entry> DirectionalIndex::row(Direction d,
                                                               std::uint32_t source) const {
  check_source(d, source);
  const Table& tab = table(d);
  return {tab.entries.data() + tab.offsets[source], tab.offsets[source + 1] - tab.offsets[source]};
}

std::uint64_t DirectionalIndex::row_sum(Direction d, std::uint32_t source) const {
  check_source(d, source);
  return table(d).sums[source];
}

std::uint64_t DirectionalIndex::count(Direction d, std::uint32_t source,
                                      std::uint32_t target) const {
  const auto r = row(d, source);
  const auto it = std::lower_bound(r.begin(), r.end(), target,
                                   [](const Entry& e, std::uint32_t v) { return e.target < v; });
  return it != r.end() && it->target == target ? it->count : 0;
}

double DirectionalIndex::prob(Direction d, std::uint32_t source, std::uint32_t target) const {
  const std::uint64_t sum = row_sum(d, source);
  if (sum == 0) return 0.0;
  return static_cast<double>(count(d, source, target)) / static_cast<double>(sum);
}

double prob(const DirectionalIndex& index, Direction d, std::uint32_t e1, std::uint32_t e2) {
  return index.prob(d, e1, e2);
}

namespace {

using Entry = DirectionalIndex::Entry;

struct PathSpec {
  std::array<Direction, 3> hops{};
  std::size_t length = 0;
};

PathSpec path_of(FeatureKind kind) {
  using D = Direction;
  switch (kind) {
    case FeatureKind::F_HT: return {{D::HT}, 1};
    case FeatureKind::F_TH: return {{D::TH}, 1};
    case FeatureKind::F_TH_HT: return {{D::TH, D::HT}, 2};
    case FeatureKind::F_HT_HT: return {{D::HT, D::HT}, 2};
    case FeatureKind::F_HT_TH: return {{D::HT, D::TH}, 2};
    case FeatureKind::F_TH_TH: return {{D::TH, D::TH}, 2};
    case FeatureKind::F_HT_HT_TH: return {{D::HT, D::HT, D::TH}, 3};
    case FeatureKind::F_RT: return {{D::RT}, 1};
    case FeatureKind::F_RH: return {{D::RH}, 1};
    case FeatureKind::F_RT_TR_RT: return {{D::RT, D::TR, D::RT}, 3};
    case FeatureKind::F_RH_HR_RT: return {{D::RH, D::HR, D::RT}, 3};
    case FeatureKind::F_RT_HR_RT: return {{D::RT, D::HR, D::RT}, 3};
    case FeatureKind::CAND_FREQ: break;
  }
  throw UsageError("no path for feature " + std::string(to_string(kind)));
}

std::vector<Entry> capped(std::span<const Entry> row, std::size_t cap) {
  std::vector<Entry> out(row.begin(), row.end());
  if (cap == 0 || out.size() <= cap) return out;
  std::partial_sort(out.begin(), out.begin() + static_cast<std::ptrdiff_t>(cap), out.end(),
                    [](const Entry& a, const Entry& b) {
                      return a.count != b.count ? a.count > b.count : a.target < b.target;
                    });
  out.resize(cap);
  std::sort(out.begin(), out.end(), [](const Entry& a, const Entry& b) { return a.target < b.target; });
  return out;
}

// sum_e P_first(src, e) * P_last(e, t), where `into_t` is the transpose row of
// `last` at t (entries e with S_last(e, t) > 0). Merges the two sorted rows.
double two_hop(const DirectionalIndex& index, std::span<const Entry> from_src, double src_sum,
               Direction last, std::span<const Entry> into_t) {
  double total = 0.0;
  auto a = from_src.begin();
  auto b = into_t.begin();
  while (a != from_src.end() && b != into_t.end()) {
    if (a->target < b->target) {
      ++a;
    } else if (b->target < a->target) {
      ++b;
    } else {
      const double p1 = static_cast<double>(a->count) / src_sum;
      const double p2 = static_cast<double>(b->count) /
                        static_cast<double>(index.row_sum(last, a->target));
      total += p1 * p2;
      ++a;
      ++b;
    }
  }
  return total;
}

double evaluate_path(const DirectionalIndex& index, const PathSpec& path, std::uint32_t src,
                     EntityId t, const FeatureOptions& options) {
  const Direction first = path.hops[0];
  if (path.length == 1) return index.prob(first, src, t);
  const std::uint64_t src_sum = index.row_sum(first, src);
  if (src_sum == 0) return 0.0;
  const Direction last = path.hops[path.length - 1];
  const auto into_t = index.row(transpose(last), t);
  if (into_t.empty()) return 0.0;
  const auto first_row = capped(index.row(first, src), options.max_row_support);
  if (path.length == 2) {
    return two_hop(index, first_row, static_cast<double>(src_sum), last, into_t);
  }
  const Direction middle = path.hops[1];
  double total = 0.0;
  for (const Entry& e1 : first_row) {
    const std::uint64_t mid_sum = index.row_sum(middle, e1.target);
    if (mid_sum == 0) continue;
    const double p1 = static_cast<double>(e1.count) / static_cast<double>(src_sum);
    total += p1 * two_hop(index, index.row(middle, e1.target), static_cast<double>(mid_sum), last,
                          into_t);
  }
  return total;
}

}  // namespace

double feature_head_tail(const DirectionalIndex& index, FeatureKind kind, EntityId h, EntityId t,
                         const FeatureOptions& options) {
  if (!is_head_tail(kind)) {
    throw UsageError(std::string(to_string(kind)) + " is not a head-to-tail feature");
  }
  return evaluate_path(index, path_of(kind), h, t, options);
}

double feature_relation_tail(const DirectionalIndex& index, FeatureKind kind, RelationId r,
                             EntityId t, const FeatureOptions& options) {
  if (!is_relation_tail(kind)) {
    throw UsageError(std::string(to_string(kind)) + " is not a relation-to-tail feature");
  }
  return evaluate_path(index, path_of(kind), r, t, options);
}

CandidateFrequency candidate_frequency(const CandidateQuerySet& queries) {
  CandidateFrequency freq;
  for (const CandidateQuery& q : queries.queries()) {
    for (EntityId c : q.candidates) ++freq[c];
  }
  return freq;
}

std::uint64_t frequency_of(const CandidateFrequency& freq, EntityId e) {
  const auto it = freq.find(e);
  return it == freq.end() ? 0 : it->second;
}

void write_candidate_frequency(const CandidateFrequency& freq, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  for (const auto& [entity, count] : freq) out << entity << ' ' << count << '\n';
  if (!out) throw DataError("write failed: " + path.string());
}

CandidateFrequency read_candidate_frequency(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  CandidateFrequency freq;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::is_blank_or_comment(line)) continue;
    const std::string where = path.string() + ":" + std::to_string(line_no);
    const auto f = detail::split_fields(line);
    if (f.size() != 2) throw DataError(where + ": expected 'entity count'");
    freq[detail::parse_id<EntityId>(f[0], where)] = detail::parse_id<std::uint64_t>(f[1], where);
  }
  return freq;
}

std::vector<ScoreMatrix> compute_feature_matrix(const DirectionalIndex& index,
                                                const CandidateQuerySet& queries,
                                                std::span<const FeatureKind> kinds,
                                                const FeatureOptions& options,
                                                std::size_t threads) {
  if (kinds.empty()) throw UsageError("compute_feature_matrix: no feature kinds");
  const bool need_freq = std::find(kinds.begin(), kinds.end(), FeatureKind::CAND_FREQ) != kinds.end();
  const CandidateFrequency freq = need_freq ? candidate_frequency(queries) : CandidateFrequency{};

  std::vector<ScoreMatrix> out(kinds.size());
  for (std::size_t k = 0; k < kinds.size(); ++k) {
    out[k].source = std::string(to_string(kinds[k]));
    out[k].rows.resize(queries.size());
  }
  auto fill = [&](std::size_t qi) {
    const CandidateQuery& q = queries[qi];
    for (std::size_t k = 0; k < kinds.size(); ++k) {
      auto& row = out[k].rows[qi];
      row.resize(q.candidates.size());
      for (std::size_t c = 0; c < q.candidates.size(); ++c) {
        const EntityId t = q.candidates[c];
        const FeatureKind kind = kinds[k];
        if (kind == FeatureKind::CAND_FREQ) {
          row[c] = static_cast<double>(frequency_of(freq, t));
        } else if (is_head_tail(kind)) {
          row[c] = feature_head_tail(index, kind, q.head, t, options);
        } else {
          row[c] = feature_relation_tail(index, kind, q.relation, t, options);
        }
      }
    }
  };
  detail::parallel_for(queries.size(), threads, fill);
  return out;
}

}  // namespace kgc
