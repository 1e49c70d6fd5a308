#include "kgc/core.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "text_util.hpp"

namespace kgc {

void Vocab::validate() const {
  if (!entity_labels.empty() && entity_labels.size() != entity_count) {
    throw DataError("entity label count " + std::to_string(entity_labels.size()) +
                    " != entity_count " + std::to_string(entity_count));
  }
  if (!relation_labels.empty() && relation_labels.size() != relation_count) {
    throw DataError("relation label count " + std::to_string(relation_labels.size()) +
                    " != relation_count " + std::to_string(relation_count));
  }
}

TripletStore::TripletStore(std::vector<Triple> triples, Vocab vocab)
    : triples_(std::move(triples)), vocab_(std::move(vocab)) {
  vocab_.validate();
  for (std::size_t i = 0; i < triples_.size(); ++i) {
    const Triple& t = triples_[i];
    if (!vocab_.has_entity(t.head) || !vocab_.has_entity(t.tail) ||
        !vocab_.has_relation(t.relation)) {
      throw DataError("triple " + std::to_string(i) + " (" + std::to_string(t.head) + ", " +
                      std::to_string(t.relation) + ", " + std::to_string(t.tail) +
                      ") outside vocab (" + std::to_string(vocab_.entity_count) + " entities, " +
                      std::to_string(vocab_.relation_count) + " relations)");
    }
  }
}

CandidateQuerySet::CandidateQuerySet(std::vector<CandidateQuery> queries, Vocab vocab)
    : queries_(std::move(queries)), vocab_(std::move(vocab)) {
  vocab_.validate();
  labeled_ = !queries_.empty() && queries_.front().true_index.has_value();
  for (std::size_t i = 0; i < queries_.size(); ++i) {
    const CandidateQuery& q = queries_[i];
    const std::string where = "query " + std::to_string(i);
    if (q.true_index.has_value() != labeled_) {
      throw DataError(where + ": queries disagree on presence of true_index");
    }
    if (q.candidates.empty()) throw DataError(where + ": empty candidate list");
    if (q.true_index && *q.true_index >= q.candidates.size()) {
      throw DataError(where + ": true_index " + std::to_string(*q.true_index) +
                      " >= C=" + std::to_string(q.candidates.size()));
    }
    if (!vocab_.has_entity(q.head) || !vocab_.has_relation(q.relation)) {
      throw DataError(where + ": head/relation outside vocab");
    }
    for (EntityId c : q.candidates) {
      if (!vocab_.has_entity(c)) {
        throw DataError(where + ": candidate " + std::to_string(c) + " outside vocab");
      }
    }
  }
}

namespace {

std::ifstream open_input(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  return in;
}

std::ofstream open_output(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  return out;
}

std::size_t resolve_count(std::optional<std::size_t> explicit_count, std::uint64_t max_seen,
                          bool any, const char* what) {
  if (explicit_count) {
    if (any && max_seen >= *explicit_count) {
      throw DataError(std::string(what) + " id " + std::to_string(max_seen) +
                      " exceeds declared count " + std::to_string(*explicit_count));
    }
    return *explicit_count;
  }
  return any ? static_cast<std::size_t>(max_seen) + 1 : 0;
}

}  // namespace

TripletStore load_triplets(const std::filesystem::path& path, const LoadOptions& options) {
  auto in = open_input(path);
  std::vector<Triple> triples;
  std::uint64_t max_entity = 0;
  std::uint64_t max_relation = 0;
  std::string line;
  std::size_t line_no = 0;
  bool header_pending = options.skip_header;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::is_blank_or_comment(line)) continue;
    if (header_pending) {
      header_pending = false;
      continue;
    }
    const auto fields = detail::split_fields(line);
    const std::string where = path.string() + ":" + std::to_string(line_no);
    if (fields.size() != 3) {
      throw DataError(where + ": expected 3 fields (h r t), got " +
                      std::to_string(fields.size()));
    }
    Triple t;
    t.head = detail::parse_id<EntityId>(fields[0], where);
    t.relation = detail::parse_id<RelationId>(fields[1], where);
    t.tail = detail::parse_id<EntityId>(fields[2], where);
    max_entity = std::max<std::uint64_t>({max_entity, t.head, t.tail});
    max_relation = std::max<std::uint64_t>(max_relation, t.relation);
    triples.push_back(t);
  }
  Vocab vocab;
  vocab.entity_count = resolve_count(options.entity_count, max_entity, !triples.empty(), "entity");
  vocab.relation_count =
      resolve_count(options.relation_count, max_relation, !triples.empty(), "relation");
  return TripletStore(std::move(triples), std::move(vocab));
}

void save_triplets(const TripletStore& store, const std::filesystem::path& path) {
  auto out = open_output(path);
  for (const Triple& t : store.triples()) {
    out << t.head << ' ' << t.relation << ' ' << t.tail << '\n';
  }
  if (!out) throw DataError("write failed: " + path.string());
}

CandidateQuerySet load_queries(const std::filesystem::path& path, const LoadOptions& options) {
  auto in = open_input(path);
  std::vector<CandidateQuery> queries;
  std::uint64_t max_entity = 0;
  std::uint64_t max_relation = 0;
  std::optional<bool> labeled;
  std::string line;
  std::size_t line_no = 0;
  bool header_pending = options.skip_header;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::is_blank_or_comment(line)) continue;
    if (header_pending) {
      header_pending = false;
      continue;
    }
    const auto fields = detail::split_fields(line);
    const std::string where = path.string() + ":" + std::to_string(line_no);
    if (fields.size() < 4) throw DataError(where + ": expected head, relation, C, candidates");
    CandidateQuery q;
    q.head = detail::parse_id<EntityId>(fields[0], where);
    q.relation = detail::parse_id<RelationId>(fields[1], where);
    const auto count = detail::parse_id<std::uint64_t>(fields[2], where);
    if (count == 0) throw DataError(where + ": candidate count must be >= 1");
    const std::size_t rest = fields.size() - 3;
    if (rest != count && rest != count + 1) {
      throw DataError(where + ": candidate count mismatch: declared C=" + std::to_string(count) +
                      ", found " + std::to_string(rest) + " trailing fields");
    }
    q.candidates.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
      q.candidates.push_back(detail::parse_id<EntityId>(fields[3 + i], where));
      max_entity = std::max<std::uint64_t>(max_entity, q.candidates.back());
    }
    if (rest == count + 1) {
      const auto idx = detail::parse_id<std::uint64_t>(fields.back(), where);
      if (idx >= count) {
        throw DataError(where + ": true_index " + std::to_string(idx) +
                        " >= C=" + std::to_string(count));
      }
      q.true_index = static_cast<std::size_t>(idx);
    }
    if (labeled && *labeled != q.true_index.has_value()) {
      throw DataError(where + ": mixed presence of true_index across rows");
    }
    labeled = q.true_index.has_value();
    max_entity = std::max<std::uint64_t>(max_entity, q.head);
    max_relation = std::max<std::uint64_t>(max_relation, q.relation);
    queries.push_back(std::move(q));
  }
  Vocab vocab;
  vocab.entity_count = resolve_count(options.entity_count, max_entity, !queries.empty(), "entity");
  vocab.relation_count =
      resolve_count(options.relation_count, max_relation, !queries.empty(), "relation");
  return CandidateQuerySet(std::move(queries), std::move(vocab));
}

void save_queries(const CandidateQuerySet& queries, const std::filesystem::path& path) {
  auto out = open_output(path);
  for (const CandidateQuery& q : queries.queries()) {
    out << q.head << ' ' << q.relation << ' ' << q.candidates.size();
    for (EntityId c : q.candidates) out << ' ' << c;
    if (q.true_index) out << ' ' << *q.true_index;
    out << '\n';
  }
  if (!out) throw DataError("write failed: " + path.string());
}

std::size_t rank_of_true(std::span<const double> scores, std::size_t true_index) {
  if (true_index >= scores.size()) {
    throw DataError("true_index " + std::to_string(true_index) + " out of range for " +
                    std::to_string(scores.size()) + " scores");
  }
  const double target = scores[true_index];
  std::size_t rank = 1;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const double s = scores[i];
    if (!std::isfinite(s)) throw DataError("non-finite score at index " + std::to_string(i));
    if (s > target || (s == target && i < true_index)) ++rank;
  }
  return rank;
}

void check_aligned(const CandidateQuerySet& queries, const ScoreMatrix& scores) {
  if (scores.rows.size() != queries.size()) {
    throw DataError("score matrix '" + scores.source + "' has " +
                    std::to_string(scores.rows.size()) + " rows, expected " +
                    std::to_string(queries.size()));
  }
  for (std::size_t i = 0; i < queries.size(); ++i) {
    if (scores.rows[i].size() != queries[i].candidates.size()) {
      throw DataError("score matrix '" + scores.source + "' row " + std::to_string(i) +
                      " has " + std::to_string(scores.rows[i].size()) + " values, expected " +
                      std::to_string(queries[i].candidates.size()));
    }
  }
}

double mrr(const CandidateQuerySet& queries, const ScoreMatrix& scores) {
  if (!queries.labeled()) throw DataError("mrr needs queries with true_index");
  check_aligned(queries, scores);
  double total = 0.0;
  for (std::size_t i = 0; i < queries.size(); ++i) {
    total += 1.0 / static_cast<double>(rank_of_true(scores.rows[i], *queries[i].true_index));
  }
  return total / static_cast<double>(queries.size());
}

void write_score_matrix(const ScoreMatrix& m, const std::filesystem::path& path) {
  auto out = open_output(path);
  std::size_t width = m.rows.empty() ? 0 : m.rows.front().size();
  for (const auto& row : m.rows) {
    if (row.size() != width) width = 0;
  }
  out << m.rows.size() << ' ' << width << ' ' << (m.source.empty() ? "-" : m.source) << '\n';
  std::string buf;
  for (const auto& row : m.rows) {
    buf.clear();
    for (std::size_t j = 0; j < row.size(); ++j) {
      if (j) buf.push_back(' ');
      detail::append_double(buf, row[j]);
    }
    buf.push_back('\n');
    out << buf;
  }
  if (!out) throw DataError("write failed: " + path.string());
}

ScoreMatrix read_score_matrix(const std::filesystem::path& path) {
  auto in = open_input(path);
  std::string line;
  if (!std::getline(in, line)) throw DataError(path.string() + ": missing header");
  const auto header = detail::split_fields(line);
  if (header.size() != 3) throw DataError(path.string() + ":1: malformed score header");
  const auto rows = detail::parse_id<std::uint64_t>(header[0], path.string() + ":1");
  const auto width = detail::parse_id<std::uint64_t>(header[1], path.string() + ":1");
  ScoreMatrix m;
  m.source = std::string(header[2]);
  m.rows.reserve(rows);
  std::size_t line_no = 1;
  while (m.rows.size() < rows && std::getline(in, line)) {
    ++line_no;
    const std::string where = path.string() + ":" + std::to_string(line_no);
    std::vector<double> row;
    for (auto field : detail::split_fields(line)) {
      row.push_back(detail::parse_double(field, where));
      if (!std::isfinite(row.back())) throw DataError(where + ": non-finite score");
    }
    if (width != 0 && row.size() != width) {
      throw DataError(where + ": expected " + std::to_string(width) + " values, got " +
                      std::to_string(row.size()));
    }
    m.rows.push_back(std::move(row));
  }
  if (m.rows.size() != rows) {
    throw DataError(path.string() + ": expected " + std::to_string(rows) + " rows, got " +
                    std::to_string(m.rows.size()));
  }
  return m;
}

}  // namespace kgc
