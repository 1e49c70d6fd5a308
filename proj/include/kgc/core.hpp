#pragma once

// Data model shared by every stage: triples, vocabularies, candidate queries,
// score matrices and the ranking metric.

#include <compare>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace kgc {

/// Base of all errors raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bad input data (malformed files, out-of-range ids, shape mismatches).
class DataError : public Error {
 public:
  using Error::Error;
};

/// Bad invocation or configuration.
class UsageError : public Error {
 public:
  using Error::Error;
};

using EntityId = std::uint32_t;
using RelationId = std::uint32_t;

struct Triple {
  EntityId head = 0;
  RelationId relation = 0;
  EntityId tail = 0;

  auto operator<=>(const Triple&) const = default;
};

struct Vocab {
  std::size_t entity_count = 0;
  std::size_t relation_count = 0;
  std::vector<std::string> entity_labels;    // empty or entity_count long
  std::vector<std::string> relation_labels;  // empty or relation_count long

  bool has_entity(std::uint64_t id) const { return id < entity_count; }
  bool has_relation(std::uint64_t id) const { return id < relation_count; }
  void validate() const;
};

/// Integer-encoded facts. Duplicates are kept; they count as multiplicity.
class TripletStore {
 public:
  TripletStore() = default;
  TripletStore(std::vector<Triple> triples, Vocab vocab);

  const std::vector<Triple>& triples() const { return triples_; }
  const Vocab& vocab() const { return vocab_; }
  std::size_t size() const { return triples_.size(); }
  bool empty() const { return triples_.empty(); }

 private:
  std::vector<Triple> triples_;
  Vocab vocab_;
};

struct CandidateQuery {
  EntityId head = 0;
  RelationId relation = 0;
  std::vector<EntityId> candidates;
  std::optional<std::size_t> true_index;  // absent in test mode

  EntityId true_tail() const { return candidates.at(true_index.value()); }
};

class CandidateQuerySet {
 public:
  CandidateQuerySet() = default;
  CandidateQuerySet(std::vector<CandidateQuery> queries, Vocab vocab);

  const std::vector<CandidateQuery>& queries() const { return queries_; }
  const CandidateQuery& operator[](std::size_t i) const { return queries_[i]; }
  const Vocab& vocab() const { return vocab_; }
  std::size_t size() const { return queries_.size(); }
  bool empty() const { return queries_.empty(); }
  /// True when every query carries a true_index (validation mode).
  bool labeled() const { return labeled_; }

 private:
  std::vector<CandidateQuery> queries_;
  Vocab vocab_;
  bool labeled_ = false;
};

/// Per-query scores aligned with candidate order.
struct ScoreMatrix {
  std::string source;
  std::vector<std::vector<double>> rows;

  std::size_t query_count() const { return rows.size(); }
};

struct LoadOptions {
  std::optional<std::size_t> entity_count;
  std::optional<std::size_t> relation_count;
  bool skip_header = false;
};

TripletStore load_triplets(const std::filesystem::path& path, const LoadOptions& options = {});
void save_triplets(const TripletStore& store, const std::filesystem::path& path);

CandidateQuerySet load_queries(const std::filesystem::path& path, const LoadOptions& options = {});
void save_queries(const CandidateQuerySet& queries, const std::filesystem::path& path);

/// 1 + #strictly greater scores + #equal scores at a smaller index.
std::size_t rank_of_true(std::span<const double> scores, std::size_t true_index);

/// Throws DataError unless rows align with the candidate lists.
void check_aligned(const CandidateQuerySet& queries, const ScoreMatrix& scores);

double mrr(const CandidateQuerySet& queries, const ScoreMatrix& scores);

/// Text form: header "<queries> <candidates> <source>" (candidates is 0 when
/// row lengths differ), then one row per line, values in round-trip precision.
void write_score_matrix(const ScoreMatrix& m, const std::filesystem::path& path);
ScoreMatrix read_score_matrix(const std::filesystem::path& path);

}  // namespace kgc
