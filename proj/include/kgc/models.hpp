#pragma once

// Triplet score functions (TransE, RotatE, QuatE, NOTE) and their building
// blocks. Higher score means a more plausible triple.

#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "kgc/core.hpp"

namespace kgc {

/// Raised on degenerate numeric input (collapsed Gram-Schmidt pivot, zero quaternion).
class DegenerateInput : public DataError {
 public:
  using DataError::DataError;
};

/// Codes double as the on-disk model kind field.
enum class ModelKind : std::uint32_t { TransE = 0, RotatE = 1, QuatE = 2, NOTE = 3, DeepWalk = 4 };

std::string_view to_string(ModelKind kind);
/// Case-insensitive; throws UsageError listing valid names.
ModelKind parse_model_kind(std::string_view name);

struct GeometryConfig {
  ModelKind model_kind = ModelKind::TransE;
  std::size_t hidden_size = 200;
  double gamma = 12.0;
  int norm_p = 2;
  std::size_t ote_size = 20;

  /// Per-model default norm: L1 over complex moduli for RotatE, L2 otherwise.
  static GeometryConfig defaults(ModelKind kind);

  void validate() const;
  std::size_t entity_dim() const;
  std::size_t relation_dim() const;
  /// NOTE sub-block count K = hidden_size / ote_size.
  std::size_t block_count() const { return hidden_size / ote_size; }
};

/// Row-major float32 matrix.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, float fill = 0.0f)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::span<float> row(std::size_t i) { return {data_.data() + i * cols_, cols_}; }
  std::span<const float> row(std::size_t i) const { return {data_.data() + i * cols_, cols_}; }
  std::vector<float>& data() { return data_; }
  const std::vector<float>& data() const { return data_; }

  bool operator==(const Matrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<float> data_;
};

struct EmbeddingTable {
  Matrix entities;   // entity_count x entity_dim
  Matrix relations;  // relation_count x relation_dim
  GeometryConfig geometry;

  /// Zero-filled table with the shapes implied by the geometry.
  static EmbeddingTable zeros(const GeometryConfig& geometry, std::size_t entity_count,
                              std::size_t relation_count);
  void validate() const;
};

/// Small dense row-major square matrix in double precision.
struct SquareMatrix {
  std::size_t n = 0;
  std::vector<double> values;

  SquareMatrix() = default;
  explicit SquareMatrix(std::size_t size) : n(size), values(size * size, 0.0) {}
  SquareMatrix(std::size_t size, std::vector<double> v);
  static SquareMatrix identity(std::size_t size);

  double& operator()(std::size_t r, std::size_t c) { return values[r * n + c]; }
  double operator()(std::size_t r, std::size_t c) const { return values[r * n + c]; }
  std::span<const double> row(std::size_t r) const { return {values.data() + r * n, n}; }
};

inline constexpr double kGramSchmidtEpsilon = 1e-10;

/// Orthonormalizes the rows of m in order. Throws DegenerateInput when a
/// residual row norm falls below kGramSchmidtEpsilon.
SquareMatrix gram_schmidt(const SquareMatrix& m);

/// Reverse-mode derivative of gram_schmidt: maps dL/dQ to dL/dM.
SquareMatrix gram_schmidt_backward(const SquareMatrix& m, const SquareMatrix& q,
                                   const SquareMatrix& grad_q);

enum class ScalarSide { Head, Tail };

/// Diagonal of exp(+-s) scaled to unit Euclidean norm.
std::vector<double> note_scalar_weights(std::span<const double> s, ScalarSide side);

/// Quaternion-wise product of (w, x, y, z) quadruples.
std::vector<double> hamilton_product(std::span<const double> a, std::span<const double> b);

enum class ScoreDirection { HeadToTail, TailToHead };

/// Geometry-specific score in double precision with analytic gradients.
///
/// Relation parameters pass through prepare() once (orthogonalization for
/// NOTE, cos/sin for RotatE, unit quaternions for QuatE) so a relation can be
/// scored against many entity pairs. Gradients flow back the same way:
/// score_grad() accumulates into the prepared layout and prepare_backward()
/// maps that onto the raw parameters.
class ScoreFunction {
 public:
  explicit ScoreFunction(GeometryConfig geometry) : geometry_(geometry) {}
  virtual ~ScoreFunction() = default;

  const GeometryConfig& geometry() const { return geometry_; }
  virtual std::size_t prepared_size() const = 0;

  virtual void prepare(std::span<const double> raw, std::span<double> prepared) const = 0;
  /// Adds the raw-parameter gradient implied by grad_prepared into grad_raw.
  virtual void prepare_backward(std::span<const double> raw, std::span<const double> prepared,
                                std::span<const double> grad_prepared,
                                std::span<double> grad_raw) const = 0;

  virtual double score(std::span<const double> head, std::span<const double> prepared,
                       std::span<const double> tail, ScoreDirection direction) const = 0;
  /// Returns the score and adds upstream * d(score) into the three gradients.
  virtual double score_grad(std::span<const double> head, std::span<const double> prepared,
                            std::span<const double> tail, ScoreDirection direction,
                            double upstream, std::span<double> grad_head,
                            std::span<double> grad_prepared,
                            std::span<double> grad_tail) const = 0;

 private:
  GeometryConfig geometry_;
};

std::unique_ptr<ScoreFunction> make_score_function(const GeometryConfig& geometry);

std::vector<double> to_double(std::span<const float> row);

double transe_score(EntityId h, RelationId r, EntityId t, const EmbeddingTable& table);
double rotate_score(EntityId h, RelationId r, EntityId t, const EmbeddingTable& table);
double quate_score(EntityId h, RelationId r, EntityId t, const EmbeddingTable& table);
double note_score(EntityId h, RelationId r, EntityId t, const EmbeddingTable& table,
                  ScoreDirection direction = ScoreDirection::HeadToTail);

/// Dispatches on the table geometry.
double score_triple(EntityId h, RelationId r, EntityId t, const EmbeddingTable& table,
                    ScoreDirection direction = ScoreDirection::HeadToTail);

/// Scores every candidate tail of one query, preparing the relation once.
std::vector<double> score_candidates(const EmbeddingTable& table, const ScoreFunction& fn,
                                     const CandidateQuery& query);

}  // namespace kgc
