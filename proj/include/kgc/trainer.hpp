#pragma once

// Negative-sampling SGD training for the triplet models.

#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include "kgc/core.hpp"
#include "kgc/models.hpp"

namespace kgc {

using Rng = std::mt19937_64;

/// Independent stream for (seed, stream index).
Rng make_rng(std::uint64_t seed, std::uint64_t stream = 0);

struct TrainConfig {
  std::size_t batch_size = 1000;
  double lr = 0.1;
  std::size_t lrd_step = 100000;  // steps between learning-rate halvings
  std::size_t neg_sample_size = 64;
  double adversarial_temperature = 1.0;
  std::size_t epochs = 1;
  std::size_t max_steps = 0;  // 0: run full epochs
  std::uint64_t seed = 0;
  std::size_t threads = 1;
  GeometryConfig geometry;

  void validate() const;
  double learning_rate_at(std::size_t step) const;
};

enum class CorruptSide { Head, Tail };

/// Head corruption is scored tail-to-head, tail corruption head-to-tail.
ScoreDirection direction_for(CorruptSide side);

struct NegativeBatch {
  std::vector<Triple> positives;
  CorruptSide corrupted_side = CorruptSide::Tail;
  std::size_t per_positive = 0;
  std::vector<EntityId> negatives;  // positives.size() x per_positive

  std::span<const EntityId> for_positive(std::size_t i) const {
    return {negatives.data() + i * per_positive, per_positive};
  }
};

NegativeBatch sample_negatives(const TripletStore& store, std::span<const Triple> batch,
                               CorruptSide side, const TrainConfig& config, Rng& rng);

struct AdversarialLoss {
  double loss = 0.0;
  std::vector<double> neg_weights;
};

/// -log sigmoid(pos) - sum_i p_i log sigmoid(-neg_i), p = softmax(temperature * neg).
AdversarialLoss loss_self_adversarial(double pos_score, std::span<const double> neg_scores,
                                      double temperature);

/// Uniform [-6/sqrt(d), 6/sqrt(d)] entries; NOTE blocks start at identity
/// plus uniform noise in [-0.1, 0.1] with zero scalar vectors.
EmbeddingTable initialize_table(const GeometryConfig& geometry, std::size_t entity_count,
                                std::size_t relation_count, std::uint64_t seed);

struct EpochStats {
  std::size_t epoch = 0;
  std::size_t steps = 0;
  double mean_loss = 0.0;
  double seconds = 0.0;
};

using EpochCallback = std::function<void(const EpochStats&)>;

/// Mini-batch SGD with sparse row updates. Each step samples head- and
/// tail-corrupted negatives for every positive and applies
/// lr * d(sum of per-positive losses) to the touched rows only.
class Trainer {
 public:
  Trainer(const TripletStore& store, TrainConfig config);
  Trainer(const TripletStore& store, TrainConfig config, EmbeddingTable initial);

  /// Runs one mini-batch step and returns its mean per-positive loss.
  double step();
  /// Runs until the configured epochs or max_steps are exhausted.
  void run(const EpochCallback& on_epoch = {});

  const EmbeddingTable& table() const { return table_; }
  EmbeddingTable release() { return std::move(table_); }
  std::size_t steps_done() const { return steps_; }
  std::size_t steps_per_epoch() const;
  const std::vector<EntityId>& last_step_entities() const { return last_entities_; }
  const std::vector<RelationId>& last_step_relations() const { return last_relations_; }

 private:
  std::span<const Triple> next_batch();

  const TripletStore& store_;
  TrainConfig config_;
  EmbeddingTable table_;
  std::unique_ptr<ScoreFunction> fn_;
  std::vector<Rng> worker_rngs_;
  Rng shuffle_rng_;
  std::vector<Triple> order_;
  std::size_t cursor_ = 0;
  std::size_t steps_ = 0;
  double running_loss_ = 0.0;
  std::vector<EntityId> last_entities_;
  std::vector<RelationId> last_relations_;
};

EmbeddingTable train(const TripletStore& store, const TrainConfig& config,
                     const EpochCallback& on_epoch = {});

struct GradientSample {
  Triple positive;
  CorruptSide side = CorruptSide::Tail;
  std::vector<EntityId> negatives;
};

struct GradientReport {
  double max_relative_error = 0.0;
  std::size_t parameters_checked = 0;
  double tolerance = 0.0;
  bool passed() const { return max_relative_error <= tolerance; }
};

/// Compares analytic gradients of the self-adversarial loss of one sample
/// against central differences (step 1e-5) in double precision, for every
/// coordinate of every touched row. Negative weights are held at their
/// unperturbed values, matching the analytic gradient.
GradientReport gradient_check(ModelKind kind, const GradientSample& sample,
                              const EmbeddingTable& table, double tolerance,
                              double temperature = 1.0);

}  // namespace kgc
