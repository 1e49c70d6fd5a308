#pragma once

// Per-step scratch space: double-precision copies of the rows a batch touches
// plus their gradient accumulators. Private to the library.

#include <optional>
#include <span>
#include <vector>

#include "kgc/models.hpp"
#include "kgc/trainer.hpp"

namespace kgc::detail {

class Workspace {
 public:
  Workspace(const EmbeddingTable& table, const ScoreFunction& fn);

  void clear();

  /// Slot of entity e, loading its row on first use.
  std::size_t entity(EntityId e);
  /// Slot of relation r, loading and preparing its row on first use.
  std::size_t relation(RelationId r);
  void reprepare(std::size_t slot);

  std::optional<std::size_t> find_entity(EntityId e) const {
    return entity_slot_[e] < 0 ? std::nullopt : std::optional<std::size_t>(entity_slot_[e]);
  }
  std::optional<std::size_t> find_relation(RelationId r) const {
    return relation_slot_[r] < 0 ? std::nullopt : std::optional<std::size_t>(relation_slot_[r]);
  }

  const std::vector<EntityId>& entities() const { return entities_; }
  const std::vector<RelationId>& relations() const { return relations_; }

  std::span<double> entity_value(std::size_t s) { return {&entity_values_[s * entity_dim_], entity_dim_}; }
  std::span<double> entity_grad(std::size_t s) { return {&entity_grads_[s * entity_dim_], entity_dim_}; }
  std::span<const double> entity_grad(std::size_t s) const {
    return {&entity_grads_[s * entity_dim_], entity_dim_};
  }
  std::span<double> relation_raw(std::size_t s) { return {relation_raw_.data() + s * raw_dim_, raw_dim_}; }
  std::span<const double> relation_raw(std::size_t s) const {
    return {relation_raw_.data() + s * raw_dim_, raw_dim_};
  }
  std::span<double> relation_prepared(std::size_t s) {
    return {&relation_prepared_[s * prepared_dim_], prepared_dim_};
  }
  std::span<const double> relation_prepared(std::size_t s) const {
    return {&relation_prepared_[s * prepared_dim_], prepared_dim_};
  }
  std::span<double> relation_grad(std::size_t s) {
    return {&relation_grads_[s * prepared_dim_], prepared_dim_};
  }
  std::span<const double> relation_grad(std::size_t s) const {
    return {&relation_grads_[s * prepared_dim_], prepared_dim_};
  }

  /// Self-adversarial loss of one positive against its negatives. When
  /// want_grad is set, scale * dL is added to the slot gradients (relation
  /// gradients in prepared layout). fixed_weights overrides the softmax.
  double sample_loss(const Triple& pos, CorruptSide side, std::span<const EntityId> negatives,
                     double temperature, double scale, bool want_grad,
                     const std::vector<double>* fixed_weights, std::vector<double>* weights_out);

 private:
  const EmbeddingTable& table_;
  const ScoreFunction& fn_;
  std::size_t entity_dim_;
  std::size_t raw_dim_;
  std::size_t prepared_dim_;
  std::vector<std::int32_t> entity_slot_;
  std::vector<std::int32_t> relation_slot_;
  std::vector<EntityId> entities_;
  std::vector<RelationId> relations_;
  std::vector<double> entity_values_;
  std::vector<double> entity_grads_;
  std::vector<double> relation_raw_;
  std::vector<double> relation_prepared_;
  std::vector<double> relation_grads_;
};

}  // namespace kgc::detail
