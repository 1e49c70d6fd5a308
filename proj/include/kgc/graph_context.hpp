#pragma once

// Structure-based supplements to the triplet models: one pass of
// relation-aware neighbour smoothing over trained embeddings, and DeepWalk
// node vectors over the relation-free graph.

#include <filesystem>
#include <utility>
#include <vector>

#include "kgc/core.hpp"
#include "kgc/models.hpp"

namespace kgc {

struct SmoothConfig {
  double alpha = 1.0;  // weight of the entity's own embedding
  ModelKind model_kind = ModelKind::TransE;

  void validate() const;
};

/// u' = alpha u + (1 - alpha) mean_{incident edges} f(neighbour, relation),
/// where f moves the neighbour through the inverse relation transform toward
/// u. Entities without edges and all relation rows are copied unchanged.
EmbeddingTable post_smooth(const EmbeddingTable& table, const TripletStore& store,
                           const SmoothConfig& config);

struct WalkConfig {
  std::size_t num_walks_per_node = 10;
  std::size_t walk_length = 40;
  std::size_t window = 5;
  std::size_t neg_samples = 5;
  std::size_t dim = 64;
  std::size_t epochs = 1;
  double lr = 0.025;
  std::uint64_t seed = 0;
  std::size_t threads = 1;

  void validate() const;
};

using Walk = std::vector<EntityId>;

/// Uniform random walks on the undirected, relation-free graph. Walk k from
/// node v draws from its own stream, so the output does not depend on the
/// thread count. Walks from isolated nodes have length 1.
std::vector<Walk> generate_walks(const TripletStore& store, const WalkConfig& config);

/// Ordered (center, context) pairs of positions at distance 1..window.
std::vector<std::pair<EntityId, EntityId>> window_pairs(const Walk& walk, std::size_t window);

/// Skip-gram with negative sampling (unigram^0.75 noise). Returns the
/// entity_count x dim input vectors.
Matrix skipgram_train(const std::vector<Walk>& walks, std::size_t entity_count,
                      const WalkConfig& config);

/// Cosine similarity of two rows; 0 if either row has zero norm.
double deepwalk_score(const Matrix& nodes, EntityId h, EntityId t);

/// One walk per line, space-separated ids.
void save_walks(const std::vector<Walk>& walks, const std::filesystem::path& path);
std::vector<Walk> load_walks(const std::filesystem::path& path);

}  // namespace kgc
