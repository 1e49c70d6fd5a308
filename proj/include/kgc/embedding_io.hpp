#pragma once

// "KGE1" binary embedding files.
//
// Layout (all little-endian):
//   magic "KGE1"
//   u32 version (1), u32 model kind, u32 entity_count, u32 relation_count,
//   u32 entity_dim, u32 relation_dim
//   f64 gamma
//   entity matrix, row-major f32
//   relation matrix, row-major f32
//
// A sidecar "<path>.meta" mirrors the geometry as key=value lines.

#include <filesystem>

#include "kgc/models.hpp"

namespace kgc {

inline constexpr std::uint32_t kEmbeddingFormatVersion = 1;

void save_embeddings(const EmbeddingTable& table, const std::filesystem::path& path);
EmbeddingTable load_embeddings(const std::filesystem::path& path);

std::filesystem::path metadata_path(const std::filesystem::path& path);

/// DeepWalk node vectors: model kind 4 with relation_dim 0.
void save_node_embeddings(const Matrix& nodes, const std::filesystem::path& path);
Matrix load_node_embeddings(const std::filesystem::path& path);

}  // namespace kgc
