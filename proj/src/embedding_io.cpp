#include "kgc/embedding_io.hpp"

#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <map>
#include <sstream>

#include "text_util.hpp"

namespace kgc {

namespace {

constexpr std::array<char, 4> kMagic{'K', 'G', 'E', '1'};
constexpr std::size_t kHeaderBytes = 4 + 6 * 4 + 8;

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFFu));
}

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFFu));
}

std::uint32_t get_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | static_cast<std::uint32_t>(p[1]) << 8 |
         static_cast<std::uint32_t>(p[2]) << 16 | static_cast<std::uint32_t>(p[3]) << 24;
}

std::uint64_t get_u64(const unsigned char* p) {
  return static_cast<std::uint64_t>(get_u32(p)) |
         static_cast<std::uint64_t>(get_u32(p + 4)) << 32;
}

std::uint32_t checked_u32(std::size_t v, const char* what) {
  if (v > 0xFFFFFFFFu) throw DataError(std::string(what) + " does not fit the u32 header field");
  return static_cast<std::uint32_t>(v);
}

void put_matrix(std::string& out, const Matrix& m) {
  for (float x : m.data()) put_u32(out, std::bit_cast<std::uint32_t>(x));
}

void write_file(const std::filesystem::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("write failed: " + path.string());
}

std::string encode(ModelKind kind, double gamma, const Matrix& entities, const Matrix& relations,
                   std::size_t relation_count) {
  std::string out;
  out.reserve(kHeaderBytes + 4 * (entities.data().size() + relations.data().size()));
  out.append(kMagic.data(), kMagic.size());
  put_u32(out, kEmbeddingFormatVersion);
  put_u32(out, static_cast<std::uint32_t>(kind));
  put_u32(out, checked_u32(entities.rows(), "entity_count"));
  put_u32(out, checked_u32(relation_count, "relation_count"));
  put_u32(out, checked_u32(entities.cols(), "entity_dim"));
  put_u32(out, checked_u32(relations.cols(), "relation_dim"));
  put_u64(out, std::bit_cast<std::uint64_t>(gamma));
  put_matrix(out, entities);
  put_matrix(out, relations);
  return out;
}

struct Decoded {
  ModelKind kind{};
  double gamma = 0.0;
  Matrix entities;
  Matrix relations;
};

Decoded decode(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  if (bytes.size() < kMagic.size() || std::memcmp(bytes.data(), kMagic.data(), 4) != 0) {
    throw DataError(path.string() + ": bad magic, expected \"KGE1\"");
  }
  if (bytes.size() < kHeaderBytes) {
    throw DataError(path.string() + ": truncated header: expected " +
                    std::to_string(kHeaderBytes) + " bytes, got " +
                    std::to_string(bytes.size()));
  }
  const std::uint32_t version = get_u32(p + 4);
  if (version != kEmbeddingFormatVersion) {
    throw DataError(path.string() + ": unsupported format version " + std::to_string(version));
  }
  const std::uint32_t kind = get_u32(p + 8);
  if (kind > static_cast<std::uint32_t>(ModelKind::DeepWalk)) {
    throw DataError(path.string() + ": unknown model kind code " + std::to_string(kind));
  }
  const std::uint64_t ec = get_u32(p + 12), rc = get_u32(p + 16);
  const std::uint64_t ed = get_u32(p + 20), rd = get_u32(p + 24);
  const std::uint64_t expected = kHeaderBytes + 4 * (ec * ed + rc * rd);
  if (bytes.size() != expected) {
    throw DataError(path.string() + ": " + (bytes.size() < expected ? "truncated" : "oversized") +
                    " file: expected " + std::to_string(expected) + " bytes, got " +
                    std::to_string(bytes.size()));
  }
  Decoded d;
  d.kind = static_cast<ModelKind>(kind);
  d.gamma = std::bit_cast<double>(get_u64(p + 28));
  d.entities = Matrix(ec, ed);
  d.relations = Matrix(rc, rd);
  const unsigned char* cursor = p + kHeaderBytes;
  for (float& x : d.entities.data()) {
    x = std::bit_cast<float>(get_u32(cursor));
    cursor += 4;
  }
  for (float& x : d.relations.data()) {
    x = std::bit_cast<float>(get_u32(cursor));
    cursor += 4;
  }
  return d;
}

std::string metadata_text(const GeometryConfig& g) {
  std::string out;
  out += "model=" + std::string(to_string(g.model_kind)) + "\n";
  out += "hidden_size=" + std::to_string(g.hidden_size) + "\n";
  out += "gamma=" + detail::format_double(g.gamma) + "\n";
  out += "norm_p=" + std::to_string(g.norm_p) + "\n";
  out += "ote_size=" + std::to_string(g.ote_size) + "\n";
  return out;
}

std::map<std::string, std::string> read_metadata(const std::filesystem::path& path) {
  std::map<std::string, std::string> kv;
  std::ifstream in(path);
  if (!in) return kv;
  std::string line;
  while (std::getline(in, line)) {
    if (detail::is_blank_or_comment(line)) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw DataError(path.string() + ": malformed line '" + line + "'");
    kv[std::string(detail::trim(std::string_view(line).substr(0, eq)))] =
        std::string(detail::trim(std::string_view(line).substr(eq + 1)));
  }
  return kv;
}

}  // namespace

std::filesystem::path metadata_path(const std::filesystem::path& path) {
  return std::filesystem::path(path.string() + ".meta");
}

void save_embeddings(const EmbeddingTable& table, const std::filesystem::path& path) {
  table.validate();
  write_file(path, encode(table.geometry.model_kind, table.geometry.gamma, table.entities,
                          table.relations, table.relations.rows()));
  write_file(metadata_path(path), metadata_text(table.geometry));
}

EmbeddingTable load_embeddings(const std::filesystem::path& path) {
  Decoded d = decode(path);
  if (d.kind == ModelKind::DeepWalk) {
    throw DataError(path.string() + ": holds deepwalk node vectors, not a triplet model");
  }
  GeometryConfig g = GeometryConfig::defaults(d.kind);
  g.hidden_size = d.entities.cols();
  g.gamma = d.gamma;
  if (d.kind == ModelKind::NOTE) {
    // relation_dim = K (ds^2 + ds) = hidden (ds + 1)
    if (g.hidden_size == 0 || d.relations.cols() % g.hidden_size != 0 ||
        d.relations.cols() / g.hidden_size < 2) {
      throw DataError(path.string() + ": relation_dim " + std::to_string(d.relations.cols()) +
                      " inconsistent with note entity_dim " + std::to_string(g.hidden_size));
    }
    g.ote_size = d.relations.cols() / g.hidden_size - 1;
  }
  const auto meta = read_metadata(metadata_path(path));
  if (auto it = meta.find("norm_p"); it != meta.end()) g.norm_p = std::stoi(it->second);
  auto check = [&](const char* key, const std::string& actual) {
    auto it = meta.find(key);
    if (it != meta.end() && it->second != actual) {
      throw DataError(path.string() + ": metadata " + key + "=" + it->second +
                      " disagrees with file header (" + actual + ")");
    }
  };
  check("model", std::string(to_string(g.model_kind)));
  check("hidden_size", std::to_string(g.hidden_size));
  if (g.model_kind == ModelKind::NOTE) check("ote_size", std::to_string(g.ote_size));
  try {
    g.validate();
  } catch (const UsageError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
  if (d.relations.cols() != g.relation_dim()) {
    throw DataError(path.string() + ": relation_dim " + std::to_string(d.relations.cols()) +
                    " disagrees with declared geometry (expected " +
                    std::to_string(g.relation_dim()) + ")");
  }
  EmbeddingTable t;
  t.geometry = g;
  t.entities = std::move(d.entities);
  t.relations = std::move(d.relations);
  return t;
}

void save_node_embeddings(const Matrix& nodes, const std::filesystem::path& path) {
  write_file(path, encode(ModelKind::DeepWalk, 0.0, nodes, Matrix(0, 0), 0));
  std::string meta = "model=deepwalk\nhidden_size=" + std::to_string(nodes.cols()) + "\n";
  write_file(metadata_path(path), meta);
}

Matrix load_node_embeddings(const std::filesystem::path& path) {
  Decoded d = decode(path);
  if (d.kind != ModelKind::DeepWalk || d.relations.cols() != 0) {
    throw DataError(path.string() + ": not a deepwalk node embedding file");
  }
  return std::move(d.entities);
}

}  // namespace kgc
