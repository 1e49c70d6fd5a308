#include "kgc/graph_context.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "kgc/trainer.hpp"
#include "parallel.hpp"
#include "text_util.hpp"

namespace kgc {

void SmoothConfig::validate() const {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw UsageError("smooth alpha must lie in [0, 1]");
  if (model_kind != ModelKind::TransE && model_kind != ModelKind::RotatE) {
    throw UsageError("post_smooth supports transe and rotate, not " +
                     std::string(to_string(model_kind)));
  }
}

namespace {

// Adds the message from neighbour `v` through relation `rel` into `acc`.
// outgoing: edge (u, r, v), so u ~ inverse transform of v.
void add_message(ModelKind kind, std::span<const float> v, std::span<const float> rel,
                 bool outgoing, std::vector<double>& acc) {
  const std::size_t d = v.size();
  if (kind == ModelKind::TransE) {
    const double sign = outgoing ? -1.0 : 1.0;
    for (std::size_t i = 0; i < d; ++i) acc[i] += v[i] + sign * rel[i];
    return;
  }
  const std::size_t m = d / 2;
  for (std::size_t j = 0; j < m; ++j) {
    const double theta = outgoing ? -static_cast<double>(rel[j]) : static_cast<double>(rel[j]);
    const double c = std::cos(theta), s = std::sin(theta);
    acc[j] += v[j] * c - v[m + j] * s;
    acc[m + j] += v[j] * s + v[m + j] * c;
  }
}

}  // namespace

EmbeddingTable post_smooth(const EmbeddingTable& table, const TripletStore& store,
                           const SmoothConfig& config) {
  config.validate();
  table.validate();
  if (table.geometry.model_kind != config.model_kind) {
    throw UsageError("post_smooth: table is " + std::string(to_string(table.geometry.model_kind)) +
                     " but smoothing configured for " + std::string(to_string(config.model_kind)));
  }
  if (table.entities.rows() != store.vocab().entity_count ||
      table.relations.rows() != store.vocab().relation_count) {
    throw DataError("post_smooth: table shape does not match store vocab");
  }
  EmbeddingTable out = table;
  if (config.alpha == 1.0) return out;

  const std::size_t n = table.entities.rows();
  const std::size_t d = table.entities.cols();
  std::vector<double> sums(n * d, 0.0);
  std::vector<std::size_t> degree(n, 0);
  std::vector<double> msg(d);
  auto deliver = [&](EntityId u, EntityId v, RelationId r, bool outgoing) {
    std::fill(msg.begin(), msg.end(), 0.0);
    add_message(config.model_kind, table.entities.row(v), table.relations.row(r), outgoing, msg);
    for (std::size_t i = 0; i < d; ++i) sums[u * d + i] += msg[i];
    ++degree[u];
  };
  for (const Triple& t : store.triples()) {
    deliver(t.head, t.tail, t.relation, true);
    deliver(t.tail, t.head, t.relation, false);
  }
  const double alpha = config.alpha;
  for (std::size_t u = 0; u < n; ++u) {
    if (degree[u] == 0) continue;
    auto row = out.entities.row(u);
    const auto src = table.entities.row(u);
    const double inv = 1.0 / static_cast<double>(degree[u]);
    for (std::size_t i = 0; i < d; ++i) {
      row[i] = static_cast<float>(alpha * src[i] + (1.0 - alpha) * sums[u * d + i] * inv);
    }
  }
  return out;
}

void WalkConfig::validate() const {
  if (num_walks_per_node == 0 || walk_length == 0 || window == 0 || neg_samples == 0 ||
      dim == 0 || epochs == 0 || threads == 0) {
    throw UsageError("walk config counts must all be >= 1");
  }
  if (!(lr > 0.0)) throw UsageError("walk lr must be positive");
}

std::vector<Walk> generate_walks(const TripletStore& store, const WalkConfig& config) {
  config.validate();
  const std::size_t n = store.vocab().entity_count;
  // Undirected CSR adjacency with multiplicity.
  std::vector<std::size_t> offsets(n + 1, 0);
  for (const Triple& t : store.triples()) {
    ++offsets[t.head + 1];
    ++offsets[t.tail + 1];
  }
  for (std::size_t i = 0; i < n; ++i) offsets[i + 1] += offsets[i];
  std::vector<EntityId> adj(offsets[n]);
  std::vector<std::size_t> fill(offsets.begin(), offsets.end() - 1);
  for (const Triple& t : store.triples()) {
    adj[fill[t.head]++] = t.tail;
    adj[fill[t.tail]++] = t.head;
  }

  std::vector<Walk> walks(n * config.num_walks_per_node);
  auto walk_from = [&](std::size_t start) {
    Rng rng = make_rng(config.seed, 0x3a1c0000ULL + start);
    for (std::size_t k = 0; k < config.num_walks_per_node; ++k) {
      Walk& walk = walks[start * config.num_walks_per_node + k];
      walk.reserve(config.walk_length);
      walk.push_back(static_cast<EntityId>(start));
      while (walk.size() < config.walk_length) {
        const EntityId cur = walk.back();
        const std::size_t deg = offsets[cur + 1] - offsets[cur];
        if (deg == 0) break;
        std::uniform_int_distribution<std::size_t> pick(0, deg - 1);
        walk.push_back(adj[offsets[cur] + pick(rng)]);
      }
    }
  };
  detail::parallel_for(n, config.threads, walk_from);
  return walks;
}

std::vector<std::pair<EntityId, EntityId>> window_pairs(const Walk& walk, std::size_t window) {
  std::vector<std::pair<EntityId, EntityId>> pairs;
  for (std::size_t i = 0; i < walk.size(); ++i) {
    const std::size_t lo = i >= window ? i - window : 0;
    const std::size_t hi = std::min(walk.size() - 1, i + window);
    for (std::size_t j = lo; j <= hi; ++j) {
      if (j != i) pairs.emplace_back(walk[i], walk[j]);
    }
  }
  return pairs;
}

namespace {

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

Matrix skipgram_train(const std::vector<Walk>& walks, std::size_t entity_count,
                      const WalkConfig& config) {
  config.validate();
  if (walks.empty()) throw UsageError("skipgram_train: no walks");
  std::vector<double> counts(entity_count, 0.0);
  std::size_t total_pairs = 0;
  for (const Walk& w : walks) {
    for (EntityId v : w) {
      if (v >= entity_count) {
        throw DataError("skipgram_train: node " + std::to_string(v) + " >= entity_count " +
                        std::to_string(entity_count));
      }
      counts[v] += 1.0;
    }
    const std::size_t len = w.size();
    for (std::size_t i = 0; i < len; ++i) {
      const std::size_t lo = i >= config.window ? i - config.window : 0;
      const std::size_t hi = std::min(len - 1, i + config.window);
      total_pairs += hi - lo;
    }
  }
  // Noise distribution ~ count^0.75, sampled by inverse CDF.
  std::vector<double> cdf(entity_count);
  double acc = 0.0;
  for (std::size_t v = 0; v < entity_count; ++v) {
    acc += std::pow(counts[v], 0.75);
    cdf[v] = acc;
  }

  const std::size_t dim = config.dim;
  Rng rng = make_rng(config.seed, 0x5c1f);
  std::vector<double> input(entity_count * dim);
  std::vector<double> output(entity_count * dim, 0.0);
  std::uniform_real_distribution<double> init(-0.5 / static_cast<double>(dim),
                                              0.5 / static_cast<double>(dim));
  for (double& x : input) x = init(rng);
  std::uniform_real_distribution<double> unit(0.0, acc);
  auto draw_noise = [&] {
    const double u = unit(rng);
    const auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
    return static_cast<EntityId>(std::min<std::size_t>(it - cdf.begin(), entity_count - 1));
  };

  const double planned = static_cast<double>(std::max<std::size_t>(1, total_pairs * config.epochs));
  std::size_t seen = 0;
  std::vector<double> grad_center(dim);
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    for (const Walk& walk : walks) {
      for (const auto& [center, context] : window_pairs(walk, config.window)) {
        const double lr = config.lr * std::max(1e-4, 1.0 - static_cast<double>(seen) / planned);
        ++seen;
        double* c = &input[center * dim];
        std::fill(grad_center.begin(), grad_center.end(), 0.0);
        for (std::size_t k = 0; k <= config.neg_samples; ++k) {
          const EntityId target = k == 0 ? context : draw_noise();
          if (k > 0 && target == context) continue;
          const double label = k == 0 ? 1.0 : 0.0;
          double* o = &output[target * dim];
          double dot = 0.0;
          for (std::size_t i = 0; i < dim; ++i) dot += c[i] * o[i];
          const double g = (label - sigmoid(dot)) * lr;
          for (std::size_t i = 0; i < dim; ++i) {
            grad_center[i] += g * o[i];
            o[i] += g * c[i];
          }
        }
        for (std::size_t i = 0; i < dim; ++i) c[i] += grad_center[i];
      }
    }
  }
  Matrix out(entity_count, dim);
  for (std::size_t i = 0; i < input.size(); ++i) out.data()[i] = static_cast<float>(input[i]);
  return out;
}

double deepwalk_score(const Matrix& nodes, EntityId h, EntityId t) {
  if (h >= nodes.rows() || t >= nodes.rows()) throw DataError("deepwalk_score: id outside table");
  const auto a = nodes.row(h);
  const auto b = nodes.row(t);
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += static_cast<double>(a[i]) * b[i];
    na += static_cast<double>(a[i]) * a[i];
    nb += static_cast<double>(b[i]) * b[i];
  }
  if (na == 0.0 || nb == 0.0) return 0.0;
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

void save_walks(const std::vector<Walk>& walks, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  for (const Walk& w : walks) {
    for (std::size_t i = 0; i < w.size(); ++i) out << (i ? " " : "") << w[i];
    out << '\n';
  }
  if (!out) throw DataError("write failed: " + path.string());
}

std::vector<Walk> load_walks(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  std::vector<Walk> walks;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::is_blank_or_comment(line)) continue;
    Walk w;
    for (auto f : detail::split_fields(line)) {
      w.push_back(detail::parse_id<EntityId>(f, path.string() + ":" + std::to_string(line_no)));
    }
    walks.push_back(std::move(w));
  }
  return walks;
}

}  // namespace kgc
