#include "kgc/models.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>

namespace kgc {

std::string_view to_string(ModelKind kind) {
  switch (kind) {
    case ModelKind::TransE: return "transe";
    case ModelKind::RotatE: return "rotate";
    case ModelKind::QuatE: return "quate";
    case ModelKind::NOTE: return "note";
    case ModelKind::DeepWalk: return "deepwalk";
  }
  return "unknown";
}

ModelKind parse_model_kind(std::string_view name) {
  std::string lower(name);
  std::transform(lower.begin(), lower.end(), lower.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  for (auto kind : {ModelKind::TransE, ModelKind::RotatE, ModelKind::QuatE, ModelKind::NOTE,
                    ModelKind::DeepWalk}) {
    if (lower == to_string(kind)) return kind;
  }
  throw UsageError("unknown model '" + std::string(name) +
                   "'; valid models: transe, rotate, quate, note, deepwalk");
}

GeometryConfig GeometryConfig::defaults(ModelKind kind) {
  GeometryConfig g;
  g.model_kind = kind;
  g.norm_p = kind == ModelKind::RotatE ? 1 : 2;
  return g;
}

void GeometryConfig::validate() const {
  auto fail = [&](const std::string& why) {
    throw UsageError(std::string(to_string(model_kind)) + " geometry: " + why);
  };
  if (hidden_size == 0) fail("hidden_size must be positive");
  if (!std::isfinite(gamma)) fail("gamma must be finite");
  if (norm_p != 1 && norm_p != 2) fail("norm_p must be 1 or 2");
  switch (model_kind) {
    case ModelKind::RotatE:
      if (hidden_size % 2 != 0) fail("hidden_size must be even");
      break;
    case ModelKind::QuatE:
      if (hidden_size % 4 != 0) fail("hidden_size must be a multiple of 4");
      break;
    case ModelKind::NOTE:
      if (ote_size == 0) fail("ote_size must be positive");
      if (hidden_size % ote_size != 0) fail("hidden_size must be a multiple of ote_size");
      break;
    default: break;
  }
}

std::size_t GeometryConfig::entity_dim() const { return hidden_size; }

std::size_t GeometryConfig::relation_dim() const {
  switch (model_kind) {
    case ModelKind::TransE:
    case ModelKind::QuatE: return hidden_size;
    case ModelKind::RotatE: return hidden_size / 2;
    case ModelKind::NOTE: return block_count() * (ote_size * ote_size + ote_size);
    case ModelKind::DeepWalk: return 0;
  }
  return 0;
}

EmbeddingTable EmbeddingTable::zeros(const GeometryConfig& geometry, std::size_t entity_count,
                                     std::size_t relation_count) {
  geometry.validate();
  EmbeddingTable t;
  t.geometry = geometry;
  t.entities = Matrix(entity_count, geometry.entity_dim());
  t.relations = Matrix(relation_count, geometry.relation_dim());
  return t;
}

void EmbeddingTable::validate() const {
  geometry.validate();
  if (entities.cols() != geometry.entity_dim() || relations.cols() != geometry.relation_dim()) {
    throw DataError("embedding table dims (" + std::to_string(entities.cols()) + ", " +
                    std::to_string(relations.cols()) + ") disagree with " +
                    std::string(to_string(geometry.model_kind)) + " geometry (" +
                    std::to_string(geometry.entity_dim()) + ", " +
                    std::to_string(geometry.relation_dim()) + ")");
  }
}

SquareMatrix::SquareMatrix(std::size_t size, std::vector<double> v) : n(size), values(std::move(v)) {
  if (values.size() != n * n) throw DataError("square matrix needs n*n values");
}

SquareMatrix SquareMatrix::identity(std::size_t size) {
  SquareMatrix m(size);
  for (std::size_t i = 0; i < size; ++i) m(i, i) = 1.0;
  return m;
}

namespace {

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

// Modified Gram-Schmidt. When `residuals` is given it receives, for row k and
// each j < k, the residual of row k before the projection onto q_j is removed.
SquareMatrix gram_schmidt_impl(const SquareMatrix& m, std::vector<double>* residuals,
                               std::vector<double>* norms) {
  const std::size_t n = m.n;
  SquareMatrix q(n);
  std::vector<double> v(n);
  if (residuals) residuals->assign(n * n * n, 0.0);
  if (norms) norms->assign(n, 0.0);
  for (std::size_t k = 0; k < n; ++k) {
    std::copy_n(m.values.begin() + k * n, n, v.begin());
    for (std::size_t j = 0; j < k; ++j) {
      if (residuals) std::copy(v.begin(), v.end(), residuals->begin() + (k * n + j) * n);
      const double c = dot(q.row(j), v);
      for (std::size_t i = 0; i < n; ++i) v[i] -= c * q(j, i);
    }
    const double norm = std::sqrt(dot(v, v));
    if (!(norm >= kGramSchmidtEpsilon)) {
      throw DegenerateInput("gram_schmidt: residual norm " + std::to_string(norm) + " of row " +
                            std::to_string(k) + " below epsilon; rows are linearly dependent");
    }
    if (norms) (*norms)[k] = norm;
    for (std::size_t i = 0; i < n; ++i) q(k, i) = v[i] / norm;
  }
  return q;
}

}  // namespace

SquareMatrix gram_schmidt(const SquareMatrix& m) { return gram_schmidt_impl(m, nullptr, nullptr); }

SquareMatrix gram_schmidt_backward(const SquareMatrix& m, const SquareMatrix& q,
                                   const SquareMatrix& grad_q) {
  const std::size_t n = m.n;
  std::vector<double> residuals;
  std::vector<double> norms;
  gram_schmidt_impl(m, &residuals, &norms);

  SquareMatrix gq = grad_q;
  SquareMatrix gm(n);
  std::vector<double> gv(n);
  for (std::size_t k = n; k-- > 0;) {
    // q_k = v / |v|
    const double proj = dot(q.row(k), gq.row(k));
    for (std::size_t i = 0; i < n; ++i) gv[i] = (gq(k, i) - q(k, i) * proj) / norms[k];
    // v <- v - (q_j . v) q_j, undone in reverse order
    for (std::size_t j = k; j-- > 0;) {
      std::span<const double> before(residuals.data() + (k * n + j) * n, n);
      const double c = dot(q.row(j), before);
      const double gc = -dot(q.row(j), gv);
      for (std::size_t i = 0; i < n; ++i) {
        gq(j, i) += -c * gv[i] + gc * before[i];
        gv[i] += gc * q(j, i);
      }
    }
    for (std::size_t i = 0; i < n; ++i) gm(k, i) = gv[i];
  }
  return gm;
}

std::vector<double> note_scalar_weights(std::span<const double> s, ScalarSide side) {
  const double sign = side == ScalarSide::Head ? 1.0 : -1.0;
  double top = -INFINITY;
  for (double x : s) {
    if (!std::isfinite(x)) throw DataError("note_scalar_weights: non-finite scalar");
    top = std::max(top, sign * x);
  }
  std::vector<double> w(s.size());
  double sq = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    w[i] = std::exp(sign * s[i] - top);
    sq += w[i] * w[i];
  }
  const double norm = std::sqrt(sq);
  for (double& x : w) x /= norm;
  return w;
}

namespace {

// p = a (x) b for one quaternion.
inline void quat_mul(const double* a, const double* b, double* p) {
  p[0] = a[0] * b[0] - a[1] * b[1] - a[2] * b[2] - a[3] * b[3];
  p[1] = a[0] * b[1] + a[1] * b[0] + a[2] * b[3] - a[3] * b[2];
  p[2] = a[0] * b[2] - a[1] * b[3] + a[2] * b[0] + a[3] * b[1];
  p[3] = a[0] * b[3] + a[1] * b[2] - a[2] * b[1] + a[3] * b[0];
}

// Accumulates g . d(a (x) b) into ga and gb.
inline void quat_mul_backward(const double* a, const double* b, const double* g, double* ga,
                              double* gb) {
  ga[0] += g[0] * b[0] + g[1] * b[1] + g[2] * b[2] + g[3] * b[3];
  ga[1] += -g[0] * b[1] + g[1] * b[0] - g[2] * b[3] + g[3] * b[2];
  ga[2] += -g[0] * b[2] + g[1] * b[3] + g[2] * b[0] - g[3] * b[1];
  ga[3] += -g[0] * b[3] - g[1] * b[2] + g[2] * b[1] + g[3] * b[0];
  gb[0] += g[0] * a[0] + g[1] * a[1] + g[2] * a[2] + g[3] * a[3];
  gb[1] += -g[0] * a[1] + g[1] * a[0] + g[2] * a[3] - g[3] * a[2];
  gb[2] += -g[0] * a[2] - g[1] * a[3] + g[2] * a[0] + g[3] * a[1];
  gb[3] += -g[0] * a[3] + g[1] * a[2] - g[2] * a[1] + g[3] * a[0];
}

// Norm of x and its gradient direction, for p in {1, 2}.
double norm_p(std::span<const double> x, int p) {
  double s = 0.0;
  if (p == 1) {
    for (double v : x) s += std::abs(v);
    return s;
  }
  for (double v : x) s += v * v;
  return std::sqrt(s);
}

void add_norm_grad(std::span<const double> x, double norm, int p, double scale,
                   std::span<double> out) {
  if (p == 1) {
    for (std::size_t i = 0; i < x.size(); ++i) {
      out[i] += scale * (x[i] > 0 ? 1.0 : (x[i] < 0 ? -1.0 : 0.0));
    }
    return;
  }
  if (norm == 0.0) return;
  for (std::size_t i = 0; i < x.size(); ++i) out[i] += scale * x[i] / norm;
}

class TransEScore final : public ScoreFunction {
 public:
  using ScoreFunction::ScoreFunction;
  std::size_t prepared_size() const override { return geometry().hidden_size; }

  void prepare(std::span<const double> raw, std::span<double> prepared) const override {
    std::copy(raw.begin(), raw.end(), prepared.begin());
  }
  void prepare_backward(std::span<const double>, std::span<const double>,
                        std::span<const double> grad_prepared,
                        std::span<double> grad_raw) const override {
    for (std::size_t i = 0; i < grad_raw.size(); ++i) grad_raw[i] += grad_prepared[i];
  }

  double score(std::span<const double> h, std::span<const double> w, std::span<const double> t,
               ScoreDirection) const override {
    std::vector<double> x(h.size());
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = h[i] + w[i] - t[i];
    return geometry().gamma - norm_p(x, geometry().norm_p);
  }

  double score_grad(std::span<const double> h, std::span<const double> w,
                    std::span<const double> t, ScoreDirection, double upstream,
                    std::span<double> gh, std::span<double> gw,
                    std::span<double> gt) const override {
    const std::size_t d = h.size();
    std::vector<double> x(d);
    for (std::size_t i = 0; i < d; ++i) x[i] = h[i] + w[i] - t[i];
    const double dist = norm_p(x, geometry().norm_p);
    std::vector<double> gx(d, 0.0);
    add_norm_grad(x, dist, geometry().norm_p, -upstream, gx);
    for (std::size_t i = 0; i < d; ++i) {
      gh[i] += gx[i];
      gw[i] += gx[i];
      gt[i] -= gx[i];
    }
    return geometry().gamma - dist;
  }
};

// Entities: [re_0..re_{m-1}, im_0..im_{m-1}]; relations: m phase angles,
// prepared as [cos_0..cos_{m-1}, sin_0..sin_{m-1}].
class RotatEScore final : public ScoreFunction {
 public:
  using ScoreFunction::ScoreFunction;
  std::size_t prepared_size() const override { return geometry().hidden_size; }

  void prepare(std::span<const double> raw, std::span<double> prepared) const override {
    const std::size_t m = raw.size();
    for (std::size_t j = 0; j < m; ++j) {
      prepared[j] = std::cos(raw[j]);
      prepared[m + j] = std::sin(raw[j]);
    }
  }
  void prepare_backward(std::span<const double>, std::span<const double> prepared,
                        std::span<const double> grad_prepared,
                        std::span<double> grad_raw) const override {
    const std::size_t m = grad_raw.size();
    for (std::size_t j = 0; j < m; ++j) {
      grad_raw[j] += -grad_prepared[j] * prepared[m + j] + grad_prepared[m + j] * prepared[j];
    }
  }

  double score(std::span<const double> h, std::span<const double> rel, std::span<const double> t,
               ScoreDirection) const override {
    const std::size_t m = h.size() / 2;
    double acc = 0.0;
    for (std::size_t j = 0; j < m; ++j) {
      const double a = h[j] * rel[j] - h[m + j] * rel[m + j] - t[j];
      const double b = h[j] * rel[m + j] + h[m + j] * rel[j] - t[m + j];
      acc += geometry().norm_p == 1 ? std::hypot(a, b) : a * a + b * b;
    }
    return geometry().gamma - (geometry().norm_p == 1 ? acc : std::sqrt(acc));
  }

  double score_grad(std::span<const double> h, std::span<const double> rel,
                    std::span<const double> t, ScoreDirection, double upstream,
                    std::span<double> gh, std::span<double> grel,
                    std::span<double> gt) const override {
    const std::size_t m = h.size() / 2;
    std::vector<double> re(m), im(m), mod(m);
    double acc = 0.0;
    for (std::size_t j = 0; j < m; ++j) {
      re[j] = h[j] * rel[j] - h[m + j] * rel[m + j] - t[j];
      im[j] = h[j] * rel[m + j] + h[m + j] * rel[j] - t[m + j];
      mod[j] = std::hypot(re[j], im[j]);
      acc += geometry().norm_p == 1 ? mod[j] : mod[j] * mod[j];
    }
    const double dist = geometry().norm_p == 1 ? acc : std::sqrt(acc);
    for (std::size_t j = 0; j < m; ++j) {
      const double denom = geometry().norm_p == 1 ? mod[j] : dist;
      if (denom == 0.0) continue;
      const double ga = -upstream * re[j] / denom;
      const double gb = -upstream * im[j] / denom;
      const double c = rel[j], s = rel[m + j];
      gh[j] += ga * c + gb * s;
      gh[m + j] += -ga * s + gb * c;
      gt[j] -= ga;
      gt[m + j] -= gb;
      grel[j] += ga * h[j] + gb * h[m + j];
      grel[m + j] += -ga * h[m + j] + gb * h[j];
    }
    return geometry().gamma - dist;
  }
};

// Entities and relations are (w, x, y, z) quadruples; relations are
// prepared as unit quaternions. Score is the inner product <h (x) r, t>.
class QuatEScore final : public ScoreFunction {
 public:
  using ScoreFunction::ScoreFunction;
  std::size_t prepared_size() const override { return geometry().hidden_size; }

  void prepare(std::span<const double> raw, std::span<double> prepared) const override {
    for (std::size_t q = 0; q + 3 < raw.size(); q += 4) {
      const double norm = std::sqrt(raw[q] * raw[q] + raw[q + 1] * raw[q + 1] +
                                    raw[q + 2] * raw[q + 2] + raw[q + 3] * raw[q + 3]);
      if (!(norm > 0.0)) {
        throw DegenerateInput("quate: zero-modulus relation quaternion at coordinate " +
                              std::to_string(q / 4));
      }
      for (std::size_t i = 0; i < 4; ++i) prepared[q + i] = raw[q + i] / norm;
    }
  }
  void prepare_backward(std::span<const double> raw, std::span<const double> prepared,
                        std::span<const double> grad_prepared,
                        std::span<double> grad_raw) const override {
    for (std::size_t q = 0; q + 3 < raw.size(); q += 4) {
      const double norm = std::sqrt(raw[q] * raw[q] + raw[q + 1] * raw[q + 1] +
                                    raw[q + 2] * raw[q + 2] + raw[q + 3] * raw[q + 3]);
      double proj = 0.0;
      for (std::size_t i = 0; i < 4; ++i) proj += prepared[q + i] * grad_prepared[q + i];
      for (std::size_t i = 0; i < 4; ++i) {
        grad_raw[q + i] += (grad_prepared[q + i] - prepared[q + i] * proj) / norm;
      }
    }
  }

  double score(std::span<const double> h, std::span<const double> rel, std::span<const double> t,
               ScoreDirection) const override {
    double acc = 0.0;
    double p[4];
    for (std::size_t q = 0; q + 3 < h.size(); q += 4) {
      quat_mul(&h[q], &rel[q], p);
      acc += p[0] * t[q] + p[1] * t[q + 1] + p[2] * t[q + 2] + p[3] * t[q + 3];
    }
    return acc;
  }

  double score_grad(std::span<const double> h, std::span<const double> rel,
                    std::span<const double> t, ScoreDirection, double upstream,
                    std::span<double> gh, std::span<double> grel,
                    std::span<double> gt) const override {
    double acc = 0.0;
    double p[4];
    double g[4];
    for (std::size_t q = 0; q + 3 < h.size(); q += 4) {
      quat_mul(&h[q], &rel[q], p);
      for (std::size_t i = 0; i < 4; ++i) {
        acc += p[i] * t[q + i];
        gt[q + i] += upstream * p[i];
        g[i] = upstream * t[q + i];
      }
      quat_mul_backward(&h[q], &rel[q], g, &gh[q], &grel[q]);
    }
    return acc;
  }
};

// Raw relation block i: [M (ds*ds, row-major), s (ds)].
// Prepared block i: [Q = gram_schmidt(M) (ds*ds), head weights (ds), tail weights (ds)].
class NoteScore final : public ScoreFunction {
 public:
  explicit NoteScore(GeometryConfig g)
      : ScoreFunction(g), ds_(g.ote_size), blocks_(g.block_count()) {}

  std::size_t prepared_size() const override { return blocks_ * prepared_block(); }

  void prepare(std::span<const double> raw, std::span<double> prepared) const override {
    for (std::size_t b = 0; b < blocks_; ++b) {
      const double* in = raw.data() + b * raw_block();
      double* out = prepared.data() + b * prepared_block();
      const SquareMatrix q = gram_schmidt(SquareMatrix(ds_, {in, in + ds_ * ds_}));
      std::copy(q.values.begin(), q.values.end(), out);
      std::span<const double> s(in + ds_ * ds_, ds_);
      const auto wh = note_scalar_weights(s, ScalarSide::Head);
      const auto wt = note_scalar_weights(s, ScalarSide::Tail);
      std::copy(wh.begin(), wh.end(), out + ds_ * ds_);
      std::copy(wt.begin(), wt.end(), out + ds_ * ds_ + ds_);
    }
  }

  void prepare_backward(std::span<const double> raw, std::span<const double> prepared,
                        std::span<const double> grad_prepared,
                        std::span<double> grad_raw) const override {
    const std::size_t mm = ds_ * ds_;
    for (std::size_t b = 0; b < blocks_; ++b) {
      const double* in = raw.data() + b * raw_block();
      const double* prep = prepared.data() + b * prepared_block();
      const double* gprep = grad_prepared.data() + b * prepared_block();
      double* gout = grad_raw.data() + b * raw_block();

      const SquareMatrix m(ds_, {in, in + mm});
      const SquareMatrix q(ds_, {prep, prep + mm});
      const SquareMatrix gq(ds_, {gprep, gprep + mm});
      const SquareMatrix gm = gram_schmidt_backward(m, q, gq);
      for (std::size_t i = 0; i < mm; ++i) gout[i] += gm.values[i];

      // w = exp(+-s)/|exp(+-s)|  =>  ds_j = +-(gw_j w_j - w_j^2 sum_i gw_i w_i)
      const double* wh = prep + mm;
      const double* wt = prep + mm + ds_;
      const double* gwh = gprep + mm;
      const double* gwt = gprep + mm + ds_;
      double dot_h = 0.0, dot_t = 0.0;
      for (std::size_t j = 0; j < ds_; ++j) {
        dot_h += gwh[j] * wh[j];
        dot_t += gwt[j] * wt[j];
      }
      for (std::size_t j = 0; j < ds_; ++j) {
        gout[mm + j] += (gwh[j] * wh[j] - wh[j] * wh[j] * dot_h) -
                        (gwt[j] * wt[j] - wt[j] * wt[j] * dot_t);
      }
    }
  }

  double score(std::span<const double> h, std::span<const double> prep,
               std::span<const double> t, ScoreDirection direction) const override {
    std::vector<double> y(ds_);
    double dist = 0.0;
    for (std::size_t b = 0; b < blocks_; ++b) {
      block_residual(h.data() + b * ds_, prep.data() + b * prepared_block(), t.data() + b * ds_,
                     direction, y.data(), nullptr);
      dist += norm_p(y, geometry().norm_p);
    }
    return geometry().gamma - dist;
  }

  double score_grad(std::span<const double> h, std::span<const double> prep,
                    std::span<const double> t, ScoreDirection direction, double upstream,
                    std::span<double> gh, std::span<double> gprep,
                    std::span<double> gt) const override {
    const std::size_t mm = ds_ * ds_;
    std::vector<double> y(ds_), v(ds_), gy(ds_), gv(ds_);
    double dist = 0.0;
    for (std::size_t b = 0; b < blocks_; ++b) {
      const double* xh = h.data() + b * ds_;
      const double* xt = t.data() + b * ds_;
      const double* blk = prep.data() + b * prepared_block();
      double* gblk = gprep.data() + b * prepared_block();
      double* gxh = gh.data() + b * ds_;
      double* gxt = gt.data() + b * ds_;
      block_residual(xh, blk, xt, direction, y.data(), v.data());
      const double nrm = norm_p(y, geometry().norm_p);
      dist += nrm;
      std::fill(gy.begin(), gy.end(), 0.0);
      add_norm_grad(y, nrm, geometry().norm_p, -upstream, gy);

      const double* q = blk;
      if (direction == ScoreDirection::HeadToTail) {
        // y = wh * (Q xh) - xt
        const double* w = blk + mm;
        double* gw = gblk + mm;
        for (std::size_t i = 0; i < ds_; ++i) {
          gxt[i] -= gy[i];
          gw[i] += gy[i] * v[i];
          gv[i] = gy[i] * w[i];
        }
        for (std::size_t r = 0; r < ds_; ++r) {
          for (std::size_t c = 0; c < ds_; ++c) {
            gblk[r * ds_ + c] += gv[r] * xh[c];
            gxh[c] += q[r * ds_ + c] * gv[r];
          }
        }
      } else {
        // y = wt * (Q^T xt) - xh
        const double* w = blk + mm + ds_;
        double* gw = gblk + mm + ds_;
        for (std::size_t i = 0; i < ds_; ++i) {
          gxh[i] -= gy[i];
          gw[i] += gy[i] * v[i];
          gv[i] = gy[i] * w[i];
        }
        for (std::size_t r = 0; r < ds_; ++r) {
          for (std::size_t c = 0; c < ds_; ++c) {
            gblk[r * ds_ + c] += xt[r] * gv[c];
            gxt[r] += q[r * ds_ + c] * gv[c];
          }
        }
      }
    }
    return geometry().gamma - dist;
  }

 private:
  std::size_t raw_block() const { return ds_ * ds_ + ds_; }
  std::size_t prepared_block() const { return ds_ * ds_ + 2 * ds_; }

  // y = residual of one block; v (optional) receives the rotated vector.
  void block_residual(const double* xh, const double* blk, const double* xt,
                      ScoreDirection direction, double* y, double* v) const {
    const std::size_t mm = ds_ * ds_;
    const double* q = blk;
    for (std::size_t i = 0; i < ds_; ++i) {
      double rot = 0.0;
      if (direction == ScoreDirection::HeadToTail) {
        for (std::size_t c = 0; c < ds_; ++c) rot += q[i * ds_ + c] * xh[c];
        y[i] = blk[mm + i] * rot - xt[i];
      } else {
        for (std::size_t r = 0; r < ds_; ++r) rot += q[r * ds_ + i] * xt[r];
        y[i] = blk[mm + ds_ + i] * rot - xh[i];
      }
      if (v) v[i] = rot;
    }
  }

  std::size_t ds_;
  std::size_t blocks_;
};

}  // namespace

std::vector<double> hamilton_product(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw DataError("hamilton_product: length mismatch " + std::to_string(a.size()) + " vs " +
                    std::to_string(b.size()));
  }
  if (a.size() % 4 != 0) throw DataError("hamilton_product: length not a multiple of 4");
  std::vector<double> out(a.size());
  for (std::size_t q = 0; q < a.size(); q += 4) quat_mul(&a[q], &b[q], &out[q]);
  return out;
}

std::unique_ptr<ScoreFunction> make_score_function(const GeometryConfig& geometry) {
  geometry.validate();
  switch (geometry.model_kind) {
    case ModelKind::TransE: return std::make_unique<TransEScore>(geometry);
    case ModelKind::RotatE: return std::make_unique<RotatEScore>(geometry);
    case ModelKind::QuatE: return std::make_unique<QuatEScore>(geometry);
    case ModelKind::NOTE: return std::make_unique<NoteScore>(geometry);
    case ModelKind::DeepWalk: break;
  }
  throw UsageError("deepwalk embeddings have no triplet score function");
}

std::vector<double> to_double(std::span<const float> row) {
  return std::vector<double>(row.begin(), row.end());
}

namespace {

double score_with(const EmbeddingTable& table, ModelKind expected, EntityId h, RelationId r,
                  EntityId t, ScoreDirection direction) {
  if (table.geometry.model_kind != expected) {
    throw UsageError(std::string(to_string(expected)) + " score on a " +
                     std::string(to_string(table.geometry.model_kind)) + " table");
  }
  if (h >= table.entities.rows() || t >= table.entities.rows() || r >= table.relations.rows()) {
    throw DataError("score: id outside embedding table");
  }
  const auto fn = make_score_function(table.geometry);
  std::vector<double> prepared(fn->prepared_size());
  fn->prepare(to_double(table.relations.row(r)), prepared);
  return fn->score(to_double(table.entities.row(h)), prepared, to_double(table.entities.row(t)),
                   direction);
}

}  // namespace

double transe_score(EntityId h, RelationId r, EntityId t, const EmbeddingTable& table) {
  return score_with(table, ModelKind::TransE, h, r, t, ScoreDirection::HeadToTail);
}

double rotate_score(EntityId h, RelationId r, EntityId t, const EmbeddingTable& table) {
  return score_with(table, ModelKind::RotatE, h, r, t, ScoreDirection::HeadToTail);
}

double quate_score(EntityId h, RelationId r, EntityId t, const EmbeddingTable& table) {
  return score_with(table, ModelKind::QuatE, h, r, t, ScoreDirection::HeadToTail);
}

double note_score(EntityId h, RelationId r, EntityId t, const EmbeddingTable& table,
                  ScoreDirection direction) {
  return score_with(table, ModelKind::NOTE, h, r, t, direction);
}

double score_triple(EntityId h, RelationId r, EntityId t, const EmbeddingTable& table,
                    ScoreDirection direction) {
  return score_with(table, table.geometry.model_kind, h, r, t, direction);
}

std::vector<double> score_candidates(const EmbeddingTable& table, const ScoreFunction& fn,
                                     const CandidateQuery& query) {
  if (query.head >= table.entities.rows() || query.relation >= table.relations.rows()) {
    throw DataError("score_candidates: query ids outside embedding table");
  }
  std::vector<double> prepared(fn.prepared_size());
  fn.prepare(to_double(table.relations.row(query.relation)), prepared);
  const auto head = to_double(table.entities.row(query.head));
  std::vector<double> out;
  out.reserve(query.candidates.size());
  std::vector<double> tail(table.entities.cols());
  for (EntityId c : query.candidates) {
    if (c >= table.entities.rows()) throw DataError("score_candidates: candidate outside table");
    const auto row = table.entities.row(c);
    std::copy(row.begin(), row.end(), tail.begin());
    out.push_back(fn.score(head, prepared, tail, ScoreDirection::HeadToTail));
  }
  return out;
}

}  // namespace kgc
