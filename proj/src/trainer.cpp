#include "kgc/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>

#include "parallel.hpp"
#include "workspace.hpp"

namespace kgc {

Rng make_rng(std::uint64_t seed, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
  return Rng(seq);
}

void TrainConfig::validate() const {
  geometry.validate();
  if (batch_size == 0) throw UsageError("batch_size must be positive");
  if (!(lr >= 0.0) || !std::isfinite(lr)) throw UsageError("lr must be finite and non-negative");
  if (lrd_step == 0) throw UsageError("lrd_step must be positive");
  if (neg_sample_size == 0) throw UsageError("neg_sample_size must be >= 1");
  if (!(adversarial_temperature >= 0.0)) {
    throw UsageError("adversarial_temperature must be non-negative");
  }
  if (epochs == 0 && max_steps == 0) throw UsageError("need epochs or max_steps");
  if (threads == 0) throw UsageError("threads must be >= 1");
}

double TrainConfig::learning_rate_at(std::size_t step) const {
  return lr * std::ldexp(1.0, -static_cast<int>(std::min<std::size_t>(step / lrd_step, 1000)));
}

ScoreDirection direction_for(CorruptSide side) {
  return side == CorruptSide::Head ? ScoreDirection::TailToHead : ScoreDirection::HeadToTail;
}

NegativeBatch sample_negatives(const TripletStore& store, std::span<const Triple> batch,
                               CorruptSide side, const TrainConfig& config, Rng& rng) {
  if (store.vocab().entity_count == 0) throw DataError("sample_negatives: empty vocabulary");
  if (batch.empty()) throw UsageError("sample_negatives: empty batch");
  NegativeBatch out;
  out.positives.assign(batch.begin(), batch.end());
  out.corrupted_side = side;
  out.per_positive = config.neg_sample_size;
  out.negatives.resize(batch.size() * config.neg_sample_size);
  std::uniform_int_distribution<EntityId> pick(
      0, static_cast<EntityId>(store.vocab().entity_count - 1));
  for (EntityId& e : out.negatives) e = pick(rng);
  return out;
}

namespace {

// log sigmoid(x), stable for large |x|.
double log_sigmoid(double x) {
  return x >= 0 ? -std::log1p(std::exp(-x)) : x - std::log1p(std::exp(x));
}

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

std::vector<double> softmax(std::span<const double> x, double temperature) {
  std::vector<double> p(x.size());
  double top = -INFINITY;
  for (double v : x) top = std::max(top, temperature * v);
  double sum = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    p[i] = std::exp(temperature * x[i] - top);
    sum += p[i];
  }
  for (double& v : p) v /= sum;
  return p;
}

}  // namespace

AdversarialLoss loss_self_adversarial(double pos_score, std::span<const double> neg_scores,
                                      double temperature) {
  if (!std::isfinite(pos_score)) throw DataError("loss: non-finite positive score");
  for (double s : neg_scores) {
    if (!std::isfinite(s)) throw DataError("loss: non-finite negative score");
  }
  AdversarialLoss out;
  out.neg_weights = softmax(neg_scores, temperature);
  out.loss = -log_sigmoid(pos_score);
  for (std::size_t i = 0; i < neg_scores.size(); ++i) {
    out.loss -= out.neg_weights[i] * log_sigmoid(-neg_scores[i]);
  }
  return out;
}

namespace detail {

Workspace::Workspace(const EmbeddingTable& table, const ScoreFunction& fn)
    : table_(table),
      fn_(fn),
      entity_dim_(table.entities.cols()),
      raw_dim_(table.relations.cols()),
      prepared_dim_(fn.prepared_size()),
      entity_slot_(table.entities.rows(), -1),
      relation_slot_(table.relations.rows(), -1) {}

void Workspace::clear() {
  for (EntityId e : entities_) entity_slot_[e] = -1;
  for (RelationId r : relations_) relation_slot_[r] = -1;
  entities_.clear();
  relations_.clear();
  entity_values_.clear();
  entity_grads_.clear();
  relation_raw_.clear();
  relation_prepared_.clear();
  relation_grads_.clear();
}

std::size_t Workspace::entity(EntityId e) {
  if (entity_slot_[e] >= 0) return static_cast<std::size_t>(entity_slot_[e]);
  const std::size_t slot = entities_.size();
  entity_slot_[e] = static_cast<std::int32_t>(slot);
  entities_.push_back(e);
  const auto row = table_.entities.row(e);
  entity_values_.insert(entity_values_.end(), row.begin(), row.end());
  entity_grads_.resize(entity_grads_.size() + entity_dim_, 0.0);
  return slot;
}

std::size_t Workspace::relation(RelationId r) {
  if (relation_slot_[r] >= 0) return static_cast<std::size_t>(relation_slot_[r]);
  const std::size_t slot = relations_.size();
  relation_slot_[r] = static_cast<std::int32_t>(slot);
  relations_.push_back(r);
  const auto row = table_.relations.row(r);
  relation_raw_.insert(relation_raw_.end(), row.begin(), row.end());
  relation_prepared_.resize(relation_prepared_.size() + prepared_dim_, 0.0);
  relation_grads_.resize(relation_grads_.size() + prepared_dim_, 0.0);
  reprepare(slot);
  return slot;
}

void Workspace::reprepare(std::size_t slot) { fn_.prepare(relation_raw(slot), relation_prepared(slot)); }

double Workspace::sample_loss(const Triple& pos, CorruptSide side,
                              std::span<const EntityId> negatives, double temperature,
                              double scale, bool want_grad,
                              const std::vector<double>* fixed_weights,
                              std::vector<double>* weights_out) {
  const std::size_t h = entity(pos.head);
  const std::size_t t = entity(pos.tail);
  const std::size_t r = relation(pos.relation);
  const ScoreDirection dir = direction_for(side);

  std::vector<std::size_t> neg_slots(negatives.size());
  for (std::size_t i = 0; i < negatives.size(); ++i) neg_slots[i] = entity(negatives[i]);

  auto head_of = [&](std::size_t i) { return side == CorruptSide::Head ? neg_slots[i] : h; };
  auto tail_of = [&](std::size_t i) { return side == CorruptSide::Tail ? neg_slots[i] : t; };

  const double pos_score = fn_.score(entity_value(h), relation_prepared(r), entity_value(t), dir);
  std::vector<double> neg_scores(negatives.size());
  for (std::size_t i = 0; i < negatives.size(); ++i) {
    neg_scores[i] =
        fn_.score(entity_value(head_of(i)), relation_prepared(r), entity_value(tail_of(i)), dir);
  }
  AdversarialLoss loss = loss_self_adversarial(pos_score, neg_scores, temperature);
  if (fixed_weights) {
    loss.neg_weights = *fixed_weights;
    loss.loss = -log_sigmoid(pos_score);
    for (std::size_t i = 0; i < neg_scores.size(); ++i) {
      loss.loss -= loss.neg_weights[i] * log_sigmoid(-neg_scores[i]);
    }
  }
  if (weights_out) *weights_out = loss.neg_weights;
  if (!want_grad) return loss.loss;

  // dL/dpos = -sigmoid(-pos); dL/dneg_i = p_i sigmoid(neg_i)
  fn_.score_grad(entity_value(h), relation_prepared(r), entity_value(t), dir,
                 -scale * sigmoid(-pos_score), entity_grad(h), relation_grad(r), entity_grad(t));
  for (std::size_t i = 0; i < negatives.size(); ++i) {
    const double up = scale * loss.neg_weights[i] * sigmoid(neg_scores[i]);
    if (up == 0.0) continue;
    fn_.score_grad(entity_value(head_of(i)), relation_prepared(r), entity_value(tail_of(i)), dir,
                   up, entity_grad(head_of(i)), relation_grad(r), entity_grad(tail_of(i)));
  }
  return loss.loss;
}

}  // namespace detail

namespace {

constexpr double kUniformInitScale = 6.0;
constexpr double kNoteBlockNoise = 0.1;

}  // namespace

EmbeddingTable initialize_table(const GeometryConfig& geometry, std::size_t entity_count,
                                std::size_t relation_count, std::uint64_t seed) {
  EmbeddingTable table = EmbeddingTable::zeros(geometry, entity_count, relation_count);
  Rng rng = make_rng(seed, 0x1417);
  const float bound =
      static_cast<float>(kUniformInitScale / std::sqrt(static_cast<double>(geometry.hidden_size)));
  std::uniform_real_distribution<float> uniform(-bound, bound);
  for (float& x : table.entities.data()) x = uniform(rng);
  if (geometry.model_kind != ModelKind::NOTE) {
    for (float& x : table.relations.data()) x = uniform(rng);
    return table;
  }
  std::uniform_real_distribution<float> noise(static_cast<float>(-kNoteBlockNoise),
                                              static_cast<float>(kNoteBlockNoise));
  const std::size_t ds = geometry.ote_size;
  for (std::size_t r = 0; r < relation_count; ++r) {
    auto row = table.relations.row(r);
    for (std::size_t b = 0; b < geometry.block_count(); ++b) {
      float* blk = row.data() + b * (ds * ds + ds);
      for (std::size_t i = 0; i < ds; ++i) {
        for (std::size_t j = 0; j < ds; ++j) {
          blk[i * ds + j] = (i == j ? 1.0f : 0.0f) + noise(rng);
        }
      }
      std::fill(blk + ds * ds, blk + ds * ds + ds, 0.0f);
    }
  }
  return table;
}

Trainer::Trainer(const TripletStore& store, TrainConfig config)
    : Trainer(store, config,
              initialize_table(config.geometry, store.vocab().entity_count,
                               store.vocab().relation_count, config.seed)) {}

Trainer::Trainer(const TripletStore& store, TrainConfig config, EmbeddingTable initial)
    : store_(store),
      config_(std::move(config)),
      table_(std::move(initial)),
      shuffle_rng_(make_rng(config_.seed, 0x5eed)) {
  config_.validate();
  if (store_.empty()) throw DataError("train: empty triplet store");
  table_.validate();
  if (table_.geometry.model_kind != config_.geometry.model_kind ||
      table_.entities.rows() != store_.vocab().entity_count ||
      table_.relations.rows() != store_.vocab().relation_count) {
    throw UsageError("train: initial table does not match store vocab or geometry");
  }
  fn_ = make_score_function(table_.geometry);
  for (std::size_t w = 0; w < config_.threads; ++w) {
    worker_rngs_.push_back(make_rng(config_.seed, 1000 + w));
  }
  order_ = store_.triples();
}

std::size_t Trainer::steps_per_epoch() const {
  return (order_.size() + config_.batch_size - 1) / config_.batch_size;
}

std::span<const Triple> Trainer::next_batch() {
  if (cursor_ == 0) std::shuffle(order_.begin(), order_.end(), shuffle_rng_);
  const std::size_t end = std::min(order_.size(), cursor_ + config_.batch_size);
  std::span<const Triple> batch(order_.data() + cursor_, end - cursor_);
  cursor_ = end == order_.size() ? 0 : end;
  return batch;
}

double Trainer::step() {
  const auto batch = next_batch();
  const std::size_t workers = std::min(config_.threads, batch.size());
  std::vector<detail::Workspace> spaces;
  spaces.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) spaces.emplace_back(table_, *fn_);
  std::vector<double> losses(workers, 0.0);

  auto work = [&](std::size_t w) {
    const std::size_t begin = batch.size() * w / workers;
    const std::size_t end = batch.size() * (w + 1) / workers;
    const auto part = batch.subspan(begin, end - begin);
    double total = 0.0;
    for (CorruptSide side : {CorruptSide::Tail, CorruptSide::Head}) {
      const NegativeBatch negs = sample_negatives(store_, part, side, config_, worker_rngs_[w]);
      for (std::size_t i = 0; i < part.size(); ++i) {
        total += 0.5 * spaces[w].sample_loss(part[i], side, negs.for_positive(i),
                                             config_.adversarial_temperature, 0.5, true, nullptr,
                                             nullptr);
      }
    }
    losses[w] = total;
  };
  try {
    detail::parallel_for(workers, workers, work);
  } catch (const DegenerateInput&) {
    throw;
  } catch (const DataError& e) {
    // Non-finite scores mid-training mean the parameters blew up.
    throw Error("training diverged at step " + std::to_string(steps_ + 1) + ": " + e.what());
  }

  // Reduce in worker order, then apply to touched rows only.
  const double lr = config_.learning_rate_at(steps_);
  last_entities_.clear();
  last_relations_.clear();
  for (const auto& ws : spaces) {
    last_entities_.insert(last_entities_.end(), ws.entities().begin(), ws.entities().end());
    last_relations_.insert(last_relations_.end(), ws.relations().begin(), ws.relations().end());
  }
  std::sort(last_entities_.begin(), last_entities_.end());
  last_entities_.erase(std::unique(last_entities_.begin(), last_entities_.end()),
                       last_entities_.end());
  std::sort(last_relations_.begin(), last_relations_.end());
  last_relations_.erase(std::unique(last_relations_.begin(), last_relations_.end()),
                        last_relations_.end());

  if (lr != 0.0) {
    const std::size_t ed = table_.entities.cols();
    std::vector<double> grad(ed);
    for (EntityId e : last_entities_) {
      std::fill(grad.begin(), grad.end(), 0.0);
      for (const auto& ws : spaces) {
        if (auto slot = ws.find_entity(e)) {
          const auto g = ws.entity_grad(*slot);
          for (std::size_t i = 0; i < ed; ++i) grad[i] += g[i];
        }
      }
      auto row = table_.entities.row(e);
      for (std::size_t i = 0; i < ed; ++i) {
        row[i] = static_cast<float>(static_cast<double>(row[i]) - lr * grad[i]);
      }
    }
    const std::size_t rd = table_.relations.cols();
    std::vector<double> gprep(fn_->prepared_size());
    std::vector<double> graw(rd);
    for (RelationId r : last_relations_) {
      std::fill(gprep.begin(), gprep.end(), 0.0);
      std::fill(graw.begin(), graw.end(), 0.0);
      const detail::Workspace* owner = nullptr;
      std::size_t owner_slot = 0;
      for (const auto& ws : spaces) {
        if (auto slot = ws.find_relation(r)) {
          const auto g = ws.relation_grad(*slot);
          for (std::size_t i = 0; i < gprep.size(); ++i) gprep[i] += g[i];
          if (!owner) {
            owner = &ws;
            owner_slot = *slot;
          }
        }
      }
      fn_->prepare_backward(owner->relation_raw(owner_slot), owner->relation_prepared(owner_slot),
                            gprep, graw);
      auto row = table_.relations.row(r);
      for (std::size_t i = 0; i < rd; ++i) {
        row[i] = static_cast<float>(static_cast<double>(row[i]) - lr * graw[i]);
      }
    }
  }

  const double mean = std::accumulate(losses.begin(), losses.end(), 0.0) /
                      static_cast<double>(batch.size());
  running_loss_ = steps_ == 0 ? mean : 0.9 * running_loss_ + 0.1 * mean;
  ++steps_;
  if (!std::isfinite(running_loss_)) {
    throw Error("training diverged: running mean loss is non-finite at step " +
                std::to_string(steps_));
  }
  return mean;
}

void Trainer::run(const EpochCallback& on_epoch) {
  const std::size_t per_epoch = steps_per_epoch();
  const std::size_t total = config_.max_steps ? config_.max_steps : config_.epochs * per_epoch;
  const auto start = std::chrono::steady_clock::now();
  double epoch_loss = 0.0;
  std::size_t epoch_steps = 0;
  std::size_t epoch = 0;
  while (steps_ < total) {
    epoch_loss += step();
    ++epoch_steps;
    if (epoch_steps == per_epoch || steps_ == total) {
      ++epoch;
      if (on_epoch) {
        EpochStats stats;
        stats.epoch = epoch;
        stats.steps = steps_;
        stats.mean_loss = epoch_loss / static_cast<double>(epoch_steps);
        stats.seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        on_epoch(stats);
      }
      epoch_loss = 0.0;
      epoch_steps = 0;
    }
  }
}

EmbeddingTable train(const TripletStore& store, const TrainConfig& config,
                     const EpochCallback& on_epoch) {
  Trainer trainer(store, config);
  trainer.run(on_epoch);
  return trainer.release();
}

GradientReport gradient_check(ModelKind kind, const GradientSample& sample,
                              const EmbeddingTable& table, double tolerance,
                              double temperature) {
  if (table.geometry.model_kind != kind) {
    throw UsageError("gradient_check: table geometry is not " + std::string(to_string(kind)));
  }
  const auto fn = make_score_function(table.geometry);
  detail::Workspace ws(table, *fn);
  std::vector<double> weights;
  ws.sample_loss(sample.positive, sample.side, sample.negatives, temperature, 1.0, true, nullptr,
                 &weights);

  // Analytic raw-relation gradient.
  std::vector<std::vector<double>> relation_grads;
  for (std::size_t slot = 0; slot < ws.relations().size(); ++slot) {
    std::vector<double> graw(table.relations.cols(), 0.0);
    fn->prepare_backward(ws.relation_raw(slot), ws.relation_prepared(slot), ws.relation_grad(slot),
                         graw);
    relation_grads.push_back(std::move(graw));
  }

  constexpr double kStep = 1e-5;
  GradientReport report;
  report.tolerance = tolerance;
  auto loss_now = [&] {
    return ws.sample_loss(sample.positive, sample.side, sample.negatives, temperature, 1.0, false,
                          &weights, nullptr);
  };
  auto record = [&](double analytic, double numeric) {
    const double err = std::abs(analytic - numeric) / std::max(1.0, std::abs(numeric));
    report.max_relative_error = std::max(report.max_relative_error, err);
    ++report.parameters_checked;
  };
  for (std::size_t slot = 0; slot < ws.entities().size(); ++slot) {
    auto values = ws.entity_value(slot);
    const std::vector<double> analytic(ws.entity_grad(slot).begin(), ws.entity_grad(slot).end());
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double saved = values[i];
      values[i] = saved + kStep;
      const double up = loss_now();
      values[i] = saved - kStep;
      const double down = loss_now();
      values[i] = saved;
      record(analytic[i], (up - down) / (2 * kStep));
    }
  }
  for (std::size_t slot = 0; slot < ws.relations().size(); ++slot) {
    auto raw = ws.relation_raw(slot);
    for (std::size_t i = 0; i < raw.size(); ++i) {
      const double saved = raw[i];
      raw[i] = saved + kStep;
      ws.reprepare(slot);
      const double up = loss_now();
      raw[i] = saved - kStep;
      ws.reprepare(slot);
      const double down = loss_now();
      raw[i] = saved;
      ws.reprepare(slot);
      record(relation_grads[slot][i], (up - down) / (2 * kStep));
    }
  }
  return report;
}

}  // namespace kgc
