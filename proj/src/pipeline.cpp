#include "kgc/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <fstream>
#include <ostream>
#include <sstream>

#include "kgc/embedding_io.hpp"
#include "text_util.hpp"

namespace kgc {

namespace fs = std::filesystem;

std::string_view to_string(Split split) { return split == Split::Valid ? "valid" : "test"; }

Split parse_split(std::string_view name) {
  if (name == "valid") return Split::Valid;
  if (name == "test") return Split::Test;
  throw UsageError("unknown split '" + std::string(name) + "' (valid, test)");
}

namespace {

constexpr std::array<ModelKind, 4> kTripletModels = {ModelKind::TransE, ModelKind::RotatE,
                                                     ModelKind::QuatE, ModelKind::NOTE};

const std::vector<std::string>& train_keys() {
  static const std::vector<std::string> keys = {
      "batch_size", "lr",        "lrd_step",    "neg_sample_size", "adversarial_temperature",
      "epochs",     "max_steps", "seed",        "hidden_size",     "gamma",
      "norm_p",     "ote_size"};
  return keys;
}

// A malformed setting is the caller's mistake, so it surfaces as a usage error.
std::size_t parse_count(std::string_view v, const std::string& key) {
  try {
    return detail::parse_id<std::size_t>(detail::trim(v), key);
  } catch (const DataError& e) {
    throw UsageError(e.what());
  }
}

double parse_real(std::string_view v, const std::string& key) {
  try {
    return detail::parse_double(detail::trim(v), key);
  } catch (const DataError& e) {
    throw UsageError(e.what());
  }
}

bool parse_bool(std::string_view v, const std::string& key) {
  const auto t = detail::trim(v);
  if (t == "true" || t == "1") return true;
  if (t == "false" || t == "0") return false;
  throw UsageError(key + ": expected true or false, got '" + std::string(t) + "'");
}

std::vector<std::string> parse_list(std::string_view v) {
  std::vector<std::string> out;
  std::string item;
  std::stringstream ss{std::string(v)};
  while (std::getline(ss, item, ',')) {
    const auto t = detail::trim(item);
    if (!t.empty()) out.emplace_back(t);
  }
  return out;
}

fs::path resolve(const fs::path& base, std::string_view v) {
  fs::path p{std::string(detail::trim(v))};
  return p.is_relative() && !base.empty() ? base / p : p;
}

void apply_train_key(TrainConfig& c, const std::string& key, const std::string& value) {
  const std::string full = "train." + key;
  if (key == "batch_size") c.batch_size = parse_count(value, full);
  else if (key == "lr") c.lr = parse_real(value, full);
  else if (key == "lrd_step") c.lrd_step = parse_count(value, full);
  else if (key == "neg_sample_size") c.neg_sample_size = parse_count(value, full);
  else if (key == "adversarial_temperature") c.adversarial_temperature = parse_real(value, full);
  else if (key == "epochs") c.epochs = parse_count(value, full);
  else if (key == "max_steps") c.max_steps = parse_count(value, full);
  else if (key == "seed") c.seed = parse_count(value, full);
  else if (key == "hidden_size") c.geometry.hidden_size = parse_count(value, full);
  else if (key == "gamma") c.geometry.gamma = parse_real(value, full);
  else if (key == "norm_p") c.geometry.norm_p = static_cast<int>(parse_count(value, full));
  else if (key == "ote_size") c.geometry.ote_size = parse_count(value, full);
  else throw UsageError("unknown setting '" + full + "'");
}

bool is_model_source(std::string_view name, ModelKind& kind) {
  for (ModelKind k : kTripletModels) {
    if (name == to_string(k)) {
      kind = k;
      return true;
    }
  }
  return false;
}

bool is_smooth_source(std::string_view name, ModelKind& kind) {
  if (name == "transe_smooth") kind = ModelKind::TransE;
  else if (name == "rotate_smooth") kind = ModelKind::RotatE;
  else return false;
  return true;
}

void check_source_name(const std::string& name) {
  const auto all = valid_source_names();
  if (std::find(all.begin(), all.end(), name) != all.end()) return;
  std::string list;
  for (const auto& s : all) list += (list.empty() ? "" : ", ") + s;
  throw UsageError("unknown source '" + name + "'; valid sources: " + list);
}

}  // namespace

std::vector<std::string> valid_source_names() {
  std::vector<std::string> out;
  for (ModelKind k : kTripletModels) out.emplace_back(to_string(k));
  out.emplace_back("transe_smooth");
  out.emplace_back("rotate_smooth");
  out.emplace_back("deepwalk");
  for (FeatureKind f : kAllFeatureKinds) out.emplace_back(to_string(f));
  return out;
}

void apply_setting(PipelineConfig& c, const std::string& key, const std::string& value,
                   const fs::path& base_dir) {
  if (key == "paths.train") c.train_path = resolve(base_dir, value);
  else if (key == "paths.valid") c.valid_path = resolve(base_dir, value);
  else if (key == "paths.test") c.test_path = resolve(base_dir, value);
  else if (key == "paths.artifacts") c.artifact_dir = resolve(base_dir, value);
  else if (key == "data.entity_count") c.entity_count = parse_count(value, key);
  else if (key == "data.relation_count") c.relation_count = parse_count(value, key);
  else if (key == "seed") c.seed = parse_count(value, key);
  else if (key == "threads") c.threads = parse_count(value, key);
  else if (key.rfind("train.", 0) == 0) {
    const std::string rest = key.substr(6);
    const auto dot = rest.find('.');
    const std::string leaf = dot == std::string::npos ? rest : rest.substr(dot + 1);
    if (dot != std::string::npos) {
      ModelKind kind;
      if (!is_model_source(rest.substr(0, dot), kind)) {
        throw UsageError("unknown model in setting '" + key + "'");
      }
    }
    const auto& keys = train_keys();
    if (std::find(keys.begin(), keys.end(), leaf) == keys.end()) {
      throw UsageError("unknown setting '" + key + "'");
    }
    TrainConfig probe;
    apply_train_key(probe, leaf, value);  // value syntax check
    c.train_settings[rest] = value;
  } else if (key == "smooth.alpha") {
    c.smooth_alphas.clear();
    for (const auto& a : parse_list(value)) c.smooth_alphas.push_back(parse_real(a, key));
  } else if (key == "walk.num_walks") c.walk.num_walks_per_node = parse_count(value, key);
  else if (key == "walk.length") c.walk.walk_length = parse_count(value, key);
  else if (key == "walk.window") c.walk.window = parse_count(value, key);
  else if (key == "walk.neg_samples") c.walk.neg_samples = parse_count(value, key);
  else if (key == "walk.dim") c.walk.dim = parse_count(value, key);
  else if (key == "walk.epochs") c.walk.epochs = parse_count(value, key);
  else if (key == "walk.lr") c.walk.lr = parse_real(value, key);
  else if (key == "features.include_training") c.feature_source.include_training = parse_bool(value, key);
  else if (key == "features.include_candidates") c.feature_source.include_candidates = parse_bool(value, key);
  else if (key == "features.max_row_support") c.feature_options.max_row_support = parse_count(value, key);
  else if (key == "features.test_rebuild") {
    c.test_rebuild.clear();
    for (const auto& name : parse_list(value)) {
      const auto kind = parse_feature_kind(name);
      if (!kind) throw UsageError(key + ": unknown feature '" + name + "'");
      c.test_rebuild.push_back(*kind);
    }
  } else if (key == "ensemble.sources") {
    c.sources = parse_list(value);
    for (const auto& s : c.sources) check_source_name(s);
  } else if (key == "filter.threshold") {
    if (detail::trim(value) == "none") c.filter_threshold.reset();
    else c.filter_threshold = parse_count(value, key);
  } else if (key == "grid.weights") {
    c.grid.clear();
    for (const auto& w : parse_list(value)) c.grid.push_back(parse_real(w, key));
  } else if (key == "grid.max_rounds") c.grid_max_rounds = parse_count(value, key);
  else if (key == "predict.k") c.predict_k = parse_count(value, key);
  else throw UsageError("unknown setting '" + key + "'");
}

PipelineConfig parse_config(const std::string& text, const fs::path& base_dir) {
  PipelineConfig c;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::is_blank_or_comment(line)) continue;
    // " #" starts a trailing comment.
    for (std::size_t i = 1; i < line.size(); ++i) {
      if (line[i] == '#' && (line[i - 1] == ' ' || line[i - 1] == '\t')) {
        line.resize(i);
        break;
      }
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw UsageError("config line " + std::to_string(line_no) + ": expected key = value");
    }
    const std::string key{detail::trim(std::string_view(line).substr(0, eq))};
    const std::string value{detail::trim(std::string_view(line).substr(eq + 1))};
    try {
      apply_setting(c, key, value, base_dir);
    } catch (const UsageError& e) {
      throw UsageError("config line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return c;
}

PipelineConfig load_config(const fs::path& path, const std::vector<std::string>& overrides) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open config file " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  PipelineConfig c = parse_config(buf.str(), path.parent_path());
  for (const auto& o : overrides) {
    const auto eq = o.find('=');
    if (eq == std::string::npos) throw UsageError("override '" + o + "' is not key=value");
    apply_setting(c, std::string(detail::trim(std::string_view(o).substr(0, eq))),
                  std::string(detail::trim(std::string_view(o).substr(eq + 1))));
  }
  c.validate();
  return c;
}

TrainConfig PipelineConfig::train_config(ModelKind kind) const {
  TrainConfig c;
  c.geometry = GeometryConfig::defaults(kind);
  c.seed = seed;
  c.threads = threads;
  const std::string prefix = std::string(to_string(kind)) + ".";
  for (const auto& [key, value] : train_settings) {
    if (key.find('.') == std::string::npos) apply_train_key(c, key, value);
  }
  for (const auto& [key, value] : train_settings) {
    if (key.rfind(prefix, 0) == 0) apply_train_key(c, key.substr(prefix.size()), value);
  }
  return c;
}

void PipelineConfig::validate() const {
  if (threads == 0) throw UsageError("threads must be >= 1");
  for (double a : smooth_alphas) {
    if (!(a >= 0.0 && a <= 1.0)) throw UsageError("smooth.alpha values must lie in [0, 1]");
  }
  for (double w : grid) {
    if (!(w > 0.0)) throw UsageError("grid.weights must be positive");
  }
  if (predict_k == 0) throw UsageError("predict.k must be >= 1");
  feature_source.validate();
}

PipelineData load_data(const PipelineConfig& config, bool need_test) {
  if (config.train_path.empty()) throw UsageError("paths.train is not set");
  PipelineData d;
  const TripletStore train = load_triplets(config.train_path);
  std::optional<CandidateQuerySet> valid, test;
  if (!config.valid_path.empty()) valid = load_queries(config.valid_path);
  if (need_test) {
    if (config.test_path.empty()) throw UsageError("paths.test is not set");
    test = load_queries(config.test_path);
  }
  Vocab vocab;
  vocab.entity_count = train.vocab().entity_count;
  vocab.relation_count = train.vocab().relation_count;
  for (const auto* q : {valid ? &*valid : nullptr, test ? &*test : nullptr}) {
    if (!q) continue;
    vocab.entity_count = std::max(vocab.entity_count, q->vocab().entity_count);
    vocab.relation_count = std::max(vocab.relation_count, q->vocab().relation_count);
  }
  if (config.entity_count) {
    if (*config.entity_count < vocab.entity_count) {
      throw DataError("data.entity_count " + std::to_string(*config.entity_count) +
                      " is below the largest id in the data (" +
                      std::to_string(vocab.entity_count - 1) + ")");
    }
    vocab.entity_count = *config.entity_count;
  }
  if (config.relation_count) {
    if (*config.relation_count < vocab.relation_count) {
      throw DataError("data.relation_count " + std::to_string(*config.relation_count) +
                      " is below the largest relation id in the data");
    }
    vocab.relation_count = *config.relation_count;
  }
  d.train = TripletStore(train.triples(), vocab);
  if (valid) d.valid = CandidateQuerySet(valid->queries(), vocab);
  if (test) d.test = CandidateQuerySet(test->queries(), vocab);
  return d;
}

TripletStore merge_validation(const TripletStore& train, const CandidateQuerySet& valid) {
  if (!valid.labeled()) throw DataError("merge-validation needs labeled validation queries");
  std::vector<Triple> triples = train.triples();
  for (const auto& q : valid.queries()) triples.push_back({q.head, q.relation, q.true_tail()});
  Vocab vocab = train.vocab();
  vocab.entity_count = std::max(vocab.entity_count, valid.vocab().entity_count);
  vocab.relation_count = std::max(vocab.relation_count, valid.vocab().relation_count);
  return TripletStore(std::move(triples), std::move(vocab));
}

fs::path embedding_path(const PipelineConfig& config, ModelKind kind) {
  return config.artifact_dir / (std::string(to_string(kind)) + ".kge");
}

fs::path score_path(const PipelineConfig& config, Split split, const std::string& source) {
  return config.artifact_dir / "scores" / std::string(to_string(split)) / (source + ".txt");
}

namespace {

fs::path weights_path(const PipelineConfig& c) { return c.artifact_dir / "weights.txt"; }

const CandidateQuerySet& split_queries(const PipelineData& d, Split split) {
  if (split == Split::Test) return *d.test;
  if (d.valid.empty()) throw UsageError("paths.valid is not set or holds no queries");
  return d.valid;
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw DataError("cannot create directory " + dir.string() + ": " + ec.message());
}

std::string fixed(double v, int digits = 6) {
  std::ostringstream s;
  s.setf(std::ios::fixed);
  s.precision(digits);
  s << v;
  return s.str();
}

EmbeddingTable load_model(const PipelineConfig& config, ModelKind kind, const Vocab& vocab) {
  const fs::path path = embedding_path(config, kind);
  if (!fs::exists(path)) {
    throw DataError("missing embeddings " + path.string() + "; run 'train --model " +
                    std::string(to_string(kind)) + "' first");
  }
  EmbeddingTable table = load_embeddings(path);
  const GeometryConfig want = config.train_config(kind).geometry;
  const GeometryConfig& got = table.geometry;
  const bool same = got.model_kind == want.model_kind && got.hidden_size == want.hidden_size &&
                    got.gamma == want.gamma && got.norm_p == want.norm_p &&
                    (kind != ModelKind::NOTE || got.ote_size == want.ote_size);
  if (!same) {
    throw DataError("geometry mismatch between " + path.string() +
                    " (hidden_size=" + std::to_string(got.hidden_size) +
                    ") and the configured " + std::string(to_string(kind)) +
                    " geometry (hidden_size=" + std::to_string(want.hidden_size) + ")");
  }
  if (table.entities.rows() != vocab.entity_count ||
      table.relations.rows() != vocab.relation_count) {
    throw DataError(path.string() + " has " + std::to_string(table.entities.rows()) +
                    " entities and " + std::to_string(table.relations.rows()) +
                    " relations; the data needs " + std::to_string(vocab.entity_count) + " and " +
                    std::to_string(vocab.relation_count));
  }
  return table;
}

ScoreMatrix score_table(const EmbeddingTable& table, const CandidateQuerySet& queries,
                        const std::string& name) {
  const auto fn = make_score_function(table.geometry);
  ScoreMatrix m;
  m.source = name;
  m.rows.reserve(queries.size());
  for (const auto& q : queries.queries()) m.rows.push_back(score_candidates(table, *fn, q));
  return m;
}

EmbeddingTable smoothed_table(const PipelineConfig& config, const PipelineData& data,
                              ModelKind kind, std::ostream& log) {
  if (config.smooth_alphas.empty()) {
    throw UsageError("smooth.alpha is not set; give one value or a list to tune on validation");
  }
  const EmbeddingTable base = load_model(config, kind, data.train.vocab());
  SmoothConfig sc;
  sc.model_kind = kind;
  sc.alpha = config.smooth_alphas.front();
  if (config.smooth_alphas.size() > 1) {
    const CandidateQuerySet& valid = split_queries(data, Split::Valid);
    if (!valid.labeled()) throw DataError("tuning smooth.alpha needs labeled validation queries");
    double best = -1.0;
    for (double a : config.smooth_alphas) {
      SmoothConfig trial = sc;
      trial.alpha = a;
      const double m = mrr(valid, score_table(post_smooth(base, data.train, trial), valid, ""));
      log << to_string(kind) << "_smooth alpha=" << a << " valid_mrr=" << fixed(m) << '\n';
      if (m > best) {
        best = m;
        sc.alpha = a;
      }
    }
  }
  log << to_string(kind) << "_smooth using alpha=" << sc.alpha << '\n';
  return post_smooth(base, data.train, sc);
}

DirectionalIndex feature_index(const PipelineConfig& config, const PipelineData& data,
                               Split split, bool rebuild) {
  FeatureSource src = config.feature_source;
  const CandidateQuerySet* queries = nullptr;
  if (split == Split::Valid) {
    if (src.include_candidates) queries = &data.valid;
  } else {
    src.include_candidates = rebuild;
    if (rebuild) queries = &*data.test;
  }
  if (!src.include_training && !src.include_candidates) {
    throw UsageError("feature index for " + std::string(to_string(split)) +
                     " would be empty: enable features.include_training");
  }
  return DirectionalIndex::build(data.train, queries, src);
}

std::vector<ScoreMatrix> features_for(const PipelineConfig& config, const PipelineData& data,
                                      Split split, std::span<const FeatureKind> kinds) {
  const CandidateQuerySet& queries = split_queries(data, split);
  std::vector<FeatureKind> plain, rebuilt;
  for (FeatureKind k : kinds) {
    const bool rb = split == Split::Test && std::find(config.test_rebuild.begin(),
                                                      config.test_rebuild.end(),
                                                      k) != config.test_rebuild.end();
    (rb ? rebuilt : plain).push_back(k);
  }
  std::map<FeatureKind, ScoreMatrix> by_kind;
  for (bool rb : {false, true}) {
    const auto& group = rb ? rebuilt : plain;
    if (group.empty()) continue;
    const DirectionalIndex index = feature_index(config, data, split, rb);
    auto ms = compute_feature_matrix(index, queries, group, config.feature_options, config.threads);
    for (std::size_t i = 0; i < group.size(); ++i) by_kind[group[i]] = std::move(ms[i]);
  }
  std::vector<ScoreMatrix> out;
  for (FeatureKind k : kinds) out.push_back(std::move(by_kind[k]));
  return out;
}

ScoreMatrix read_source(const PipelineConfig& config, Split split, const std::string& source) {
  const fs::path path = score_path(config, split, source);
  if (!fs::exists(path)) {
    throw DataError("missing score file " + path.string() + "; run 'score --split " +
                    std::string(to_string(split)) + " --source " + source + "' first");
  }
  ScoreMatrix m = read_score_matrix(path);
  m.source = source;
  return m;
}

std::vector<ScoreMatrix> read_normalized(const PipelineConfig& config, Split split,
                                         const std::vector<std::string>& sources,
                                         const CandidateQuerySet& queries) {
  std::vector<ScoreMatrix> out;
  for (const auto& s : sources) {
    ScoreMatrix m = read_source(config, split, s);
    check_aligned(queries, m);
    out.push_back(normalize_scores(m));
  }
  return out;
}

std::optional<DemotionMask> demotion_for(const PipelineConfig& config,
                                         const CandidateQuerySet& queries) {
  if (!config.filter_threshold) return std::nullopt;
  return low_frequency_mask(queries, candidate_frequency(queries), *config.filter_threshold);
}

ScoreMatrix ensemble_scores(const PipelineConfig& config, Split split,
                            const CandidateQuerySet& queries, const EnsembleWeights& weights) {
  std::vector<std::string> names;
  for (const auto& e : weights.entries) names.push_back(e.source);
  const auto sources = read_normalized(config, split, names, queries);
  ScoreMatrix combined = combine(sources, weights);
  if (const auto mask = demotion_for(config, queries)) combined = apply_demotion(combined, *mask);
  return combined;
}

EnsembleWeights require_weights(const PipelineConfig& config) {
  const fs::path path = weights_path(config);
  if (!fs::exists(path)) {
    throw DataError("weights file " + path.string() + " not found; run 'ensemble' first");
  }
  return read_weights(path);
}

}  // namespace

EmbeddingTable cmd_train(const PipelineConfig& config, ModelKind kind, bool merge_valid,
                         std::ostream& log) {
  if (kind == ModelKind::DeepWalk) throw UsageError("deepwalk vectors come from the walks command");
  const PipelineData data = load_data(config);
  const TripletStore store = merge_valid ? merge_validation(data.train, split_queries(data, Split::Valid))
                                         : data.train;
  const TrainConfig tc = config.train_config(kind);
  tc.validate();
  log << "train " << to_string(kind) << ": " << store.size() << " triples, "
      << store.vocab().entity_count << " entities, " << store.vocab().relation_count
      << " relations\n";
  EmbeddingTable table = train(store, tc, [&](const EpochStats& s) {
    log << "epoch " << s.epoch << " steps " << s.steps << " loss " << fixed(s.mean_loss)
        << " time " << fixed(s.seconds, 2) << "s\n";
  });
  ensure_dir(config.artifact_dir);
  save_embeddings(table, embedding_path(config, kind));
  log << "wrote " << embedding_path(config, kind).string() << '\n';
  return table;
}

Matrix cmd_walks(const PipelineConfig& config, std::ostream& log) {
  const PipelineData data = load_data(config);
  WalkConfig wc = config.walk;
  wc.seed = config.seed;
  wc.threads = config.threads;
  const auto walks = generate_walks(data.train, wc);
  ensure_dir(config.artifact_dir);
  save_walks(walks, config.artifact_dir / "walks.txt");
  log << "walks: " << walks.size() << " walks\n";
  Matrix nodes = skipgram_train(walks, data.train.vocab().entity_count, wc);
  save_node_embeddings(nodes, config.artifact_dir / "deepwalk.kge");
  log << "wrote " << (config.artifact_dir / "deepwalk.kge").string() << '\n';
  return nodes;
}

std::vector<ScoreMatrix> cmd_features(const PipelineConfig& config, Split split,
                                      std::ostream& log) {
  const PipelineData data = load_data(config, split == Split::Test);
  auto out = features_for(config, data, split, kAllFeatureKinds);
  ensure_dir(score_path(config, split, "x").parent_path());
  for (const auto& m : out) {
    write_score_matrix(m, score_path(config, split, m.source));
  }
  const CandidateQuerySet& queries = split_queries(data, split);
  write_candidate_frequency(candidate_frequency(queries),
                            config.artifact_dir / ("cand_freq_" + std::string(to_string(split)) + ".txt"));
  log << "features: " << out.size() << " matrices for " << queries.size() << " "
      << to_string(split) << " queries\n";
  return out;
}

std::vector<ScoreMatrix> cmd_score(const PipelineConfig& config,
                                   const std::vector<std::string>& sources, Split split,
                                   std::ostream& log) {
  const std::vector<std::string>& names = sources.empty() ? config.sources : sources;
  if (names.empty()) throw UsageError("no sources: pass --source or set ensemble.sources");
  for (const auto& s : names) check_source_name(s);
  const PipelineData data = load_data(config, split == Split::Test);
  const CandidateQuerySet& queries = split_queries(data, split);
  ensure_dir(score_path(config, split, "x").parent_path());
  std::vector<ScoreMatrix> out;
  for (const auto& name : names) {
    ModelKind kind;
    ScoreMatrix m;
    if (is_model_source(name, kind)) {
      m = score_table(load_model(config, kind, data.train.vocab()), queries, name);
    } else if (is_smooth_source(name, kind)) {
      m = score_table(smoothed_table(config, data, kind, log), queries, name);
    } else if (name == "deepwalk") {
      const fs::path path = config.artifact_dir / "deepwalk.kge";
      if (!fs::exists(path)) throw DataError("missing " + path.string() + "; run 'walks' first");
      const Matrix nodes = load_node_embeddings(path);
      if (nodes.rows() != data.train.vocab().entity_count) {
        throw DataError(path.string() + " has " + std::to_string(nodes.rows()) +
                        " rows; the data has " + std::to_string(data.train.vocab().entity_count) +
                        " entities");
      }
      m.source = name;
      for (const auto& q : queries.queries()) {
        std::vector<double> row;
        for (EntityId c : q.candidates) row.push_back(deepwalk_score(nodes, q.head, c));
        m.rows.push_back(std::move(row));
      }
    } else {
      const FeatureKind kind_f = *parse_feature_kind(name);
      m = std::move(features_for(config, data, split, std::span(&kind_f, 1)).front());
    }
    write_score_matrix(m, score_path(config, split, name));
    log << "scored " << name << " on " << queries.size() << ' ' << to_string(split) << " queries";
    if (queries.labeled()) log << " mrr " << fixed(mrr(queries, m));
    log << '\n';
    out.push_back(std::move(m));
  }
  return out;
}

EnsembleWeights cmd_ensemble(const PipelineConfig& config, std::ostream& log) {
  if (config.sources.empty()) throw UsageError("ensemble.sources is not set");
  const PipelineData data = load_data(config);
  const CandidateQuerySet& valid = split_queries(data, Split::Valid);
  if (!valid.labeled()) throw DataError("ensemble needs labeled validation queries");
  const auto sources = read_normalized(config, Split::Valid, config.sources, valid);
  const auto mask = demotion_for(config, valid);

  GridSearchOptions opts;
  opts.grid = config.grid;
  opts.max_rounds = config.grid_max_rounds;
  opts.threads = config.threads;
  opts.demotion = mask ? &*mask : nullptr;
  const EnsembleWeights weights = grid_search(sources, valid, opts);

  std::ostringstream report;
  report << "# validation MRR per source and for the weighted ensemble\n";
  report << "# filter.threshold="
         << (config.filter_threshold ? std::to_string(*config.filter_threshold) : "none") << '\n';
  report << "source\tsolo_mrr\tweight\n";
  for (const auto& m : sources) {
    const ScoreMatrix scored = mask ? apply_demotion(m, *mask) : m;
    report << m.source << '\t' << fixed(mrr(valid, scored)) << '\t'
           << detail::format_double(weights.weight(m.source)) << '\n';
  }
  report << "ensemble\t" << fixed(*weights.validation_mrr) << "\t-\n";

  ensure_dir(config.artifact_dir);
  write_weights(weights, weights_path(config));
  std::ofstream out(config.artifact_dir / "ensemble_report.txt", std::ios::trunc);
  out << report.str();
  if (!out) throw DataError("cannot write ensemble report");
  log << report.str();
  return weights;
}

std::vector<std::vector<std::size_t>> cmd_predict(const PipelineConfig& config,
                                                  std::ostream& log) {
  const EnsembleWeights weights = require_weights(config);
  const PipelineData data = load_data(config, true);
  const CandidateQuerySet& test = *data.test;
  const ScoreMatrix combined = ensemble_scores(config, Split::Test, test, weights);
  std::vector<std::vector<std::size_t>> top;
  std::ostringstream text;
  for (const auto& row : combined.rows) {
    top.push_back(top_k(row, config.predict_k));
    for (std::size_t i = 0; i < top.back().size(); ++i) text << (i ? " " : "") << top.back()[i];
    text << '\n';
  }
  ensure_dir(config.artifact_dir);
  const fs::path path = config.artifact_dir / "predictions.txt";
  std::ofstream out(path, std::ios::trunc);
  out << text.str();
  if (!out) throw DataError("cannot write " + path.string());
  log << "predicted top-" << config.predict_k << " for " << test.size() << " queries";
  if (test.labeled()) log << " (test mrr " << fixed(mrr(test, combined)) << ")";
  log << "\nwrote " << path.string() << '\n';
  return top;
}

double cmd_eval(const PipelineConfig& config, Split split, const std::string& source,
                std::ostream& log) {
  const PipelineData data = load_data(config, split == Split::Test);
  const CandidateQuerySet& queries = split_queries(data, split);
  if (!queries.labeled()) {
    throw DataError(std::string(to_string(split)) + " queries carry no true_index to evaluate");
  }
  double value = 0.0;
  if (source.empty()) {
    value = mrr(queries, ensemble_scores(config, split, queries, require_weights(config)));
  } else {
    check_source_name(source);
    const ScoreMatrix m = read_source(config, split, source);
    value = mrr(queries, m);
  }
  log << (source.empty() ? "ensemble" : source) << ' ' << to_string(split) << " mrr "
      << fixed(value) << '\n';
  return value;
}

}  // namespace kgc
