#include <doctest.h>

#include <cstdlib>
#include <sstream>

#include "kgc/embedding_io.hpp"
#include "kgc/pipeline.hpp"
#include "oracles.hpp"
#include "pipeline_fixture.hpp"

using namespace kgc;
using kgc::testing::read_text;
using kgc::testing::TempDir;
using kgc::testing::write_text;
namespace fs = std::filesystem;

namespace {

constexpr std::size_t kEntities = 200;

kgc::testing::SyntheticKG small_kg() {
  kgc::testing::SyntheticOptions o;
  o.entities = kEntities;
  o.valid_queries = 30;
  o.test_queries = 20;
  o.candidates = 10;
  return kgc::testing::make_synthetic_kg(o);
}

// One corpus and one full pipeline run shared by the read-only checks.
struct Built {
  TempDir dir;
  kgc::testing::SyntheticKG kg = small_kg();
  PipelineConfig config;

  Built() {
    kgc::testing::write_corpus(kg, dir.path());
    write_text(dir / "run.cfg", kgc::testing::corpus_config(kEntities, "out"));
    config = load_config(dir / "run.cfg");
    std::ostringstream log;
    kgc::testing::run_full_pipeline(config, log);
  }
};

Built& built() {
  static Built b;
  return b;
}

int run_binary(const std::string& args, const fs::path& capture) {
  const std::string cmd = std::string(KGC_CLI_PATH) + " " + args + " > " + capture.string() +
                          " 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST_CASE("config parsing") {
  const std::string text =
      "# comment\n"
      "paths.train = data/train.txt   # trailing\n"
      "paths.artifacts = /abs/out\n"
      "\n"
      "seed = 9\n"
      "train.lr = 0.5\n"
      "train.rotate.lr = 0.25\n"
      "train.hidden_size = 16\n"
      "smooth.alpha = 0.7, 0.9\n"
      "filter.threshold = 2\n"
      "grid.weights = 0.5, 1\n"
      "predict.k = 3\n"
      "features.test_rebuild = F_HT, F_RT\n";
  const PipelineConfig c = parse_config(text, "/base");
  CHECK(c.train_path == fs::path("/base/data/train.txt"));
  CHECK(c.artifact_dir == fs::path("/abs/out"));
  CHECK(c.seed == 9);
  CHECK(c.train_config(ModelKind::TransE).lr == 0.5);
  CHECK(c.train_config(ModelKind::RotatE).lr == 0.25);
  CHECK(c.train_config(ModelKind::RotatE).geometry.hidden_size == 16);
  CHECK(c.train_config(ModelKind::RotatE).seed == 9);
  CHECK(c.smooth_alphas == std::vector<double>{0.7, 0.9});
  CHECK(c.filter_threshold == 2u);
  CHECK(c.grid == std::vector<double>{0.5, 1.0});
  CHECK(c.predict_k == 3);
  CHECK(c.test_rebuild == std::vector<FeatureKind>{FeatureKind::F_HT, FeatureKind::F_RT});
  CHECK(parse_config("filter.threshold = none\n").filter_threshold == std::nullopt);
  CHECK(parse_config("").smooth_alphas.empty());
}

TEST_CASE("config overrides beat the file") {
  TempDir dir;
  write_text(dir / "a.cfg", "seed = 1\ntrain.epochs = 4\npaths.valid = v.txt\n");
  const PipelineConfig c = load_config(dir / "a.cfg", {"seed=5", "train.epochs = 7"});
  CHECK(c.seed == 5);
  CHECK(c.train_config(ModelKind::NOTE).epochs == 7);
  CHECK(c.valid_path == dir / "v.txt");
}

TEST_CASE("config errors") {
  CHECK_THROWS_WITH_AS(parse_config("bogus = 1\n"), doctest::Contains("bogus"), UsageError);
  CHECK_THROWS_AS(parse_config("train.complex.lr = 1\n"), UsageError);
  CHECK_THROWS_AS(parse_config("train.speed = 1\n"), UsageError);
  CHECK_THROWS_AS(parse_config("seed = abc\n"), UsageError);
  CHECK_THROWS_AS(parse_config("just words\n"), UsageError);
  CHECK_THROWS_AS(parse_config("smooth.alpha = 1.5\n").validate(), UsageError);
  CHECK_THROWS_WITH_AS(parse_config("ensemble.sources = transe, foo\n"),
                       doctest::Contains("F_RT_HR_RT"), UsageError);
  CHECK_THROWS_AS(load_config("/nonexistent/x.cfg"), UsageError);
  CHECK(parse_split("test") == Split::Test);
  CHECK_THROWS_AS(parse_split("train"), UsageError);
}

TEST_CASE("merge validation adds one triple per query") {
  const auto kg = small_kg();
  const TripletStore merged = merge_validation(kg.train, kg.valid);
  CHECK(merged.size() == kg.train.size() + kg.valid.size());
  const auto& last = merged.triples().back();
  const auto& q = kg.valid.queries().back();
  CHECK(last == Triple{q.head, q.relation, q.true_tail()});
}

TEST_CASE("model scores match direct scoring") {
  auto& b = built();
  const EmbeddingTable table = load_embeddings(embedding_path(b.config, ModelKind::TransE));
  const auto fn = make_score_function(table.geometry);
  const ScoreMatrix stored = read_score_matrix(score_path(b.config, Split::Valid, "transe"));
  REQUIRE(stored.rows.size() == b.kg.valid.size());
  for (std::size_t i = 0; i < b.kg.valid.size(); ++i) {
    const auto want = score_candidates(table, *fn, b.kg.valid[i]);
    for (std::size_t c = 0; c < want.size(); ++c) {
      CHECK(stored.rows[i][c] == doctest::Approx(want[c]).epsilon(1e-15));
    }
    if (i < 3) {
      const auto& q = b.kg.valid[i];
      CHECK(stored.rows[i][0] ==
            doctest::Approx(score_triple(q.head, q.relation, q.candidates[0], table)));
    }
  }
}

TEST_CASE("feature scores match compute_feature_matrix") {
  auto& b = built();
  const auto index = DirectionalIndex::build(b.kg.train, nullptr, {});
  const FeatureKind kinds[] = {FeatureKind::F_HT, FeatureKind::F_HT_HT};
  for (Split split : {Split::Valid, Split::Test}) {
    const auto& queries = split == Split::Valid ? b.kg.valid : b.kg.test;
    const auto want = compute_feature_matrix(index, queries, kinds);
    CHECK(read_score_matrix(score_path(b.config, split, "F_HT")).rows == want[0].rows);
    CHECK(read_score_matrix(score_path(b.config, split, "F_HT_HT")).rows == want[1].rows);
  }
  const auto freq = read_candidate_frequency(b.config.artifact_dir / "cand_freq_valid.txt");
  CHECK(freq == candidate_frequency(b.kg.valid));
}

TEST_CASE("score rejects unknown sources and mismatched geometry") {
  auto& b = built();
  std::ostringstream log;
  CHECK_THROWS_WITH_AS(cmd_score(b.config, {"foo"}, Split::Valid, log),
                       doctest::Contains("valid sources: transe"), UsageError);
  PipelineConfig wider = b.config;
  apply_setting(wider, "train.transe.hidden_size", "16");
  CHECK_THROWS_WITH_AS(cmd_score(wider, {"transe"}, Split::Valid, log),
                       doctest::Contains("geometry mismatch"), DataError);
  PipelineConfig no_alpha = b.config;
  no_alpha.smooth_alphas.clear();
  CHECK_THROWS_WITH_AS(cmd_score(no_alpha, {"transe_smooth"}, Split::Valid, log),
                       doctest::Contains("smooth.alpha"), UsageError);
  CHECK_THROWS_AS(cmd_train(b.config, ModelKind::DeepWalk, false, log), UsageError);
}

TEST_CASE("ensemble report") {
  auto& b = built();
  const std::string report = read_text(b.config.artifact_dir / "ensemble_report.txt");
  std::istringstream in(report);
  std::string line;
  double ensemble = -1.0, best_solo = 0.0;
  std::size_t listed = 0;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#' || line.rfind("source\t", 0) == 0) continue;
    std::istringstream f(line);
    std::string name;
    double value = 0.0;
    f >> name >> value;
    if (name == "ensemble") {
      ensemble = value;
    } else {
      best_solo = std::max(best_solo, value);
      ++listed;
    }
  }
  CHECK(listed == b.config.sources.size());
  CHECK(ensemble >= best_solo);

  const auto weights = read_weights(b.config.artifact_dir / "weights.txt");
  CHECK(weights.validation_mrr.has_value());
  std::ostringstream log;
  cmd_ensemble(b.config, log);
  CHECK(read_text(b.config.artifact_dir / "ensemble_report.txt") == report);
  CHECK(cmd_eval(b.config, Split::Valid, "", log) == doctest::Approx(*weights.validation_mrr));
}

TEST_CASE("single-source ensemble has weight one") {
  auto& b = built();
  PipelineConfig c = b.config;
  c.artifact_dir = b.dir / "single";
  fs::create_directories(c.artifact_dir / "scores" / "valid");
  fs::copy_file(score_path(b.config, Split::Valid, "F_HT"), score_path(c, Split::Valid, "F_HT"));
  c.sources = {"F_HT"};
  std::ostringstream log;
  const auto w = cmd_ensemble(c, log);
  REQUIRE(w.entries.size() == 1);
  CHECK(w.weight("F_HT") == 1.0);
  CHECK(read_text(c.artifact_dir / "ensemble_report.txt").find("F_HT\t") != std::string::npos);
}

TEST_CASE("predict leaves its inputs untouched") {
  auto& b = built();
  const fs::path weights = b.config.artifact_dir / "weights.txt";
  const fs::path scores = score_path(b.config, Split::Test, "transe");
  const auto w_text = read_text(weights), s_text = read_text(scores);
  const auto w_time = fs::last_write_time(weights), s_time = fs::last_write_time(scores);
  std::ostringstream log;
  const auto top = cmd_predict(b.config, log);
  CHECK(top.size() == b.kg.test.size());
  for (const auto& row : top) CHECK(row.size() == b.config.predict_k);
  CHECK(read_text(weights) == w_text);
  CHECK(read_text(scores) == s_text);
  CHECK(fs::last_write_time(weights) == w_time);
  CHECK(fs::last_write_time(scores) == s_time);
}

TEST_CASE("predict picks the arg max and breaks ties by position") {
  TempDir dir;
  Vocab v;
  v.entity_count = 10;
  v.relation_count = 1;
  save_triplets(TripletStore({{0, 0, 1}}, v), dir / "train.txt");
  save_queries(CandidateQuerySet({{0, 0, {1, 2, 3, 4, 5}, 4}}, v), dir / "valid.txt");
  save_queries(CandidateQuerySet({{0, 0, {1, 2, 3, 4, 5}, std::nullopt},
                                  {1, 0, {5, 6, 7}, std::nullopt}},
                                 v),
               dir / "test.txt");
  write_text(dir / "c.cfg",
             "paths.train = train.txt\npaths.valid = valid.txt\npaths.test = test.txt\n"
             "paths.artifacts = out\ndata.entity_count = 10\npredict.k = 1\n");
  PipelineConfig c = load_config(dir / "c.cfg");
  std::ostringstream log;
  CHECK_THROWS_WITH_AS(cmd_predict(c, log), doctest::Contains("run 'ensemble' first"), DataError);

  fs::create_directories(c.artifact_dir / "scores" / "test");
  write_score_matrix({"F_HT", {{0.1, 0.2, 0.3, 0.2, 0.9}, {0.5, 0.5, 0.5}}},
                     score_path(c, Split::Test, "F_HT"));
  write_weights({{{"F_HT", 1.0}}, {}}, c.artifact_dir / "weights.txt");
  CHECK(cmd_predict(c, log) == std::vector<std::vector<std::size_t>>{{4}, {0}});
  CHECK(read_text(c.artifact_dir / "predictions.txt") == "4\n0\n");
  c.predict_k = 3;
  CHECK(cmd_predict(c, log)[1] == std::vector<std::size_t>{0, 1, 2});
}

TEST_CASE("training twice gives identical embedding files") {
  TempDir dir;
  kgc::testing::write_corpus(small_kg(), dir.path());
  write_text(dir / "run.cfg", kgc::testing::corpus_config(kEntities, "a"));
  std::ostringstream log;
  const PipelineConfig a = load_config(dir / "run.cfg");
  const PipelineConfig b = load_config(dir / "run.cfg", {"paths.artifacts=" + (dir / "b").string()});
  cmd_train(a, ModelKind::NOTE, false, log);
  cmd_train(b, ModelKind::NOTE, false, log);
  CHECK(read_text(embedding_path(a, ModelKind::NOTE)) ==
        read_text(embedding_path(b, ModelKind::NOTE)));
  CHECK(log.str().find("epoch 2 ") != std::string::npos);
}

TEST_CASE("command line exit codes") {
  TempDir dir;
  write_text(dir / "c.cfg", "paths.train = missing_train.txt\npaths.valid = v.txt\n");
  const fs::path out = dir / "out.txt";
  const std::string cfg = (dir / "c.cfg").string();
  CHECK(run_binary("train --model transe --config " + cfg, out) == 2);
  CHECK(read_text(out).find("missing_train.txt") != std::string::npos);
  CHECK(run_binary("--help", out) == 0);
  CHECK(run_binary("train --model transe", out) == 1);
  CHECK(run_binary("frobnicate", out) == 1);
  CHECK(run_binary("train --model complex --config " + cfg, out) == 1);
  CHECK(run_binary("train --model transe --config " + cfg + " nonsense.key=1", out) == 1);
  CHECK(run_binary("eval --config " + (dir / "absent.cfg").string(), out) == 1);

  std::ostringstream so, se;
  CHECK(run_cli({"train", "--model", "transe", "--config", cfg}, so, se) == 2);
  CHECK(se.str().find("missing_train.txt") != std::string::npos);
}
