#include "pipeline_fixture.hpp"

#include <ostream>

namespace kgc::testing {

void write_corpus(const SyntheticKG& kg, const std::filesystem::path& dir) {
  save_triplets(kg.train, dir / "train.txt");
  save_queries(kg.valid, dir / "valid.txt");
  save_queries(kg.test, dir / "test.txt");
}

std::string corpus_config(std::size_t entities, const std::string& artifacts,
                          const std::string& extra) {
  return "# synthetic corpus\n"
         "paths.train = train.txt\n"
         "paths.valid = valid.txt\n"
         "paths.test = test.txt\n"
         "paths.artifacts = " + artifacts + "\n"
         "data.entity_count = " + std::to_string(entities) + "\n"
         "data.relation_count = 8\n"
         "seed = 3\n"
         "threads = 1\n"
         "train.epochs = 2\n"
         "train.batch_size = 200\n"
         "train.hidden_size = 8\n"
         "train.neg_sample_size = 8\n"
         "train.note.ote_size = 2\n"
         "smooth.alpha = 0.8, 1.0\n"
         "walk.num_walks = 2\n"
         "walk.length = 10\n"
         "walk.dim = 8\n"
         "ensemble.sources = transe, rotate, quate, note, transe_smooth, rotate_smooth, "
         "deepwalk, F_HT, F_RT, F_HT_HT, CAND_FREQ\n" +
         extra;
}

void run_full_pipeline(const PipelineConfig& config, std::ostream& log) {
  for (ModelKind kind : {ModelKind::TransE, ModelKind::RotatE, ModelKind::QuatE, ModelKind::NOTE}) {
    cmd_train(config, kind, false, log);
  }
  cmd_walks(config, log);
  for (Split split : {Split::Valid, Split::Test}) {
    cmd_features(config, split, log);
    cmd_score(config, config.sources, split, log);
  }
  cmd_ensemble(config, log);
  cmd_predict(config, log);
}

}  // namespace kgc::testing
