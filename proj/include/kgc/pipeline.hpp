#pragma once

// End-to-end driver: config file, per-stage commands, and the CLI entry point.
//
// Artifact layout under paths.artifacts:
//   <model>.kge (+ .meta)           trained embeddings
//   deepwalk.kge, walks.txt         DeepWalk vectors and corpus
//   scores/<split>/<source>.txt     one ScoreMatrix per source and split
//   cand_freq_<split>.txt           candidate frequencies
//   weights.txt, ensemble_report.txt, predictions.txt

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "kgc/ensemble.hpp"
#include "kgc/features.hpp"
#include "kgc/graph_context.hpp"
#include "kgc/trainer.hpp"

namespace kgc {

enum class Split { Valid, Test };
std::string_view to_string(Split split);
Split parse_split(std::string_view name);

struct PipelineConfig {
  std::filesystem::path train_path;
  std::filesystem::path valid_path;
  std::filesystem::path test_path;
  std::filesystem::path artifact_dir = "artifacts";
  std::optional<std::size_t> entity_count;
  std::optional<std::size_t> relation_count;

  std::uint64_t seed = 0;
  std::size_t threads = 1;

  /// Raw "train.*" settings; "train.<model>.<key>" beats "train.<key>".
  std::map<std::string, std::string> train_settings;

  /// Candidate alphas for the smoothed sources; several are tuned on
  /// validation MRR. No default: smoothing requires an explicit choice.
  std::vector<double> smooth_alphas;
  WalkConfig walk;

  FeatureSource feature_source;
  FeatureOptions feature_options;
  /// Feature kinds whose test-time index also counts the test candidates.
  /// Empty by default: this reads the test candidate lists, and frequency
  /// patterns there may not match those of any future query set.
  std::vector<FeatureKind> test_rebuild;

  std::vector<std::string> sources;  // ensemble sources, registration order
  std::optional<std::uint64_t> filter_threshold;
  std::vector<double> grid = default_weight_grid();
  std::size_t grid_max_rounds = 0;
  std::size_t predict_k = 10;

  TrainConfig train_config(ModelKind kind) const;
  void validate() const;
};

/// Parses "key = value" lines ('#' comments). Relative paths resolve against
/// `base_dir`.
PipelineConfig parse_config(const std::string& text, const std::filesystem::path& base_dir = {});
/// Applies one "key=value" override on top of an existing config.
void apply_setting(PipelineConfig& config, const std::string& key, const std::string& value,
                   const std::filesystem::path& base_dir = {});
PipelineConfig load_config(const std::filesystem::path& path,
                           const std::vector<std::string>& overrides = {});

/// Every name accepted as a score source.
std::vector<std::string> valid_source_names();

struct PipelineData {
  TripletStore train;
  CandidateQuerySet valid;
  std::optional<CandidateQuerySet> test;
};

/// Loads the configured files under one shared vocabulary.
PipelineData load_data(const PipelineConfig& config, bool need_test = false);

/// Training triples plus the true triple of every validation query.
TripletStore merge_validation(const TripletStore& train, const CandidateQuerySet& valid);

std::filesystem::path embedding_path(const PipelineConfig& config, ModelKind kind);
std::filesystem::path score_path(const PipelineConfig& config, Split split,
                                 const std::string& source);

EmbeddingTable cmd_train(const PipelineConfig& config, ModelKind kind, bool merge_valid,
                         std::ostream& log);
Matrix cmd_walks(const PipelineConfig& config, std::ostream& log);
/// Writes one ScoreMatrix per feature kind plus the candidate frequencies.
std::vector<ScoreMatrix> cmd_features(const PipelineConfig& config, Split split,
                                      std::ostream& log);
std::vector<ScoreMatrix> cmd_score(const PipelineConfig& config,
                                   const std::vector<std::string>& sources, Split split,
                                   std::ostream& log);
EnsembleWeights cmd_ensemble(const PipelineConfig& config, std::ostream& log);
std::vector<std::vector<std::size_t>> cmd_predict(const PipelineConfig& config,
                                                  std::ostream& log);
/// MRR of one stored source, or of the weighted ensemble when `source` is empty.
double cmd_eval(const PipelineConfig& config, Split split, const std::string& source,
                std::ostream& log);

/// Full CLI: returns 0 on success, 1 on usage errors, 2 on data errors.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace kgc
