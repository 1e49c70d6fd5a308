#pragma once

// Writes a synthetic corpus plus a config file and drives every pipeline
// stage in order.

#include <filesystem>
#include <iosfwd>
#include <string>

#include "kgc/pipeline.hpp"
#include "synthetic.hpp"

namespace kgc::testing {

/// train.txt, valid.txt and test.txt under `dir`.
void write_corpus(const SyntheticKG& kg, const std::filesystem::path& dir);

/// Config text for a corpus written by write_corpus, with artifacts in
/// "<artifacts>" next to the data. `extra` is appended verbatim.
std::string corpus_config(std::size_t entities, const std::string& artifacts,
                          const std::string& extra = "");

/// train x4, walks, features and score on both splits, ensemble, predict.
void run_full_pipeline(const PipelineConfig& config, std::ostream& log);

}  // namespace kgc::testing
