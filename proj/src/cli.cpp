#include <CLI11.hpp>

#include <ostream>

#include "kgc/pipeline.hpp"

namespace kgc {

namespace {

struct Invocation {
  std::string config_path;
  std::vector<std::string> overrides;
};

CLI::App* add_command(CLI::App& app, const std::string& name, const std::string& help,
                      Invocation& inv) {
  CLI::App* sub = app.add_subcommand(name, help);
  sub->add_option("--config", inv.config_path, "pipeline config file")->required();
  sub->add_option("settings", inv.overrides, "key=value overrides applied after the config");
  return sub;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Knowledge graph completion pipeline", "kgc"};
  app.require_subcommand(1);
  Invocation inv;
  std::string model, split = "valid", source;
  std::vector<std::string> sources;
  bool merge_valid = false;

  auto* train = add_command(app, "train", "train one triplet model", inv);
  train->add_option("--model", model, "transe, rotate, quate or note")->required();
  train->add_flag("--merge-validation", merge_valid,
                  "add each validation query's true triple to the training data");
  auto* walks = add_command(app, "walks", "generate random walks and DeepWalk vectors", inv);
  auto* features = add_command(app, "features", "write all path-probability features", inv);
  features->add_option("--split", split, "valid or test");
  auto* score = add_command(app, "score", "write score matrices for the named sources", inv);
  score->add_option("--source", sources, "sources to score (default: ensemble.sources)")
      ->delimiter(',');
  score->add_option("--split", split, "valid or test");
  auto* ensemble = add_command(app, "ensemble", "fit ensemble weights on validation", inv);
  auto* predict = add_command(app, "predict", "write top-K candidate indices for test", inv);
  auto* eval = add_command(app, "eval", "report MRR of a source or the ensemble", inv);
  eval->add_option("--split", split, "valid or test");
  eval->add_option("--source", source, "stored source (default: the weighted ensemble)");

  std::vector<std::string> argv_rev(args.rbegin(), args.rend());
  try {
    app.parse(argv_rev);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err) == 0 ? 0 : 1;
  }

  try {
    const PipelineConfig config = load_config(inv.config_path, inv.overrides);
    if (train->parsed()) {
      cmd_train(config, parse_model_kind(model), merge_valid, out);
    } else if (walks->parsed()) {
      cmd_walks(config, out);
    } else if (features->parsed()) {
      cmd_features(config, parse_split(split), out);
    } else if (score->parsed()) {
      cmd_score(config, sources, parse_split(split), out);
    } else if (ensemble->parsed()) {
      cmd_ensemble(config, out);
    } else if (predict->parsed()) {
      cmd_predict(config, out);
    } else if (eval->parsed()) {
      cmd_eval(config, parse_split(split), source, out);
    }
  } catch (const UsageError& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}

}  // namespace kgc
