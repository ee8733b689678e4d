#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "metareg/experiment.hpp"
#include "metareg/util.hpp"

namespace {

// Exit codes: 0 success, 1 usage, 2 data error, 3 training failure.
int run(int argc, char** argv) {
  CLI::App app{"Ordinal-threshold metamodel regression experiments"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir;
  std::string models_dir;
  std::string data_dir;
  std::string out_path;
  int jobs = 1;
  int method = 1;

  auto* synth = app.add_subcommand("synth", "Generate a synthetic dataset");
  synth->add_option("--config", config_path, "Experiment config JSON")->required();
  synth->add_option("--out", out_dir, "Override the dataset directory");

  auto* crossval = app.add_subcommand("crossval", "k-fold cross-validation experiment");
  crossval->add_option("--config", config_path, "Experiment config JSON")->required();
  crossval->add_option("--jobs", jobs, "Worker threads")->check(CLI::PositiveNumber);
  crossval->add_option("--out", out_dir, "Override the output directory");

  auto* generalize = app.add_subcommand("generalize", "Apply stored models to new data");
  generalize->add_option("--config", config_path, "Experiment config JSON")->required();
  generalize->add_option("--models", models_dir, "Stored models directory")->required();
  generalize->add_option("data_dir", data_dir, "New dataset directory")->required();
  generalize->add_option("--method", method, "1 = frozen metamodel, 2 = retrain meta level")
      ->required();
  generalize->add_option("--jobs", jobs, "Worker threads")->check(CLI::PositiveNumber);
  generalize->add_option("--out", out_dir, "Override the output directory");

  auto* predict = app.add_subcommand("predict", "Predict scores with a stored metamodel");
  predict->add_option("--models", models_dir, "One stored metamodel directory")->required();
  predict->add_option("data_dir", data_dir, "Dataset directory")->required();
  predict->add_option("--out", out_path, "Output CSV path")->required();

  auto* describe = app.add_subcommand("describe", "Summarize a dataset");
  describe->add_option("data_dir", data_dir, "Dataset directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help
    app.exit(e);
    return 1;
  }

  try {
    if (synth->parsed()) {
      const auto config = metareg::ExperimentConfig::load(config_path);
      std::cout << metareg::run_synth(config, out_dir);
    } else if (crossval->parsed()) {
      const auto config = metareg::ExperimentConfig::load(config_path);
      const auto report = metareg::run_crossval(config, jobs, out_dir);
      std::cout << report.to_csv();
    } else if (generalize->parsed()) {
      const auto config = metareg::ExperimentConfig::load(config_path);
      const auto report = metareg::run_generalize(config, models_dir, data_dir, method,
                                                  jobs, out_dir);
      std::cout << report.to_csv();
    } else if (predict->parsed()) {
      metareg::run_predict(models_dir, data_dir, out_path);
    } else if (describe->parsed()) {
      std::cout << metareg::run_describe(data_dir);
    }
  } catch (const metareg::ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const metareg::TrainError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  } catch (const metareg::DataError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) { return run(argc, argv); }
