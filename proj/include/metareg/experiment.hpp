#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "metareg/metamodel.hpp"
#include "metareg/synth.hpp"

namespace metareg {

/// Experiment settings loaded from a JSON config file. Parsing is strict:
/// unknown keys are rejected and every field is validated before any
/// computation starts.
struct ExperimentConfig {
  std::filesystem::path data_dir;
  std::filesystem::path out_dir;
  std::uint64_t seed = 0;
  int k_folds = 5;
  double val_fraction = 0.1;
  int window_length = 90;
  int window_stride = 10;
  std::vector<double> thresholds = ThresholdSet::default_set().values;
  std::vector<LearnerKind> base_kinds{LearnerKind::LR};
  std::vector<LearnerKind> bank_kinds;  // per-threshold override, optional
  bool clip_predictions = false;
  TrainConfig train;
  TrainConfig meta_train = default_meta_train();
  Grids grids;
  int generalize_k = 5;
  SynthConfig synth;

  static ExperimentConfig load(const std::filesystem::path& path);
  static ExperimentConfig from_json(const nlohmann::json& doc);

  /// Canonical form used for the manifest fingerprint.
  nlohmann::json to_json() const;

  MetamodelConfig metamodel_config(LearnerKind kind, std::uint64_t task_seed) const;
  void validate() const;
};

/// Generates the configured synthetic dataset into `data_dir` (or the
/// override) and returns the description table that the CLI prints.
std::string run_synth(const ExperimentConfig& config,
                      const std::filesystem::path& out_override = {});

/// Cross-validates metamodel and traditional pipelines over every configured
/// base kind, writing report.csv, summary.json, manifest.json and the
/// trained models under out_dir. Deterministic for any jobs count.
EvalReport run_crossval(const ExperimentConfig& config, int jobs,
                        const std::filesystem::path& out_override = {});

/// Applies stored models to a new dataset. Method 1 applies the frozen fold
/// models directly; method 2 freezes the banks and retrains meta-level
/// networks on a fresh k-fold of the new data, with newly trained
/// traditional baselines for comparison.
EvalReport run_generalize(const ExperimentConfig& config,
                          const std::filesystem::path& models_dir,
                          const std::filesystem::path& new_data_dir, int method, int jobs,
                          const std::filesystem::path& out_override = {});

/// Loads one stored metamodel and writes `subject_id,predicted_score` rows
/// (sorted by id) for every series file in data_dir. True scores and even
/// phenotype rows are optional here.
void run_predict(const std::filesystem::path& models_dir,
                 const std::filesystem::path& data_dir,
                 const std::filesystem::path& out_csv);

/// Summary table of a stored dataset.
std::string run_describe(const std::filesystem::path& data_dir);

}  // namespace metareg
