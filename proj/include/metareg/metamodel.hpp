#pragma once

#include <Eigen/Dense>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "metareg/dataset.hpp"
#include "metareg/features.hpp"
#include "metareg/learners.hpp"
#include "metareg/nets.hpp"
#include "metareg/stats.hpp"

namespace metareg {

/// Ordinal decision boundaries for the base-model bank. Strictly increasing,
/// never equal to an attainable integer score.
struct ThresholdSet {
  std::vector<double> values;

  /// 0.5, 1.5, ..., 6.5 — one threshold per ordinal step except the topmost
  /// score, which is too rare to train on.
  static ThresholdSet default_set();

  std::size_t size() const { return values.size(); }
  void validate() const;
};

/// bit_k = 1 iff score > thresholds[k]; monotone non-increasing in k.
std::vector<int> threshold_labels(int score, const ThresholdSet& thresholds);

/// One window with its derived feature views. Views not needed by the
/// configured learners stay empty.
struct SampleView {
  std::string subject_id;
  int window_index = 0;
  double true_score = 0.0;
  Eigen::VectorXd fc;
  Eigen::MatrixXd seq;
};

/// Hyperparameter grids searched per base model.
struct Grids {
  std::vector<double> lr_l2{1e-3, 1e-2, 1e-1, 1.0};
  std::vector<double> svm_box{0.1, 1.0, 10.0};
  std::vector<double> svm_scale{0.5, 1.0, 2.0};
  std::vector<int> rf_trees{50, 100, 200, 400};
  std::vector<MlpHyper> mlp_hidden;  // empty: pick by input width
  std::vector<int> lstm_hidden{16, 32};
};

/// Meta-level optimizer settings: full-batch, long patience on the
/// subject-level validation correlation.
TrainConfig default_meta_train();

struct MetamodelConfig {
  LearnerKind base_kind = LearnerKind::LR;
  std::vector<LearnerKind> bank_kinds;  // per-threshold override; empty = homogeneous
  ThresholdSet thresholds = ThresholdSet::default_set();
  TrainConfig base_train;
  TrainConfig meta_train = default_meta_train();
  Grids grids;
  std::uint64_t seed = 0;
  bool clip_predictions = false;

  LearnerKind kind_at(std::size_t threshold_index) const;
};

/// Windowing parameters and phenotype statistics frozen at training time;
/// new data must be routed through the identical preprocessing.
struct PipelineInfo {
  int window_length = 90;
  int stride = 10;
  int rois = 0;
  PhenoScaler scaler;
};

/// Bank of per-threshold binary classifiers plus the trained meta-level
/// network mapping their scores to one real-valued prediction.
struct Metamodel {
  std::vector<std::unique_ptr<BinaryClassifier>> bank;
  MetaNet meta;
  ThresholdSet thresholds;
  LearnerKind base_kind = LearnerKind::LR;
  PipelineInfo pipeline;
  bool clip_predictions = false;
  std::vector<std::string> warnings;

  /// Score matrix with column k produced by the bank model at threshold k.
  Eigen::MatrixXd bank_scores(const std::vector<SampleView>& samples) const;

  /// Per-sample meta outputs averaged per subject.
  std::map<std::string, double> predict(const std::vector<SampleView>& samples) const;
};

Eigen::MatrixXd bank_scores(const std::vector<std::unique_ptr<BinaryClassifier>>& bank,
                            const std::vector<SampleView>& samples);

/// Trains the meta-level network on a score matrix by full-batch
/// mean-squared-error descent, early-stopping on the subject-level
/// correlation over the validation scores (when provided).
MetaNet train_meta_stage(const Eigen::Ref<const Eigen::MatrixXd>& train_scores,
                         const Eigen::Ref<const Eigen::VectorXd>& train_targets,
                         const Eigen::Ref<const Eigen::MatrixXd>& val_scores,
                         const Eigen::Ref<const Eigen::VectorXd>& val_targets,
                         const std::vector<std::string>& val_subject_ids,
                         const TrainConfig& config);

/// Trains one binary classifier per threshold (grid-searched on validation
/// ROC AUC), then the meta-level network on the bank's training scores.
/// Thresholds whose training labels collapse to one class get a constant
/// scorer and a recorded warning.
Metamodel train_metamodel(const std::vector<SampleView>& train,
                          const std::vector<SampleView>& val,
                          const MetamodelConfig& config, const PipelineInfo& pipeline);

/// Trains the traditional regression counterpart of `kind` on the identical
/// samples and feature view.
std::unique_ptr<Regressor> train_baseline(LearnerKind kind,
                                          const std::vector<SampleView>& train,
                                          const std::vector<SampleView>& val,
                                          const MetamodelConfig& config);

std::map<std::string, double> predict_regressor(const Regressor& model,
                                                const std::vector<SampleView>& samples);

/// Which views build_sample_views must fill for this configuration.
struct ViewNeeds {
  bool fc = false;
  bool seq = false;
};
ViewNeeds views_needed(const MetamodelConfig& config, bool with_baseline);

std::vector<SampleView> build_sample_views(const Dataset& dataset,
                                           const std::vector<std::string>& subject_ids,
                                           const PipelineInfo& pipeline, ViewNeeds needs);

std::map<std::string, double> subject_truth(const Dataset& dataset,
                                            const std::vector<std::string>& subject_ids);

/// Correlation between predictions and true scores over the prediction map's
/// subjects; absent when undefined (constant vector).
std::optional<double> correlation_vs_truth(const std::map<std::string, double>& preds,
                                           const std::map<std::string, double>& truth);

/// Generalization method 1: every previously trained metamodel predicts the
/// entire new dataset through its own frozen preprocessing; reports one
/// correlation per model, their mean/SD, and the significance of the mean.
EvalReport generalize_direct(const std::vector<const Metamodel*>& models,
                             const Dataset& new_data);

/// Generalization method 2: the bank stays frozen; a fresh meta-level
/// network is trained per fold of the new data and evaluated on that fold's
/// test subjects. Reports per-fold correlations plus the pooled correlation
/// over all concatenated test predictions with its significance.
EvalReport generalize_retrain_meta(const Metamodel& bank_source,
                                   const std::vector<Split>& new_splits,
                                   const Dataset& new_data, const TrainConfig& meta_train);

void save_metamodel(const Metamodel& model, const std::filesystem::path& dir);
Metamodel load_metamodel(const std::filesystem::path& dir);

}  // namespace metareg
