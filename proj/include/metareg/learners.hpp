#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "metareg/nets.hpp"
#include "metareg/util.hpp"

namespace metareg {

enum class LearnerKind { LR, LinearSVM, RandomForest, MLP, LSTM };
enum class RegressorKind { LinearRegression, LinearSVR, RandomForestReg, MLPReg, LSTMReg };
enum class InputView { FeatureVector, SequenceInput };

std::string to_string(LearnerKind kind);
std::string to_string(RegressorKind kind);
std::string to_string(InputView view);
LearnerKind learner_kind_from_string(const std::string& name);
RegressorKind regressor_kind_from_string(const std::string& name);
InputView input_view_from_string(const std::string& name);

/// The traditional-regression counterpart of a base classifier kind.
RegressorKind regressor_for(LearnerKind kind);

/// Which feature view a learner kind consumes.
InputView view_for(LearnerKind kind);

/// Class weighting by the majority/minority sample ratio: the minority class
/// gets weight n_majority / n_minority, the majority class weight 1.
struct ClassWeights {
  double w_pos = 1.0;
  double w_neg = 1.0;
  std::int64_t n_pos = 0;
  std::int64_t n_neg = 0;

  double weight_for(double cls) const { return cls >= 0.5 ? w_pos : w_neg; }
};

ClassWeights class_weights(const Eigen::Ref<const Eigen::VectorXd>& labels);

/// Mean over samples of -w_i [y log s + (1-y) log(1-s)], scores clamped away
/// from {0,1} by 1e-12. `classes` carries the pre-noise class of each sample
/// for weighting; the 3-argument overload derives classes by rounding labels.
double weighted_bce(const Eigen::Ref<const Eigen::VectorXd>& scores,
                    const Eigen::Ref<const Eigen::VectorXd>& labels,
                    const Eigen::Ref<const Eigen::VectorXd>& classes,
                    const ClassWeights& weights);
double weighted_bce(const Eigen::Ref<const Eigen::VectorXd>& scores,
                    const Eigen::Ref<const Eigen::VectorXd>& labels,
                    const ClassWeights& weights);

/// Area under the ROC curve (rank statistic, tie-aware). Returns 0.5 when
/// only one class is present.
double auc(const Eigen::Ref<const Eigen::VectorXd>& scores,
           const Eigen::Ref<const Eigen::VectorXd>& labels);

/// Pearson correlation between per-subject mean predictions and targets.
/// With an empty id list the correlation is computed at the sample level.
/// Returns -2 when undefined (constant vectors), so callers can rank it
/// below any real correlation.
double subject_level_r(const Eigen::Ref<const Eigen::VectorXd>& preds,
                       const Eigen::Ref<const Eigen::VectorXd>& targets,
                       const std::vector<std::string>& subject_ids);

/// Shared first-order training settings for the neural learners.
struct TrainConfig {
  int epochs = 200;
  double learning_rate = 1e-3;
  double l2 = 1e-4;
  double dropout_rate = 0.2;       // in [0, 1)
  double target_noise_sd = 0.1;    // Gaussian noise on classifier targets
  std::uint64_t seed = 0;
  int early_stop_patience = 20;
  int batch_size = 32;
};

// ---------------------------------------------------------------------------
// Model interfaces

class BinaryClassifier {
 public:
  virtual ~BinaryClassifier() = default;
  virtual LearnerKind kind() const = 0;
  virtual InputView input_view() const = 0;
  /// Score in [0, 1] from a feature vector. Throws on view mismatch.
  virtual double predict_score(const Eigen::Ref<const Eigen::VectorXd>& features) const;
  /// Score in [0, 1] from a sequence (time x features). Throws on view mismatch.
  virtual double predict_score(const Eigen::Ref<const Eigen::MatrixXd>& sequence) const;
  virtual nlohmann::json to_json() const = 0;
};

class Regressor {
 public:
  virtual ~Regressor() = default;
  virtual RegressorKind kind() const = 0;
  virtual InputView input_view() const = 0;
  virtual double predict(const Eigen::Ref<const Eigen::VectorXd>& features) const;
  virtual double predict(const Eigen::Ref<const Eigen::MatrixXd>& sequence) const;
  virtual nlohmann::json to_json() const = 0;
};

std::unique_ptr<BinaryClassifier> load_classifier(const nlohmann::json& doc);
std::unique_ptr<Regressor> load_regressor(const nlohmann::json& doc);

// ---------------------------------------------------------------------------
// Hyperparameters

struct LrHyper {
  double l2 = 1e-2;
  int iters = 400;
  double lr = 0.1;
};

struct SvmHyper {
  double box = 1.0;    // box constraint C; Pegasos lambda = 1/(C n)
  double scale = 1.0;  // kernel scale: inputs are divided by this
  int epochs = 40;
};

struct SvrHyper {
  double box = 1.0;
  double scale = 1.0;
  double epsilon = 0.1;
  int epochs = 40;
};

struct RfHyper {
  int trees = 100;
  int max_depth = 0;  // 0 = unlimited
  int min_samples_leaf = 1;
  bool bootstrap = true;
};

struct MlpHyper {
  int h1 = 100;
  int h2 = 10;
};

/// Paper-scale hidden sizes for wide inputs, desk-scale for small ones.
MlpHyper default_mlp_hyper(Eigen::Index input_dim);

struct LstmHyper {
  int hidden = 16;
};

// ---------------------------------------------------------------------------
// Concrete models (exposed for tests, hand construction and serialization)

class ConstantScorer final : public BinaryClassifier {
 public:
  ConstantScorer(double score, LearnerKind kind, InputView view)
      : score_(score), kind_(kind), view_(view) {}
  LearnerKind kind() const override { return kind_; }
  InputView input_view() const override { return view_; }
  double predict_score(const Eigen::Ref<const Eigen::VectorXd>&) const override {
    return score_;
  }
  double predict_score(const Eigen::Ref<const Eigen::MatrixXd>&) const override {
    return score_;
  }
  nlohmann::json to_json() const override;
  double value() const { return score_; }

 private:
  double score_;
  LearnerKind kind_;
  InputView view_;
};

class LogisticModel final : public BinaryClassifier {
 public:
  LogisticModel(Eigen::VectorXd w, double b, LrHyper hyper)
      : w_(std::move(w)), b_(b), hyper_(hyper) {}
  LearnerKind kind() const override { return LearnerKind::LR; }
  InputView input_view() const override { return InputView::FeatureVector; }
  double predict_score(const Eigen::Ref<const Eigen::VectorXd>& x) const override;
  nlohmann::json to_json() const override;
  const Eigen::VectorXd& weights() const { return w_; }
  double bias() const { return b_; }

 private:
  Eigen::VectorXd w_;
  double b_;
  LrHyper hyper_;
};

class LinearSvmModel final : public BinaryClassifier {
 public:
  // w is augmented: the last entry multiplies a constant 1 bias feature.
  LinearSvmModel(Eigen::VectorXd w, SvmHyper hyper) : w_(std::move(w)), hyper_(hyper) {}
  LearnerKind kind() const override { return LearnerKind::LinearSVM; }
  InputView input_view() const override { return InputView::FeatureVector; }
  double predict_score(const Eigen::Ref<const Eigen::VectorXd>& x) const override;
  double margin(const Eigen::Ref<const Eigen::VectorXd>& x) const;
  nlohmann::json to_json() const override;

 private:
  Eigen::VectorXd w_;
  SvmHyper hyper_;
};

struct TreeNode {
  int feature = -1;  // -1 marks a leaf
  double threshold = 0.0;
  int left = -1;
  int right = -1;
  double value = 0.0;  // leaf vote (classification) or leaf mean (regression)

  bool leaf() const { return feature < 0; }
};
using Tree = std::vector<TreeNode>;

double tree_predict(const Tree& tree, const Eigen::Ref<const Eigen::VectorXd>& x);

class ForestModel final : public BinaryClassifier {
 public:
  ForestModel(std::vector<Tree> trees, RfHyper hyper)
      : trees_(std::move(trees)), hyper_(hyper) {}
  LearnerKind kind() const override { return LearnerKind::RandomForest; }
  InputView input_view() const override { return InputView::FeatureVector; }
  double predict_score(const Eigen::Ref<const Eigen::VectorXd>& x) const override;
  nlohmann::json to_json() const override;
  const std::vector<Tree>& trees() const { return trees_; }

 private:
  std::vector<Tree> trees_;
  RfHyper hyper_;
};

class MlpModel final : public BinaryClassifier {
 public:
  MlpModel(MlpNet net, MlpHyper hyper) : net_(std::move(net)), hyper_(hyper) {}
  LearnerKind kind() const override { return LearnerKind::MLP; }
  InputView input_view() const override { return InputView::FeatureVector; }
  double predict_score(const Eigen::Ref<const Eigen::VectorXd>& x) const override;
  nlohmann::json to_json() const override;
  const MlpNet& net() const { return net_; }

 private:
  MlpNet net_;
  MlpHyper hyper_;
};

class LstmModel final : public BinaryClassifier {
 public:
  LstmModel(LstmNet net, LstmHyper hyper) : net_(std::move(net)), hyper_(hyper) {}
  LearnerKind kind() const override { return LearnerKind::LSTM; }
  InputView input_view() const override { return InputView::SequenceInput; }
  double predict_score(const Eigen::Ref<const Eigen::MatrixXd>& seq) const override;
  nlohmann::json to_json() const override;
  const LstmNet& net() const { return net_; }

 private:
  LstmNet net_;
  LstmHyper hyper_;
};

class LinearRegModel final : public Regressor {
 public:
  LinearRegModel(Eigen::VectorXd w, double b, double l2)
      : w_(std::move(w)), b_(b), l2_(l2) {}
  RegressorKind kind() const override { return RegressorKind::LinearRegression; }
  InputView input_view() const override { return InputView::FeatureVector; }
  double predict(const Eigen::Ref<const Eigen::VectorXd>& x) const override;
  nlohmann::json to_json() const override;
  const Eigen::VectorXd& coefficients() const { return w_; }
  double intercept() const { return b_; }

 private:
  Eigen::VectorXd w_;
  double b_;
  double l2_;
};

class LinearSvrModel final : public Regressor {
 public:
  LinearSvrModel(Eigen::VectorXd w, SvrHyper hyper) : w_(std::move(w)), hyper_(hyper) {}
  RegressorKind kind() const override { return RegressorKind::LinearSVR; }
  InputView input_view() const override { return InputView::FeatureVector; }
  double predict(const Eigen::Ref<const Eigen::VectorXd>& x) const override;
  nlohmann::json to_json() const override;

 private:
  Eigen::VectorXd w_;  // augmented bias, inputs divided by scale
  SvrHyper hyper_;
};

class ForestRegModel final : public Regressor {
 public:
  ForestRegModel(std::vector<Tree> trees, RfHyper hyper)
      : trees_(std::move(trees)), hyper_(hyper) {}
  RegressorKind kind() const override { return RegressorKind::RandomForestReg; }
  InputView input_view() const override { return InputView::FeatureVector; }
  double predict(const Eigen::Ref<const Eigen::VectorXd>& x) const override;
  nlohmann::json to_json() const override;

 private:
  std::vector<Tree> trees_;
  RfHyper hyper_;
};

class MlpRegModel final : public Regressor {
 public:
  MlpRegModel(MlpNet net, MlpHyper hyper) : net_(std::move(net)), hyper_(hyper) {}
  RegressorKind kind() const override { return RegressorKind::MLPReg; }
  InputView input_view() const override { return InputView::FeatureVector; }
  double predict(const Eigen::Ref<const Eigen::VectorXd>& x) const override;
  nlohmann::json to_json() const override;

 private:
  MlpNet net_;
  MlpHyper hyper_;
};

class LstmRegModel final : public Regressor {
 public:
  LstmRegModel(LstmNet net, LstmHyper hyper) : net_(std::move(net)), hyper_(hyper) {}
  RegressorKind kind() const override { return RegressorKind::LSTMReg; }
  InputView input_view() const override { return InputView::SequenceInput; }
  double predict(const Eigen::Ref<const Eigen::MatrixXd>& seq) const override;
  nlohmann::json to_json() const override;

 private:
  LstmNet net_;
  LstmHyper hyper_;
};

// ---------------------------------------------------------------------------
// Training entry points. Tabular X has one sample per row.

std::unique_ptr<BinaryClassifier> fit_lr(const Eigen::Ref<const Eigen::MatrixXd>& x,
                                         const Eigen::Ref<const Eigen::VectorXd>& y,
                                         const ClassWeights& weights, const LrHyper& hyper,
                                         std::uint64_t seed);

std::unique_ptr<BinaryClassifier> fit_svm(const Eigen::Ref<const Eigen::MatrixXd>& x,
                                          const Eigen::Ref<const Eigen::VectorXd>& y,
                                          const ClassWeights& weights,
                                          const SvmHyper& hyper, std::uint64_t seed);

std::unique_ptr<BinaryClassifier> fit_rf(const Eigen::Ref<const Eigen::MatrixXd>& x,
                                         const Eigen::Ref<const Eigen::VectorXd>& y,
                                         const ClassWeights& weights, const RfHyper& hyper,
                                         std::uint64_t seed);

/// Validation data (when non-empty) drives early stopping on ROC AUC.
std::unique_ptr<BinaryClassifier> fit_mlp(const Eigen::Ref<const Eigen::MatrixXd>& x,
                                          const Eigen::Ref<const Eigen::VectorXd>& y,
                                          const Eigen::Ref<const Eigen::MatrixXd>& x_val,
                                          const Eigen::Ref<const Eigen::VectorXd>& y_val,
                                          const ClassWeights& weights,
                                          const MlpHyper& hyper, const TrainConfig& config);

std::unique_ptr<BinaryClassifier> fit_lstm(const std::vector<Eigen::MatrixXd>& sequences,
                                           const Eigen::Ref<const Eigen::VectorXd>& y,
                                           const std::vector<Eigen::MatrixXd>& val_sequences,
                                           const Eigen::Ref<const Eigen::VectorXd>& y_val,
                                           const ClassWeights& weights,
                                           const LstmHyper& hyper,
                                           const TrainConfig& config);

/// Ridge regression, closed form.
std::unique_ptr<Regressor> fit_linreg(const Eigen::Ref<const Eigen::MatrixXd>& x,
                                      const Eigen::Ref<const Eigen::VectorXd>& y,
                                      double l2);

std::unique_ptr<Regressor> fit_svr(const Eigen::Ref<const Eigen::MatrixXd>& x,
                                   const Eigen::Ref<const Eigen::VectorXd>& y,
                                   const SvrHyper& hyper, std::uint64_t seed);

std::unique_ptr<Regressor> fit_rf_reg(const Eigen::Ref<const Eigen::MatrixXd>& x,
                                      const Eigen::Ref<const Eigen::VectorXd>& y,
                                      const RfHyper& hyper, std::uint64_t seed);

/// Neural regressors weight samples by inverse integer-score-bin frequency
/// and early-stop on subject-level correlation when validation subject ids
/// are supplied.
std::unique_ptr<Regressor> fit_mlp_reg(const Eigen::Ref<const Eigen::MatrixXd>& x,
                                       const Eigen::Ref<const Eigen::VectorXd>& y,
                                       const Eigen::Ref<const Eigen::MatrixXd>& x_val,
                                       const Eigen::Ref<const Eigen::VectorXd>& y_val,
                                       const std::vector<std::string>& val_subject_ids,
                                       const MlpHyper& hyper, const TrainConfig& config);

std::unique_ptr<Regressor> fit_lstm_reg(const std::vector<Eigen::MatrixXd>& sequences,
                                        const Eigen::Ref<const Eigen::VectorXd>& y,
                                        const std::vector<Eigen::MatrixXd>& val_sequences,
                                        const Eigen::Ref<const Eigen::VectorXd>& y_val,
                                        const std::vector<std::string>& val_subject_ids,
                                        const LstmHyper& hyper, const TrainConfig& config);

/// Inverse-frequency sample weights over integer score bins, normalized to
/// mean 1 over the training set.
Eigen::VectorXd score_bin_weights(const Eigen::Ref<const Eigen::VectorXd>& y);

// ---------------------------------------------------------------------------
// Grid search

template <typename Setting, typename Model>
struct GridOutcome {
  Setting setting{};
  std::size_t index = 0;
  double metric = 0.0;
  std::unique_ptr<Model> model;  // the model trained at the winning setting
};

/// Trains one model per setting and returns the argmax of `metric` on the
/// validation data (computed inside `metric`). Ties keep the earliest
/// setting. Settings whose training throws are skipped; if every setting
/// fails, the last error is rethrown as TrainError.
template <typename Setting, typename TrainFn, typename MetricFn>
auto grid_search(const std::vector<Setting>& grid, TrainFn&& train, MetricFn&& metric)
    -> GridOutcome<Setting, typename std::invoke_result_t<TrainFn, const Setting&>::element_type> {
  using Model = typename std::invoke_result_t<TrainFn, const Setting&>::element_type;
  if (grid.empty()) throw TrainError("grid_search: empty grid");
  GridOutcome<Setting, Model> best;
  bool have_best = false;
  std::string last_error;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    std::unique_ptr<Model> model;
    try {
      model = train(grid[i]);
    } catch (const std::exception& e) {
      last_error = e.what();
      continue;
    }
    const double m = metric(*model);
    if (!have_best || m > best.metric) {
      best.setting = grid[i];
      best.index = i;
      best.metric = m;
      best.model = std::move(model);
      have_best = true;
    }
  }
  if (!have_best)
    throw TrainError("grid_search: every setting failed; last error: " + last_error);
  return best;
}

}  // namespace metareg
