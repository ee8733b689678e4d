#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "metareg/learners.hpp"
#include "metareg/stats.hpp"

namespace metareg {

std::string to_string(LearnerKind kind) {
  switch (kind) {
    case LearnerKind::LR: return "lr";
    case LearnerKind::LinearSVM: return "svm";
    case LearnerKind::RandomForest: return "rf";
    case LearnerKind::MLP: return "mlp";
    case LearnerKind::LSTM: return "lstm";
  }
  throw ConfigError("unknown learner kind");
}

std::string to_string(RegressorKind kind) {
  switch (kind) {
    case RegressorKind::LinearRegression: return "linreg";
    case RegressorKind::LinearSVR: return "svr";
    case RegressorKind::RandomForestReg: return "rf_reg";
    case RegressorKind::MLPReg: return "mlp_reg";
    case RegressorKind::LSTMReg: return "lstm_reg";
  }
  throw ConfigError("unknown regressor kind");
}

std::string to_string(InputView view) {
  return view == InputView::FeatureVector ? "feature_vector" : "sequence";
}

LearnerKind learner_kind_from_string(const std::string& name) {
  if (name == "lr") return LearnerKind::LR;
  if (name == "svm") return LearnerKind::LinearSVM;
  if (name == "rf") return LearnerKind::RandomForest;
  if (name == "mlp") return LearnerKind::MLP;
  if (name == "lstm") return LearnerKind::LSTM;
  throw ConfigError("unknown learner kind: " + name);
}

RegressorKind regressor_kind_from_string(const std::string& name) {
  if (name == "linreg") return RegressorKind::LinearRegression;
  if (name == "svr") return RegressorKind::LinearSVR;
  if (name == "rf_reg") return RegressorKind::RandomForestReg;
  if (name == "mlp_reg") return RegressorKind::MLPReg;
  if (name == "lstm_reg") return RegressorKind::LSTMReg;
  throw ConfigError("unknown regressor kind: " + name);
}

InputView input_view_from_string(const std::string& name) {
  if (name == "feature_vector") return InputView::FeatureVector;
  if (name == "sequence") return InputView::SequenceInput;
  throw ConfigError("unknown input view: " + name);
}

RegressorKind regressor_for(LearnerKind kind) {
  switch (kind) {
    case LearnerKind::LR: return RegressorKind::LinearRegression;
    case LearnerKind::LinearSVM: return RegressorKind::LinearSVR;
    case LearnerKind::RandomForest: return RegressorKind::RandomForestReg;
    case LearnerKind::MLP: return RegressorKind::MLPReg;
    case LearnerKind::LSTM: return RegressorKind::LSTMReg;
  }
  throw ConfigError("unknown learner kind");
}

InputView view_for(LearnerKind kind) {
  return kind == LearnerKind::LSTM ? InputView::SequenceInput : InputView::FeatureVector;
}

ClassWeights class_weights(const Eigen::Ref<const Eigen::VectorXd>& labels) {
  if (labels.size() == 0) throw DataError("class_weights: empty labels");
  ClassWeights w;
  for (Eigen::Index i = 0; i < labels.size(); ++i) {
    if (labels(i) >= 0.5)
      ++w.n_pos;
    else
      ++w.n_neg;
  }
  if (w.n_pos == 0 || w.n_neg == 0) throw TrainError("class_weights: degenerate class");
  if (w.n_pos < w.n_neg)
    w.w_pos = static_cast<double>(w.n_neg) / static_cast<double>(w.n_pos);
  else if (w.n_neg < w.n_pos)
    w.w_neg = static_cast<double>(w.n_pos) / static_cast<double>(w.n_neg);
  return w;
}

double weighted_bce(const Eigen::Ref<const Eigen::VectorXd>& scores,
                    const Eigen::Ref<const Eigen::VectorXd>& labels,
                    const Eigen::Ref<const Eigen::VectorXd>& classes,
                    const ClassWeights& weights) {
  if (scores.size() != labels.size() || scores.size() != classes.size())
    throw DataError("weighted_bce: length mismatch");
  constexpr double eps = 1e-12;
  double total = 0.0;
  for (Eigen::Index i = 0; i < scores.size(); ++i) {
    const double s = std::clamp(scores(i), eps, 1.0 - eps);
    const double y = labels(i);
    total -= weights.weight_for(classes(i)) *
             (y * std::log(s) + (1.0 - y) * std::log(1.0 - s));
  }
  return total / static_cast<double>(scores.size());
}

double weighted_bce(const Eigen::Ref<const Eigen::VectorXd>& scores,
                    const Eigen::Ref<const Eigen::VectorXd>& labels,
                    const ClassWeights& weights) {
  return weighted_bce(scores, labels, labels, weights);
}

double auc(const Eigen::Ref<const Eigen::VectorXd>& scores,
           const Eigen::Ref<const Eigen::VectorXd>& labels) {
  const Eigen::Index n = scores.size();
  if (n != labels.size()) throw DataError("auc: length mismatch");
  std::int64_t n_pos = 0;
  for (Eigen::Index i = 0; i < n; ++i)
    if (labels(i) >= 0.5) ++n_pos;
  const std::int64_t n_neg = n - n_pos;
  if (n_pos == 0 || n_neg == 0) return 0.5;

  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](Eigen::Index a, Eigen::Index b) { return scores(a) < scores(b); });

  // Mann-Whitney with average ranks over tied scores.
  double pos_rank_sum = 0.0;
  Eigen::Index i = 0;
  while (i < n) {
    Eigen::Index j = i;
    while (j < n && scores(order[static_cast<std::size_t>(j)]) ==
                        scores(order[static_cast<std::size_t>(i)]))
      ++j;
    const double avg_rank = 0.5 * static_cast<double>(i + j + 1);  // 1-based
    for (Eigen::Index k = i; k < j; ++k)
      if (labels(order[static_cast<std::size_t>(k)]) >= 0.5) pos_rank_sum += avg_rank;
    i = j;
  }
  const double u = pos_rank_sum - 0.5 * static_cast<double>(n_pos) *
                                      static_cast<double>(n_pos + 1);
  return u / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

double subject_level_r(const Eigen::Ref<const Eigen::VectorXd>& preds,
                       const Eigen::Ref<const Eigen::VectorXd>& targets,
                       const std::vector<std::string>& subject_ids) {
  if (!subject_ids.empty() &&
      static_cast<Eigen::Index>(subject_ids.size()) != preds.size())
    throw DataError("subject_level_r: id count mismatch");
  try {
    if (subject_ids.empty()) return pearson(preds, targets);
    std::map<std::string, std::pair<double, int>> pred_acc;
    std::map<std::string, double> truth;
    for (Eigen::Index i = 0; i < preds.size(); ++i) {
      auto& slot = pred_acc[subject_ids[static_cast<std::size_t>(i)]];
      slot.first += preds(i);
      slot.second += 1;
      truth[subject_ids[static_cast<std::size_t>(i)]] = targets(i);
    }
    Eigen::VectorXd p(static_cast<Eigen::Index>(pred_acc.size()));
    Eigen::VectorXd t(static_cast<Eigen::Index>(pred_acc.size()));
    Eigen::Index k = 0;
    for (const auto& [id, slot] : pred_acc) {
      p(k) = slot.first / slot.second;
      t(k) = truth[id];
      ++k;
    }
    return pearson(p, t);
  } catch (const DataError&) {
    return -2.0;
  }
}

MlpHyper default_mlp_hyper(Eigen::Index input_dim) {
  if (input_dim < 500) return MlpHyper{100, 10};
  return MlpHyper{1000, 100};
}

Eigen::VectorXd score_bin_weights(const Eigen::Ref<const Eigen::VectorXd>& y) {
  if (y.size() == 0) throw DataError("score_bin_weights: empty targets");
  std::map<long, long> counts;
  for (Eigen::Index i = 0; i < y.size(); ++i) counts[std::lround(y(i))]++;
  Eigen::VectorXd w(y.size());
  for (Eigen::Index i = 0; i < y.size(); ++i)
    w(i) = 1.0 / static_cast<double>(counts[std::lround(y(i))]);
  w *= static_cast<double>(y.size()) / w.sum();
  return w;
}

double BinaryClassifier::predict_score(const Eigen::Ref<const Eigen::VectorXd>&) const {
  throw DataError("predict_score: model expects the sequence input view");
}

double BinaryClassifier::predict_score(const Eigen::Ref<const Eigen::MatrixXd>&) const {
  throw DataError("predict_score: model expects the feature-vector input view");
}

double Regressor::predict(const Eigen::Ref<const Eigen::VectorXd>&) const {
  throw DataError("predict: model expects the sequence input view");
}

double Regressor::predict(const Eigen::Ref<const Eigen::MatrixXd>&) const {
  throw DataError("predict: model expects the feature-vector input view");
}

nlohmann::json ConstantScorer::to_json() const {
  return {{"schema_version", 1},
          {"kind", "constant"},
          {"hyperparams", {{"base_kind", to_string(kind_)}, {"view", to_string(view_)}}},
          {"parameters", {{"score", score_}}}};
}

}  // namespace metareg
