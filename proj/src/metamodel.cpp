#include "metareg/metamodel.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <set>

#include "serial_util.hpp"

namespace fs = std::filesystem;

namespace metareg {

using detail::mat_from_json;
using detail::mat_to_json;
using detail::vec_from_json;
using detail::vec_to_json;

ThresholdSet ThresholdSet::default_set() {
  return ThresholdSet{{0.5, 1.5, 2.5, 3.5, 4.5, 5.5, 6.5}};
}

void ThresholdSet::validate() const {
  if (values.empty()) throw ConfigError("thresholds: empty set");
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (values[i] == std::floor(values[i]))
      throw ConfigError("thresholds: must not coincide with integer scores");
    if (i > 0 && values[i] <= values[i - 1])
      throw ConfigError("thresholds: must be strictly increasing");
  }
}

std::vector<int> threshold_labels(int score, const ThresholdSet& thresholds) {
  std::vector<int> bits(thresholds.size());
  for (std::size_t k = 0; k < thresholds.size(); ++k)
    bits[k] = score > thresholds.values[k] ? 1 : 0;
  return bits;
}

TrainConfig default_meta_train() {
  TrainConfig config;
  config.epochs = 2000;
  config.learning_rate = 1e-2;
  config.l2 = 0.0;
  config.dropout_rate = 0.0;
  config.target_noise_sd = 0.0;
  config.early_stop_patience = 100;
  config.batch_size = 0;  // full batch
  return config;
}

LearnerKind MetamodelConfig::kind_at(std::size_t threshold_index) const {
  if (bank_kinds.empty()) return base_kind;
  if (threshold_index >= bank_kinds.size())
    throw ConfigError("bank_kinds: fewer entries than thresholds");
  return bank_kinds[threshold_index];
}

ViewNeeds views_needed(const MetamodelConfig& config, bool with_baseline) {
  ViewNeeds needs;
  for (std::size_t k = 0; k < config.thresholds.size(); ++k) {
    const InputView view = view_for(config.kind_at(k));
    needs.fc |= view == InputView::FeatureVector;
    needs.seq |= view == InputView::SequenceInput;
  }
  if (with_baseline) {
    const InputView view = view_for(config.base_kind);
    needs.fc |= view == InputView::FeatureVector;
    needs.seq |= view == InputView::SequenceInput;
  }
  return needs;
}

std::vector<SampleView> build_sample_views(const Dataset& dataset,
                                           const std::vector<std::string>& subject_ids,
                                           const PipelineInfo& pipeline, ViewNeeds needs) {
  if (pipeline.rois > 0 && dataset.rois != pipeline.rois)
    throw DataError("dataset ROI count " + std::to_string(dataset.rois) +
                    " does not match the model's " + std::to_string(pipeline.rois));
  std::vector<SampleView> views;
  for (const auto& id : subject_ids) {
    const Subject& subject = dataset.subject(id);
    const auto windows = window(subject.series, pipeline.window_length, pipeline.stride);
    const Eigen::Vector2d pheno = pipeline.scaler.transform(subject.age, subject.fiq);
    for (std::size_t w = 0; w < windows.size(); ++w) {
      SampleView view;
      view.subject_id = id;
      view.window_index = static_cast<int>(w);
      view.true_score = static_cast<double>(subject.score);
      if (needs.fc) view.fc = upper_triangle(connectivity(windows[w]));
      if (needs.seq) view.seq = attach_phenotypes(windows[w], pheno);
      views.push_back(std::move(view));
    }
  }
  return views;
}

std::map<std::string, double> subject_truth(const Dataset& dataset,
                                            const std::vector<std::string>& subject_ids) {
  std::map<std::string, double> truth;
  for (const auto& id : subject_ids)
    truth[id] = static_cast<double>(dataset.subject(id).score);
  return truth;
}

std::optional<double> correlation_vs_truth(const std::map<std::string, double>& preds,
                                           const std::map<std::string, double>& truth) {
  if (preds.size() < 3) return std::nullopt;
  Eigen::VectorXd p(static_cast<Eigen::Index>(preds.size()));
  Eigen::VectorXd t(static_cast<Eigen::Index>(preds.size()));
  Eigen::Index i = 0;
  for (const auto& [id, value] : preds) {
    auto it = truth.find(id);
    if (it == truth.end()) throw DataError("no true score for subject " + id);
    p(i) = value;
    t(i) = it->second;
    ++i;
  }
  try {
    return pearson(p, t);
  } catch (const DataError&) {
    return std::nullopt;  // constant predictions: correlation undefined
  }
}

// ---------------------------------------------------------------------------
// Scoring

namespace {

double sample_score(const BinaryClassifier& model, const SampleView& sample) {
  if (model.input_view() == InputView::FeatureVector) {
    if (sample.fc.size() == 0)
      throw DataError("sample lacks the feature-vector view this model needs");
    return model.predict_score(sample.fc);
  }
  if (sample.seq.size() == 0)
    throw DataError("sample lacks the sequence view this model needs");
  return model.predict_score(sample.seq);
}

Eigen::VectorXd labels_for_threshold(const std::vector<SampleView>& samples,
                                     double threshold) {
  Eigen::VectorXd labels(static_cast<Eigen::Index>(samples.size()));
  for (std::size_t i = 0; i < samples.size(); ++i)
    labels(static_cast<Eigen::Index>(i)) = samples[i].true_score > threshold ? 1.0 : 0.0;
  return labels;
}

Eigen::MatrixXd fc_matrix(const std::vector<SampleView>& samples) {
  if (samples.empty()) return {};
  const Eigen::Index d = samples.front().fc.size();
  Eigen::MatrixXd x(static_cast<Eigen::Index>(samples.size()), d);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (samples[i].fc.size() != d) throw DataError("inconsistent feature dimensions");
    x.row(static_cast<Eigen::Index>(i)) = samples[i].fc.transpose();
  }
  return x;
}

std::vector<Eigen::MatrixXd> seq_list(const std::vector<SampleView>& samples) {
  std::vector<Eigen::MatrixXd> seqs;
  seqs.reserve(samples.size());
  for (const auto& s : samples) seqs.push_back(s.seq);
  return seqs;
}

Eigen::VectorXd tabular_scores(const BinaryClassifier& model, const Eigen::MatrixXd& x) {
  Eigen::VectorXd scores(x.rows());
  for (Eigen::Index i = 0; i < x.rows(); ++i)
    scores(i) = model.predict_score(Eigen::VectorXd(x.row(i).transpose()));
  return scores;
}

Eigen::VectorXd sequence_scores(const BinaryClassifier& model,
                                const std::vector<Eigen::MatrixXd>& seqs) {
  Eigen::VectorXd scores(static_cast<Eigen::Index>(seqs.size()));
  for (std::size_t i = 0; i < seqs.size(); ++i)
    scores(static_cast<Eigen::Index>(i)) = model.predict_score(seqs[i]);
  return scores;
}

std::vector<std::string> ids_of(const std::vector<SampleView>& samples) {
  std::vector<std::string> ids;
  ids.reserve(samples.size());
  for (const auto& s : samples) ids.push_back(s.subject_id);
  return ids;
}

Eigen::VectorXd true_scores_of(const std::vector<SampleView>& samples) {
  Eigen::VectorXd y(static_cast<Eigen::Index>(samples.size()));
  for (std::size_t i = 0; i < samples.size(); ++i)
    y(static_cast<Eigen::Index>(i)) = samples[i].true_score;
  return y;
}

bool single_class(const Eigen::VectorXd& labels) {
  for (Eigen::Index i = 1; i < labels.size(); ++i)
    if (labels(i) != labels(0)) return false;
  return true;
}

// Trains the bank model for one threshold, grid-searching on validation AUC.
std::unique_ptr<BinaryClassifier> train_base_model(
    LearnerKind kind, std::size_t threshold_index, const Eigen::MatrixXd& x_tr,
    const std::vector<Eigen::MatrixXd>& seq_tr, const Eigen::VectorXd& labels_tr,
    const Eigen::MatrixXd& x_vs, const std::vector<Eigen::MatrixXd>& seq_vs,
    const Eigen::VectorXd& labels_vs, const MetamodelConfig& config) {
  const ClassWeights weights = class_weights(labels_tr);
  const std::uint64_t seed_base =
      derive_seed(config.seed, "base_" + std::to_string(threshold_index));
  const auto tab_metric = [&](const BinaryClassifier& m) {
    return x_vs.rows() ? auc(tabular_scores(m, x_vs), labels_vs) : 0.5;
  };
  const auto seq_metric = [&](const BinaryClassifier& m) {
    return seq_vs.empty() ? 0.5 : auc(sequence_scores(m, seq_vs), labels_vs);
  };

  switch (kind) {
    case LearnerKind::LR: {
      auto outcome = grid_search(
          config.grids.lr_l2,
          [&](const double& l2) {
            LrHyper hyper;
            hyper.l2 = l2;
            return fit_lr(x_tr, labels_tr, weights, hyper,
                          derive_seed(seed_base, "l2_" + format_double(l2)));
          },
          tab_metric);
      return std::move(outcome.model);
    }
    case LearnerKind::LinearSVM: {
      std::vector<std::pair<double, double>> grid;
      for (double box : config.grids.svm_box)
        for (double scale : config.grids.svm_scale) grid.emplace_back(box, scale);
      auto outcome = grid_search(
          grid,
          [&](const std::pair<double, double>& setting) {
            SvmHyper hyper;
            hyper.box = setting.first;
            hyper.scale = setting.second;
            return fit_svm(x_tr, labels_tr, weights, hyper,
                           derive_seed(seed_base, "box_" + format_double(setting.first) +
                                                      "_scale_" +
                                                      format_double(setting.second)));
          },
          tab_metric);
      return std::move(outcome.model);
    }
    case LearnerKind::RandomForest: {
      auto outcome = grid_search(
          config.grids.rf_trees,
          [&](const int& trees) {
            RfHyper hyper;
            hyper.trees = trees;
            return fit_rf(x_tr, labels_tr, weights, hyper,
                          derive_seed(seed_base, "trees_" + std::to_string(trees)));
          },
          tab_metric);
      return std::move(outcome.model);
    }
    case LearnerKind::MLP: {
      std::vector<MlpHyper> grid = config.grids.mlp_hidden;
      if (grid.empty()) grid.push_back(default_mlp_hyper(x_tr.cols()));
      auto outcome = grid_search(
          grid,
          [&](const MlpHyper& hyper) {
            TrainConfig train = config.base_train;
            train.seed = derive_seed(seed_base, "h_" + std::to_string(hyper.h1) + "_" +
                                                    std::to_string(hyper.h2));
            return fit_mlp(x_tr, labels_tr, x_vs, labels_vs, weights, hyper, train);
          },
          tab_metric);
      return std::move(outcome.model);
    }
    case LearnerKind::LSTM: {
      auto outcome = grid_search(
          config.grids.lstm_hidden,
          [&](const int& hidden) {
            TrainConfig train = config.base_train;
            train.seed = derive_seed(seed_base, "hidden_" + std::to_string(hidden));
            return fit_lstm(seq_tr, labels_tr, seq_vs, labels_vs, weights,
                            LstmHyper{hidden}, train);
          },
          seq_metric);
      return std::move(outcome.model);
    }
  }
  throw ConfigError("unknown learner kind");
}

}  // namespace

Eigen::MatrixXd bank_scores(const std::vector<std::unique_ptr<BinaryClassifier>>& bank,
                            const std::vector<SampleView>& samples) {
  Eigen::MatrixXd scores(static_cast<Eigen::Index>(samples.size()),
                         static_cast<Eigen::Index>(bank.size()));
  for (std::size_t k = 0; k < bank.size(); ++k)
    for (std::size_t i = 0; i < samples.size(); ++i)
      scores(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) =
          sample_score(*bank[k], samples[i]);
  return scores;
}

Eigen::MatrixXd Metamodel::bank_scores(const std::vector<SampleView>& samples) const {
  return metareg::bank_scores(bank, samples);
}

std::map<std::string, double> Metamodel::predict(
    const std::vector<SampleView>& samples) const {
  if (samples.empty()) throw DataError("predict: no samples");
  const Eigen::MatrixXd scores = bank_scores(samples);
  Eigen::VectorXd outputs = meta.forward(scores);
  if (clip_predictions)
    outputs = outputs.array().max(0.0).min(8.0);
  std::vector<std::pair<std::string, double>> per_sample;
  per_sample.reserve(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i)
    per_sample.emplace_back(samples[i].subject_id, outputs(static_cast<Eigen::Index>(i)));
  return aggregate_by_subject(per_sample);
}

MetaNet train_meta_stage(const Eigen::Ref<const Eigen::MatrixXd>& train_scores,
                         const Eigen::Ref<const Eigen::VectorXd>& train_targets,
                         const Eigen::Ref<const Eigen::MatrixXd>& val_scores,
                         const Eigen::Ref<const Eigen::VectorXd>& val_targets,
                         const std::vector<std::string>& val_subject_ids,
                         const TrainConfig& config) {
  if (train_scores.rows() != train_targets.size())
    throw DataError("train_meta_stage: target count mismatch");
  if (train_scores.rows() < 2) throw TrainError("train_meta_stage: too few samples");

  Rng rng(derive_seed(config.seed, "meta_stage"));
  MetaNet net = MetaNet::init(train_scores.cols(), rng);
  MetaNet grad = net;
  AdamState adam(config.learning_rate);
  const bool use_val = val_scores.rows() > 0;

  MetaNet best = net;
  double best_metric = -std::numeric_limits<double>::infinity();
  int since_best = 0;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    const double loss = net.loss_grad(train_scores, train_targets, config.l2, grad);
    if (!std::isfinite(loss)) throw TrainError("train_meta_stage: non-finite loss");
    adam.step(net.params(), grad.params());
    if (use_val) {
      const Eigen::VectorXd preds = net.forward(val_scores);
      const double metric = subject_level_r(preds, val_targets, val_subject_ids);
      if (metric > best_metric) {
        best_metric = metric;
        best = net;
        since_best = 0;
      } else if (++since_best > config.early_stop_patience) {
        break;
      }
    }
  }
  if (use_val && std::isfinite(best_metric)) return best;
  return net;
}

Metamodel train_metamodel(const std::vector<SampleView>& train,
                          const std::vector<SampleView>& val,
                          const MetamodelConfig& config, const PipelineInfo& pipeline) {
  config.thresholds.validate();
  if (train.size() < 2) throw TrainError("train_metamodel: too few training samples");
  {
    // Training and validation must come from disjoint subjects.
    std::set<std::string> tr_ids(ids_of(train).begin(), ids_of(train).end());
    for (const auto& s : val)
      if (tr_ids.count(s.subject_id))
        throw DataError("train_metamodel: subject " + s.subject_id +
                        " appears in both train and val");
  }

  const std::size_t n_thresholds = config.thresholds.size();
  bool need_fc = false, need_seq = false;
  for (std::size_t k = 0; k < n_thresholds; ++k) {
    (view_for(config.kind_at(k)) == InputView::FeatureVector ? need_fc : need_seq) = true;
  }

  const Eigen::MatrixXd x_tr = need_fc ? fc_matrix(train) : Eigen::MatrixXd();
  const Eigen::MatrixXd x_vs = need_fc ? fc_matrix(val) : Eigen::MatrixXd();
  const std::vector<Eigen::MatrixXd> seq_tr =
      need_seq ? seq_list(train) : std::vector<Eigen::MatrixXd>();
  const std::vector<Eigen::MatrixXd> seq_vs =
      need_seq ? seq_list(val) : std::vector<Eigen::MatrixXd>();

  Metamodel model;
  model.thresholds = config.thresholds;
  model.base_kind = config.base_kind;
  model.pipeline = pipeline;
  model.clip_predictions = config.clip_predictions;

  for (std::size_t k = 0; k < n_thresholds; ++k) {
    const LearnerKind kind = config.kind_at(k);
    const Eigen::VectorXd labels_tr =
        labels_for_threshold(train, config.thresholds.values[k]);
    const Eigen::VectorXd labels_vs = labels_for_threshold(val, config.thresholds.values[k]);
    if (single_class(labels_tr)) {
      const double prior = labels_tr.mean();
      model.bank.push_back(
          std::make_unique<ConstantScorer>(prior, kind, view_for(kind)));
      model.warnings.push_back("threshold " + format_double(config.thresholds.values[k]) +
                               ": single class in training data, using constant scorer");
      continue;
    }
    model.bank.push_back(train_base_model(kind, k, x_tr, seq_tr, labels_tr, x_vs, seq_vs,
                                          labels_vs, config));
  }

  const Eigen::MatrixXd s_tr = bank_scores(model.bank, train);
  const Eigen::MatrixXd s_vs =
      val.empty() ? Eigen::MatrixXd() : bank_scores(model.bank, val);
  TrainConfig meta_cfg = config.meta_train;
  meta_cfg.seed = derive_seed(config.seed, "meta");
  model.meta = train_meta_stage(s_tr, true_scores_of(train), s_vs, true_scores_of(val),
                                ids_of(val), meta_cfg);
  return model;
}

std::unique_ptr<Regressor> train_baseline(LearnerKind kind,
                                          const std::vector<SampleView>& train,
                                          const std::vector<SampleView>& val,
                                          const MetamodelConfig& config) {
  const Eigen::VectorXd y_tr = true_scores_of(train);
  const Eigen::VectorXd y_vs = true_scores_of(val);
  const std::uint64_t seed = derive_seed(config.seed, "baseline");
  switch (regressor_for(kind)) {
    case RegressorKind::LinearRegression:
      return fit_linreg(fc_matrix(train), y_tr, config.grids.lr_l2.front());
    case RegressorKind::LinearSVR:
      return fit_svr(fc_matrix(train), y_tr, SvrHyper{}, seed);
    case RegressorKind::RandomForestReg:
      return fit_rf_reg(fc_matrix(train), y_tr, RfHyper{}, seed);
    case RegressorKind::MLPReg: {
      const Eigen::MatrixXd x_tr = fc_matrix(train);
      const MlpHyper hyper = config.grids.mlp_hidden.empty()
                                 ? default_mlp_hyper(x_tr.cols())
                                 : config.grids.mlp_hidden.front();
      TrainConfig tc = config.base_train;
      tc.seed = seed;
      return fit_mlp_reg(x_tr, y_tr, fc_matrix(val), y_vs, ids_of(val), hyper, tc);
    }
    case RegressorKind::LSTMReg: {
      const LstmHyper hyper{config.grids.lstm_hidden.empty()
                                ? 16
                                : config.grids.lstm_hidden.front()};
      TrainConfig tc = config.base_train;
      tc.seed = seed;
      return fit_lstm_reg(seq_list(train), y_tr, seq_list(val), y_vs, ids_of(val), hyper,
                          tc);
    }
  }
  throw ConfigError("unknown learner kind");
}

std::map<std::string, double> predict_regressor(const Regressor& model,
                                                const std::vector<SampleView>& samples) {
  if (samples.empty()) throw DataError("predict_regressor: no samples");
  std::vector<std::pair<std::string, double>> per_sample;
  per_sample.reserve(samples.size());
  for (const auto& s : samples) {
    const double value = model.input_view() == InputView::FeatureVector
                             ? model.predict(s.fc)
                             : model.predict(s.seq);
    per_sample.emplace_back(s.subject_id, value);
  }
  return aggregate_by_subject(per_sample);
}

// ---------------------------------------------------------------------------
// Generalization

namespace {

ViewNeeds needs_of_bank(const Metamodel& model) {
  ViewNeeds needs;
  for (const auto& b : model.bank) {
    needs.fc |= b->input_view() == InputView::FeatureVector;
    needs.seq |= b->input_view() == InputView::SequenceInput;
  }
  return needs;
}

}  // namespace

EvalReport generalize_direct(const std::vector<const Metamodel*>& models,
                             const Dataset& new_data) {
  if (models.empty()) throw DataError("generalize_direct: no models");
  const auto all_ids = new_data.ids();
  const auto truth = subject_truth(new_data, all_ids);

  std::vector<FoldEntry> entries;
  for (std::size_t i = 0; i < models.size(); ++i) {
    const Metamodel& m = *models[i];
    const auto samples = build_sample_views(new_data, all_ids, m.pipeline, needs_of_bank(m));
    const auto preds = m.predict(samples);
    entries.push_back({static_cast<int>(i), "metamodel", correlation_vs_truth(preds, truth)});
  }
  EvalReport report = summarize(std::move(entries));
  const TagSummary& s = report.summary.front();
  if (s.n > 0 && new_data.subjects.size() >= 4 && std::fabs(s.mean) < 1.0) {
    const CorrelationResult sig =
        corr_significance(s.mean, static_cast<int>(new_data.subjects.size()));
    report.tests.push_back({{"name", "mean_corr_significance"},
                            {"r", sig.r},
                            {"df", sig.df},
                            {"t", sig.t_stat},
                            {"p", sig.p_two_tailed}});
  }
  return report;
}

EvalReport generalize_retrain_meta(const Metamodel& bank_source,
                                   const std::vector<Split>& new_splits,
                                   const Dataset& new_data,
                                   const TrainConfig& meta_train) {
  if (new_splits.empty()) throw DataError("generalize_retrain_meta: no splits");
  const ViewNeeds needs = needs_of_bank(bank_source);
  const auto truth = subject_truth(new_data, new_data.ids());

  std::vector<FoldEntry> entries;
  std::map<std::string, double> pooled;
  for (std::size_t f = 0; f < new_splits.size(); ++f) {
    const Split& split = new_splits[f];
    const auto tr = build_sample_views(new_data, split.train, bank_source.pipeline, needs);
    const auto vs = build_sample_views(new_data, split.val, bank_source.pipeline, needs);
    const auto ts = build_sample_views(new_data, split.test, bank_source.pipeline, needs);

    TrainConfig cfg = meta_train;
    cfg.seed = derive_seed(meta_train.seed, "retrain_fold_" + std::to_string(f));
    MetaNet meta = train_meta_stage(bank_scores(bank_source.bank, tr), true_scores_of(tr),
                                    bank_scores(bank_source.bank, vs), true_scores_of(vs),
                                    ids_of(vs), cfg);

    const Eigen::MatrixXd s_ts = bank_scores(bank_source.bank, ts);
    const Eigen::VectorXd outputs = meta.forward(s_ts);
    std::vector<std::pair<std::string, double>> per_sample;
    for (std::size_t i = 0; i < ts.size(); ++i)
      per_sample.emplace_back(ts[i].subject_id, outputs(static_cast<Eigen::Index>(i)));
    const auto preds = aggregate_by_subject(per_sample);
    entries.push_back(
        {static_cast<int>(f), "metamodel", correlation_vs_truth(preds, truth)});
    for (const auto& [id, value] : preds) pooled[id] = value;
  }

  EvalReport report = summarize(std::move(entries));
  const auto pooled_r = correlation_vs_truth(pooled, truth);
  nlohmann::json pooled_test = {{"name", "pooled_corr"},
                                {"n_subjects", pooled.size()}};
  if (pooled_r && std::fabs(*pooled_r) < 1.0 && pooled.size() >= 4) {
    const CorrelationResult sig =
        corr_significance(*pooled_r, static_cast<int>(pooled.size()));
    pooled_test["r"] = sig.r;
    pooled_test["df"] = sig.df;
    pooled_test["t"] = sig.t_stat;
    pooled_test["p"] = sig.p_two_tailed;
  } else if (pooled_r) {
    pooled_test["r"] = *pooled_r;
  }
  report.tests.push_back(std::move(pooled_test));
  return report;
}

// ---------------------------------------------------------------------------
// Persistence

namespace {

nlohmann::json meta_net_to_json(const MetaNet& net) {
  return {{"w1", mat_to_json(net.w1)},
          {"b1", vec_to_json(net.b1)},
          {"w2", vec_to_json(net.w2.transpose())},
          {"b2", net.b2}};
}

MetaNet meta_net_from_json(const nlohmann::json& doc) {
  MetaNet net;
  net.w1 = mat_from_json(doc.at("w1"));
  net.b1 = vec_from_json(doc.at("b1"));
  net.w2 = vec_from_json(doc.at("w2")).transpose();
  net.b2 = doc.at("b2").get<double>();
  return net;
}

}  // namespace

void save_metamodel(const Metamodel& model, const fs::path& dir) {
  fs::create_directories(dir);
  nlohmann::json doc = {
      {"schema_version", 1},
      {"base_kind", to_string(model.base_kind)},
      {"thresholds", model.thresholds.values},
      {"meta", meta_net_to_json(model.meta)},
      {"pipeline",
       {{"window_length", model.pipeline.window_length},
        {"stride", model.pipeline.stride},
        {"rois", model.pipeline.rois},
        {"scaler",
         {{"age_mean", model.pipeline.scaler.age_mean},
          {"age_sd", model.pipeline.scaler.age_sd},
          {"fiq_mean", model.pipeline.scaler.fiq_mean},
          {"fiq_sd", model.pipeline.scaler.fiq_sd}}}}},
      {"clip_predictions", model.clip_predictions},
      {"warnings", model.warnings},
      {"n_base", model.bank.size()}};
  std::ofstream meta_out(dir / "meta.json", std::ios::trunc);
  if (!meta_out) throw DataError("cannot write " + (dir / "meta.json").string());
  meta_out << doc.dump(2) << '\n';
  for (std::size_t k = 0; k < model.bank.size(); ++k) {
    std::ofstream out(dir / ("base_" + std::to_string(k) + ".json"), std::ios::trunc);
    if (!out) throw DataError("cannot write bank model " + std::to_string(k));
    out << model.bank[k]->to_json().dump(2) << '\n';
  }
}

Metamodel load_metamodel(const fs::path& dir) {
  std::ifstream meta_in(dir / "meta.json");
  if (!meta_in) throw DataError("cannot open " + (dir / "meta.json").string());
  nlohmann::json doc = nlohmann::json::parse(meta_in);
  if (doc.at("schema_version").get<int>() != 1)
    throw DataError("metamodel: unsupported schema_version");

  Metamodel model;
  model.base_kind = learner_kind_from_string(doc.at("base_kind").get<std::string>());
  model.thresholds.values = doc.at("thresholds").get<std::vector<double>>();
  model.meta = meta_net_from_json(doc.at("meta"));
  const auto& pj = doc.at("pipeline");
  model.pipeline.window_length = pj.at("window_length").get<int>();
  model.pipeline.stride = pj.at("stride").get<int>();
  model.pipeline.rois = pj.at("rois").get<int>();
  const auto& sj = pj.at("scaler");
  model.pipeline.scaler.age_mean = sj.at("age_mean").get<double>();
  model.pipeline.scaler.age_sd = sj.at("age_sd").get<double>();
  model.pipeline.scaler.fiq_mean = sj.at("fiq_mean").get<double>();
  model.pipeline.scaler.fiq_sd = sj.at("fiq_sd").get<double>();
  model.clip_predictions = doc.at("clip_predictions").get<bool>();
  model.warnings = doc.at("warnings").get<std::vector<std::string>>();

  const std::size_t n_base = doc.at("n_base").get<std::size_t>();
  for (std::size_t k = 0; k < n_base; ++k) {
    std::ifstream in(dir / ("base_" + std::to_string(k) + ".json"));
    if (!in) throw DataError("missing bank model " + std::to_string(k));
    model.bank.push_back(load_classifier(nlohmann::json::parse(in)));
  }
  if (model.bank.size() != model.thresholds.size())
    throw DataError("metamodel: bank size does not match threshold count");
  return model;
}

}  // namespace metareg
