#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "learners_internal.hpp"
#include "metareg/learners.hpp"
#include "metareg/stats.hpp"
#include "serial_util.hpp"

namespace metareg {

using detail::mat_from_json;
using detail::mat_to_json;
using detail::vec_from_json;
using detail::vec_to_json;

namespace {

Eigen::VectorXd noisy_targets(const Eigen::VectorXd& y, double noise_sd, Rng& rng) {
  if (noise_sd <= 0.0) return y;
  Eigen::VectorXd out(y.size());
  for (Eigen::Index i = 0; i < y.size(); ++i)
    out(i) = std::clamp(y(i) + noise_sd * rng.normal(), 0.0, 1.0);
  return out;
}

Eigen::MatrixXd dropout_mask(Eigen::Index rows, Eigen::Index cols, double rate, Rng& rng) {
  Eigen::MatrixXd mask(rows, cols);
  const double keep = 1.0 - rate;
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j)
      mask(i, j) = rng.uniform() < keep ? 1.0 / keep : 0.0;
  return mask;
}

MlpNet train_mlp_net(const Eigen::Ref<const Eigen::MatrixXd>& x,
                     const Eigen::Ref<const Eigen::VectorXd>& y,
                     const Eigen::VectorXd& sample_w, bool classifier,
                     const Eigen::Ref<const Eigen::MatrixXd>& x_val,
                     const Eigen::Ref<const Eigen::VectorXd>& y_val,
                     const std::vector<std::string>& val_ids, const MlpHyper& hyper,
                     const TrainConfig& config) {
  const Eigen::Index n = x.rows();
  if (n != y.size()) throw DataError("mlp: label count mismatch");
  if (n < 2) throw TrainError("mlp: need at least 2 samples");

  Rng rng(derive_seed(config.seed, classifier ? "mlp_clf" : "mlp_reg"));
  MlpNet net = MlpNet::init(x.cols(), hyper.h1, hyper.h2, classifier, rng);
  MlpNet grad = net;
  AdamState adam(config.learning_rate);
  const bool use_val = x_val.rows() > 0;

  MlpNet best = net;
  double best_metric = -std::numeric_limits<double>::infinity();
  int since_best = 0;

  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  const Eigen::Index bs = std::max(1, config.batch_size);

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    const Eigen::VectorXd y_epoch =
        classifier ? noisy_targets(y, config.target_noise_sd, rng) : Eigen::VectorXd(y);
    rng.shuffle(order);
    for (Eigen::Index start = 0; start < n; start += bs) {
      const Eigen::Index count = std::min<Eigen::Index>(bs, n - start);
      Eigen::MatrixXd xb(count, x.cols());
      Eigen::VectorXd yb(count), wb(count);
      for (Eigen::Index k = 0; k < count; ++k) {
        const Eigen::Index i = order[static_cast<std::size_t>(start + k)];
        xb.row(k) = x.row(i);
        yb(k) = y_epoch(i);
        wb(k) = sample_w(i);
      }
      double loss;
      if (config.dropout_rate > 0.0) {
        const Eigen::MatrixXd m1 = dropout_mask(count, hyper.h1, config.dropout_rate, rng);
        const Eigen::MatrixXd m2 = dropout_mask(count, hyper.h2, config.dropout_rate, rng);
        loss = net.loss_grad(xb, yb, wb, config.l2, grad, &m1, &m2);
      } else {
        loss = net.loss_grad(xb, yb, wb, config.l2, grad);
      }
      if (!std::isfinite(loss)) throw TrainError("mlp: non-finite loss");
      adam.step(net.params(), grad.params());
    }
    if (use_val) {
      const Eigen::VectorXd val_preds = net.forward(x_val);
      const double metric = classifier ? auc(val_preds, y_val)
                                       : subject_level_r(val_preds, y_val, val_ids);
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

LstmNet train_lstm_net(const std::vector<Eigen::MatrixXd>& seqs,
                       const Eigen::Ref<const Eigen::VectorXd>& y,
                       const Eigen::VectorXd& sample_w, bool classifier,
                       const std::vector<Eigen::MatrixXd>& val_seqs,
                       const Eigen::Ref<const Eigen::VectorXd>& y_val,
                       const std::vector<std::string>& val_ids, const LstmHyper& hyper,
                       const TrainConfig& config) {
  const Eigen::Index n = static_cast<Eigen::Index>(seqs.size());
  if (n != y.size()) throw DataError("lstm: label count mismatch");
  if (n < 2) throw TrainError("lstm: need at least 2 sequences");

  Rng rng(derive_seed(config.seed, classifier ? "lstm_clf" : "lstm_reg"));
  LstmNet net = LstmNet::init(seqs.front().cols(), hyper.hidden, classifier, rng);
  LstmNet grad = net;
  AdamState adam(config.learning_rate);
  const bool use_val = !val_seqs.empty();

  std::vector<const Eigen::MatrixXd*> val_ptrs;
  val_ptrs.reserve(val_seqs.size());
  for (const auto& s : val_seqs) val_ptrs.push_back(&s);

  LstmNet best = net;
  double best_metric = -std::numeric_limits<double>::infinity();
  int since_best = 0;

  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  const Eigen::Index bs = std::max(1, config.batch_size);

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    const Eigen::VectorXd y_epoch =
        classifier ? noisy_targets(y, config.target_noise_sd, rng) : Eigen::VectorXd(y);
    rng.shuffle(order);
    for (Eigen::Index start = 0; start < n; start += bs) {
      const Eigen::Index count = std::min<Eigen::Index>(bs, n - start);
      std::vector<const Eigen::MatrixXd*> batch;
      batch.reserve(static_cast<std::size_t>(count));
      Eigen::VectorXd yb(count), wb(count);
      for (Eigen::Index k = 0; k < count; ++k) {
        const Eigen::Index i = order[static_cast<std::size_t>(start + k)];
        batch.push_back(&seqs[static_cast<std::size_t>(i)]);
        yb(k) = y_epoch(i);
        wb(k) = sample_w(i);
      }
      double loss;
      if (config.dropout_rate > 0.0) {
        // Dropout applies to the pooled state feeding the output unit only.
        const Eigen::MatrixXd mask =
            dropout_mask(hyper.hidden, count, config.dropout_rate, rng);
        loss = net.loss_grad(batch, yb, wb, config.l2, grad, &mask);
      } else {
        loss = net.loss_grad(batch, yb, wb, config.l2, grad);
      }
      if (!std::isfinite(loss)) throw TrainError("lstm: non-finite loss");
      adam.step(net.params(), grad.params());
    }
    if (use_val) {
      const Eigen::VectorXd val_preds = net.forward_batch(val_ptrs);
      const double metric = classifier ? auc(val_preds, y_val)
                                       : subject_level_r(val_preds, y_val, val_ids);
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

MlpNet mlp_net_from_json(const nlohmann::json& p, bool sigmoid_out) {
  MlpNet net;
  net.w1 = mat_from_json(p.at("w1"));
  net.b1 = vec_from_json(p.at("b1"));
  net.w2 = mat_from_json(p.at("w2"));
  net.b2 = vec_from_json(p.at("b2"));
  net.w3 = vec_from_json(p.at("w3")).transpose();
  net.b3 = p.at("b3").get<double>();
  net.sigmoid_out = sigmoid_out;
  return net;
}

nlohmann::json mlp_net_to_json(const MlpNet& net) {
  return {{"w1", mat_to_json(net.w1)}, {"b1", vec_to_json(net.b1)},
          {"w2", mat_to_json(net.w2)}, {"b2", vec_to_json(net.b2)},
          {"w3", vec_to_json(net.w3.transpose())}, {"b3", net.b3}};
}

LstmNet lstm_net_from_json(const nlohmann::json& p, bool sigmoid_out) {
  LstmNet net;
  net.wi = mat_from_json(p.at("wi"));
  net.wf = mat_from_json(p.at("wf"));
  net.wo = mat_from_json(p.at("wo"));
  net.wg = mat_from_json(p.at("wg"));
  net.bi = vec_from_json(p.at("bi"));
  net.bf = vec_from_json(p.at("bf"));
  net.bo = vec_from_json(p.at("bo"));
  net.bg = vec_from_json(p.at("bg"));
  net.w_out = vec_from_json(p.at("w_out")).transpose();
  net.b_out = p.at("b_out").get<double>();
  net.sigmoid_out = sigmoid_out;
  return net;
}

nlohmann::json lstm_net_to_json(const LstmNet& net) {
  return {{"wi", mat_to_json(net.wi)},   {"wf", mat_to_json(net.wf)},
          {"wo", mat_to_json(net.wo)},   {"wg", mat_to_json(net.wg)},
          {"bi", vec_to_json(net.bi)},   {"bf", vec_to_json(net.bf)},
          {"bo", vec_to_json(net.bo)},   {"bg", vec_to_json(net.bg)},
          {"w_out", vec_to_json(net.w_out.transpose())}, {"b_out", net.b_out}};
}

}  // namespace

double MlpModel::predict_score(const Eigen::Ref<const Eigen::VectorXd>& x) const {
  if (x.size() != net_.input_dim()) throw DataError("mlp: feature dimension mismatch");
  return net_.forward(x.transpose())(0);
}

nlohmann::json MlpModel::to_json() const {
  return {{"schema_version", 1},
          {"kind", "mlp"},
          {"hyperparams", {{"h1", hyper_.h1}, {"h2", hyper_.h2}}},
          {"parameters", mlp_net_to_json(net_)}};
}

double LstmModel::predict_score(const Eigen::Ref<const Eigen::MatrixXd>& seq) const {
  return net_.forward(seq);
}

nlohmann::json LstmModel::to_json() const {
  return {{"schema_version", 1},
          {"kind", "lstm"},
          {"hyperparams", {{"hidden", hyper_.hidden}}},
          {"parameters", lstm_net_to_json(net_)}};
}

double MlpRegModel::predict(const Eigen::Ref<const Eigen::VectorXd>& x) const {
  if (x.size() != net_.input_dim()) throw DataError("mlp_reg: feature dimension mismatch");
  return net_.forward(x.transpose())(0);
}

nlohmann::json MlpRegModel::to_json() const {
  return {{"schema_version", 1},
          {"kind", "mlp_reg"},
          {"hyperparams", {{"h1", hyper_.h1}, {"h2", hyper_.h2}}},
          {"parameters", mlp_net_to_json(net_)}};
}

double LstmRegModel::predict(const Eigen::Ref<const Eigen::MatrixXd>& seq) const {
  return net_.forward(seq);
}

nlohmann::json LstmRegModel::to_json() const {
  return {{"schema_version", 1},
          {"kind", "lstm_reg"},
          {"hyperparams", {{"hidden", hyper_.hidden}}},
          {"parameters", lstm_net_to_json(net_)}};
}

std::unique_ptr<BinaryClassifier> fit_mlp(const Eigen::Ref<const Eigen::MatrixXd>& x,
                                          const Eigen::Ref<const Eigen::VectorXd>& y,
                                          const Eigen::Ref<const Eigen::MatrixXd>& x_val,
                                          const Eigen::Ref<const Eigen::VectorXd>& y_val,
                                          const ClassWeights& weights,
                                          const MlpHyper& hyper, const TrainConfig& config) {
  Eigen::VectorXd sw(y.size());
  for (Eigen::Index i = 0; i < y.size(); ++i) sw(i) = weights.weight_for(y(i));
  MlpNet net = train_mlp_net(x, y, sw, true, x_val, y_val, {}, hyper, config);
  return std::make_unique<MlpModel>(std::move(net), hyper);
}

std::unique_ptr<BinaryClassifier> fit_lstm(const std::vector<Eigen::MatrixXd>& sequences,
                                           const Eigen::Ref<const Eigen::VectorXd>& y,
                                           const std::vector<Eigen::MatrixXd>& val_sequences,
                                           const Eigen::Ref<const Eigen::VectorXd>& y_val,
                                           const ClassWeights& weights,
                                           const LstmHyper& hyper,
                                           const TrainConfig& config) {
  Eigen::VectorXd sw(y.size());
  for (Eigen::Index i = 0; i < y.size(); ++i) sw(i) = weights.weight_for(y(i));
  LstmNet net =
      train_lstm_net(sequences, y, sw, true, val_sequences, y_val, {}, hyper, config);
  return std::make_unique<LstmModel>(std::move(net), hyper);
}

std::unique_ptr<Regressor> fit_mlp_reg(const Eigen::Ref<const Eigen::MatrixXd>& x,
                                       const Eigen::Ref<const Eigen::VectorXd>& y,
                                       const Eigen::Ref<const Eigen::MatrixXd>& x_val,
                                       const Eigen::Ref<const Eigen::VectorXd>& y_val,
                                       const std::vector<std::string>& val_subject_ids,
                                       const MlpHyper& hyper, const TrainConfig& config) {
  const Eigen::VectorXd sw = score_bin_weights(y);
  MlpNet net = train_mlp_net(x, y, sw, false, x_val, y_val, val_subject_ids, hyper, config);
  return std::make_unique<MlpRegModel>(std::move(net), hyper);
}

std::unique_ptr<Regressor> fit_lstm_reg(const std::vector<Eigen::MatrixXd>& sequences,
                                        const Eigen::Ref<const Eigen::VectorXd>& y,
                                        const std::vector<Eigen::MatrixXd>& val_sequences,
                                        const Eigen::Ref<const Eigen::VectorXd>& y_val,
                                        const std::vector<std::string>& val_subject_ids,
                                        const LstmHyper& hyper, const TrainConfig& config) {
  const Eigen::VectorXd sw = score_bin_weights(y);
  LstmNet net = train_lstm_net(sequences, y, sw, false, val_sequences, y_val,
                               val_subject_ids, hyper, config);
  return std::make_unique<LstmRegModel>(std::move(net), hyper);
}

namespace detail_neural {

std::unique_ptr<BinaryClassifier> mlp_from_json(const nlohmann::json& doc) {
  MlpHyper h{doc.at("hyperparams").at("h1").get<int>(),
             doc.at("hyperparams").at("h2").get<int>()};
  return std::make_unique<MlpModel>(mlp_net_from_json(doc.at("parameters"), true), h);
}

std::unique_ptr<BinaryClassifier> lstm_from_json(const nlohmann::json& doc) {
  LstmHyper h{doc.at("hyperparams").at("hidden").get<int>()};
  return std::make_unique<LstmModel>(lstm_net_from_json(doc.at("parameters"), true), h);
}

std::unique_ptr<Regressor> mlp_reg_from_json(const nlohmann::json& doc) {
  MlpHyper h{doc.at("hyperparams").at("h1").get<int>(),
             doc.at("hyperparams").at("h2").get<int>()};
  return std::make_unique<MlpRegModel>(mlp_net_from_json(doc.at("parameters"), false), h);
}

std::unique_ptr<Regressor> lstm_reg_from_json(const nlohmann::json& doc) {
  LstmHyper h{doc.at("hyperparams").at("hidden").get<int>()};
  return std::make_unique<LstmRegModel>(lstm_net_from_json(doc.at("parameters"), false), h);
}

}  // namespace detail_neural

}  // namespace metareg
