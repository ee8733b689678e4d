#include <cmath>

#include "metareg/learners.hpp"
#include "serial_util.hpp"

namespace metareg {

using detail::vec_from_json;
using detail::vec_to_json;

double LogisticModel::predict_score(const Eigen::Ref<const Eigen::VectorXd>& x) const {
  if (x.size() != w_.size()) throw DataError("logistic: feature dimension mismatch");
  return sigmoid(w_.dot(x) + b_);
}

nlohmann::json LogisticModel::to_json() const {
  return {{"schema_version", 1},
          {"kind", "lr"},
          {"hyperparams", {{"l2", hyper_.l2}, {"iters", hyper_.iters}, {"lr", hyper_.lr}}},
          {"parameters", {{"w", vec_to_json(w_)}, {"b", b_}}}};
}

std::unique_ptr<BinaryClassifier> fit_lr(const Eigen::Ref<const Eigen::MatrixXd>& x,
                                         const Eigen::Ref<const Eigen::VectorXd>& y,
                                         const ClassWeights& weights, const LrHyper& hyper,
                                         std::uint64_t /*seed*/) {
  const Eigen::Index n = x.rows();
  const Eigen::Index d = x.cols();
  if (n != y.size()) throw DataError("fit_lr: label count mismatch");
  if (n < 2) throw TrainError("fit_lr: need at least 2 samples");

  Eigen::VectorXd sw(n);
  for (Eigen::Index i = 0; i < n; ++i) sw(i) = weights.weight_for(y(i));

  // Full-batch first-order descent on the convex weighted objective;
  // deterministic from the zero start.
  Eigen::VectorXd w = Eigen::VectorXd::Zero(d);
  double b = 0.0;
  AdamState adam(hyper.lr);
  Eigen::VectorXd gw(d);
  double gb = 0.0;
  const double inv_n = 1.0 / static_cast<double>(n);
  for (int it = 0; it < hyper.iters; ++it) {
    Eigen::VectorXd z = x * w;
    z.array() += b;
    Eigen::VectorXd s = z.unaryExpr([](double v) { return sigmoid(v); });
    Eigen::VectorXd delta = sw.cwiseProduct(s - y) * inv_n;
    gw = x.transpose() * delta + hyper.l2 * w;
    gb = delta.sum();
    if (!gw.allFinite() || !std::isfinite(gb)) throw TrainError("fit_lr: non-finite gradient");
    adam.step({{w.data(), w.size()}, {&b, 1}}, {{gw.data(), gw.size()}, {&gb, 1}});
  }
  return std::make_unique<LogisticModel>(std::move(w), b, hyper);
}

double LinearSvmModel::margin(const Eigen::Ref<const Eigen::VectorXd>& x) const {
  if (x.size() + 1 != w_.size()) throw DataError("svm: feature dimension mismatch");
  return w_.head(x.size()).dot(x / hyper_.scale) + w_(x.size());
}

double LinearSvmModel::predict_score(const Eigen::Ref<const Eigen::VectorXd>& x) const {
  return sigmoid(margin(x));
}

nlohmann::json LinearSvmModel::to_json() const {
  return {{"schema_version", 1},
          {"kind", "svm"},
          {"hyperparams",
           {{"box", hyper_.box}, {"scale", hyper_.scale}, {"epochs", hyper_.epochs}}},
          {"parameters", {{"w", vec_to_json(w_)}}}};
}

std::unique_ptr<BinaryClassifier> fit_svm(const Eigen::Ref<const Eigen::MatrixXd>& x,
                                          const Eigen::Ref<const Eigen::VectorXd>& y,
                                          const ClassWeights& weights,
                                          const SvmHyper& hyper, std::uint64_t seed) {
  const Eigen::Index n = x.rows();
  const Eigen::Index d = x.cols();
  if (n != y.size()) throw DataError("fit_svm: label count mismatch");
  if (n < 2) throw TrainError("fit_svm: need at least 2 samples");
  if (hyper.box <= 0.0 || hyper.scale <= 0.0)
    throw TrainError("fit_svm: box and scale must be positive");

  // Pegasos on the primal weighted hinge objective with an augmented bias
  // feature; lambda = 1/(C n).
  const double lambda = 1.0 / (hyper.box * static_cast<double>(n));
  const double radius = 1.0 / std::sqrt(lambda);
  Eigen::VectorXd w = Eigen::VectorXd::Zero(d + 1);
  Rng rng(derive_seed(seed, "pegasos"));
  const std::int64_t steps = static_cast<std::int64_t>(hyper.epochs) * n;
  Eigen::VectorXd xs(d + 1);
  for (std::int64_t t = 1; t <= steps; ++t) {
    const Eigen::Index i = static_cast<Eigen::Index>(rng.uniform_int(static_cast<std::uint64_t>(n)));
    xs.head(d) = x.row(i).transpose() / hyper.scale;
    xs(d) = 1.0;
    const double ys = y(i) >= 0.5 ? 1.0 : -1.0;
    const double cw = weights.weight_for(y(i));
    const double eta = 1.0 / (lambda * static_cast<double>(t));
    w *= (1.0 - eta * lambda);
    if (ys * w.dot(xs) < 1.0) w += (eta * cw * ys) * xs;
    const double norm = w.norm();
    if (norm > radius) w *= radius / norm;
  }
  if (!w.allFinite()) throw TrainError("fit_svm: non-finite weights");
  return std::make_unique<LinearSvmModel>(std::move(w), hyper);
}

double LinearRegModel::predict(const Eigen::Ref<const Eigen::VectorXd>& x) const {
  if (x.size() != w_.size()) throw DataError("linreg: feature dimension mismatch");
  return w_.dot(x) + b_;
}

nlohmann::json LinearRegModel::to_json() const {
  return {{"schema_version", 1},
          {"kind", "linreg"},
          {"hyperparams", {{"l2", l2_}}},
          {"parameters", {{"w", vec_to_json(w_)}, {"b", b_}}}};
}

std::unique_ptr<Regressor> fit_linreg(const Eigen::Ref<const Eigen::MatrixXd>& x,
                                      const Eigen::Ref<const Eigen::VectorXd>& y,
                                      double l2) {
  const Eigen::Index n = x.rows();
  const Eigen::Index d = x.cols();
  if (n != y.size()) throw DataError("fit_linreg: label count mismatch");
  if (n < 2) throw TrainError("fit_linreg: need at least 2 samples");
  // Center so the intercept stays unpenalized.
  const Eigen::RowVectorXd x_mean = x.colwise().mean();
  const double y_mean = y.mean();
  const Eigen::MatrixXd xc = x.rowwise() - x_mean;
  const Eigen::VectorXd yc = y.array() - y_mean;
  Eigen::MatrixXd gram = xc.transpose() * xc;
  gram.diagonal().array() += l2 * static_cast<double>(n);
  const Eigen::VectorXd w = gram.ldlt().solve(xc.transpose() * yc);
  if (!w.allFinite()) throw TrainError("fit_linreg: singular system");
  const double b = y_mean - w.dot(x_mean.transpose());
  return std::make_unique<LinearRegModel>(w, b, l2);
}

double LinearSvrModel::predict(const Eigen::Ref<const Eigen::VectorXd>& x) const {
  if (x.size() + 1 != w_.size()) throw DataError("svr: feature dimension mismatch");
  return w_.head(x.size()).dot(x / hyper_.scale) + w_(x.size());
}

nlohmann::json LinearSvrModel::to_json() const {
  return {{"schema_version", 1},
          {"kind", "svr"},
          {"hyperparams",
           {{"box", hyper_.box},
            {"scale", hyper_.scale},
            {"epsilon", hyper_.epsilon},
            {"epochs", hyper_.epochs}}},
          {"parameters", {{"w", vec_to_json(w_)}}}};
}

std::unique_ptr<Regressor> fit_svr(const Eigen::Ref<const Eigen::MatrixXd>& x,
                                   const Eigen::Ref<const Eigen::VectorXd>& y,
                                   const SvrHyper& hyper, std::uint64_t seed) {
  const Eigen::Index n = x.rows();
  const Eigen::Index d = x.cols();
  if (n != y.size()) throw DataError("fit_svr: label count mismatch");
  if (n < 2) throw TrainError("fit_svr: need at least 2 samples");
  if (hyper.box <= 0.0 || hyper.scale <= 0.0)
    throw TrainError("fit_svr: box and scale must be positive");

  // Stochastic subgradient descent on the epsilon-insensitive objective.
  const double lambda = 1.0 / (hyper.box * static_cast<double>(n));
  Eigen::VectorXd w = Eigen::VectorXd::Zero(d + 1);
  Rng rng(derive_seed(seed, "svr"));
  const std::int64_t steps = static_cast<std::int64_t>(hyper.epochs) * n;
  Eigen::VectorXd xs(d + 1);
  for (std::int64_t t = 1; t <= steps; ++t) {
    const Eigen::Index i = static_cast<Eigen::Index>(rng.uniform_int(static_cast<std::uint64_t>(n)));
    xs.head(d) = x.row(i).transpose() / hyper.scale;
    xs(d) = 1.0;
    const double eta = 1.0 / (lambda * static_cast<double>(t));
    const double err = w.dot(xs) - y(i);
    w *= (1.0 - eta * lambda);
    if (err > hyper.epsilon)
      w -= eta * xs;
    else if (err < -hyper.epsilon)
      w += eta * xs;
  }
  if (!w.allFinite()) throw TrainError("fit_svr: non-finite weights");
  return std::make_unique<LinearSvrModel>(std::move(w), hyper);
}

}  // namespace metareg
