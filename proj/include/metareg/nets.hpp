#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

#include "metareg/util.hpp"

namespace metareg {

/// Mutable view of one parameter tensor, used by the optimizer and by
/// finite-difference checks.
struct TensorRef {
  double* data = nullptr;
  Eigen::Index size = 0;
};

/// Adam over an arbitrary list of parameter tensors. State is flat and
/// follows the order of the tensor list, which must not change between steps.
class AdamState {
 public:
  AdamState(double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  void step(const std::vector<TensorRef>& params, const std::vector<TensorRef>& grads);

 private:
  double lr_, beta1_, beta2_, eps_;
  Eigen::VectorXd m_, v_;
  int t_ = 0;
};

/// Two-hidden-layer perceptron, ReLU hidden units. With sigmoid_out the
/// output is a probability trained under weighted binary cross-entropy;
/// without it the output is linear and trained under weighted squared error.
struct MlpNet {
  Eigen::MatrixXd w1;  // h1 x d
  Eigen::VectorXd b1;
  Eigen::MatrixXd w2;  // h2 x h1
  Eigen::VectorXd b2;
  Eigen::RowVectorXd w3;  // 1 x h2
  double b3 = 0.0;
  bool sigmoid_out = true;

  static MlpNet init(Eigen::Index d, Eigen::Index h1, Eigen::Index h2, bool sigmoid_out,
                     Rng& rng);

  Eigen::Index input_dim() const { return w1.cols(); }

  /// Scores for a batch, rows of x are samples.
  Eigen::VectorXd forward(const Eigen::Ref<const Eigen::MatrixXd>& x) const;

  /// Mean weighted loss over the batch plus (l2/2)*||weights||^2, filling
  /// `grad` (same shape as *this). Dropout masks, when given, multiply the
  /// hidden activations (inverted-dropout scaling is the caller's concern).
  double loss_grad(const Eigen::Ref<const Eigen::MatrixXd>& x,
                   const Eigen::Ref<const Eigen::VectorXd>& targets,
                   const Eigen::Ref<const Eigen::VectorXd>& sample_weights, double l2,
                   MlpNet& grad, const Eigen::MatrixXd* mask1 = nullptr,
                   const Eigen::MatrixXd* mask2 = nullptr) const;

  std::vector<TensorRef> params();
  std::vector<TensorRef> params() const;  // const-cast views for read-only use
};

/// Single-layer LSTM: input, forget and output gates with sigmoid
/// activations, tanh cell candidate, mean-pooled hidden states feeding one
/// output unit (sigmoid for classification, linear for regression).
struct LstmNet {
  // Gate weights are H x (D + H), acting on [x_t; h_{t-1}].
  Eigen::MatrixXd wi, wf, wo, wg;
  Eigen::VectorXd bi, bf, bo, bg;
  Eigen::RowVectorXd w_out;  // 1 x H
  double b_out = 0.0;
  bool sigmoid_out = true;

  static LstmNet init(Eigen::Index d, Eigen::Index hidden, bool sigmoid_out, Rng& rng);

  Eigen::Index hidden_size() const { return wi.rows(); }
  Eigen::Index input_dim() const { return wi.cols() - wi.rows(); }

  double forward(const Eigen::Ref<const Eigen::MatrixXd>& sequence) const;
  Eigen::VectorXd forward_batch(const std::vector<const Eigen::MatrixXd*>& sequences) const;

  /// Backpropagation through time over a batch of equal-length sequences.
  /// `pooled_mask`, when given, multiplies the mean-pooled hidden state
  /// (H x batch) before the output unit.
  double loss_grad(const std::vector<const Eigen::MatrixXd*>& sequences,
                   const Eigen::Ref<const Eigen::VectorXd>& targets,
                   const Eigen::Ref<const Eigen::VectorXd>& sample_weights, double l2,
                   LstmNet& grad, const Eigen::MatrixXd* pooled_mask = nullptr) const;

  std::vector<TensorRef> params();
  std::vector<TensorRef> params() const;
};

/// Meta-level network: 4 sigmoid hidden nodes, linear output, trained under
/// mean squared error on the raw score scale.
struct MetaNet {
  Eigen::MatrixXd w1;  // 4 x n_thresholds
  Eigen::VectorXd b1;  // 4
  Eigen::RowVectorXd w2;  // 1 x 4
  double b2 = 0.0;

  static constexpr Eigen::Index kHidden = 4;

  static MetaNet init(Eigen::Index n_inputs, Rng& rng);

  Eigen::VectorXd forward(const Eigen::Ref<const Eigen::MatrixXd>& scores) const;

  double loss_grad(const Eigen::Ref<const Eigen::MatrixXd>& scores,
                   const Eigen::Ref<const Eigen::VectorXd>& targets, double l2,
                   MetaNet& grad) const;

  std::vector<TensorRef> params();
  std::vector<TensorRef> params() const;
};

inline double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

}  // namespace metareg
