#include "metareg/nets.hpp"

#include <cmath>

namespace metareg {

namespace {

constexpr double kEps = 1e-12;

Eigen::ArrayXd sigmoid_array(const Eigen::ArrayXd& z) {
  return 1.0 / (1.0 + (-z).exp());
}

// Per-sample output-layer loss gradient dL/dz for the two heads.
// Classifier: weighted BCE through a sigmoid; regressor: weighted MSE, linear.
void head_loss(const Eigen::VectorXd& z, const Eigen::VectorXd& y,
               const Eigen::VectorXd& w, bool sigmoid_out, double& loss,
               Eigen::VectorXd& dz) {
  const Eigen::Index n = z.size();
  const double inv_n = 1.0 / static_cast<double>(n);
  if (sigmoid_out) {
    Eigen::ArrayXd s = sigmoid_array(z.array());
    Eigen::ArrayXd sc = s.max(kEps).min(1.0 - kEps);
    loss = (w.array() * -(y.array() * sc.log() + (1.0 - y.array()) * (1.0 - sc).log()))
               .sum() *
           inv_n;
    dz = (w.array() * (s - y.array()) * inv_n).matrix();
  } else {
    Eigen::ArrayXd err = z.array() - y.array();
    loss = (w.array() * err.square()).sum() * inv_n;
    dz = (2.0 * inv_n * w.array() * err).matrix();
  }
}

}  // namespace

void AdamState::step(const std::vector<TensorRef>& params,
                     const std::vector<TensorRef>& grads) {
  Eigen::Index total = 0;
  for (const auto& p : params) total += p.size;
  if (m_.size() != total) {
    m_ = Eigen::VectorXd::Zero(total);
    v_ = Eigen::VectorXd::Zero(total);
    t_ = 0;
  }
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1_, t_);
  const double bc2 = 1.0 - std::pow(beta2_, t_);
  Eigen::Index offset = 0;
  for (std::size_t k = 0; k < params.size(); ++k) {
    double* x = params[k].data;
    const double* g = grads[k].data;
    for (Eigen::Index i = 0; i < params[k].size; ++i) {
      double& m = m_(offset + i);
      double& v = v_(offset + i);
      m = beta1_ * m + (1.0 - beta1_) * g[i];
      v = beta2_ * v + (1.0 - beta2_) * g[i] * g[i];
      x[i] -= lr_ * (m / bc1) / (std::sqrt(v / bc2) + eps_);
    }
    offset += params[k].size;
  }
}

// ---------------------------------------------------------------------------
// MlpNet

MlpNet MlpNet::init(Eigen::Index d, Eigen::Index h1, Eigen::Index h2, bool sigmoid_out,
                    Rng& rng) {
  MlpNet net;
  net.sigmoid_out = sigmoid_out;
  auto he = [&rng](Eigen::Index rows, Eigen::Index cols) {
    Eigen::MatrixXd m(rows, cols);
    const double scale = std::sqrt(2.0 / static_cast<double>(cols));
    for (Eigen::Index i = 0; i < rows; ++i)
      for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = scale * rng.normal();
    return m;
  };
  net.w1 = he(h1, d);
  net.b1 = Eigen::VectorXd::Zero(h1);
  net.w2 = he(h2, h1);
  net.b2 = Eigen::VectorXd::Zero(h2);
  net.w3 = Eigen::RowVectorXd(h2);
  const double out_scale = 1.0 / std::sqrt(static_cast<double>(h2));
  for (Eigen::Index j = 0; j < h2; ++j) net.w3(j) = out_scale * rng.normal();
  net.b3 = 0.0;
  return net;
}

Eigen::VectorXd MlpNet::forward(const Eigen::Ref<const Eigen::MatrixXd>& x) const {
  Eigen::MatrixXd a1 = ((x * w1.transpose()).rowwise() + b1.transpose()).cwiseMax(0.0);
  Eigen::MatrixXd a2 = ((a1 * w2.transpose()).rowwise() + b2.transpose()).cwiseMax(0.0);
  Eigen::VectorXd z = (a2 * w3.transpose()).array() + b3;
  if (!sigmoid_out) return z;
  return sigmoid_array(z.array()).matrix();
}

double MlpNet::loss_grad(const Eigen::Ref<const Eigen::MatrixXd>& x,
                         const Eigen::Ref<const Eigen::VectorXd>& targets,
                         const Eigen::Ref<const Eigen::VectorXd>& sample_weights,
                         double l2, MlpNet& grad, const Eigen::MatrixXd* mask1,
                         const Eigen::MatrixXd* mask2) const {
  const Eigen::Index n = x.rows();
  Eigen::VectorXd w = sample_weights.size() ? Eigen::VectorXd(sample_weights)
                                            : Eigen::VectorXd::Ones(n);

  Eigen::MatrixXd pre1 = (x * w1.transpose()).rowwise() + b1.transpose();
  Eigen::MatrixXd a1 = pre1.cwiseMax(0.0);
  if (mask1) a1 = a1.cwiseProduct(*mask1);
  Eigen::MatrixXd pre2 = (a1 * w2.transpose()).rowwise() + b2.transpose();
  Eigen::MatrixXd a2 = pre2.cwiseMax(0.0);
  if (mask2) a2 = a2.cwiseProduct(*mask2);
  Eigen::VectorXd z = (a2 * w3.transpose()).array() + b3;

  double loss = 0.0;
  Eigen::VectorXd dz;
  head_loss(z, targets, w, sigmoid_out, loss, dz);

  grad.w3 = dz.transpose() * a2;
  grad.b3 = dz.sum();
  Eigen::MatrixXd da2 = dz * w3;
  if (mask2) da2 = da2.cwiseProduct(*mask2);
  Eigen::MatrixXd dpre2 = da2.cwiseProduct((pre2.array() > 0.0).cast<double>().matrix());
  grad.w2 = dpre2.transpose() * a1;
  grad.b2 = dpre2.colwise().sum().transpose();
  Eigen::MatrixXd da1 = dpre2 * w2;
  if (mask1) da1 = da1.cwiseProduct(*mask1);
  Eigen::MatrixXd dpre1 = da1.cwiseProduct((pre1.array() > 0.0).cast<double>().matrix());
  grad.w1 = dpre1.transpose() * x;
  grad.b1 = dpre1.colwise().sum().transpose();

  if (l2 > 0.0) {
    loss += 0.5 * l2 * (w1.squaredNorm() + w2.squaredNorm() + w3.squaredNorm());
    grad.w1 += l2 * w1;
    grad.w2 += l2 * w2;
    grad.w3 += l2 * w3;
  }
  grad.sigmoid_out = sigmoid_out;
  return loss;
}

std::vector<TensorRef> MlpNet::params() {
  return {{w1.data(), w1.size()}, {b1.data(), b1.size()}, {w2.data(), w2.size()},
          {b2.data(), b2.size()}, {w3.data(), w3.size()}, {&b3, 1}};
}

std::vector<TensorRef> MlpNet::params() const {
  return const_cast<MlpNet*>(this)->params();
}

// ---------------------------------------------------------------------------
// LstmNet

LstmNet LstmNet::init(Eigen::Index d, Eigen::Index hidden, bool sigmoid_out, Rng& rng) {
  LstmNet net;
  net.sigmoid_out = sigmoid_out;
  const Eigen::Index cols = d + hidden;
  const double scale = 1.0 / std::sqrt(static_cast<double>(cols));
  auto uni = [&rng, scale](Eigen::Index rows, Eigen::Index c) {
    Eigen::MatrixXd m(rows, c);
    for (Eigen::Index i = 0; i < rows; ++i)
      for (Eigen::Index j = 0; j < c; ++j) m(i, j) = rng.uniform(-scale, scale);
    return m;
  };
  net.wi = uni(hidden, cols);
  net.wf = uni(hidden, cols);
  net.wo = uni(hidden, cols);
  net.wg = uni(hidden, cols);
  net.bi = Eigen::VectorXd::Zero(hidden);
  net.bf = Eigen::VectorXd::Ones(hidden);  // open forget gates at start
  net.bo = Eigen::VectorXd::Zero(hidden);
  net.bg = Eigen::VectorXd::Zero(hidden);
  net.w_out = Eigen::RowVectorXd(hidden);
  const double out_scale = 1.0 / std::sqrt(static_cast<double>(hidden));
  for (Eigen::Index j = 0; j < hidden; ++j) net.w_out(j) = out_scale * rng.normal();
  net.b_out = 0.0;
  return net;
}

namespace {

struct LstmTrace {
  // Every entry is H x B, one per time step.
  std::vector<Eigen::MatrixXd> i, f, o, g, c, tc, h;
  Eigen::MatrixXd pooled;  // H x B
};

void lstm_forward_batch(const LstmNet& net,
                        const std::vector<const Eigen::MatrixXd*>& seqs,
                        LstmTrace* trace, Eigen::VectorXd& z_out,
                        const Eigen::MatrixXd* pooled_mask) {
  const Eigen::Index b = static_cast<Eigen::Index>(seqs.size());
  const Eigen::Index h = net.hidden_size();
  const Eigen::Index d = net.input_dim();
  const Eigen::Index t_len = seqs.empty() ? 0 : seqs.front()->rows();
  for (const auto* s : seqs) {
    if (s->cols() != d) throw DataError("lstm: sequence feature dim mismatch");
    if (s->rows() != t_len) throw DataError("lstm: sequences must share length");
  }

  Eigen::MatrixXd h_prev = Eigen::MatrixXd::Zero(h, b);
  Eigen::MatrixXd c_prev = Eigen::MatrixXd::Zero(h, b);
  Eigen::MatrixXd pooled = Eigen::MatrixXd::Zero(h, b);
  Eigen::MatrixXd zin(d + h, b);
  if (trace) {
    trace->i.resize(t_len);
    trace->f.resize(t_len);
    trace->o.resize(t_len);
    trace->g.resize(t_len);
    trace->c.resize(t_len);
    trace->tc.resize(t_len);
    trace->h.resize(t_len);
  }
  for (Eigen::Index t = 0; t < t_len; ++t) {
    for (Eigen::Index s = 0; s < b; ++s) zin.col(s).head(d) = seqs[static_cast<std::size_t>(s)]->row(t).transpose();
    zin.bottomRows(h) = h_prev;
    Eigen::MatrixXd ig = ((net.wi * zin).colwise() + net.bi).unaryExpr([](double v) { return sigmoid(v); });
    Eigen::MatrixXd fg = ((net.wf * zin).colwise() + net.bf).unaryExpr([](double v) { return sigmoid(v); });
    Eigen::MatrixXd og = ((net.wo * zin).colwise() + net.bo).unaryExpr([](double v) { return sigmoid(v); });
    Eigen::MatrixXd gg = ((net.wg * zin).colwise() + net.bg).array().tanh().matrix();
    Eigen::MatrixXd ct = fg.cwiseProduct(c_prev) + ig.cwiseProduct(gg);
    Eigen::MatrixXd tct = ct.array().tanh().matrix();
    Eigen::MatrixXd ht = og.cwiseProduct(tct);
    pooled += ht;
    if (trace) {
      trace->i[t] = std::move(ig);
      trace->f[t] = std::move(fg);
      trace->o[t] = std::move(og);
      trace->g[t] = std::move(gg);
      trace->c[t] = ct;
      trace->tc[t] = std::move(tct);
      trace->h[t] = ht;
    }
    h_prev = std::move(ht);
    c_prev = std::move(ct);
  }
  pooled /= static_cast<double>(t_len);
  if (pooled_mask) pooled = pooled.cwiseProduct(*pooled_mask);
  if (trace) trace->pooled = pooled;
  z_out = (net.w_out * pooled).transpose();
  z_out.array() += net.b_out;
}

}  // namespace

double LstmNet::forward(const Eigen::Ref<const Eigen::MatrixXd>& sequence) const {
  Eigen::MatrixXd seq = sequence;
  std::vector<const Eigen::MatrixXd*> one{&seq};
  return forward_batch(one)(0);
}

Eigen::VectorXd LstmNet::forward_batch(
    const std::vector<const Eigen::MatrixXd*>& sequences) const {
  Eigen::VectorXd z;
  lstm_forward_batch(*this, sequences, nullptr, z, nullptr);
  if (!sigmoid_out) return z;
  return sigmoid_array(z.array()).matrix();
}

double LstmNet::loss_grad(const std::vector<const Eigen::MatrixXd*>& sequences,
                          const Eigen::Ref<const Eigen::VectorXd>& targets,
                          const Eigen::Ref<const Eigen::VectorXd>& sample_weights,
                          double l2, LstmNet& grad,
                          const Eigen::MatrixXd* pooled_mask) const {
  const Eigen::Index b = static_cast<Eigen::Index>(sequences.size());
  const Eigen::Index h = hidden_size();
  const Eigen::Index d = input_dim();
  Eigen::VectorXd w = sample_weights.size() ? Eigen::VectorXd(sample_weights)
                                            : Eigen::VectorXd::Ones(b);

  LstmTrace trace;
  Eigen::VectorXd z;
  lstm_forward_batch(*this, sequences, &trace, z, pooled_mask);
  const Eigen::Index t_len = static_cast<Eigen::Index>(trace.h.size());

  double loss = 0.0;
  Eigen::VectorXd dz;
  head_loss(z, targets, w, sigmoid_out, loss, dz);

  grad.wi.setZero(h, d + h);
  grad.wf.setZero(h, d + h);
  grad.wo.setZero(h, d + h);
  grad.wg.setZero(h, d + h);
  grad.bi.setZero(h);
  grad.bf.setZero(h);
  grad.bo.setZero(h);
  grad.bg.setZero(h);

  grad.w_out = dz.transpose() * trace.pooled.transpose();
  grad.b_out = dz.sum();

  Eigen::MatrixXd dpooled = w_out.transpose() * dz.transpose();  // H x B
  if (pooled_mask) dpooled = dpooled.cwiseProduct(*pooled_mask);
  dpooled /= static_cast<double>(t_len);

  Eigen::MatrixXd dh_next = Eigen::MatrixXd::Zero(h, b);
  Eigen::MatrixXd dc_next = Eigen::MatrixXd::Zero(h, b);
  Eigen::MatrixXd zin(d + h, b);
  for (Eigen::Index t = t_len - 1; t >= 0; --t) {
    for (Eigen::Index s = 0; s < b; ++s) zin.col(s).head(d) = sequences[static_cast<std::size_t>(s)]->row(t).transpose();
    if (t == 0)
      zin.bottomRows(h).setZero();
    else
      zin.bottomRows(h) = trace.h[t - 1];
    const Eigen::MatrixXd zero_c = Eigen::MatrixXd::Zero(h, b);
    const Eigen::MatrixXd& c_prev = t == 0 ? zero_c : trace.c[t - 1];

    Eigen::MatrixXd dh = dpooled + dh_next;
    Eigen::MatrixXd da_o = dh.cwiseProduct(trace.tc[t])
                               .cwiseProduct(trace.o[t])
                               .cwiseProduct((1.0 - trace.o[t].array()).matrix());
    Eigen::MatrixXd dc =
        dh.cwiseProduct(trace.o[t])
            .cwiseProduct((1.0 - trace.tc[t].array().square()).matrix()) +
        dc_next;
    Eigen::MatrixXd da_f = dc.cwiseProduct(c_prev)
                               .cwiseProduct(trace.f[t])
                               .cwiseProduct((1.0 - trace.f[t].array()).matrix());
    Eigen::MatrixXd da_i = dc.cwiseProduct(trace.g[t])
                               .cwiseProduct(trace.i[t])
                               .cwiseProduct((1.0 - trace.i[t].array()).matrix());
    Eigen::MatrixXd da_g =
        dc.cwiseProduct(trace.i[t])
            .cwiseProduct((1.0 - trace.g[t].array().square()).matrix());

    grad.wi += da_i * zin.transpose();
    grad.wf += da_f * zin.transpose();
    grad.wo += da_o * zin.transpose();
    grad.wg += da_g * zin.transpose();
    grad.bi += da_i.rowwise().sum();
    grad.bf += da_f.rowwise().sum();
    grad.bo += da_o.rowwise().sum();
    grad.bg += da_g.rowwise().sum();

    Eigen::MatrixXd dzin = wi.transpose() * da_i + wf.transpose() * da_f +
                           wo.transpose() * da_o + wg.transpose() * da_g;
    dh_next = dzin.bottomRows(h);
    dc_next = dc.cwiseProduct(trace.f[t]);
  }

  if (l2 > 0.0) {
    loss += 0.5 * l2 *
            (wi.squaredNorm() + wf.squaredNorm() + wo.squaredNorm() + wg.squaredNorm() +
             w_out.squaredNorm());
    grad.wi += l2 * wi;
    grad.wf += l2 * wf;
    grad.wo += l2 * wo;
    grad.wg += l2 * wg;
    grad.w_out += l2 * w_out;
  }
  grad.sigmoid_out = sigmoid_out;
  return loss;
}

std::vector<TensorRef> LstmNet::params() {
  return {{wi.data(), wi.size()},       {wf.data(), wf.size()},
          {wo.data(), wo.size()},       {wg.data(), wg.size()},
          {bi.data(), bi.size()},       {bf.data(), bf.size()},
          {bo.data(), bo.size()},       {bg.data(), bg.size()},
          {w_out.data(), w_out.size()}, {&b_out, 1}};
}

std::vector<TensorRef> LstmNet::params() const {
  return const_cast<LstmNet*>(this)->params();
}

// ---------------------------------------------------------------------------
// MetaNet

MetaNet MetaNet::init(Eigen::Index n_inputs, Rng& rng) {
  MetaNet net;
  net.w1 = Eigen::MatrixXd(kHidden, n_inputs);
  const double scale = 1.0 / std::sqrt(static_cast<double>(n_inputs));
  for (Eigen::Index i = 0; i < kHidden; ++i)
    for (Eigen::Index j = 0; j < n_inputs; ++j) net.w1(i, j) = scale * rng.normal();
  net.b1 = Eigen::VectorXd::Zero(kHidden);
  net.w2 = Eigen::RowVectorXd(kHidden);
  for (Eigen::Index j = 0; j < kHidden; ++j) net.w2(j) = rng.normal();
  net.b2 = 0.0;
  return net;
}

Eigen::VectorXd MetaNet::forward(const Eigen::Ref<const Eigen::MatrixXd>& scores) const {
  Eigen::MatrixXd hidden =
      ((scores * w1.transpose()).rowwise() + b1.transpose()).unaryExpr([](double v) {
        return sigmoid(v);
      });
  return ((hidden * w2.transpose()).array() + b2).matrix();
}

double MetaNet::loss_grad(const Eigen::Ref<const Eigen::MatrixXd>& scores,
                          const Eigen::Ref<const Eigen::VectorXd>& targets, double l2,
                          MetaNet& grad) const {
  const Eigen::Index n = scores.rows();
  Eigen::MatrixXd hidden =
      ((scores * w1.transpose()).rowwise() + b1.transpose()).unaryExpr([](double v) {
        return sigmoid(v);
      });
  Eigen::VectorXd pred = ((hidden * w2.transpose()).array() + b2).matrix();

  const double inv_n = 1.0 / static_cast<double>(n);
  Eigen::VectorXd err = pred - targets;
  double loss = err.squaredNorm() * inv_n;
  Eigen::VectorXd dz = 2.0 * inv_n * err;

  grad.w2 = dz.transpose() * hidden;
  grad.b2 = dz.sum();
  Eigen::MatrixXd dhidden = dz * w2;
  Eigen::MatrixXd dpre =
      dhidden.cwiseProduct(hidden.cwiseProduct((1.0 - hidden.array()).matrix()));
  grad.w1 = dpre.transpose() * scores;
  grad.b1 = dpre.colwise().sum().transpose();

  if (l2 > 0.0) {
    loss += 0.5 * l2 * (w1.squaredNorm() + w2.squaredNorm());
    grad.w1 += l2 * w1;
    grad.w2 += l2 * w2;
  }
  return loss;
}

std::vector<TensorRef> MetaNet::params() {
  return {{w1.data(), w1.size()}, {b1.data(), b1.size()}, {w2.data(), w2.size()}, {&b2, 1}};
}

std::vector<TensorRef> MetaNet::params() const {
  return const_cast<MetaNet*>(this)->params();
}

}  // namespace metareg
