#include <algorithm>
#include <cmath>
#include <numeric>

#include "metareg/learners.hpp"
#include "serial_util.hpp"

namespace metareg {

double tree_predict(const Tree& tree, const Eigen::Ref<const Eigen::VectorXd>& x) {
  int node = 0;
  while (!tree[static_cast<std::size_t>(node)].leaf()) {
    const TreeNode& n = tree[static_cast<std::size_t>(node)];
    if (n.feature >= x.size()) throw DataError("tree_predict: feature dimension mismatch");
    node = x(n.feature) <= n.threshold ? n.left : n.right;
  }
  return tree[static_cast<std::size_t>(node)].value;
}

namespace {

struct GrowContext {
  const Eigen::MatrixXd& x;
  const Eigen::VectorXd& y;
  const Eigen::VectorXd& w;  // per-sample weights
  RfHyper hyper;
  bool classification;
  Rng* rng;
  Tree* tree;
};

struct SplitChoice {
  bool found = false;
  int feature = -1;
  double threshold = 0.0;
  double gain = 0.0;
};

double node_impurity(const GrowContext& ctx, const std::vector<Eigen::Index>& idx) {
  double w_total = 0.0;
  if (ctx.classification) {
    double w_pos = 0.0;
    for (Eigen::Index i : idx) {
      w_total += ctx.w(i);
      if (ctx.y(i) >= 0.5) w_pos += ctx.w(i);
    }
    const double p = w_pos / w_total;
    return w_total * (1.0 - p * p - (1.0 - p) * (1.0 - p));  // weighted Gini mass
  }
  double sum = 0.0, sum_sq = 0.0;
  for (Eigen::Index i : idx) {
    w_total += ctx.w(i);
    sum += ctx.w(i) * ctx.y(i);
    sum_sq += ctx.w(i) * ctx.y(i) * ctx.y(i);
  }
  return sum_sq - sum * sum / w_total;  // weighted SSE
}

double leaf_value(const GrowContext& ctx, const std::vector<Eigen::Index>& idx) {
  if (ctx.classification) {
    double w_pos = 0.0, w_neg = 0.0;
    for (Eigen::Index i : idx)
      (ctx.y(i) >= 0.5 ? w_pos : w_neg) += ctx.w(i);
    return w_pos >= w_neg ? 1.0 : 0.0;  // tree vote
  }
  double sum = 0.0, w_total = 0.0;
  for (Eigen::Index i : idx) {
    sum += ctx.w(i) * ctx.y(i);
    w_total += ctx.w(i);
  }
  return sum / w_total;
}

bool node_pure(const GrowContext& ctx, const std::vector<Eigen::Index>& idx) {
  for (std::size_t i = 1; i < idx.size(); ++i)
    if (ctx.y(idx[i]) != ctx.y(idx[0])) return false;
  return true;
}

// Scans the listed features (ascending) for the impurity-optimal boundary.
// Ties keep the lowest feature index, then the lowest threshold.
SplitChoice best_split_over(const GrowContext& ctx, const std::vector<Eigen::Index>& idx,
                            const std::vector<int>& features, double parent_impurity) {
  SplitChoice best;
  std::vector<Eigen::Index> order(idx);
  for (int f : features) {
    std::sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
      if (ctx.x(a, f) != ctx.x(b, f)) return ctx.x(a, f) < ctx.x(b, f);
      return a < b;
    });
    // Prefix statistics, splitting after position k.
    double wl = 0.0, wl_pos = 0.0, sl = 0.0, sl_sq = 0.0;
    double wr = 0.0, wr_pos = 0.0, sr = 0.0, sr_sq = 0.0;
    for (Eigen::Index i : order) {
      wr += ctx.w(i);
      if (ctx.classification) {
        if (ctx.y(i) >= 0.5) wr_pos += ctx.w(i);
      } else {
        sr += ctx.w(i) * ctx.y(i);
        sr_sq += ctx.w(i) * ctx.y(i) * ctx.y(i);
      }
    }
    const std::size_t n = order.size();
    for (std::size_t k = 0; k + 1 < n; ++k) {
      const Eigen::Index i = order[k];
      wl += ctx.w(i);
      wr -= ctx.w(i);
      if (ctx.classification) {
        if (ctx.y(i) >= 0.5) {
          wl_pos += ctx.w(i);
          wr_pos -= ctx.w(i);
        }
      } else {
        sl += ctx.w(i) * ctx.y(i);
        sl_sq += ctx.w(i) * ctx.y(i) * ctx.y(i);
        sr -= ctx.w(i) * ctx.y(i);
        sr_sq -= ctx.w(i) * ctx.y(i) * ctx.y(i);
      }
      const double lo = ctx.x(order[k], f);
      const double hi = ctx.x(order[k + 1], f);
      if (lo == hi) continue;  // not a boundary
      const std::size_t left_n = k + 1;
      const std::size_t right_n = n - left_n;
      if (left_n < static_cast<std::size_t>(ctx.hyper.min_samples_leaf) ||
          right_n < static_cast<std::size_t>(ctx.hyper.min_samples_leaf))
        continue;
      double child_impurity;
      if (ctx.classification) {
        const double pl = wl_pos / wl;
        const double pr = wr_pos / wr;
        child_impurity = wl * (1.0 - pl * pl - (1.0 - pl) * (1.0 - pl)) +
                         wr * (1.0 - pr * pr - (1.0 - pr) * (1.0 - pr));
      } else {
        child_impurity = (sl_sq - sl * sl / wl) + (sr_sq - sr * sr / wr);
      }
      const double gain = parent_impurity - child_impurity;
      if (gain > best.gain + 1e-12 && gain > 1e-12) {
        best.found = true;
        best.feature = f;
        best.threshold = 0.5 * (lo + hi);
        best.gain = gain;
      }
    }
  }
  return best;
}

int grow(GrowContext& ctx, std::vector<Eigen::Index> idx, int depth) {
  Tree& tree = *ctx.tree;
  const int node_id = static_cast<int>(tree.size());
  tree.emplace_back();

  const bool depth_capped = ctx.hyper.max_depth > 0 && depth >= ctx.hyper.max_depth;
  if (idx.size() < 2 * static_cast<std::size_t>(ctx.hyper.min_samples_leaf) ||
      depth_capped || node_pure(ctx, idx)) {
    tree[static_cast<std::size_t>(node_id)].value = leaf_value(ctx, idx);
    return node_id;
  }

  const int d = static_cast<int>(ctx.x.cols());
  const int m = std::max(1, static_cast<int>(std::lround(std::sqrt(static_cast<double>(d)))));

  // Partial Fisher-Yates draw of m distinct features, reported ascending.
  std::vector<int> all(static_cast<std::size_t>(d));
  std::iota(all.begin(), all.end(), 0);
  std::vector<int> sampled;
  sampled.reserve(static_cast<std::size_t>(m));
  for (int k = 0; k < m; ++k) {
    const std::size_t j =
        static_cast<std::size_t>(k) +
        static_cast<std::size_t>(ctx.rng->uniform_int(static_cast<std::uint64_t>(d - k)));
    std::swap(all[static_cast<std::size_t>(k)], all[j]);
    sampled.push_back(all[static_cast<std::size_t>(k)]);
  }
  std::sort(sampled.begin(), sampled.end());

  const double parent = node_impurity(ctx, idx);
  SplitChoice choice = best_split_over(ctx, idx, sampled, parent);
  if (!choice.found && m < d) {
    // The sampled features could not separate this node; widen the search so
    // distinguishable samples always end up in distinct leaves.
    choice = best_split_over(ctx, idx, all, parent);
  }
  if (!choice.found) {
    tree[static_cast<std::size_t>(node_id)].value = leaf_value(ctx, idx);
    return node_id;
  }

  std::vector<Eigen::Index> left_idx, right_idx;
  for (Eigen::Index i : idx)
    (ctx.x(i, choice.feature) <= choice.threshold ? left_idx : right_idx).push_back(i);
  idx.clear();
  idx.shrink_to_fit();

  tree[static_cast<std::size_t>(node_id)].feature = choice.feature;
  tree[static_cast<std::size_t>(node_id)].threshold = choice.threshold;
  const int left = grow(ctx, std::move(left_idx), depth + 1);
  const int right = grow(ctx, std::move(right_idx), depth + 1);
  tree[static_cast<std::size_t>(node_id)].left = left;
  tree[static_cast<std::size_t>(node_id)].right = right;
  return node_id;
}

std::vector<Tree> grow_forest(const Eigen::Ref<const Eigen::MatrixXd>& x,
                              const Eigen::Ref<const Eigen::VectorXd>& y,
                              const Eigen::VectorXd& sample_w, const RfHyper& hyper,
                              bool classification, std::uint64_t seed) {
  const Eigen::Index n = x.rows();
  if (n != y.size()) throw DataError("forest: label count mismatch");
  if (n < 2) throw TrainError("forest: need at least 2 samples");
  if (hyper.trees < 1) throw TrainError("forest: need at least 1 tree");

  const Eigen::MatrixXd xm = x;
  const Eigen::VectorXd ym = y;
  std::vector<Tree> trees;
  trees.reserve(static_cast<std::size_t>(hyper.trees));
  for (int t = 0; t < hyper.trees; ++t) {
    Rng rng(derive_seed(seed, "tree_" + std::to_string(t)));
    std::vector<Eigen::Index> idx;
    idx.reserve(static_cast<std::size_t>(n));
    if (hyper.bootstrap) {
      for (Eigen::Index i = 0; i < n; ++i)
        idx.push_back(static_cast<Eigen::Index>(rng.uniform_int(static_cast<std::uint64_t>(n))));
      std::sort(idx.begin(), idx.end());
    } else {
      idx.resize(static_cast<std::size_t>(n));
      std::iota(idx.begin(), idx.end(), 0);
    }
    Tree tree;
    GrowContext ctx{xm, ym, sample_w, hyper, classification, &rng, &tree};
    grow(ctx, std::move(idx), 0);
    trees.push_back(std::move(tree));
  }
  return trees;
}

nlohmann::json trees_to_json(const std::vector<Tree>& trees) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& tree : trees) {
    nlohmann::json nodes = nlohmann::json::array();
    for (const auto& n : tree)
      nodes.push_back({n.feature, n.threshold, n.left, n.right, n.value});
    out.push_back(std::move(nodes));
  }
  return out;
}

std::vector<Tree> trees_from_json(const nlohmann::json& doc) {
  std::vector<Tree> trees;
  for (const auto& tj : doc) {
    Tree tree;
    for (const auto& nj : tj) {
      TreeNode n;
      n.feature = nj.at(0).get<int>();
      n.threshold = nj.at(1).get<double>();
      n.left = nj.at(2).get<int>();
      n.right = nj.at(3).get<int>();
      n.value = nj.at(4).get<double>();
      tree.push_back(n);
    }
    trees.push_back(std::move(tree));
  }
  return trees;
}

nlohmann::json rf_hyper_json(const RfHyper& h) {
  return {{"trees", h.trees},
          {"max_depth", h.max_depth},
          {"min_samples_leaf", h.min_samples_leaf},
          {"bootstrap", h.bootstrap}};
}

}  // namespace

double ForestModel::predict_score(const Eigen::Ref<const Eigen::VectorXd>& x) const {
  double votes = 0.0;
  for (const auto& tree : trees_) votes += tree_predict(tree, x);
  return votes / static_cast<double>(trees_.size());
}

nlohmann::json ForestModel::to_json() const {
  return {{"schema_version", 1},
          {"kind", "rf"},
          {"hyperparams", rf_hyper_json(hyper_)},
          {"parameters", {{"trees", trees_to_json(trees_)}}}};
}

double ForestRegModel::predict(const Eigen::Ref<const Eigen::VectorXd>& x) const {
  double total = 0.0;
  for (const auto& tree : trees_) total += tree_predict(tree, x);
  return total / static_cast<double>(trees_.size());
}

nlohmann::json ForestRegModel::to_json() const {
  return {{"schema_version", 1},
          {"kind", "rf_reg"},
          {"hyperparams", rf_hyper_json(hyper_)},
          {"parameters", {{"trees", trees_to_json(trees_)}}}};
}

std::unique_ptr<BinaryClassifier> fit_rf(const Eigen::Ref<const Eigen::MatrixXd>& x,
                                         const Eigen::Ref<const Eigen::VectorXd>& y,
                                         const ClassWeights& weights, const RfHyper& hyper,
                                         std::uint64_t seed) {
  Eigen::VectorXd sw(y.size());
  for (Eigen::Index i = 0; i < y.size(); ++i) sw(i) = weights.weight_for(y(i));
  return std::make_unique<ForestModel>(grow_forest(x, y, sw, hyper, true, seed), hyper);
}

std::unique_ptr<Regressor> fit_rf_reg(const Eigen::Ref<const Eigen::MatrixXd>& x,
                                      const Eigen::Ref<const Eigen::VectorXd>& y,
                                      const RfHyper& hyper, std::uint64_t seed) {
  const Eigen::VectorXd sw = Eigen::VectorXd::Ones(y.size());
  return std::make_unique<ForestRegModel>(grow_forest(x, y, sw, hyper, false, seed), hyper);
}

namespace detail_forest {

std::unique_ptr<BinaryClassifier> forest_from_json(const nlohmann::json& doc) {
  RfHyper h;
  const auto& hj = doc.at("hyperparams");
  h.trees = hj.at("trees").get<int>();
  h.max_depth = hj.at("max_depth").get<int>();
  h.min_samples_leaf = hj.at("min_samples_leaf").get<int>();
  h.bootstrap = hj.at("bootstrap").get<bool>();
  return std::make_unique<ForestModel>(trees_from_json(doc.at("parameters").at("trees")), h);
}

std::unique_ptr<Regressor> forest_reg_from_json(const nlohmann::json& doc) {
  RfHyper h;
  const auto& hj = doc.at("hyperparams");
  h.trees = hj.at("trees").get<int>();
  h.max_depth = hj.at("max_depth").get<int>();
  h.min_samples_leaf = hj.at("min_samples_leaf").get<int>();
  h.bootstrap = hj.at("bootstrap").get<bool>();
  return std::make_unique<ForestRegModel>(trees_from_json(doc.at("parameters").at("trees")), h);
}

}  // namespace detail_forest

}  // namespace metareg
