#include "tefb/gbdt.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "tefb/nn.hpp"
#include "tefb/rng.hpp"

namespace tefb {

double RegressionTree::predict(std::span<const float> x) const { return nodes[leaf_index(x)].value; }

std::size_t RegressionTree::leaf_index(std::span<const float> x) const {
  std::size_t i = 0;
  while (!nodes[i].is_leaf()) {
    const auto& n = nodes[i];
    i = static_cast<std::size_t>(static_cast<double>(x[n.feature]) < n.threshold ? n.left : n.right);
  }
  return i;
}

std::size_t RegressionTree::depth() const {
  std::vector<std::size_t> d(nodes.size(), 0);
  std::size_t best = 0;
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    best = std::max(best, d[i]);
    if (!nodes[i].is_leaf()) {
      d[nodes[i].left] = d[i] + 1;
      d[nodes[i].right] = d[i] + 1;
    }
  }
  return best;
}

std::size_t RegressionTree::leaf_count() const {
  return static_cast<std::size_t>(std::count_if(nodes.begin(), nodes.end(), [](const TreeNode& n) { return n.is_leaf(); }));
}

double GbdtModel::margin(std::span<const float> x) const {
  double s = 0.0;
  for (const auto& t : trees) s += t.predict(x);
  return base_score + shrinkage * s;
}

double GbdtModel::score(std::span<const float> x) const { return sigmoid(margin(x)); }

namespace detail {

namespace {

SplitCandidate scan_feature(const SplitProblem& p, std::int32_t f, const std::vector<std::uint32_t>& rows,
                            double g_tot, double h_tot) {
  SplitCandidate best;
  const float* col = p.cols + static_cast<std::size_t>(f) * p.n;
  const double parent = g_tot * g_tot / (h_tot + p.lambda_l2);
  double gl = 0.0, hl = 0.0;
  const std::size_t n = rows.size();
  for (std::size_t i = 0; i + 1 < n; ++i) {
    const std::uint32_t r = rows[i];
    gl += p.grad[r];
    hl += p.hess[r];
    const float v = col[r];
    const float next = col[rows[i + 1]];
    if (!(v < next)) continue;
    const std::size_t nl = i + 1;
    if (nl < p.min_child_samples || n - nl < p.min_child_samples) continue;
    const double gr = g_tot - gl, hr = h_tot - hl;
    if (hl < p.min_sum_hessian || hr < p.min_sum_hessian) continue;
    const double gain = gl * gl / (hl + p.lambda_l2) + gr * gr / (hr + p.lambda_l2) - parent;
    if (gain > best.gain) {
      best.gain = gain;
      best.feature = f;
      best.threshold = 0.5 * (static_cast<double>(v) + static_cast<double>(next));
      best.left_count = nl;
    }
  }
  return best;
}

void totals(const SplitProblem& p, const std::vector<std::uint32_t>& rows, double& g, double& h) {
  g = 0.0;
  h = 0.0;
  for (auto r : rows) {
    g += p.grad[r];
    h += p.hess[r];
  }
}

SplitCandidate reduce(const std::vector<SplitCandidate>& per_feature) {
  SplitCandidate best;
  for (const auto& c : per_feature) {
    if (c.valid() && c.gain > best.gain) best = c;
  }
  return best;
}

}  // namespace

SplitCandidate find_best_split(const SplitProblem& p, std::span<const std::int32_t> features,
                               const std::vector<std::vector<std::uint32_t>>& sorted) {
  if (features.empty() || sorted.front().size() < 2) return {};
  double g, h;
  totals(p, sorted.front(), g, h);
  std::vector<SplitCandidate> per(features.size());
  const auto nf = static_cast<std::ptrdiff_t>(features.size());
#pragma omp parallel for schedule(static) if (sorted.front().size() > 512)
  for (std::ptrdiff_t k = 0; k < nf; ++k) per[k] = scan_feature(p, features[k], sorted[k], g, h);
  return reduce(per);
}

SplitCandidate find_best_split_serial(const SplitProblem& p, std::span<const std::int32_t> features,
                                      const std::vector<std::vector<std::uint32_t>>& sorted) {
  if (features.empty() || sorted.front().size() < 2) return {};
  double g, h;
  totals(p, sorted.front(), g, h);
  std::vector<SplitCandidate> per(features.size());
  for (std::size_t k = 0; k < features.size(); ++k) per[k] = scan_feature(p, features[k], sorted[k], g, h);
  return reduce(per);
}

}  // namespace detail

namespace {

struct Pending {
  std::int32_t node = 0;
  std::size_t depth = 0;
  std::vector<std::vector<std::uint32_t>> sorted;
  detail::SplitCandidate split;
};

double weighted_loss(const std::vector<double>& margin, const std::vector<double>& y, const std::vector<double>& w,
                     double wsum) {
  double s = 0.0;
  for (std::size_t i = 0; i < margin.size(); ++i) s += w[i] * logistic_loss(margin[i], y[i]);
  return s / wsum;
}

}  // namespace

GbdtModel train_gbdt(const FeatureMatrix& X, std::span<const double> weights, const GbdtConfig& cfg,
                     GbdtTrainLog* log) {
  const std::size_t n = X.rows;
  if (n == 0) throw Error(Errc::InvalidArgument, "empty training set");
  if (!weights.empty() && weights.size() != n) throw Error(Errc::InvalidArgument, "weights/rows size mismatch");
  if (cfg.num_leaves < 2 || cfg.max_depth < 1 || cfg.min_child_samples < 1 || !(cfg.feature_fraction > 0.0) ||
      cfg.feature_fraction > 1.0 || !(cfg.learning_rate > 0.0)) {
    throw Error(Errc::InvalidArgument, "bad GBDT config");
  }

  std::vector<double> y(n), w(n, 1.0);
  double wsum = 0.0, wpos = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    y[i] = X.labels[i] ? 1.0 : 0.0;
    if (!weights.empty()) w[i] = weights[i];
    wsum += w[i];
    wpos += w[i] * y[i];
  }
  const double prior = std::clamp(wpos / wsum, 1e-6, 1.0 - 1e-6);

  GbdtModel model;
  model.shrinkage = cfg.learning_rate;
  model.base_score = std::log(prior / (1.0 - prior));

  std::vector<double> margin(n, model.base_score);
  if (log) log->loss_per_round.push_back(weighted_loss(margin, y, w, wsum));
  if (wpos <= 0.0 || wpos >= wsum) return model;

  // Column-major copy and global presort per feature.
  std::vector<float> cols(kFeatureDim * n);
  for (std::size_t i = 0; i < n; ++i) {
    auto r = X.row(i);
    for (std::size_t f = 0; f < kFeatureDim; ++f) cols[f * n + i] = r[f];
  }
  std::vector<std::vector<std::uint32_t>> presorted(kFeatureDim);
#pragma omp parallel for schedule(dynamic)
  for (std::size_t f = 0; f < kFeatureDim; ++f) {
    auto& idx = presorted[f];
    idx.resize(n);
    std::iota(idx.begin(), idx.end(), 0u);
    const float* col = cols.data() + f * n;
    std::stable_sort(idx.begin(), idx.end(), [col](std::uint32_t a, std::uint32_t b) { return col[a] < col[b]; });
  }

  std::vector<double> grad(n), hess(n);
  std::vector<std::uint8_t> goes_left(n);
  const auto n_feat = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::lround(cfg.feature_fraction * static_cast<double>(kFeatureDim))));

  detail::SplitProblem prob;
  prob.cols = cols.data();
  prob.n = n;
  prob.grad = grad.data();
  prob.hess = hess.data();
  prob.min_child_samples = cfg.min_child_samples;
  prob.min_sum_hessian = cfg.min_sum_hessian;
  prob.lambda_l2 = cfg.lambda_l2;

  double prev_loss = weighted_loss(margin, y, w, wsum);
  for (std::size_t round = 0; round < cfg.num_boosting_rounds; ++round) {
    for (std::size_t i = 0; i < n; ++i) {
      const double p = sigmoid(margin[i]);
      grad[i] = w[i] * (p - y[i]);
      hess[i] = w[i] * std::max(p * (1.0 - p), 1e-16);
    }

    std::vector<std::int32_t> features(kFeatureDim);
    std::iota(features.begin(), features.end(), 0);
    if (n_feat < kFeatureDim) {
      Rng rng(derive_seed(cfg.seed, {round}));
      std::shuffle(features.begin(), features.end(), rng);
      features.resize(n_feat);
      std::sort(features.begin(), features.end());
    }

    RegressionTree tree;
    auto add_node = [&](const std::vector<std::uint32_t>& rows) {
      TreeNode node;
      double g = 0, h = 0, c = 0;
      for (auto r : rows) {
        g += grad[r];
        h += hess[r];
        c += w[r];
      }
      node.cover = c;
      node.value = -g / (h + cfg.lambda_l2);
      tree.nodes.push_back(node);
      return static_cast<std::int32_t>(tree.nodes.size() - 1);
    };

    Pending root;
    root.sorted.reserve(features.size());
    for (auto f : features) root.sorted.push_back(presorted[f]);
    root.node = add_node(root.sorted.front());
    root.split = detail::find_best_split(prob, features, root.sorted);

    std::vector<Pending> open;
    open.push_back(std::move(root));
    std::size_t leaves = 1;
    while (leaves < cfg.num_leaves) {
      std::ptrdiff_t pick = -1;
      for (std::size_t i = 0; i < open.size(); ++i) {
        if (!open[i].split.valid() || open[i].depth >= cfg.max_depth) continue;
        if (pick < 0 || open[i].split.gain > open[pick].split.gain) pick = static_cast<std::ptrdiff_t>(i);
      }
      if (pick < 0) break;
      Pending cur = std::move(open[pick]);
      open.erase(open.begin() + pick);

      const auto& sp = cur.split;
      const float* col = cols.data() + static_cast<std::size_t>(sp.feature) * n;
      for (auto r : cur.sorted.front()) goes_left[r] = static_cast<double>(col[r]) < sp.threshold;

      Pending left, right;
      left.depth = right.depth = cur.depth + 1;
      left.sorted.resize(features.size());
      right.sorted.resize(features.size());
      for (std::size_t k = 0; k < features.size(); ++k) {
        auto& l = left.sorted[k];
        auto& r = right.sorted[k];
        l.reserve(sp.left_count);
        r.reserve(cur.sorted[k].size() - sp.left_count);
        for (auto row : cur.sorted[k]) (goes_left[row] ? l : r).push_back(row);
      }
      cur.sorted.clear();
      left.node = add_node(left.sorted.front());
      right.node = add_node(right.sorted.front());
      auto& parent = tree.nodes[cur.node];
      parent.feature = sp.feature;
      parent.threshold = sp.threshold;
      parent.left = left.node;
      parent.right = right.node;
      left.split = detail::find_best_split(prob, features, left.sorted);
      right.split = detail::find_best_split(prob, features, right.sorted);
      open.push_back(std::move(left));
      open.push_back(std::move(right));
      ++leaves;
    }
    for (auto& node : tree.nodes) {
      if (!node.is_leaf()) node.value = 0.0;
    }

    // Apply the tree; halve leaf outputs if the round would raise the loss.
    std::vector<double> delta(n);
    for (std::size_t i = 0; i < n; ++i) delta[i] = tree.predict(X.row(i));
    double scale = 1.0;
    std::vector<double> trial(n);
    double loss = 0.0;
    for (int attempt = 0; attempt < 30; ++attempt) {
      for (std::size_t i = 0; i < n; ++i) trial[i] = margin[i] + model.shrinkage * scale * delta[i];
      loss = weighted_loss(trial, y, w, wsum);
      if (loss <= prev_loss) break;
      scale *= 0.5;
    }
    if (loss > prev_loss) {
      scale = 0.0;
      loss = prev_loss;
      trial = margin;
    }
    if (scale != 1.0) {
      for (auto& node : tree.nodes) node.value *= scale;
    }
    margin.swap(trial);
    prev_loss = loss;
    if (log) log->loss_per_round.push_back(loss);
    model.trees.push_back(std::move(tree));
  }
  return model;
}

}  // namespace tefb
