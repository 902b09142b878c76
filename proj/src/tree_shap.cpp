#include <algorithm>
#include <vector>

#include "tefb/shap.hpp"

namespace tefb {

namespace {

struct PathElement {
  std::int32_t feature = -1;
  double zero_fraction = 0.0;
  double one_fraction = 0.0;
  double pweight = 0.0;
};

void extend_path(PathElement* path, unsigned depth, double zero_fraction, double one_fraction, std::int32_t feature) {
  path[depth].feature = feature;
  path[depth].zero_fraction = zero_fraction;
  path[depth].one_fraction = one_fraction;
  path[depth].pweight = depth == 0 ? 1.0 : 0.0;
  for (int i = static_cast<int>(depth) - 1; i >= 0; --i) {
    path[i + 1].pweight += one_fraction * path[i].pweight * (i + 1) / static_cast<double>(depth + 1);
    path[i].pweight = zero_fraction * path[i].pweight * (depth - i) / static_cast<double>(depth + 1);
  }
}

void unwind_path(PathElement* path, unsigned depth, unsigned index) {
  const double one = path[index].one_fraction;
  const double zero = path[index].zero_fraction;
  double next_one_portion = path[depth].pweight;
  for (int i = static_cast<int>(depth) - 1; i >= 0; --i) {
    if (one != 0.0) {
      const double tmp = path[i].pweight;
      path[i].pweight = next_one_portion * (depth + 1) / static_cast<double>((i + 1) * one);
      next_one_portion = tmp - path[i].pweight * zero * (depth - i) / static_cast<double>(depth + 1);
    } else {
      path[i].pweight = path[i].pweight * (depth + 1) / (zero * (depth - i));
    }
  }
  for (unsigned i = index; i < depth; ++i) {
    path[i].feature = path[i + 1].feature;
    path[i].zero_fraction = path[i + 1].zero_fraction;
    path[i].one_fraction = path[i + 1].one_fraction;
  }
}

double unwound_path_sum(const PathElement* path, unsigned depth, unsigned index) {
  const double one = path[index].one_fraction;
  const double zero = path[index].zero_fraction;
  double next_one_portion = path[depth].pweight;
  double total = 0.0;
  for (int i = static_cast<int>(depth) - 1; i >= 0; --i) {
    if (one != 0.0) {
      const double tmp = next_one_portion * (depth + 1) / static_cast<double>((i + 1) * one);
      total += tmp;
      next_one_portion = path[i].pweight - tmp * zero * ((depth - i) / static_cast<double>(depth + 1));
    } else if (zero != 0.0) {
      total += (path[i].pweight / zero) / ((depth - i) / static_cast<double>(depth + 1));
    }
  }
  return total;
}

struct ShapWalk {
  const RegressionTree& tree;
  std::span<const float> x;
  double scale;
  Attribution& phi;

  void recurse(std::size_t node, unsigned depth, PathElement* parent_path, double parent_zero, double parent_one,
               std::int32_t parent_feature) {
    PathElement* path = parent_path + depth + 1;
    std::copy(parent_path, parent_path + depth + 1, path);
    extend_path(path, depth, parent_zero, parent_one, parent_feature);

    const TreeNode& n = tree.nodes[node];
    if (n.is_leaf()) {
      for (unsigned i = 1; i <= depth; ++i) {
        const double w = unwound_path_sum(path, depth, i);
        const PathElement& el = path[i];
        phi[el.feature] += w * (el.one_fraction - el.zero_fraction) * n.value * scale;
      }
      return;
    }

    const bool go_left = static_cast<double>(x[n.feature]) < n.threshold;
    const auto hot = static_cast<std::size_t>(go_left ? n.left : n.right);
    const auto cold = static_cast<std::size_t>(go_left ? n.right : n.left);
    const double hot_zero = tree.nodes[hot].cover / n.cover;
    const double cold_zero = tree.nodes[cold].cover / n.cover;
    double incoming_zero = 1.0, incoming_one = 1.0;

    unsigned idx = 0;
    for (; idx <= depth; ++idx) {
      if (path[idx].feature == n.feature) break;
    }
    if (idx != depth + 1) {
      incoming_zero = path[idx].zero_fraction;
      incoming_one = path[idx].one_fraction;
      unwind_path(path, depth, idx);
      depth -= 1;
    }
    recurse(hot, depth + 1, path, hot_zero * incoming_zero, incoming_one, n.feature);
    recurse(cold, depth + 1, path, cold_zero * incoming_zero, 0.0, n.feature);
  }
};

double tree_expectation(const RegressionTree& t) {
  const double root = t.nodes[0].cover;
  double e = 0.0;
  for (const auto& n : t.nodes) {
    if (n.is_leaf()) e += n.value * n.cover / root;
  }
  return e;
}

}  // namespace

double expected_margin(const GbdtModel& m) {
  double s = 0.0;
  for (const auto& t : m.trees) s += tree_expectation(t);
  return m.base_score + m.shrinkage * s;
}

Attribution tree_shap(const GbdtModel& m, std::span<const float> x) {
  Attribution phi{};
  std::vector<PathElement> workspace;
  for (const auto& t : m.trees) {
    if (t.nodes.size() <= 1) continue;
    const std::size_t d = t.depth() + 2;
    workspace.assign(d * (d + 1) / 2 + d, PathElement{});
    ShapWalk walk{t, x, m.shrinkage, phi};
    walk.recurse(0, 0, workspace.data(), 1.0, 1.0, -1);
  }
  return phi;
}

Attribution tree_shap(const Model& m, std::span<const float> x) {
  if (const auto* g = std::get_if<GbdtModel>(&m)) return tree_shap(*g, x);
  throw Error(Errc::NotTreeModel, "tree_shap requires a GBDT model");
}

}  // namespace tefb
