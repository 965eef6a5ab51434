#include "causil/forest.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>

#include "causil/random.hpp"

namespace causil {

RegressionForest RegressionForest::fit(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                                       const ForestParams& params) {
  if (x.rows() != y.size() || x.rows() == 0) throw std::invalid_argument("forest needs matching, non-empty data");
  if (params.n_trees < 1 || params.max_depth < 0 || params.min_leaf < 1) {
    throw std::invalid_argument("invalid forest parameters");
  }
  RegressionForest forest;
  forest.n_features_ = static_cast<int>(x.cols());
  Rng rng(params.seed);
  const auto n = static_cast<std::int64_t>(x.rows());
  for (int t = 0; t < params.n_trees; ++t) {
    std::vector<int> rows(static_cast<std::size_t>(n));
    for (auto& r : rows) r = static_cast<int>(rng.uniform_int(0, n - 1));
    Tree tree;
    grow(tree, x, y, rows, 0, rows.size(), 0, params);
    forest.trees_.push_back(std::move(tree));
  }
  return forest;
}

void RegressionForest::grow(Tree& tree, const Eigen::MatrixXd& x, const Eigen::VectorXd& y, std::vector<int>& rows,
                            std::size_t begin, std::size_t end, int depth, const ForestParams& params) {
  const std::size_t count = end - begin;
  double sum = 0.0;
  for (std::size_t i = begin; i < end; ++i) sum += y(rows[i]);
  const int self = static_cast<int>(tree.size());
  tree.push_back(Node{-1, 0.0, sum / static_cast<double>(count), -1, -1});
  if (depth >= params.max_depth || count < 2 * static_cast<std::size_t>(params.min_leaf)) return;

  // Best split minimizes the summed squared error of the two children, i.e.
  // maximizes sum_l²/n_l + sum_r²/n_r.
  const double parent_gain = sum * sum / static_cast<double>(count);
  double best_gain = parent_gain + 1e-12 * std::abs(parent_gain);
  int best_feature = -1;
  double best_threshold = 0.0;
  std::vector<int> sorted(rows.begin() + static_cast<std::ptrdiff_t>(begin),
                          rows.begin() + static_cast<std::ptrdiff_t>(end));
  for (int f = 0; f < x.cols(); ++f) {
    std::sort(sorted.begin(), sorted.end(), [&](int a, int b) {
      return x(a, f) < x(b, f) || (x(a, f) == x(b, f) && a < b);
    });
    double left_sum = 0.0;
    for (std::size_t i = 0; i + 1 < count; ++i) {
      left_sum += y(sorted[i]);
      const std::size_t n_left = i + 1;
      const std::size_t n_right = count - n_left;
      if (n_left < static_cast<std::size_t>(params.min_leaf) || n_right < static_cast<std::size_t>(params.min_leaf)) {
        continue;
      }
      const double lo = x(sorted[i], f);
      const double hi = x(sorted[i + 1], f);
      if (!(lo < hi)) continue;
      const double right_sum = sum - left_sum;
      const double gain = left_sum * left_sum / static_cast<double>(n_left) +
                          right_sum * right_sum / static_cast<double>(n_right);
      if (gain > best_gain) {
        best_gain = gain;
        best_feature = f;
        best_threshold = 0.5 * (lo + hi);
      }
    }
  }
  if (best_feature < 0) return;

  auto mid = std::partition(rows.begin() + static_cast<std::ptrdiff_t>(begin),
                            rows.begin() + static_cast<std::ptrdiff_t>(end),
                            [&](int r) { return x(r, best_feature) <= best_threshold; });
  const auto split = static_cast<std::size_t>(mid - rows.begin());
  tree[static_cast<std::size_t>(self)].feature = best_feature;
  tree[static_cast<std::size_t>(self)].threshold = best_threshold;
  tree[static_cast<std::size_t>(self)].left = static_cast<int>(tree.size());
  grow(tree, x, y, rows, begin, split, depth + 1, params);
  tree[static_cast<std::size_t>(self)].right = static_cast<int>(tree.size());
  grow(tree, x, y, rows, split, end, depth + 1, params);
}

double RegressionForest::predict(std::span<const double> row) const {
  if (static_cast<int>(row.size()) != n_features_) throw std::invalid_argument("feature count mismatch");
  double total = 0.0;
  for (const auto& tree : trees_) {
    const Node* node = &tree.front();
    while (node->feature >= 0) {
      const auto next = row[static_cast<std::size_t>(node->feature)] <= node->threshold ? node->left : node->right;
      node = &tree[static_cast<std::size_t>(next)];
    }
    total += node->value;
  }
  return trees_.empty() ? 0.0 : total / static_cast<double>(trees_.size());
}

Eigen::VectorXd RegressionForest::predict(const Eigen::MatrixXd& x) const {
  Eigen::VectorXd out(x.rows());
  std::vector<double> row(static_cast<std::size_t>(x.cols()));
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    for (Eigen::Index c = 0; c < x.cols(); ++c) row[static_cast<std::size_t>(c)] = x(i, c);
    out(i) = predict(row);
  }
  return out;
}

}  // namespace causil
