#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <span>
#include <vector>

namespace causil {

struct ForestParams {
  int n_trees = 25;
  int max_depth = 12;
  int min_leaf = 2;
  std::uint64_t seed = 1;
};

/// Bagged CART regression trees (variance-reduction splits over all
/// features, bootstrap resample per tree, prediction = mean over trees).
class RegressionForest {
 public:
  RegressionForest() = default;

  static RegressionForest fit(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const ForestParams& params);

  double predict(std::span<const double> row) const;
  Eigen::VectorXd predict(const Eigen::MatrixXd& x) const;

  int n_features() const { return n_features_; }
  std::size_t n_trees() const { return trees_.size(); }

 private:
  struct Node {
    int feature = -1;  // -1 marks a leaf
    double threshold = 0.0;
    double value = 0.0;
    int left = -1;
    int right = -1;
  };
  using Tree = std::vector<Node>;

  static void grow(Tree& tree, const Eigen::MatrixXd& x, const Eigen::VectorXd& y, std::vector<int>& rows,
                   std::size_t begin, std::size_t end, int depth, const ForestParams& params);

  int n_features_ = 0;
  std::vector<Tree> trees_;
};

}  // namespace causil
