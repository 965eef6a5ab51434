#pragma once

#include <Eigen/Dense>
#include <atomic>
#include <memory>
#include <optional>
#include <shared_mutex>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace causil {

class Dag;

enum class EstimatorKind { Linear, Poly2, Poly3 };

int degree_of(EstimatorKind kind);
/// "lin", "poly2", "poly3"
std::string_view estimator_name(EstimatorKind kind);
/// Accepts "lin", "linear", "poly2", "poly3". Throws ParseError.
EstimatorKind parse_estimator(std::string_view text);

struct ScoreParams {
  double rho = 2.0;
  /// Diagonal regularizer for the normal equations. When unset,
  /// 1e-8 * trace(XᵀX) / k is used.
  std::optional<double> ridge_eps;
  /// Adds all cross products up to the estimator degree to the basis.
  bool interactions = false;
};

/// Regression table: one row per observation, one uniquely labelled column
/// per candidate variable.
class StackedDataset {
 public:
  StackedDataset() = default;
  /// Throws DegenerateData on NaN/inf, empty data, or duplicate labels.
  StackedDataset(std::vector<std::string> labels, Eigen::MatrixXd rows);

  std::size_t n() const { return static_cast<std::size_t>(rows_.rows()); }
  std::size_t n_columns() const { return labels_.size(); }
  const std::vector<std::string>& labels() const { return labels_; }
  const Eigen::MatrixXd& rows() const { return rows_; }
  Eigen::VectorXd column(int c) const { return rows_.col(c); }
  /// Throws std::out_of_range for unknown labels.
  int column_index(std::string_view label) const;

 private:
  std::vector<std::string> labels_;
  Eigen::MatrixXd rows_;
};

/// [1, p_1..p_m, p_1²..p_m², p_1³..p_m³] up to `degree`: k = 1 + degree * m.
/// With `interactions`, every monomial of total degree <= `degree` is used.
Eigen::MatrixXd expand_basis(const Eigen::MatrixXd& rows, int degree, bool interactions = false);

struct OlsFit {
  Eigen::VectorXd coefficients;
  double rss = 0.0;
};

/// Solves (XᵀX + ridge_eps I) β = Xᵀy and reports ‖y - Xβ‖².
OlsFit fit_ols(const Eigen::MatrixXd& design, const Eigen::VectorXd& y, double ridge_eps);

/// Number of regression coefficients (intercept included) for m parents.
int parameter_count(int n_parents, EstimatorKind kind, bool interactions = false);

/// −[n ln(rss/n) + ρ k ln n]; higher is better. Parents are standardized
/// before basis expansion, which leaves the fitted column space unchanged.
/// Throws DegenerateData when n <= k.
double local_score(const StackedDataset& ds, int target, std::span<const int> parents,
                   EstimatorKind kind, const ScoreParams& params);

/// Memoizing scorer used by the search. Standardized basis columns are built
/// once; their pairwise inner products are computed on first use and kept,
/// so a local score costs O(k³) plus O(n) per inner product not seen before.
/// Thread-safe: concurrent readers, one writer at a time on each cache.
class Scorer {
 public:
  Scorer(const StackedDataset& ds, EstimatorKind kind, ScoreParams params);

  double score(int target, std::span<const int> parents) const;
  double score(int target, std::vector<int> parents) const {
    return score(target, std::span<const int>(parents));
  }

  std::size_t n_rows() const { return n_; }
  std::size_t n_columns() const { return n_columns_; }
  EstimatorKind kind() const { return kind_; }

  std::size_t evaluations() const { return evaluations_.load(); }
  std::size_t cache_hits() const { return hits_.load(); }
  std::size_t floored() const { return floored_.load(); }

 private:
  double compute(int target, const std::vector<int>& sorted_parents) const;

  struct KeyHash {
    std::size_t operator()(const std::vector<int>& key) const noexcept;
  };

  const StackedDataset* ds_;
  EstimatorKind kind_;
  ScoreParams params_;
  std::size_t n_ = 0;
  std::size_t n_columns_ = 0;
  int degree_ = 1;
  void fill_gram(const std::vector<Eigen::Index>& features) const;

  Eigen::MatrixXd features_;  // [1, z_c^p for p, c]
  std::vector<double> variance_;
  mutable Eigen::MatrixXd gram_;
  mutable std::vector<char> gram_ready_;
  mutable std::shared_mutex gram_mutex_;

  mutable std::shared_mutex mutex_;
  mutable std::unordered_map<std::vector<int>, double, KeyHash> cache_;
  mutable std::atomic<std::size_t> evaluations_{0};
  mutable std::atomic<std::size_t> hits_{0};
  mutable std::atomic<std::size_t> floored_{0};
};

/// Σ over nodes of score(node, parents in `dag`); node i is column i.
double graph_score(const Scorer& scorer, const Dag& dag);

}  // namespace causil
