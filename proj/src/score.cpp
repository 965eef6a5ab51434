#include "causil/score.hpp"

#include <algorithm>
#include <cfloat>
#include <cmath>
#include <mutex>
#include <set>

#include "causil/error.hpp"
#include "causil/graph.hpp"

namespace causil {

int degree_of(EstimatorKind kind) {
  switch (kind) {
    case EstimatorKind::Linear: return 1;
    case EstimatorKind::Poly2: return 2;
    case EstimatorKind::Poly3: return 3;
  }
  return 1;
}

std::string_view estimator_name(EstimatorKind kind) {
  switch (kind) {
    case EstimatorKind::Linear: return "lin";
    case EstimatorKind::Poly2: return "poly2";
    case EstimatorKind::Poly3: return "poly3";
  }
  return "lin";
}

EstimatorKind parse_estimator(std::string_view text) {
  if (text == "lin" || text == "linear") return EstimatorKind::Linear;
  if (text == "poly2") return EstimatorKind::Poly2;
  if (text == "poly3") return EstimatorKind::Poly3;
  throw ParseError("unknown estimator '" + std::string(text) + "'");
}

StackedDataset::StackedDataset(std::vector<std::string> labels, Eigen::MatrixXd rows)
    : labels_(std::move(labels)), rows_(std::move(rows)) {
  if (rows_.rows() < 1) throw DegenerateData("dataset has no rows");
  if (static_cast<std::size_t>(rows_.cols()) != labels_.size()) {
    throw DegenerateData("label count does not match column count");
  }
  std::set<std::string> unique(labels_.begin(), labels_.end());
  if (unique.size() != labels_.size()) throw DegenerateData("column labels must be unique");
  if (!rows_.allFinite()) throw DegenerateData("dataset contains missing or non-finite values");
}

int StackedDataset::column_index(std::string_view label) const {
  auto it = std::find(labels_.begin(), labels_.end(), label);
  if (it == labels_.end()) throw std::out_of_range("unknown column '" + std::string(label) + "'");
  return static_cast<int>(it - labels_.begin());
}

namespace {

// Monomials over m variables with total degree in [1, degree], as exponent
// lists, ordered by total degree then lexicographically.
std::vector<std::vector<int>> monomials(int m, int degree) {
  std::vector<std::vector<int>> out;
  for (int d = 1; d <= degree; ++d) {
    std::vector<int> idx(static_cast<std::size_t>(d), 0);
    if (m == 0) break;
    while (true) {
      out.push_back(idx);
      int pos = d - 1;
      while (pos >= 0 && idx[static_cast<std::size_t>(pos)] == m - 1) --pos;
      if (pos < 0) break;
      const int next = idx[static_cast<std::size_t>(pos)] + 1;
      for (int q = pos; q < d; ++q) idx[static_cast<std::size_t>(q)] = next;
    }
  }
  return out;
}

double population_variance(const Eigen::VectorXd& v) {
  const double mean = v.mean();
  return (v.array() - mean).square().sum() / static_cast<double>(v.size());
}

double rss_floor(double variance, std::size_t n) {
  return std::max(1e-12 * variance * static_cast<double>(n), DBL_MIN);
}

double bic(double rss, std::size_t n, int k, double rho) {
  const double dn = static_cast<double>(n);
  return -(dn * std::log(rss / dn) + rho * static_cast<double>(k) * std::log(dn));
}

Eigen::VectorXd standardized(const Eigen::VectorXd& v) {
  const double mean = v.mean();
  const double sd = std::sqrt(population_variance(v));
  Eigen::VectorXd out = v.array() - mean;
  if (sd > 0) out /= sd;
  return out;
}

}  // namespace

int parameter_count(int n_parents, EstimatorKind kind, bool interactions) {
  const int d = degree_of(kind);
  if (!interactions) return 1 + d * n_parents;
  return 1 + static_cast<int>(monomials(n_parents, d).size());
}

Eigen::MatrixXd expand_basis(const Eigen::MatrixXd& rows, int degree, bool interactions) {
  if (degree < 1 || degree > 3) throw std::invalid_argument("basis degree must be 1, 2 or 3");
  const auto n = rows.rows();
  const auto m = static_cast<int>(rows.cols());
  if (!interactions) {
    Eigen::MatrixXd out(n, 1 + degree * m);
    out.col(0).setOnes();
    for (int c = 0; c < m; ++c) {
      out.col(1 + c) = rows.col(c);
      for (int p = 2; p <= degree; ++p) {
        out.col(1 + (p - 1) * m + c) = out.col(1 + (p - 2) * m + c).cwiseProduct(rows.col(c));
      }
    }
    return out;
  }
  const auto terms = monomials(m, degree);
  Eigen::MatrixXd out(n, 1 + static_cast<Eigen::Index>(terms.size()));
  out.col(0).setOnes();
  for (std::size_t t = 0; t < terms.size(); ++t) {
    Eigen::VectorXd col = Eigen::VectorXd::Ones(n);
    for (int var : terms[t]) col = col.cwiseProduct(rows.col(var));
    out.col(static_cast<Eigen::Index>(t) + 1) = col;
  }
  return out;
}

OlsFit fit_ols(const Eigen::MatrixXd& design, const Eigen::VectorXd& y, double ridge_eps) {
  if (design.rows() != y.size()) throw std::invalid_argument("design rows must match target length");
  Eigen::MatrixXd gram = design.transpose() * design;
  gram.diagonal().array() += ridge_eps;
  const Eigen::VectorXd rhs = design.transpose() * y;
  OlsFit fit;
  Eigen::LLT<Eigen::MatrixXd> llt(gram);
  if (llt.info() == Eigen::Success) {
    fit.coefficients = llt.solve(rhs);
  } else {
    fit.coefficients = gram.ldlt().solve(rhs);
  }
  fit.rss = (y - design * fit.coefficients).squaredNorm();
  return fit;
}

double local_score(const StackedDataset& ds, int target, std::span<const int> parents,
                   EstimatorKind kind, const ScoreParams& params) {
  const auto n_cols = static_cast<int>(ds.n_columns());
  if (target < 0 || target >= n_cols) throw std::out_of_range("target column out of range");
  for (int p : parents) {
    if (p < 0 || p >= n_cols) throw std::out_of_range("parent column out of range");
    if (p == target) throw std::invalid_argument("target cannot be its own parent");
  }
  const int m = static_cast<int>(parents.size());
  const int k = parameter_count(m, kind, params.interactions);
  const std::size_t n = ds.n();
  if (n <= static_cast<std::size_t>(k)) {
    throw DegenerateData("need more than " + std::to_string(k) + " rows, have " + std::to_string(n));
  }
  Eigen::MatrixXd p(static_cast<Eigen::Index>(n), m);
  for (int i = 0; i < m; ++i) p.col(i) = standardized(ds.column(parents[static_cast<std::size_t>(i)]));
  const Eigen::MatrixXd design = expand_basis(p, degree_of(kind), params.interactions);
  const Eigen::VectorXd y = ds.column(target);
  const double ridge =
      params.ridge_eps.value_or(1e-8 * (design.transpose() * design).trace() / static_cast<double>(k));
  const double rss = std::max(fit_ols(design, y, ridge).rss, rss_floor(population_variance(y), n));
  return bic(rss, n, k, params.rho);
}

// ---------------------------------------------------------------------------
// Scorer

std::size_t Scorer::KeyHash::operator()(const std::vector<int>& key) const noexcept {
  std::size_t h = 1469598103934665603ULL;
  for (int v : key) {
    h ^= static_cast<std::size_t>(v) + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
  }
  return h;
}

Scorer::Scorer(const StackedDataset& ds, EstimatorKind kind, ScoreParams params)
    : ds_(&ds),
      kind_(kind),
      params_(params),
      n_(ds.n()),
      n_columns_(ds.n_columns()),
      degree_(degree_of(kind)) {
  if (params_.rho <= 0) throw std::invalid_argument("rho must be positive");
  variance_.resize(n_columns_);
  if (params_.interactions) return;  // scored directly, see compute()
  const auto m = static_cast<Eigen::Index>(n_columns_);
  Eigen::MatrixXd z(static_cast<Eigen::Index>(n_), m);
  for (Eigen::Index c = 0; c < m; ++c) {
    const Eigen::VectorXd col = ds.column(static_cast<int>(c));
    variance_[static_cast<std::size_t>(c)] = population_variance(col);
    z.col(c) = standardized(col);
  }
  features_ = expand_basis(z, degree_, false);
  const auto f = features_.cols();
  gram_ = Eigen::MatrixXd::Zero(f, f);
  gram_ready_.assign(static_cast<std::size_t>(f * f), 0);
}

void Scorer::fill_gram(const std::vector<Eigen::Index>& features) const {
  const auto f = features_.cols();
  std::vector<std::pair<Eigen::Index, Eigen::Index>> missing;
  {
    std::shared_lock lock(gram_mutex_);
    for (std::size_t a = 0; a < features.size(); ++a) {
      for (std::size_t b = a; b < features.size(); ++b) {
        const auto i = std::min(features[a], features[b]);
        const auto j = std::max(features[a], features[b]);
        if (!gram_ready_[static_cast<std::size_t>(i * f + j)]) missing.emplace_back(i, j);
      }
    }
  }
  if (missing.empty()) return;
  std::vector<double> values;
  values.reserve(missing.size());
  for (const auto& [i, j] : missing) values.push_back(features_.col(i).dot(features_.col(j)));
  std::unique_lock lock(gram_mutex_);
  for (std::size_t k = 0; k < missing.size(); ++k) {
    const auto [i, j] = missing[k];
    gram_(i, j) = values[k];
    gram_(j, i) = values[k];
    gram_ready_[static_cast<std::size_t>(i * f + j)] = 1;
  }
}

double Scorer::score(int target, std::span<const int> parents) const {
  std::vector<int> key;
  key.reserve(parents.size() + 1);
  key.push_back(target);
  key.insert(key.end(), parents.begin(), parents.end());
  std::sort(key.begin() + 1, key.end());
  {
    std::shared_lock lock(mutex_);
    auto it = cache_.find(key);
    if (it != cache_.end()) {
      ++hits_;
      return it->second;
    }
  }
  const double value = compute(target, std::vector<int>(key.begin() + 1, key.end()));
  std::unique_lock lock(mutex_);
  cache_.emplace(std::move(key), value);
  return value;
}

double Scorer::compute(int target, const std::vector<int>& parents) const {
  ++evaluations_;
  if (params_.interactions) return local_score(*ds_, target, parents, kind_, params_);

  const auto m_all = static_cast<int>(n_columns_);
  if (target < 0 || target >= m_all) throw std::out_of_range("target column out of range");
  const int m = static_cast<int>(parents.size());
  const int k = 1 + degree_ * m;
  if (n_ <= static_cast<std::size_t>(k)) {
    throw DegenerateData("need more than " + std::to_string(k) + " rows, have " + std::to_string(n_));
  }
  std::vector<Eigen::Index> idx;
  idx.reserve(static_cast<std::size_t>(k));
  idx.push_back(0);
  for (int p = 1; p <= degree_; ++p) {
    for (int c : parents) {
      if (c == target || c < 0 || c >= m_all) throw std::invalid_argument("bad parent column");
      idx.push_back(1 + (p - 1) * m_all + c);
    }
  }
  const Eigen::Index y_idx = 1 + target;
  idx.push_back(y_idx);
  fill_gram(idx);
  idx.pop_back();
  Eigen::MatrixXd a(k, k);
  Eigen::VectorXd b(k);
  std::shared_lock lock(gram_mutex_);
  for (Eigen::Index i = 0; i < k; ++i) {
    b(i) = gram_(idx[static_cast<std::size_t>(i)], y_idx);
    for (Eigen::Index j = 0; j < k; ++j) {
      a(i, j) = gram_(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(j)]);
    }
  }
  const double ridge = params_.ridge_eps.value_or(1e-8 * a.trace() / static_cast<double>(k));
  Eigen::MatrixXd regularized = a;
  regularized.diagonal().array() += ridge;
  Eigen::VectorXd beta;
  Eigen::LLT<Eigen::MatrixXd> llt(regularized);
  if (llt.info() == Eigen::Success) {
    beta = llt.solve(b);
  } else {
    beta = regularized.ldlt().solve(b);
  }
  const double yy = gram_(y_idx, y_idx);
  lock.unlock();
  const double rss_std = yy - 2.0 * beta.dot(b) + beta.dot(a * beta);
  const double variance = variance_[static_cast<std::size_t>(target)];
  double rss = std::max(rss_std, 0.0) * variance;
  const double floor = rss_floor(variance, n_);
  if (rss < floor) {
    rss = floor;
    ++floored_;
  }
  return bic(rss, n_, k, params_.rho);
}

double graph_score(const Scorer& scorer, const Dag& dag) {
  double total = 0.0;
  for (int i = 0; i < static_cast<int>(dag.size()); ++i) total += scorer.score(i, dag.parents(i));
  return total;
}

}  // namespace causil
