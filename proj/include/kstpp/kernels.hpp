#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "kstpp/tensor.hpp"

namespace kstpp {

enum class KernelFamily { SquaredExponential, Matern52 };

inline std::string_view to_string(KernelFamily f) {
  return f == KernelFamily::SquaredExponential ? "se" : "matern52";
}

inline KernelFamily kernel_family_from_string(std::string_view s) {
  if (s == "se" || s == "squared_exponential") return KernelFamily::SquaredExponential;
  if (s == "matern52" || s == "matern") return KernelFamily::Matern52;
  throw std::invalid_argument("unknown kernel family '" + std::string(s) + "'");
}

/// One-dimensional stationary covariance. Hyperparameters are held as logs.
struct KernelSpec {
  KernelFamily family = KernelFamily::SquaredExponential;
  double log_lengthscale = 0.0;
  double log_variance = 0.0;

  static KernelSpec make(KernelFamily family, double lengthscale, double variance) {
    if (!(lengthscale > 0.0) || !(variance > 0.0))
      throw std::invalid_argument("KernelSpec: lengthscale and variance must be positive");
    return {family, std::log(lengthscale), std::log(variance)};
  }

  [[nodiscard]] double lengthscale() const { return std::exp(log_lengthscale); }
  [[nodiscard]] double variance() const { return std::exp(log_variance); }

  friend bool operator==(const KernelSpec&, const KernelSpec&) = default;
};

namespace detail {
inline constexpr double kSqrt5 = 2.23606797749978969640917366873128;
}

inline double eval_kernel(const KernelSpec& spec, double a, double b) {
  const double ell = spec.lengthscale();
  const double var = spec.variance();
  const double r = std::abs(a - b);
  if (spec.family == KernelFamily::SquaredExponential) return var * std::exp(-0.5 * r * r / (ell * ell));
  const double s = detail::kSqrt5 * r / ell;
  return var * (1.0 + s + s * s / 3.0) * std::exp(-s);
}

/// d k(a, b) / d log(lengthscale).
inline double eval_kernel_dlog_lengthscale(const KernelSpec& spec, double a, double b) {
  const double ell = spec.lengthscale();
  const double var = spec.variance();
  const double r = std::abs(a - b);
  if (spec.family == KernelFamily::SquaredExponential) {
    const double u = r * r / (ell * ell);
    return var * std::exp(-0.5 * u) * u;
  }
  const double s = detail::kSqrt5 * r / ell;
  return var * std::exp(-s) * s * s * (1.0 + s) / 3.0;
}

/// (d k / d log lengthscale) / k, so derivatives can reuse cached kernel values.
inline double kernel_dlog_lengthscale_ratio(const KernelSpec& spec, double a, double b) {
  const double ell = spec.lengthscale();
  const double r = std::abs(a - b);
  if (spec.family == KernelFamily::SquaredExponential) return r * r / (ell * ell);
  const double s = detail::kSqrt5 * r / ell;
  return s * s * (1.0 + s) / (3.0 + 3.0 * s + s * s);
}

/// Gram matrix of a kernel on a node set together with its Cholesky factor.
///
/// The diagonal carries `relative_jitter * variance`, so the whole matrix
/// scales with the variance. Cross weights are therefore variance-free.
class KernelOperator {
 public:
  KernelOperator() = default;

  [[nodiscard]] const KernelSpec& spec() const noexcept { return spec_; }
  [[nodiscard]] const std::vector<double>& nodes() const noexcept { return nodes_; }
  [[nodiscard]] const Matrix& gram() const noexcept { return gram_; }
  [[nodiscard]] const CholeskyFactor& factor() const noexcept { return factor_; }
  [[nodiscard]] const Matrix& gram_inverse() const noexcept { return inverse_; }
  [[nodiscard]] double relative_jitter() const noexcept { return relative_jitter_; }
  [[nodiscard]] double jitter() const noexcept { return relative_jitter_ * spec_.variance(); }
  [[nodiscard]] std::size_t size() const noexcept { return nodes_.size(); }

  /// Row of k(query, node_j) values.
  [[nodiscard]] std::vector<double> cross_covariance(double query) const {
    std::vector<double> row(nodes_.size());
    for (std::size_t j = 0; j < nodes_.size(); ++j) row[j] = eval_kernel(spec_, query, nodes_[j]);
    return row;
  }

  /// Matrix with rows k(queries_i, nodes).
  [[nodiscard]] Matrix cross_covariance(std::span<const double> queries) const {
    Matrix c(queries.size(), nodes_.size());
    for (std::size_t i = 0; i < queries.size(); ++i)
      for (std::size_t j = 0; j < nodes_.size(); ++j) c(i, j) = eval_kernel(spec_, queries[i], nodes_[j]);
    return c;
  }

  friend KernelOperator build_operator(const KernelSpec& spec, std::vector<double> nodes, double relative_jitter,
                                       std::string_view axis_name);

 private:
  KernelSpec spec_;
  std::vector<double> nodes_;
  Matrix gram_;
  CholeskyFactor factor_;
  Matrix inverse_;
  double relative_jitter_ = 1e-6;
};

inline constexpr double kDefaultRelativeJitter = 1e-6;

inline KernelOperator build_operator(const KernelSpec& spec, std::vector<double> nodes,
                                     double relative_jitter = kDefaultRelativeJitter,
                                     std::string_view axis_name = "axis") {
  if (nodes.size() < 2) throw std::invalid_argument("build_operator: need at least 2 nodes on " + std::string(axis_name));
  for (std::size_t i = 1; i < nodes.size(); ++i)
    if (!(nodes[i] > nodes[i - 1]))
      throw std::invalid_argument("build_operator: nodes on " + std::string(axis_name) +
                                  " must be strictly increasing (index " + std::to_string(i) + ")");
  if (!(relative_jitter >= 0.0)) throw std::invalid_argument("build_operator: jitter must be nonnegative");

  KernelOperator op;
  op.spec_ = spec;
  op.nodes_ = std::move(nodes);
  op.relative_jitter_ = relative_jitter;
  const std::size_t n = op.nodes_.size();
  op.gram_ = Matrix(n, n);
  const double jitter = relative_jitter * spec.variance();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j <= i; ++j) {
      const double v = eval_kernel(spec, op.nodes_[i], op.nodes_[j]);
      op.gram_(i, j) = v;
      op.gram_(j, i) = v;
    }
    op.gram_(i, i) += jitter;
  }
  try {
    op.factor_ = cholesky(op.gram_);
  } catch (const NotPositiveDefinite& e) {
    throw NotPositiveDefinite(e.pivot(), "Gram matrix on " + std::string(axis_name) +
                                             " failed to factor; increase the jitter (currently " +
                                             std::to_string(relative_jitter) + " x variance)");
  }
  op.inverse_ = inverse(op.factor_);
  return op;
}

/// eta = k(query, nodes) K^{-1}: the conditional-mean interpolation weights.
inline std::vector<double> cross_weights(const KernelOperator& op, double query) {
  const auto k = op.cross_covariance(query);
  const Matrix rhs(k.size(), 1, k);
  const Matrix w = solve(op.factor(), rhs);
  return {w.data().begin(), w.data().end()};
}

/// Rows eta_i = k(queries_i, nodes) K^{-1}.
inline Matrix cross_weights(const KernelOperator& op, std::span<const double> queries) {
  const Matrix c = op.cross_covariance(queries);
  return solve(op.factor(), c.transposed()).transposed();
}

/// Equispaced grid of `count` points on [lo, hi].
inline std::vector<double> uniform_nodes(double lo, double hi, std::size_t count) {
  if (count < 2) throw std::invalid_argument("uniform_nodes: need at least 2 points");
  if (!(hi > lo)) throw std::invalid_argument("uniform_nodes: empty range");
  std::vector<double> v(count);
  for (std::size_t i = 0; i < count; ++i) v[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(count - 1);
  return v;
}

}  // namespace kstpp
