#pragma once

#include <cmath>
#include <numbers>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "kstpp/kernels.hpp"
#include "kstpp/tensor.hpp"

namespace kstpp {

/// Inducing points along one axis.
struct AxisGrid {
  std::string name;
  std::vector<double> points;
  double lo = 0.0;
  double hi = 1.0;

  static AxisGrid uniform(std::string name, double lo, double hi, std::size_t count) {
    return {std::move(name), uniform_nodes(lo, hi, count), lo, hi};
  }

  [[nodiscard]] std::size_t size() const noexcept { return points.size(); }
};

/// A GP carried by its values on a Cartesian product grid with one kernel per axis.
///
/// Two-axis GPs (the spatial background) keep their values in a Tensor3 whose
/// leading mode has size 1; the missing axis contributes a unit weight.
class GridGP {
 public:
  GridGP() = default;

  GridGP(std::vector<AxisGrid> axes, std::vector<KernelSpec> kernels, double relative_jitter, Tensor3 values)
      : axes_(std::move(axes)), kernels_(std::move(kernels)), relative_jitter_(relative_jitter),
        values_(std::move(values)) {
    if (axes_.size() != 2 && axes_.size() != 3) throw std::invalid_argument("GridGP: needs 2 or 3 axes");
    if (kernels_.size() != axes_.size()) throw std::invalid_argument("GridGP: one kernel per axis required");
    for (const auto& a : axes_) {
      if (a.size() < 2) throw std::invalid_argument("GridGP: axis '" + a.name + "' needs at least 2 points");
      for (double p : a.points)
        if (p < a.lo - 1e-12 || p > a.hi + 1e-12)
          throw std::invalid_argument("GridGP: axis '" + a.name + "' has a point outside its range");
    }
    if (values_.shape() != grid_shape()) throw std::invalid_argument("GridGP: value tensor does not match the grid");
    rebuild_operators();
  }

  /// Zero-valued GP on the given axes.
  static GridGP zeros(std::vector<AxisGrid> axes, std::vector<KernelSpec> kernels,
                      double relative_jitter = kDefaultRelativeJitter) {
    Shape3 s = axes.size() == 3 ? Shape3{axes[0].size(), axes[1].size(), axes[2].size()}
                                : Shape3{1, axes.size() > 0 ? axes[0].size() : 0, axes.size() > 1 ? axes[1].size() : 0};
    return GridGP(std::move(axes), std::move(kernels), relative_jitter, Tensor3(s));
  }

  [[nodiscard]] std::size_t dims() const noexcept { return axes_.size(); }
  [[nodiscard]] const std::vector<AxisGrid>& axes() const noexcept { return axes_; }
  [[nodiscard]] const std::vector<KernelSpec>& kernels() const noexcept { return kernels_; }
  [[nodiscard]] const std::vector<KernelOperator>& operators() const noexcept { return operators_; }
  [[nodiscard]] double relative_jitter() const noexcept { return relative_jitter_; }
  [[nodiscard]] const Tensor3& values() const noexcept { return values_; }
  [[nodiscard]] Tensor3& values() noexcept { return values_; }

  /// Index into the Tensor3 modes for axis `a` of this GP.
  [[nodiscard]] std::size_t mode_of(std::size_t a) const noexcept { return a + (3 - dims()); }

  [[nodiscard]] Shape3 grid_shape() const {
    if (dims() == 3) return {axes_[0].size(), axes_[1].size(), axes_[2].size()};
    return {1, axes_[0].size(), axes_[1].size()};
  }

  [[nodiscard]] std::size_t total_points() const {
    const Shape3 s = grid_shape();
    return s[0] * s[1] * s[2];
  }

  void set_kernels(std::vector<KernelSpec> kernels) {
    if (kernels.size() != axes_.size()) throw std::invalid_argument("GridGP: one kernel per axis required");
    kernels_ = std::move(kernels);
    rebuild_operators();
  }

  /// Factor used along a tensor mode; degenerate leading modes get a unit 1x1 factor.
  [[nodiscard]] const CholeskyFactor& mode_factor(std::size_t mode) const {
    if (dims() == 2 && mode == 0) return unit_factor_;
    return operators_[mode - (3 - dims())].factor();
  }

 private:
  void rebuild_operators() {
    operators_.clear();
    for (std::size_t a = 0; a < axes_.size(); ++a)
      operators_.push_back(build_operator(kernels_[a], axes_[a].points, relative_jitter_, axes_[a].name));
  }

  std::vector<AxisGrid> axes_;
  std::vector<KernelSpec> kernels_;
  double relative_jitter_ = kDefaultRelativeJitter;
  std::vector<KernelOperator> operators_;
  Tensor3 values_;
  CholeskyFactor unit_factor_{Matrix::identity(1)};
};

/// log N(vec(values) | 0, K_0 (x) K_1 (x) K_2), normalizing constant included.
inline double log_prior(const GridGP& gp) {
  const double m = static_cast<double>(gp.total_points());
  double logdet_sum = 0.0;
  for (const auto& op : gp.operators())
    logdet_sum += m / static_cast<double>(op.size()) * logdet(op.factor());
  const double quad = kron_quadratic_form(gp.values(), gp.mode_factor(0), gp.mode_factor(1), gp.mode_factor(2));
  return -0.5 * logdet_sum - 0.5 * quad - 0.5 * m * std::log(2.0 * std::numbers::pi);
}

/// f(q) = values x_0 eta_0 x_1 eta_1 x_2 eta_2 for a single query.
inline double eval_point(const GridGP& gp, std::span<const double> query) {
  if (query.size() != gp.dims()) throw std::invalid_argument("eval_point: query dimensionality mismatch");
  Tensor3 t = gp.values();
  for (std::size_t a = 0; a < gp.dims(); ++a) {
    const auto eta = cross_weights(gp.operators()[a], query[a]);
    t = mode_product(t, Matrix(1, eta.size(), eta), gp.mode_of(a));
  }
  return t.data()[0];
}

inline std::vector<double> eval_batch(const GridGP& gp, std::span<const std::vector<double>> queries) {
  std::vector<double> out;
  out.reserve(queries.size());
  for (const auto& q : queries) out.push_back(eval_point(gp, q));
  return out;
}

/// GP mean on the product of per-axis query lists via one mode product per axis.
inline Tensor3 eval_on_product_grid(const GridGP& gp, std::span<const std::vector<double>> axes_queries) {
  if (axes_queries.size() != gp.dims()) throw std::invalid_argument("eval_on_product_grid: need one query list per axis");
  Tensor3 t = gp.values();
  for (std::size_t a = 0; a < gp.dims(); ++a)
    t = mode_product(t, cross_weights(gp.operators()[a], axes_queries[a]), gp.mode_of(a));
  return t;
}

}  // namespace kstpp
