#pragma once

#include <array>
#include <cmath>
#include <numbers>
#include <sstream>
#include <stdexcept>
#include <vector>

#include "kstpp/tensor.hpp"

namespace kstpp {

/// Gauss-Legendre nodes and weights mapped onto [a, b].
struct QuadratureRule1D {
  std::vector<double> nodes;
  std::vector<double> weights;
  double a = 0.0;
  double b = 0.0;

  [[nodiscard]] std::size_t order() const noexcept { return nodes.size(); }
};

namespace detail {

struct StandardRule {
  std::vector<double> nodes;
  std::vector<double> weights;
};

// Newton iteration on P_n with the three-term recurrence; nodes ascending.
inline StandardRule standard_gauss_legendre(std::size_t n) {
  StandardRule r{std::vector<double>(n), std::vector<double>(n)};
  const std::size_t half = (n + 1) / 2;
  for (std::size_t i = 0; i < half; ++i) {
    double x = std::cos(std::numbers::pi * (static_cast<double>(i) + 0.75) / (static_cast<double>(n) + 0.5));
    double dp = 0.0;
    for (int iter = 0; iter < 100; ++iter) {
      double p0 = 1.0;
      double p1 = x;
      for (std::size_t k = 2; k <= n; ++k) {
        const double pk = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / static_cast<double>(k);
        p0 = p1;
        p1 = pk;
      }
      dp = static_cast<double>(n) * (x * p1 - p0) / (x * x - 1.0);
      const double dx = p1 / dp;
      x -= dx;
      if (std::abs(dx) < 1e-14) break;
    }
    // Recompute the derivative at the converged root for the weight.
    double p0 = 1.0;
    double p1 = x;
    for (std::size_t k = 2; k <= n; ++k) {
      const double pk = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / static_cast<double>(k);
      p0 = p1;
      p1 = pk;
    }
    dp = static_cast<double>(n) * (x * p1 - p0) / (x * x - 1.0);
    const double w = 2.0 / ((1.0 - x * x) * dp * dp);
    r.nodes[i] = -x;
    r.nodes[n - 1 - i] = x;
    r.weights[i] = w;
    r.weights[n - 1 - i] = w;
  }
  if (n % 2 == 1) r.nodes[n / 2] = 0.0;
  return r;
}

}  // namespace detail

inline QuadratureRule1D gauss_legendre(std::size_t n, double a, double b) {
  if (n < 1) throw std::invalid_argument("gauss_legendre: order must be at least 1");
  if (!(a < b)) throw std::invalid_argument("gauss_legendre: interval must satisfy a < b");
  const auto std_rule = detail::standard_gauss_legendre(n);
  QuadratureRule1D rule{std::vector<double>(n), std::vector<double>(n), a, b};
  const double half = 0.5 * (b - a);
  const double mid = 0.5 * (b + a);
  for (std::size_t k = 0; k < n; ++k) {
    rule.nodes[k] = half * std_rule.nodes[k] + mid;
    rule.weights[k] = half * std_rule.weights[k];
  }
  return rule;
}

/// Re-map an existing rule onto [a, b] without recomputing the standard nodes.
inline QuadratureRule1D remap(const QuadratureRule1D& rule, double a, double b) {
  QuadratureRule1D out{std::vector<double>(rule.order()), std::vector<double>(rule.order()), a, b};
  const double scale = (b - a) / (rule.b - rule.a);
  for (std::size_t k = 0; k < rule.order(); ++k) {
    out.nodes[k] = a + (rule.nodes[k] - rule.a) * scale;
    out.weights[k] = rule.weights[k] * scale;
  }
  return out;
}

/// Tensor-product rule over a (t, x, y) box.
struct ProductRule3 {
  std::array<QuadratureRule1D, 3> rules;
  Tensor3 weight_tensor;

  [[nodiscard]] bool empty() const noexcept { return weight_tensor.size() == 0; }
};

inline ProductRule3 make_product_rule(QuadratureRule1D t, QuadratureRule1D x, QuadratureRule1D y) {
  ProductRule3 r{{std::move(t), std::move(x), std::move(y)}, {}};
  const auto& [rt, rx, ry] = r.rules;
  r.weight_tensor = Tensor3({rt.order(), rx.order(), ry.order()});
  for (std::size_t i = 0; i < rt.order(); ++i)
    for (std::size_t j = 0; j < rx.order(); ++j)
      for (std::size_t k = 0; k < ry.order(); ++k)
        r.weight_tensor(i, j, k) = rt.weights[i] * rx.weights[j] * ry.weights[k];
  return r;
}

/// sum_ijk w_i w_j w_k f(t_i, x_j, y_k).
template <class F>
double integrate_box(F&& f, const ProductRule3& rule) {
  const auto& [rt, rx, ry] = rule.rules;
  double total = 0.0;
  for (std::size_t i = 0; i < rt.order(); ++i)
    for (std::size_t j = 0; j < rx.order(); ++j)
      for (std::size_t k = 0; k < ry.order(); ++k) {
        const double v = f(rt.nodes[i], rx.nodes[j], ry.nodes[k]);
        if (!std::isfinite(v)) {
          std::ostringstream os;
          os << "integrate_box: non-finite integrand at (" << rt.nodes[i] << ", " << rx.nodes[j] << ", "
             << ry.nodes[k] << ")";
          throw std::domain_error(os.str());
        }
        total += rule.weight_tensor(i, j, k) * v;
      }
  return total;
}

/// Weighted sum of precomputed values on the rule's grid.
inline double integrate_values(const Tensor3& values, const ProductRule3& rule) {
  if (values.shape() != rule.weight_tensor.shape())
    throw std::invalid_argument("integrate_values: values do not match the rule grid");
  return dot(values.data(), rule.weight_tensor.data());
}

/// sum_jk w_j w_k f(x_j, y_k) over a rectangle.
template <class F>
double integrate_rect(F&& f, const QuadratureRule1D& rx, const QuadratureRule1D& ry) {
  double total = 0.0;
  for (std::size_t j = 0; j < rx.order(); ++j) {
    double row = 0.0;
    for (std::size_t k = 0; k < ry.order(); ++k) row += ry.weights[k] * f(rx.nodes[j], ry.nodes[k]);
    total += rx.weights[j] * row;
  }
  return total;
}

inline constexpr std::size_t kDefaultImproperOrder = 32;

/// int_0^inf h(tau) dtau via u = tau / (1 + tau) and Gauss-Legendre on (0, 1).
template <class H>
double integrate_improper(H&& h, std::size_t n = kDefaultImproperOrder) {
  const auto rule = gauss_legendre(n, 0.0, 1.0);
  double total = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    const double u = rule.nodes[k];
    const double one_minus = 1.0 - u;
    const double v = h(u / one_minus) / (one_minus * one_minus);
    if (!std::isfinite(v)) {
      std::ostringstream os;
      os << "integrate_improper: non-finite transformed integrand at u = " << u;
      throw std::domain_error(os.str());
    }
    total += rule.weights[k] * v;
  }
  return total;
}

}  // namespace kstpp
