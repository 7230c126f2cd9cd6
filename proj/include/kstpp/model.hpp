#pragma once

#include <array>
#include <cmath>
#include <optional>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "kstpp/grid_gp.hpp"
#include "kstpp/quadrature.hpp"

namespace kstpp {

/// [0, T] x [x_lo, x_hi] x [y_lo, y_hi].
struct Domain {
  double t_max = 1.0;
  double x_lo = 0.0;
  double x_hi = 1.0;
  double y_lo = 0.0;
  double y_hi = 1.0;

  [[nodiscard]] double area() const noexcept { return (x_hi - x_lo) * (y_hi - y_lo); }
  [[nodiscard]] double x_mid() const noexcept { return 0.5 * (x_lo + x_hi); }
  [[nodiscard]] double y_mid() const noexcept { return 0.5 * (y_lo + y_hi); }
  [[nodiscard]] bool contains(double x, double y) const noexcept {
    return x >= x_lo && x <= x_hi && y >= y_lo && y <= y_hi;
  }

  void validate() const {
    if (!(t_max > 0.0)) throw std::invalid_argument("Domain: t_max must be positive");
    if (!(x_lo < x_hi) || !(y_lo < y_hi)) throw std::invalid_argument("Domain: empty spatial range");
  }

  friend bool operator==(const Domain&, const Domain&) = default;
};

/// Read-only view of the first events of a sequence.
struct History {
  std::span<const double> t;
  std::span<const double> x;
  std::span<const double> y;

  [[nodiscard]] std::size_t size() const noexcept { return t.size(); }
  [[nodiscard]] bool empty() const noexcept { return t.empty(); }
  [[nodiscard]] double last_time() const { return t.empty() ? 0.0 : t.back(); }
};

struct EventSequence {
  std::vector<double> t;
  std::vector<double> x;
  std::vector<double> y;

  [[nodiscard]] std::size_t size() const noexcept { return t.size(); }

  [[nodiscard]] History prefix(std::size_t n) const {
    return {std::span(t).first(n), std::span(x).first(n), std::span(y).first(n)};
  }
  [[nodiscard]] History all() const { return prefix(size()); }

  /// Events strictly before `time`.
  [[nodiscard]] History before(double time) const {
    std::size_t n = 0;
    while (n < t.size() && t[n] < time) ++n;
    return prefix(n);
  }

  void push_back(double tt, double xx, double yy) {
    t.push_back(tt);
    x.push_back(xx);
    y.push_back(yy);
  }

  /// Throws std::invalid_argument describing the first violated invariant.
  void validate(const Domain& d) const {
    if (x.size() != t.size() || y.size() != t.size())
      throw std::invalid_argument("EventSequence: t, x, y lengths differ");
    for (std::size_t n = 0; n < t.size(); ++n) {
      if (!(t[n] > 0.0) || !(t[n] <= d.t_max)) {
        std::ostringstream os;
        os << "EventSequence: time " << t[n] << " at index " << n << " outside (0, " << d.t_max << "]";
        throw std::invalid_argument(os.str());
      }
      if (n > 0 && !(t[n] > t[n - 1]))
        throw std::invalid_argument("EventSequence: times not strictly increasing at index " + std::to_string(n));
      if (!d.contains(x[n], y[n]))
        throw std::invalid_argument("EventSequence: location at index " + std::to_string(n) + " outside the domain");
    }
  }

  friend bool operator==(const EventSequence&, const EventSequence&) = default;
};

/// sigma(z) = log(1 + exp(beta z)) / beta in overflow-free form.
inline double softplus(double z, double beta = 1.0) {
  const double bz = beta * z;
  return std::max(z, 0.0) + std::log1p(std::exp(-std::abs(bz))) / beta;
}

/// d sigma / dz = logistic(beta z).
inline double softplus_derivative(double z, double beta = 1.0) {
  const double bz = beta * z;
  if (bz >= 0.0) return 1.0 / (1.0 + std::exp(-bz));
  const double e = std::exp(bz);
  return e / (1.0 + e);
}

/// Inverse of softplus for positive targets.
inline double softplus_inverse(double s, double beta = 1.0) {
  const double bs = beta * s;
  if (bs > 30.0) return s;
  return std::log(std::expm1(bs)) / beta;
}

using QuadOrders = std::array<std::size_t, 3>;

/// Conditional intensity sigma(g(x, y) + sum_n f(t - t_n, x - x_n, y - y_n)).
struct KstppModel {
  Domain domain;
  GridGP background;  // g over (x, y)
  GridGP influence;   // f over (lag, dx, dy)
  double link_beta = 1.0;
  QuadOrders quad_orders{12, 12, 12};
  /// Events older than this lag contribute nothing; unset means full history.
  std::optional<double> influence_horizon;

  void validate() const {
    domain.validate();
    if (!(link_beta > 0.0)) throw std::invalid_argument("KstppModel: link beta must be positive");
    if (background.dims() != 2 || influence.dims() != 3)
      throw std::invalid_argument("KstppModel: background must be 2-D and influence 3-D");
    for (auto q : quad_orders)
      if (q < 1) throw std::invalid_argument("KstppModel: quadrature orders must be positive");
    if (influence_horizon && !(*influence_horizon > 0.0))
      throw std::invalid_argument("KstppModel: influence horizon must be positive");
  }

  [[nodiscard]] bool in_horizon(double lag) const noexcept { return !influence_horizon || lag <= *influence_horizon; }
};

/// Grid sizes, kernels and numerics used to construct a fresh model.
struct KstppShape {
  std::array<std::size_t, 3> influence_grid{16, 16, 16};
  std::array<std::size_t, 2> background_grid{20, 20};
  KernelFamily influence_kernel = KernelFamily::SquaredExponential;
  KernelFamily background_kernel = KernelFamily::SquaredExponential;
  /// Initial lengthscales as fractions of each axis range.
  double lengthscale_fraction = 0.25;
  double initial_variance = 1.0;
  double link_beta = 1.0;
  QuadOrders quad_orders{12, 12, 12};
  std::optional<double> influence_horizon;
  double relative_jitter = kDefaultRelativeJitter;
};

/// Model with zero-valued g and f on uniform grids laid over `domain`.
///
/// The lag axis spans [0, T], or [0, horizon] when a horizon is set. Offset
/// axes span [-(b - a), b - a] because spatial differences can be negative.
inline KstppModel make_model(const Domain& domain, const KstppShape& shape) {
  domain.validate();
  const double lag_hi = shape.influence_horizon ? *shape.influence_horizon : domain.t_max;
  const double wx = domain.x_hi - domain.x_lo;
  const double wy = domain.y_hi - domain.y_lo;
  auto spec = [&](KernelFamily fam, double range) {
    return KernelSpec::make(fam, shape.lengthscale_fraction * range, shape.initial_variance);
  };
  std::vector<AxisGrid> f_axes{AxisGrid::uniform("lag", 0.0, lag_hi, shape.influence_grid[0]),
                               AxisGrid::uniform("dx", -wx, wx, shape.influence_grid[1]),
                               AxisGrid::uniform("dy", -wy, wy, shape.influence_grid[2])};
  std::vector<KernelSpec> f_kernels{spec(shape.influence_kernel, lag_hi), spec(shape.influence_kernel, 2.0 * wx),
                                    spec(shape.influence_kernel, 2.0 * wy)};
  std::vector<AxisGrid> g_axes{AxisGrid::uniform("x", domain.x_lo, domain.x_hi, shape.background_grid[0]),
                               AxisGrid::uniform("y", domain.y_lo, domain.y_hi, shape.background_grid[1])};
  std::vector<KernelSpec> g_kernels{spec(shape.background_kernel, wx), spec(shape.background_kernel, wy)};

  KstppModel m;
  m.domain = domain;
  m.background = GridGP::zeros(std::move(g_axes), std::move(g_kernels), shape.relative_jitter);
  m.influence = GridGP::zeros(std::move(f_axes), std::move(f_kernels), shape.relative_jitter);
  m.link_beta = shape.link_beta;
  m.quad_orders = shape.quad_orders;
  m.influence_horizon = shape.influence_horizon;
  m.validate();
  return m;
}

/// Pre-link value g(x, y) + sum of influences, history assumed strictly before t.
inline double pre_link(const KstppModel& model, double t, double x, double y, const History& history) {
  const std::array<double, 2> s{x, y};
  double z = eval_point(model.background, s);
  for (std::size_t n = 0; n < history.size(); ++n) {
    const double lag = t - history.t[n];
    if (!model.in_horizon(lag)) continue;
    const std::array<double, 3> q{lag, x - history.x[n], y - history.y[n]};
    z += eval_point(model.influence, q);
  }
  return z;
}

inline double intensity(const KstppModel& model, double t, double x, double y, const History& history) {
  for (std::size_t n = 0; n < history.size(); ++n)
    if (!(history.t[n] < t))
      throw std::invalid_argument("intensity: history contains an event at or after the query time");
  return softplus(pre_link(model, t, x, y, history), model.link_beta);
}

struct QuadGridIntensity {
  Tensor3 lambda;
  ProductRule3 rule;
};

/// lambda on the tensor-product Gauss-Legendre grid of [t_lo, t_hi] x S.
inline QuadGridIntensity intensity_on_quad_grid(const KstppModel& model, double t_lo, double t_hi,
                                                const History& history) {
  if (!(t_lo >= 0.0) || !(t_hi <= model.domain.t_max + 1e-12) || t_lo > t_hi)
    throw std::invalid_argument("intensity_on_quad_grid: interval outside [0, T]");
  for (std::size_t n = 0; n < history.size(); ++n)
    if (history.t[n] > t_lo) throw std::invalid_argument("intensity_on_quad_grid: history event after interval start");
  if (t_lo == t_hi) return {};

  const auto& d = model.domain;
  ProductRule3 rule = make_product_rule(gauss_legendre(model.quad_orders[0], t_lo, t_hi),
                                        gauss_legendre(model.quad_orders[1], d.x_lo, d.x_hi),
                                        gauss_legendre(model.quad_orders[2], d.y_lo, d.y_hi));
  const auto& [rt, rx, ry] = rule.rules;
  const std::vector<std::vector<double>> spatial{rx.nodes, ry.nodes};
  const Tensor3 g = eval_on_product_grid(model.background, spatial);

  Tensor3 z(rule.weight_tensor.shape());
  for (std::size_t i = 0; i < rt.order(); ++i)
    for (std::size_t j = 0; j < rx.order(); ++j)
      for (std::size_t k = 0; k < ry.order(); ++k) z(i, j, k) = g(0, j, k);

  std::vector<std::vector<double>> offsets(3);
  for (std::size_t n = 0; n < history.size(); ++n) {
    offsets[0].assign(rt.nodes.begin(), rt.nodes.end());
    for (double& v : offsets[0]) v -= history.t[n];
    offsets[1].assign(rx.nodes.begin(), rx.nodes.end());
    for (double& v : offsets[1]) v -= history.x[n];
    offsets[2].assign(ry.nodes.begin(), ry.nodes.end());
    for (double& v : offsets[2]) v -= history.y[n];
    const Tensor3 f = eval_on_product_grid(model.influence, offsets);
    for (std::size_t i = 0; i < rt.order(); ++i) {
      if (!model.in_horizon(offsets[0][i])) continue;
      for (std::size_t j = 0; j < rx.order(); ++j)
        for (std::size_t k = 0; k < ry.order(); ++k) z(i, j, k) += f(i, j, k);
    }
  }
  for (double& v : z.data()) v = softplus(v, model.link_beta);
  return {std::move(z), std::move(rule)};
}

inline constexpr double kLogIntensityFloor = 1e-300;

struct LikelihoodDiagnostics {
  std::size_t clamped_events = 0;
};

/// sum_n log lambda(t_n, s_n) - sum_{n=0}^{N} int_{t_n}^{t_{n+1}} int_S lambda.
///
/// The interval (t_n, t_{n+1}) is integrated with the first n events as
/// history; t_0 = 0 and t_{N+1} = T.
inline double log_likelihood(const KstppModel& model, const EventSequence& seq,
                             LikelihoodDiagnostics* diag = nullptr) {
  double ll = 0.0;
  const std::size_t n_events = seq.size();
  for (std::size_t n = 0; n < n_events; ++n) {
    double lam = softplus(pre_link(model, seq.t[n], seq.x[n], seq.y[n], seq.prefix(n)), model.link_beta);
    if (!(lam > kLogIntensityFloor)) {
      lam = kLogIntensityFloor;
      if (diag) ++diag->clamped_events;
    }
    ll += std::log(lam);
  }
  for (std::size_t n = 0; n <= n_events; ++n) {
    const double lo = n == 0 ? 0.0 : seq.t[n - 1];
    const double hi = n == n_events ? model.domain.t_max : seq.t[n];
    if (!(hi > lo)) continue;
    const auto grid = intensity_on_quad_grid(model, lo, hi, seq.prefix(n));
    ll -= integrate_values(grid.lambda, grid.rule);
  }
  return ll;
}

/// log p(F) + log p(G) + scale * sum log p(seq | F, G).
///
/// `likelihood_scale` is |D| / B when the batch is a mini-batch drawn from a
/// dataset of |D| sequences.
inline double log_joint(const KstppModel& model, std::span<const EventSequence> batch, double likelihood_scale = 1.0) {
  double ll = 0.0;
  for (const auto& seq : batch) ll += log_likelihood(model, seq);
  return log_prior(model.background) + log_prior(model.influence) + likelihood_scale * ll;
}

}  // namespace kstpp
