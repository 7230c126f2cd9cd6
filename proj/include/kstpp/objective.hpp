#pragma once

#include <array>
#include <cmath>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "kstpp/model.hpp"

namespace kstpp {

/// Flat parameter layout: vec(F), vec(G), then (log lengthscale, log variance)
/// per influence axis, then the same per background axis.
struct ParamVector {
  std::vector<double> data;

  struct Layout {
    std::size_t influence_values = 0;
    std::size_t background_values = 0;
    std::size_t influence_hyper = 0;
    std::size_t background_hyper = 0;
    std::size_t size = 0;
  };

  static Layout layout(const KstppModel& m) {
    Layout l;
    l.influence_values = 0;
    l.background_values = m.influence.total_points();
    l.influence_hyper = l.background_values + m.background.total_points();
    l.background_hyper = l.influence_hyper + 2 * m.influence.dims();
    l.size = l.background_hyper + 2 * m.background.dims();
    return l;
  }

  /// Name of the block holding coordinate `i`.
  static std::string block_name(const Layout& l, std::size_t i) {
    if (i < l.background_values) return "influence values";
    if (i < l.influence_hyper) return "background values";
    if (i < l.background_hyper) return "influence hyperparameters";
    return "background hyperparameters";
  }

  [[nodiscard]] std::size_t size() const noexcept { return data.size(); }
};

inline ParamVector pack_params(const KstppModel& m) {
  ParamVector p;
  const auto l = ParamVector::layout(m);
  p.data.reserve(l.size);
  const auto f = m.influence.values().data();
  const auto g = m.background.values().data();
  p.data.insert(p.data.end(), f.begin(), f.end());
  p.data.insert(p.data.end(), g.begin(), g.end());
  for (const auto& k : m.influence.kernels()) {
    p.data.push_back(k.log_lengthscale);
    p.data.push_back(k.log_variance);
  }
  for (const auto& k : m.background.kernels()) {
    p.data.push_back(k.log_lengthscale);
    p.data.push_back(k.log_variance);
  }
  return p;
}

/// Writes `p` into `m`, refactoring Gram matrices only when hyperparameters changed.
inline void unpack_params(KstppModel& m, const ParamVector& p) {
  const auto l = ParamVector::layout(m);
  if (p.size() != l.size) throw std::invalid_argument("unpack_params: parameter vector has the wrong length");
  auto f = m.influence.values().data();
  auto g = m.background.values().data();
  std::copy(p.data.begin(), p.data.begin() + static_cast<std::ptrdiff_t>(f.size()), f.begin());
  std::copy(p.data.begin() + static_cast<std::ptrdiff_t>(l.background_values),
            p.data.begin() + static_cast<std::ptrdiff_t>(l.influence_hyper), g.begin());
  auto read_kernels = [&](const GridGP& gp, std::size_t off) {
    std::vector<KernelSpec> ks = gp.kernels();
    bool changed = false;
    for (std::size_t a = 0; a < ks.size(); ++a) {
      const double ll = p.data[off + 2 * a];
      const double lv = p.data[off + 2 * a + 1];
      changed = changed || ll != ks[a].log_lengthscale || lv != ks[a].log_variance;
      ks[a].log_lengthscale = ll;
      ks[a].log_variance = lv;
    }
    return std::pair{ks, changed};
  };
  if (auto [ks, changed] = read_kernels(m.influence, l.influence_hyper); changed) m.influence.set_kernels(ks);
  if (auto [ks, changed] = read_kernels(m.background, l.background_hyper); changed) m.background.set_kernels(ks);
}

namespace detail {

/// Cross-covariance k(q_i - shift, nodes_b).
inline void fill_cross(const KernelSpec& spec, std::span<const double> queries, double shift,
                       std::span<const double> nodes, Matrix& out) {
  if (out.rows() != queries.size() || out.cols() != nodes.size()) out = Matrix(queries.size(), nodes.size());
  for (std::size_t i = 0; i < queries.size(); ++i) {
    const double q = queries[i] - shift;
    for (std::size_t b = 0; b < nodes.size(); ++b) out(i, b) = eval_kernel(spec, q, nodes[b]);
  }
}

struct HyperGrad {
  double log_lengthscale = 0.0;
  double log_variance = 0.0;
};

/// Accumulate sum_ib dC(i, b) * dC(i, b)/dtheta for C = k(q_i - shift, nodes).
inline void accumulate_cross_hyper(const KernelSpec& spec, std::span<const double> queries, double shift,
                                   std::span<const double> nodes, const Matrix& d_cross, HyperGrad& acc,
                                   std::span<const char> row_mask = {}) {
  for (std::size_t i = 0; i < queries.size(); ++i) {
    if (!row_mask.empty() && !row_mask[i]) continue;
    const double q = queries[i] - shift;
    for (std::size_t b = 0; b < nodes.size(); ++b) {
      const double g = d_cross(i, b);
      if (g == 0.0) continue;
      const double gk = g * eval_kernel(spec, q, nodes[b]);
      acc.log_lengthscale += gk * kernel_dlog_lengthscale_ratio(spec, q, nodes[b]);
      acc.log_variance += gk;
    }
  }
}

/// Same as accumulate_cross_hyper with the cross-covariance values already at hand.
inline void accumulate_cached_hyper(const KernelSpec& spec, std::span<const double> queries,
                                    std::span<const double> nodes, const Matrix& cross, const Matrix& d_cross,
                                    HyperGrad& acc, std::span<const char> row_mask) {
  for (std::size_t i = 0; i < queries.size(); ++i) {
    if (!row_mask[i]) continue;
    for (std::size_t b = 0; b < nodes.size(); ++b) {
      const double gk = d_cross(i, b) * cross(i, b);
      if (gk == 0.0) continue;
      acc.log_lengthscale += gk * kernel_dlog_lengthscale_ratio(spec, queries[i], nodes[b]);
      acc.log_variance += gk;
    }
  }
}

inline void axpy(double a, std::span<const double> x, std::span<double> y) {
  for (std::size_t i = 0; i < x.size(); ++i) y[i] += a * x[i];
}

/// alpha = values x_0 K0^{-1} x_1 K1^{-1} x_2 K2^{-1} for a grid GP.
inline Tensor3 gp_alpha(const GridGP& gp) {
  Tensor3 a = gp.values();
  for (std::size_t ax = 0; ax < gp.dims(); ++ax) a = mode_product(a, gp.operators()[ax].gram_inverse(), gp.mode_of(ax));
  return a;
}

}  // namespace detail

/// Log likelihood of one sequence and its adjoints with respect to the
/// interpolation coefficients alpha = K^{-1} vec(values) and the kernel
/// hyperparameters entering through cross-covariances.
struct SequenceAdjoint {
  double value = 0.0;
  std::size_t clamped_events = 0;
  Tensor3 d_alpha_influence;
  Tensor3 d_alpha_background;
  std::array<detail::HyperGrad, 3> influence_cross{};
  std::array<detail::HyperGrad, 2> background_cross{};
};

/// Evaluates the per-sequence likelihood through precomputed alpha tensors.
///
/// Spatial contractions against each event's offset grid are shared across
/// every interval the event influences; only the lag contraction is redone
/// per interval.
class SequenceEvaluator {
 public:
  SequenceEvaluator(const KstppModel& model, const Tensor3& alpha_f, const Tensor3& alpha_g)
      : model_(model), alpha_f_(alpha_f), alpha_g_(alpha_g) {
    const auto& d = model.domain;
    rx_ = gauss_legendre(model.quad_orders[1], d.x_lo, d.x_hi);
    ry_ = gauss_legendre(model.quad_orders[2], d.y_lo, d.y_hi);
    rt_unit_ = gauss_legendre(model.quad_orders[0], 0.0, 1.0);
  }

  SequenceAdjoint run(const EventSequence& seq, bool with_gradient) const {
    const std::size_t N = seq.size();
    const auto& f_ops = model_.influence.operators();
    const auto& g_ops = model_.background.operators();
    const auto& fk = model_.influence.kernels();
    const auto& gk = model_.background.kernels();
    const double beta = model_.link_beta;
    const std::size_t q0 = rt_unit_.order(), q1 = rx_.order(), q2 = ry_.order();
    const std::size_t m0 = f_ops[0].size(), m1 = f_ops[1].size(), m2 = f_ops[2].size();
    const std::size_t v1 = g_ops[0].size(), v2 = g_ops[1].size();

    SequenceAdjoint out;
    if (with_gradient) {
      out.d_alpha_influence = Tensor3(alpha_f_.shape());
      out.d_alpha_background = Tensor3(alpha_g_.shape());
    }

    // ---- observed events: log lambda(t_n, s_n | H_{t_n}) ----
    std::vector<double> k0(m0), k1(m1), k2(m2), kx(v1), ky(v2);
    Matrix plane(m1, m2);
    std::vector<double> u(m1), dk0(m0), dk1(m1), dk2(m2), dkx(v1), dky(v2);
    for (std::size_t n = 0; n < N; ++n) {
      for (std::size_t b = 0; b < v1; ++b) kx[b] = eval_kernel(gk[0], seq.x[n], g_ops[0].nodes()[b]);
      for (std::size_t c = 0; c < v2; ++c) ky[c] = eval_kernel(gk[1], seq.y[n], g_ops[1].nodes()[c]);
      double z = 0.0;
      for (std::size_t b = 0; b < v1; ++b) {
        double r = 0.0;
        for (std::size_t c = 0; c < v2; ++c) r += alpha_g_(0, b, c) * ky[c];
        z += kx[b] * r;
      }
      std::vector<std::size_t> active;
      for (std::size_t e = 0; e < n; ++e)
        if (model_.in_horizon(seq.t[n] - seq.t[e])) active.push_back(e);
      for (std::size_t e : active) z += pair_value(seq, n, e, k0, k1, k2, plane, u);

      double lam = softplus(z, beta);
      double adj = 0.0;
      if (!(lam > kLogIntensityFloor)) {
        lam = kLogIntensityFloor;
        ++out.clamped_events;
      } else {
        adj = softplus_derivative(z, beta) / lam;
      }
      out.value += std::log(lam);
      if (!with_gradient || adj == 0.0) continue;

      // background adjoint
      std::fill(dkx.begin(), dkx.end(), 0.0);
      std::fill(dky.begin(), dky.end(), 0.0);
      for (std::size_t b = 0; b < v1; ++b)
        for (std::size_t c = 0; c < v2; ++c) {
          out.d_alpha_background(0, b, c) += adj * kx[b] * ky[c];
          dkx[b] += adj * alpha_g_(0, b, c) * ky[c];
          dky[c] += adj * alpha_g_(0, b, c) * kx[b];
        }
      accumulate_vector_hyper(gk[0], seq.x[n], g_ops[0].nodes(), dkx, kx, out.background_cross[0]);
      accumulate_vector_hyper(gk[1], seq.y[n], g_ops[1].nodes(), dky, ky, out.background_cross[1]);

      for (std::size_t e : active) {
        pair_value(seq, n, e, k0, k1, k2, plane, u);
        // f = k1 . (plane k2), plane = alpha x_0 k0
        for (std::size_t b = 0; b < m1; ++b) dk1[b] = adj * u[b];
        std::fill(dk2.begin(), dk2.end(), 0.0);
        for (std::size_t b = 0; b < m1; ++b) {
          const double w = adj * k1[b];
          for (std::size_t c = 0; c < m2; ++c) dk2[c] += w * plane(b, c);
        }
        auto da = out.d_alpha_influence.data();
        const auto al = alpha_f_.data();
        for (std::size_t a = 0; a < m0; ++a) {
          double acc = 0.0;
          for (std::size_t b = 0; b < m1; ++b) {
            const double w = adj * k1[b];
            const std::size_t base = (a * m1 + b) * m2;
            double rowacc = 0.0;
            for (std::size_t c = 0; c < m2; ++c) {
              da[base + c] += k0[a] * w * k2[c];
              rowacc += al[base + c] * k2[c];
            }
            acc += w * rowacc;
          }
          dk0[a] = acc;
        }
        accumulate_vector_hyper(fk[0], seq.t[n] - seq.t[e], f_ops[0].nodes(), dk0, k0, out.influence_cross[0]);
        accumulate_vector_hyper(fk[1], seq.x[n] - seq.x[e], f_ops[1].nodes(), dk1, k1, out.influence_cross[1]);
        accumulate_vector_hyper(fk[2], seq.y[n] - seq.y[e], f_ops[2].nodes(), dk2, k2, out.influence_cross[2]);
      }
    }

    // ---- compensator over each inter-event interval ----
    Matrix cx, cy;
    detail::fill_cross(gk[0], rx_.nodes, 0.0, g_ops[0].nodes(), cx);
    detail::fill_cross(gk[1], ry_.nodes, 0.0, g_ops[1].nodes(), cy);
    const Tensor3 g_partial = mode_product(alpha_g_, cy, 2);          // 1 x v1 x q2
    const Tensor3 g_quad = mode_product(g_partial, cx, 1);            // 1 x q1 x q2
    const std::size_t plane_size = q1 * q2;

    // Per-event spatial contraction S_e = alpha x_1 C1_e x_2 C2_e (m0 x q1 x q2).
    std::vector<Tensor3> spatial(N);
    std::vector<Matrix> c1(N), c2(N);
    for (std::size_t e = 0; e < N; ++e) {
      detail::fill_cross(fk[1], rx_.nodes, seq.x[e], f_ops[1].nodes(), c1[e]);
      detail::fill_cross(fk[2], ry_.nodes, seq.y[e], f_ops[2].nodes(), c2[e]);
      spatial[e] = mode_product(mode_product(alpha_f_, c2[e], 2), c1[e], 1);
    }
    std::vector<Tensor3> d_spatial;
    if (with_gradient) d_spatial.assign(N, Tensor3({m0, q1, q2}));
    Tensor3 d_gquad({1, q1, q2});

    std::vector<double> t_nodes(q0), t_weights(q0);
    Tensor3 z({q0, q1, q2});
    Tensor3 w_adj({q0, q1, q2});
    Matrix d_c0(q0, m0);
    std::vector<double> lags(q0);
    std::vector<LagRows> lag_cache;
    for (std::size_t n = 0; n <= N; ++n) {
      const double lo = n == 0 ? 0.0 : seq.t[n - 1];
      const double hi = n == N ? model_.domain.t_max : seq.t[n];
      if (!(hi > lo)) continue;
      for (std::size_t i = 0; i < q0; ++i) {
        t_nodes[i] = lo + (hi - lo) * rt_unit_.nodes[i];
        t_weights[i] = (hi - lo) * rt_unit_.weights[i];
      }
      auto zd = z.data();
      for (std::size_t i = 0; i < q0; ++i)
        std::copy(g_quad.data().begin(), g_quad.data().end(), zd.begin() + static_cast<std::ptrdiff_t>(i * plane_size));

      // History for this interval is events 0..n-1.
      std::size_t first = 0;
      if (model_.influence_horizon) {
        while (first < n && hi - seq.t[first] > *model_.influence_horizon &&
               t_nodes.front() - seq.t[first] > *model_.influence_horizon)
          ++first;
      }
      std::size_t n_active = 0;
      for (std::size_t e = first; e < n; ++e) {
        if (lag_cache.size() <= n_active) lag_cache.emplace_back(LagRows{0, Matrix(q0, m0), std::vector<char>(q0)});
        LagRows& rows = lag_cache[n_active];
        if (!build_lag_rows(seq.t[e], t_nodes, rows.c0, rows.mask)) continue;
        rows.event = e;
        ++n_active;
        add_lag_contraction(rows.c0, spatial[e], z);
      }

      double comp = 0.0;
      auto wd = w_adj.data();
      for (std::size_t i = 0; i < q0; ++i)
        for (std::size_t p = 0; p < plane_size; ++p) {
          const std::size_t idx = i * plane_size + p;
          const std::size_t j = p / q2, k = p % q2;
          const double w = t_weights[i] * rx_.weights[j] * ry_.weights[k];
          comp += w * softplus(zd[idx], beta);
          if (with_gradient) wd[idx] = -w * softplus_derivative(zd[idx], beta);
        }
      out.value -= comp;
      if (!with_gradient) continue;

      auto dg = d_gquad.data();
      for (std::size_t i = 0; i < q0; ++i) detail::axpy(1.0, wd.subspan(i * plane_size, plane_size), dg);
      for (std::size_t r = 0; r < n_active; ++r) {
        const LagRows& rows = lag_cache[r];
        const std::size_t e = rows.event;
        // d_spatial[e] += C0^T W ; dC0 = W S_e^T
        auto ds = d_spatial[e].data();
        const auto sd = spatial[e].data();
        for (std::size_t i = 0; i < q0; ++i) {
          if (!rows.mask[i]) continue;
          const auto wrow = wd.subspan(i * plane_size, plane_size);
          for (std::size_t a = 0; a < m0; ++a) {
            detail::axpy(rows.c0(i, a), wrow, ds.subspan(a * plane_size, plane_size));
            d_c0(i, a) = dot(wrow, sd.subspan(a * plane_size, plane_size));
          }
        }
        for (std::size_t i = 0; i < q0; ++i) lags[i] = t_nodes[i] - seq.t[e];
        detail::accumulate_cached_hyper(fk[0], lags, f_ops[0].nodes(), rows.c0, d_c0, out.influence_cross[0],
                                        rows.mask);
      }
    }
    if (!with_gradient) return out;

    // Back through S_e = (alpha x_2 C2_e) x_1 C1_e.
    Matrix dc1, dc2;
    for (std::size_t e = 0; e < N; ++e) {
      const Tensor3 partial = mode_product(alpha_f_, c2[e], 2);  // m0 x m1 x q2
      dc1 = mode_outer(d_spatial[e], partial, 1);                // q1 x m1
      const Tensor3 d_partial = mode_product(d_spatial[e], c1[e].transposed(), 1);
      dc2 = mode_outer(d_partial, alpha_f_, 2);  // q2 x m2
      const Tensor3 da = mode_product(d_partial, c2[e].transposed(), 2);
      detail::axpy(1.0, da.data(), out.d_alpha_influence.data());
      detail::accumulate_cross_hyper(fk[1], rx_.nodes, seq.x[e], f_ops[1].nodes(), dc1, out.influence_cross[1]);
      detail::accumulate_cross_hyper(fk[2], ry_.nodes, seq.y[e], f_ops[2].nodes(), dc2, out.influence_cross[2]);
    }
    // Back through g_quad = (alpha_g x_2 Cy) x_1 Cx.
    {
      const Matrix dcx = mode_outer(d_gquad, g_partial, 1);
      const Tensor3 d_partial = mode_product(d_gquad, cx.transposed(), 1);
      const Matrix dcy = mode_outer(d_partial, alpha_g_, 2);
      const Tensor3 da = mode_product(d_partial, cy.transposed(), 2);
      detail::axpy(1.0, da.data(), out.d_alpha_background.data());
      detail::accumulate_cross_hyper(gk[0], rx_.nodes, 0.0, g_ops[0].nodes(), dcx, out.background_cross[0]);
      detail::accumulate_cross_hyper(gk[1], ry_.nodes, 0.0, g_ops[1].nodes(), dcy, out.background_cross[1]);
    }
    return out;
  }

 private:
  struct LagRows {
    std::size_t event;
    Matrix c0;
    std::vector<char> mask;
  };

  // f(t_n - t_e, x_n - x_e, y_n - y_e); leaves k0/k1/k2, plane = alpha x_0 k0 and u = plane k2.
  double pair_value(const EventSequence& seq, std::size_t n, std::size_t e, std::vector<double>& k0,
                    std::vector<double>& k1, std::vector<double>& k2, Matrix& plane, std::vector<double>& u) const {
    const auto& ops = model_.influence.operators();
    const auto& ks = model_.influence.kernels();
    const double lag = seq.t[n] - seq.t[e], dx = seq.x[n] - seq.x[e], dy = seq.y[n] - seq.y[e];
    for (std::size_t a = 0; a < k0.size(); ++a) k0[a] = eval_kernel(ks[0], lag, ops[0].nodes()[a]);
    for (std::size_t b = 0; b < k1.size(); ++b) k1[b] = eval_kernel(ks[1], dx, ops[1].nodes()[b]);
    for (std::size_t c = 0; c < k2.size(); ++c) k2[c] = eval_kernel(ks[2], dy, ops[2].nodes()[c]);
    const std::size_t m1 = k1.size(), m2 = k2.size();
    auto pd = plane.data();
    std::fill(pd.begin(), pd.end(), 0.0);
    const auto al = alpha_f_.data();
    for (std::size_t a = 0; a < k0.size(); ++a) detail::axpy(k0[a], al.subspan(a * m1 * m2, m1 * m2), pd);
    double f = 0.0;
    for (std::size_t b = 0; b < m1; ++b) {
      u[b] = dot(plane.row(b), k2);
      f += k1[b] * u[b];
    }
    return f;
  }

  // Rows k0(t_i - t_e, gamma_0) masked by the horizon; false if every row is masked.
  bool build_lag_rows(double t_event, std::span<const double> t_nodes, Matrix& c0, std::vector<char>& mask) const {
    const auto& op = model_.influence.operators()[0];
    const auto& spec = model_.influence.kernels()[0];
    bool any = false;
    for (std::size_t i = 0; i < t_nodes.size(); ++i) {
      const double lag = t_nodes[i] - t_event;
      mask[i] = model_.in_horizon(lag) ? 1 : 0;
      any = any || mask[i];
      for (std::size_t a = 0; a < op.size(); ++a) c0(i, a) = mask[i] ? eval_kernel(spec, lag, op.nodes()[a]) : 0.0;
    }
    return any;
  }

  static void add_lag_contraction(const Matrix& c0, const Tensor3& s, Tensor3& z) {
    const std::size_t plane = s.shape()[1] * s.shape()[2];
    auto zd = z.data();
    const auto sd = s.data();
    for (std::size_t i = 0; i < c0.rows(); ++i)
      for (std::size_t a = 0; a < c0.cols(); ++a) {
        const double w = c0(i, a);
        if (w == 0.0) continue;
        detail::axpy(w, sd.subspan(a * plane, plane), zd.subspan(i * plane, plane));
      }
  }

  // k holds k(query, nodes) from the forward pass.
  static void accumulate_vector_hyper(const KernelSpec& spec, double query, std::span<const double> nodes,
                                      std::span<const double> d, std::span<const double> k, detail::HyperGrad& acc) {
    for (std::size_t b = 0; b < nodes.size(); ++b) {
      const double dk = d[b] * k[b];
      if (dk == 0.0) continue;
      acc.log_lengthscale += dk * kernel_dlog_lengthscale_ratio(spec, query, nodes[b]);
      acc.log_variance += dk;
    }
  }

  const KstppModel& model_;
  const Tensor3& alpha_f_;
  const Tensor3& alpha_g_;
  QuadratureRule1D rx_, ry_, rt_unit_;
};

struct GradientOptions {
  /// |D| / B for mini-batches, 1 for the plain objective.
  double likelihood_scale = 1.0;
  /// Drop the likelihood's dependence on K^{-1} in hyperparameter gradients.
  bool stop_gradient_through_inverse = false;
};

struct ObjectiveResult {
  double value = 0.0;
  ParamVector gradient;
  std::size_t clamped_events = 0;
};

namespace detail {

// Gradient of prior + scale * likelihood for one GP given likelihood adjoints
// with respect to alpha. Writes value gradients and hyperparameter gradients.
inline double finish_gp(const GridGP& gp, const Tensor3& alpha, const Tensor3* d_alpha_lik,
                        std::span<const HyperGrad> cross, const GradientOptions& opt, std::span<double> d_values,
                        std::span<double> d_hyper) {
  const double m = static_cast<double>(gp.total_points());
  double logdet_sum = 0.0;
  for (const auto& op : gp.operators()) logdet_sum += m / static_cast<double>(op.size()) * logdet(op.factor());
  const double quad = dot(gp.values().data(), alpha.data());
  const double prior = -0.5 * logdet_sum - 0.5 * quad - 0.5 * m * std::log(2.0 * std::numbers::pi);

  // d/dvalues = scale * (d_alpha x K^{-1}) - alpha
  Tensor3 bar_lik = d_alpha_lik ? *d_alpha_lik : Tensor3(alpha.shape());
  for (double& v : bar_lik.data()) v *= opt.likelihood_scale;
  Tensor3 dv = bar_lik;
  for (std::size_t a = 0; a < gp.dims(); ++a) dv = mode_product(dv, gp.operators()[a].gram_inverse(), gp.mode_of(a));
  for (std::size_t i = 0; i < d_values.size(); ++i) d_values[i] = dv.data()[i] - alpha.data()[i];

  // Adjoint with respect to alpha that flows into K_a through K^{-1}.
  Tensor3 bar = opt.stop_gradient_through_inverse ? Tensor3(alpha.shape()) : bar_lik;
  axpy(-0.5, gp.values().data(), bar.data());
  for (std::size_t a = 0; a < gp.dims(); ++a) {
    const auto& op = gp.operators()[a];
    const std::size_t mode = gp.mode_of(a);
    // dL/dK_a = -K_a^{-1} bar_(a) alpha_(a)^T - 0.5 (m / m_a) K_a^{-1}
    Matrix dk = matmul(op.gram_inverse(), mode_outer(bar, alpha, mode));
    const double ld = 0.5 * m / static_cast<double>(op.size());
    const auto& nodes = op.nodes();
    double g_ell = 0.0;
    double g_var = 0.0;
    for (std::size_t u = 0; u < op.size(); ++u)
      for (std::size_t w = 0; w < op.size(); ++w) {
        const double grad_k = -dk(u, w) - ld * op.gram_inverse()(u, w);
        g_ell += grad_k * eval_kernel_dlog_lengthscale(op.spec(), nodes[u], nodes[w]);
        g_var += grad_k * op.gram()(u, w);
      }
    d_hyper[2 * a] = g_ell + opt.likelihood_scale * cross[a].log_lengthscale;
    d_hyper[2 * a + 1] = g_var + opt.likelihood_scale * cross[a].log_variance;
  }
  return prior;
}

}  // namespace detail

/// Value and gradient of log_joint over `batch`.
inline ObjectiveResult grad_log_joint(const KstppModel& model, std::span<const EventSequence> batch,
                                      const GradientOptions& opt = {}) {
  const Tensor3 alpha_f = detail::gp_alpha(model.influence);
  const Tensor3 alpha_g = detail::gp_alpha(model.background);
  const SequenceEvaluator eval(model, alpha_f, alpha_g);

  Tensor3 d_alpha_f(alpha_f.shape());
  Tensor3 d_alpha_g(alpha_g.shape());
  std::array<detail::HyperGrad, 3> f_cross{};
  std::array<detail::HyperGrad, 2> g_cross{};
  double ll = 0.0;
  ObjectiveResult res;
  for (const auto& seq : batch) {
    const SequenceAdjoint s = eval.run(seq, true);
    ll += s.value;
    res.clamped_events += s.clamped_events;
    detail::axpy(1.0, s.d_alpha_influence.data(), d_alpha_f.data());
    detail::axpy(1.0, s.d_alpha_background.data(), d_alpha_g.data());
    for (std::size_t a = 0; a < 3; ++a) {
      f_cross[a].log_lengthscale += s.influence_cross[a].log_lengthscale;
      f_cross[a].log_variance += s.influence_cross[a].log_variance;
    }
    for (std::size_t a = 0; a < 2; ++a) {
      g_cross[a].log_lengthscale += s.background_cross[a].log_lengthscale;
      g_cross[a].log_variance += s.background_cross[a].log_variance;
    }
  }

  const auto l = ParamVector::layout(model);
  res.gradient.data.assign(l.size, 0.0);
  std::span<double> g(res.gradient.data);
  const double prior_f = detail::finish_gp(model.influence, alpha_f, &d_alpha_f, f_cross, opt,
                                           g.subspan(l.influence_values, l.background_values - l.influence_values),
                                           g.subspan(l.influence_hyper, 6));
  const double prior_g = detail::finish_gp(model.background, alpha_g, &d_alpha_g, g_cross, opt,
                                           g.subspan(l.background_values, l.influence_hyper - l.background_values),
                                           g.subspan(l.background_hyper, 4));
  res.value = prior_f + prior_g + opt.likelihood_scale * ll;
  for (std::size_t i = 0; i < g.size(); ++i)
    if (!std::isfinite(g[i]))
      throw std::domain_error("grad_log_joint: non-finite gradient in " + ParamVector::block_name(l, i) +
                              " (coordinate " + std::to_string(i) + ")");
  return res;
}

/// Fast per-sequence log likelihood through the same evaluator (no gradient).
inline double fast_log_likelihood(const KstppModel& model, const EventSequence& seq) {
  const Tensor3 alpha_f = detail::gp_alpha(model.influence);
  const Tensor3 alpha_g = detail::gp_alpha(model.background);
  return SequenceEvaluator(model, alpha_f, alpha_g).run(seq, false).value;
}

inline double fast_log_likelihood(const KstppModel& model, std::span<const EventSequence> seqs) {
  const Tensor3 alpha_f = detail::gp_alpha(model.influence);
  const Tensor3 alpha_g = detail::gp_alpha(model.background);
  const SequenceEvaluator eval(model, alpha_f, alpha_g);
  double total = 0.0;
  for (const auto& s : seqs) total += eval.run(s, false).value;
  return total;
}

}  // namespace kstpp
