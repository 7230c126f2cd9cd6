#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <memory>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "kstpp/objective.hpp"
#include "kstpp/parallel.hpp"
#include "kstpp/quadrature.hpp"

namespace kstpp {

/// Spatial evaluation points laid out as a product xs x ys, row-major in x.
/// Weights are present for quadrature rules and empty for plain grids.
struct SpatialRule {
  std::vector<double> xs;
  std::vector<double> ys;
  std::vector<double> wx;
  std::vector<double> wy;

  [[nodiscard]] std::size_t size() const noexcept { return xs.size() * ys.size(); }
  [[nodiscard]] bool has_weights() const noexcept { return !wx.empty(); }

  static SpatialRule gauss(const Domain& d, std::size_t qx, std::size_t qy) {
    const auto rx = gauss_legendre(qx, d.x_lo, d.x_hi);
    const auto ry = gauss_legendre(qy, d.y_lo, d.y_hi);
    return {rx.nodes, ry.nodes, rx.weights, ry.weights};
  }

  /// Centres of a rows x cols uniform partition of the domain.
  static SpatialRule cell_centers(const Domain& d, std::size_t nx, std::size_t ny) {
    if (nx < 1 || ny < 1) throw std::invalid_argument("cell_centers: grid must have at least one cell per axis");
    SpatialRule r;
    for (std::size_t i = 0; i < nx; ++i)
      r.xs.push_back(d.x_lo + (d.x_hi - d.x_lo) * (static_cast<double>(i) + 0.5) / static_cast<double>(nx));
    for (std::size_t j = 0; j < ny; ++j)
      r.ys.push_back(d.y_lo + (d.y_hi - d.y_lo) * (static_cast<double>(j) + 0.5) / static_cast<double>(ny));
    return r;
  }

  /// sum_ij wx_i wy_j v_ij
  [[nodiscard]] double integrate(std::span<const double> v) const {
    if (!has_weights()) throw std::logic_error("SpatialRule: grid has no quadrature weights");
    double total = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
      double row = 0.0;
      for (std::size_t j = 0; j < ys.size(); ++j) row += wy[j] * v[i * ys.size() + j];
      total += wx[i] * row;
    }
    return total;
  }
};

/// Conditional intensity of one sequence with a variable-length true prefix.
/// `n_history` selects the first n events as the history; queries must lie
/// after the last of them.
class SequenceSlicer {
 public:
  virtual ~SequenceSlicer() = default;
  /// lambda(t, xs_i, ys_j | first n_history events) into out (rule.size()).
  virtual void eval(double t, std::size_t n_history, std::span<double> out) const = 0;
  [[nodiscard]] virtual const SpatialRule& rule() const = 0;
};

/// Interface shared by KSTPP, the baselines and the simulator truth so that
/// prediction and evaluation code is model-agnostic.
class PointProcess {
 public:
  virtual ~PointProcess() = default;
  [[nodiscard]] virtual std::string kind() const = 0;
  [[nodiscard]] virtual const Domain& domain() const = 0;
  [[nodiscard]] virtual double intensity(double t, double x, double y, const History& h) const = 0;
  [[nodiscard]] virtual double log_likelihood(const EventSequence& seq) const = 0;
  [[nodiscard]] virtual std::unique_ptr<SequenceSlicer> bind(const EventSequence& seq, SpatialRule rule) const = 0;
  /// Spatial quadrature orders the process integrates with by default.
  [[nodiscard]] virtual std::array<std::size_t, 2> spatial_orders() const { return {12, 12}; }
  /// Minimum inner compensator order.
  [[nodiscard]] virtual std::size_t time_order() const { return 12; }
  /// Closed-form next-event expectation (t, x, y) when the process has one.
  [[nodiscard]] virtual std::optional<std::array<double, 3>> closed_form_next(const History&) const {
    return std::nullopt;
  }
};

/// Slicer that calls a pointwise intensity; used by the baselines and the truth.
template <class F>
class PointwiseSlicer final : public SequenceSlicer {
 public:
  PointwiseSlicer(const EventSequence& seq, SpatialRule rule, F f) : seq_(seq), rule_(std::move(rule)), f_(std::move(f)) {}
  void eval(double t, std::size_t n, std::span<double> out) const override {
    const History h = seq_.prefix(n);
    for (std::size_t i = 0; i < rule_.xs.size(); ++i)
      for (std::size_t j = 0; j < rule_.ys.size(); ++j) out[i * rule_.ys.size() + j] = f_(t, rule_.xs[i], rule_.ys[j], h);
  }
  [[nodiscard]] const SpatialRule& rule() const override { return rule_; }

 private:
  const EventSequence& seq_;
  SpatialRule rule_;
  F f_;
};

/// Slicer for base + sum_e w(t - t_e) phi(x - x_e, y - y_e, lag), optionally
/// clamped at zero. phi is tabulated on the rule once per event and once per
/// side of `switch_lag` (phi may change form there); events older than
/// `cutoff_lag` are skipped.
class SeparableSlicer final : public SequenceSlicer {
 public:
  using Weight = std::function<double(double lag)>;
  using Field = std::function<double(double dx, double dy, bool past_switch)>;

  SeparableSlicer(const EventSequence& seq, SpatialRule rule, double base, Weight w, Field phi, double cutoff_lag,
                  bool clamp, std::optional<double> switch_lag = std::nullopt)
      : seq_(seq), rule_(std::move(rule)), base_(base), w_(std::move(w)), cutoff_(cutoff_lag), clamp_(clamp),
        switch_lag_(switch_lag) {
    const std::size_t m = rule_.size(), ny = rule_.ys.size();
    const std::size_t sides = switch_lag_ ? 2 : 1;
    fields_.assign(seq.size() * sides, std::vector<double>(m));
    for (std::size_t e = 0; e < seq.size(); ++e)
      for (std::size_t side = 0; side < sides; ++side) {
        auto& f = fields_[e * sides + side];
        for (std::size_t i = 0; i < rule_.xs.size(); ++i)
          for (std::size_t j = 0; j < ny; ++j) f[i * ny + j] = phi(rule_.xs[i] - seq.x[e], rule_.ys[j] - seq.y[e], side == 1);
      }
  }

  void eval(double t, std::size_t n, std::span<double> out) const override {
    if (n > seq_.size()) throw std::out_of_range("SeparableSlicer: history longer than the sequence");
    if (n > 0 && !(t > seq_.t[n - 1]))
      throw std::invalid_argument("SeparableSlicer: history event at or after the query time");
    const std::size_t m = rule_.size();
    const std::size_t sides = switch_lag_ ? 2 : 1;
    std::fill(out.begin(), out.begin() + static_cast<std::ptrdiff_t>(m), base_);
    for (std::size_t e = n; e-- > 0;) {
      const double lag = t - seq_.t[e];
      if (lag > cutoff_) break;
      const double a = w_(lag);
      if (a == 0.0) continue;
      const std::size_t side = switch_lag_ && !(lag < *switch_lag_) ? 1 : 0;
      const double* f = fields_[e * sides + side].data();
      for (std::size_t k = 0; k < m; ++k) out[k] += a * f[k];
    }
    if (clamp_)
      for (std::size_t k = 0; k < m; ++k) out[k] = std::max(0.0, out[k]);
  }
  [[nodiscard]] const SpatialRule& rule() const override { return rule_; }

 private:
  const EventSequence& seq_;
  SpatialRule rule_;
  double base_;
  Weight w_;
  double cutoff_;
  bool clamp_;
  std::optional<double> switch_lag_;
  std::vector<std::vector<double>> fields_;
};

/// KSTPP slicer: precomputes S_e = alpha x_1 C1_e x_2 C2_e for every event so
/// each evaluation is sum_e k0(t - t_e)^T S_e plus the background plane.
class KstppSlicer final : public SequenceSlicer {
 public:
  KstppSlicer(const KstppModel& model, const EventSequence& seq, SpatialRule rule)
      : model_(model), seq_(seq), rule_(std::move(rule)) {
    const Tensor3 alpha_f = detail::gp_alpha(model.influence);
    const Tensor3 alpha_g = detail::gp_alpha(model.background);
    const auto& gk = model.background.operators();
    const auto& fk = model.influence.operators();
    Matrix cx, cy;
    detail::fill_cross(gk[0].spec(), rule_.xs, 0.0, gk[0].nodes(), cx);
    detail::fill_cross(gk[1].spec(), rule_.ys, 0.0, gk[1].nodes(), cy);
    background_ = mode_product(mode_product(alpha_g, cy, 2), cx, 1);
    spatial_.resize(seq.size());
    Matrix c1, c2;
    for (std::size_t e = 0; e < seq.size(); ++e) {
      detail::fill_cross(fk[1].spec(), rule_.xs, seq.x[e], fk[1].nodes(), c1);
      detail::fill_cross(fk[2].spec(), rule_.ys, seq.y[e], fk[2].nodes(), c2);
      spatial_[e] = mode_product(mode_product(alpha_f, c2, 2), c1, 1);
    }
  }

  void eval(double t, std::size_t n, std::span<double> out) const override {
    if (n > seq_.size()) throw std::out_of_range("KstppSlicer: history longer than the sequence");
    if (n > 0 && !(t > seq_.t[n - 1])) throw std::invalid_argument("KstppSlicer: query time not after the history");
    const auto& op0 = model_.influence.operators()[0];
    const std::size_t m0 = op0.size();
    const std::size_t plane = rule_.size();
    std::copy(background_.data().begin(), background_.data().end(), out.begin());
    for (std::size_t e = n; e-- > 0;) {
      const double lag = t - seq_.t[e];
      if (!model_.in_horizon(lag)) break;  // history is sorted, older events have larger lags
      const auto s = spatial_[e].data();
      for (std::size_t a = 0; a < m0; ++a) {
        const double w = eval_kernel(op0.spec(), lag, op0.nodes()[a]);
        detail::axpy(w, s.subspan(a * plane, plane), out);
      }
    }
    for (double& v : out) v = softplus(v, model_.link_beta);
  }
  [[nodiscard]] const SpatialRule& rule() const override { return rule_; }

 private:
  const KstppModel& model_;
  const EventSequence& seq_;
  SpatialRule rule_;
  Tensor3 background_;
  std::vector<Tensor3> spatial_;
};

class KstppProcess final : public PointProcess {
 public:
  explicit KstppProcess(KstppModel m) : model_(std::move(m)) { model_.validate(); }
  [[nodiscard]] std::string kind() const override { return "kstpp"; }
  [[nodiscard]] const Domain& domain() const override { return model_.domain; }
  [[nodiscard]] double intensity(double t, double x, double y, const History& h) const override {
    return kstpp::intensity(model_, t, x, y, h);
  }
  [[nodiscard]] double log_likelihood(const EventSequence& seq) const override {
    return fast_log_likelihood(model_, seq);
  }
  [[nodiscard]] std::unique_ptr<SequenceSlicer> bind(const EventSequence& seq, SpatialRule rule) const override {
    return std::make_unique<KstppSlicer>(model_, seq, std::move(rule));
  }
  [[nodiscard]] std::array<std::size_t, 2> spatial_orders() const override {
    return {model_.quad_orders[1], model_.quad_orders[2]};
  }
  [[nodiscard]] std::size_t time_order() const override { return model_.quad_orders[0]; }
  [[nodiscard]] const KstppModel& model() const noexcept { return model_; }

 private:
  KstppModel model_;
};

struct PredictOptions {
  std::size_t outer_order = kDefaultImproperOrder;
  /// 0 = the process's time order.
  std::size_t min_inner_order = 0;
  /// {0, 0} = the process's spatial orders.
  std::array<std::size_t, 2> spatial_orders{0, 0};
  /// Use the process's closed form when it has one.
  bool use_closed_form = true;
};

struct Prediction {
  double t_next = 0.0;
  double x_next = 0.0;
  double y_next = 0.0;
  std::size_t outer_order = 0;
  std::size_t max_inner_order = 0;
  std::size_t lambda_evaluations = 0;
  bool closed_form = false;
};

inline std::size_t inner_order_for(double tau, std::size_t q0) {
  const auto scaled = static_cast<std::size_t>(8.0 * std::ceil(std::log2(1.0 + tau)));
  return std::max(q0, scaled);
}

/// Predictor over a bound slicer: every quantity conditions on the first n events.
class Predictor {
 public:
  Predictor(const SequenceSlicer& slicer, std::size_t n_history, double t_last, std::size_t q0)
      : slicer_(slicer), n_(n_history), t_last_(t_last), q0_(std::max<std::size_t>(q0, 1)),
        buf_(slicer.rule().size()) {}

  /// lambda(t | H) = integral over S of lambda(t, x, y | H).
  double marginal(double t) const {
    slicer_.eval(t, n_, buf_);
    ++evals_;
    return slicer_.rule().integrate(buf_);
  }

  /// Lambda(tau) = integral_0^tau lambda(t_last + u | H) du.
  double compensator(double tau, std::size_t order = 0) const {
    if (!(tau >= 0.0)) throw std::invalid_argument("compensator: tau must be nonnegative");
    if (tau == 0.0) return 0.0;
    if (order == 0) order = inner_order_for(tau, q0_);
    max_inner_ = std::max(max_inner_, order);
    const auto r = gauss_legendre(order, 0.0, tau);
    double total = 0.0;
    for (std::size_t k = 0; k < order; ++k) total += r.weights[k] * marginal(t_last_ + r.nodes[k]);
    return total;
  }

  /// E[tau | H] = integral_0^inf exp(-Lambda(tau)) dtau.
  double expected_wait(std::size_t outer_order) const {
    return integrate_improper([&](double tau) { return std::exp(-compensator(tau)); }, outer_order);
  }

  /// Conditional means of x and y under p(x, y | t) = lambda(t, x, y) / lambda(t).
  std::array<double, 2> expected_location(double t) const {
    const auto& rule = slicer_.rule();
    slicer_.eval(t, n_, buf_);
    ++evals_;
    double mass = 0.0, mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < rule.xs.size(); ++i)
      for (std::size_t j = 0; j < rule.ys.size(); ++j) {
        const double w = rule.wx[i] * rule.wy[j] * buf_[i * rule.ys.size() + j];
        mass += w;
        mx += w * rule.xs[i];
        my += w * rule.ys[j];
      }
    if (!(mass > 0.0) || !std::isfinite(mass)) {
      std::ostringstream os;
      os << "expected_location: marginal intensity " << mass << " at t = " << t;
      throw std::domain_error(os.str());
    }
    return {mx / mass, my / mass};
  }

  /// Integral of p(x, y | t) with the same rule as the moments.
  double density_mass(double t) const {
    const auto& rule = slicer_.rule();
    slicer_.eval(t, n_, buf_);
    ++evals_;
    const double m = rule.integrate(buf_);
    double s = 0.0;
    for (std::size_t i = 0; i < rule.xs.size(); ++i)
      for (std::size_t j = 0; j < rule.ys.size(); ++j)
        s += rule.wx[i] * rule.wy[j] * buf_[i * rule.ys.size() + j] / m;
    return s;
  }

  [[nodiscard]] std::size_t evaluations() const noexcept { return evals_; }
  [[nodiscard]] std::size_t max_inner_order() const noexcept { return max_inner_; }

 private:
  const SequenceSlicer& slicer_;
  std::size_t n_;
  double t_last_;
  std::size_t q0_;
  mutable std::vector<double> buf_;
  mutable std::size_t evals_ = 0;
  mutable std::size_t max_inner_ = 0;
};

namespace detail {

inline SpatialRule predict_rule(const PointProcess& p, const PredictOptions& opt) {
  auto q = opt.spatial_orders;
  const auto def = p.spatial_orders();
  if (q[0] == 0) q[0] = def[0];
  if (q[1] == 0) q[1] = def[1];
  return SpatialRule::gauss(p.domain(), q[0], q[1]);
}

inline Prediction predict_with(const PointProcess& p, const SequenceSlicer& slicer, const EventSequence& seq,
                               std::size_t n, const PredictOptions& opt) {
  const History h = seq.prefix(n);
  const double t_last = h.last_time();
  Prediction out;
  if (opt.use_closed_form) {
    if (auto cf = p.closed_form_next(h)) {
      out.t_next = (*cf)[0];
      out.x_next = (*cf)[1];
      out.y_next = (*cf)[2];
      out.closed_form = true;
      return out;
    }
  }
  const Predictor pr(slicer, n, t_last, opt.min_inner_order ? opt.min_inner_order : p.time_order());
  const double wait = pr.expected_wait(opt.outer_order);
  out.t_next = t_last + wait;
  const auto loc = pr.expected_location(out.t_next);
  out.x_next = loc[0];
  out.y_next = loc[1];
  out.outer_order = opt.outer_order;
  out.max_inner_order = pr.max_inner_order();
  out.lambda_evaluations = pr.evaluations();
  return out;
}

}  // namespace detail

/// Next event after all of `history`, as posterior means of time and location.
inline Prediction predict_next(const PointProcess& p, const EventSequence& history, const PredictOptions& opt = {}) {
  const auto slicer = p.bind(history, detail::predict_rule(p, opt));
  return detail::predict_with(p, *slicer, history, history.size(), opt);
}

struct PredictionRecord {
  std::size_t sequence = 0;
  /// Index of the predicted event within its sequence.
  std::size_t event = 0;
  double t_prev = 0.0;
  double t_true = 0.0;
  double t_pred = 0.0;
  double x_true = 0.0;
  double x_pred = 0.0;
  double y_true = 0.0;
  double y_pred = 0.0;
};

/// Teacher forcing: event n is predicted from the true first n events, n >= 1.
inline std::vector<PredictionRecord> predict_sequence(const PointProcess& p, const EventSequence& seq,
                                                      std::size_t seq_id, const PredictOptions& opt = {}) {
  std::vector<PredictionRecord> out;
  if (seq.size() < 2) return out;
  const auto slicer = p.bind(seq, detail::predict_rule(p, opt));
  out.resize(seq.size() - 1);
  for (std::size_t n = 1; n < seq.size(); ++n) {
    const Prediction pr = detail::predict_with(p, *slicer, seq, n, opt);
    out[n - 1] = {seq_id, n, seq.t[n - 1], seq.t[n], pr.t_next, seq.x[n], pr.x_next, seq.y[n], pr.y_next};
  }
  return out;
}

/// predict_sequence over a test set, concurrent across sequences, ordered by (sequence, event).
inline std::vector<PredictionRecord> predict_dataset(const PointProcess& p, std::span<const EventSequence> seqs,
                                                     const PredictOptions& opt = {}) {
  std::vector<std::vector<PredictionRecord>> parts(seqs.size());
  parallel_for(seqs.size(), [&](std::size_t i) { parts[i] = predict_sequence(p, seqs[i], i, opt); });
  std::vector<PredictionRecord> out;
  for (auto& part : parts) out.insert(out.end(), part.begin(), part.end());
  return out;
}

}  // namespace kstpp
