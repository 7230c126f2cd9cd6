#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <numeric>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "kstpp/parallel.hpp"
#include "kstpp/predict.hpp"
#include "kstpp/train.hpp"

namespace kstpp {

// ---------------------------------------------------------------- Poisson

struct PoissonModel {
  double rate = 1.0;  // events per unit time and unit area
  Domain domain;
};

/// Closed-form MLE: total events / (sequences x T x area).
inline PoissonModel poisson_fit(std::span<const EventSequence> seqs, const Domain& domain) {
  domain.validate();
  if (seqs.empty()) throw std::invalid_argument("poisson_fit: no sequences");
  std::size_t events = 0;
  for (const auto& s : seqs) events += s.size();
  if (events == 0) throw std::invalid_argument("poisson_fit: dataset has no events");
  return {static_cast<double>(events) / (static_cast<double>(seqs.size()) * domain.t_max * domain.area()), domain};
}

class PoissonProcess final : public PointProcess {
 public:
  explicit PoissonProcess(PoissonModel m) : m_(m) {
    m_.domain.validate();
    if (!(m_.rate > 0.0)) throw std::invalid_argument("PoissonModel: rate must be positive");
  }
  [[nodiscard]] std::string kind() const override { return "poisson"; }
  [[nodiscard]] const Domain& domain() const override { return m_.domain; }
  [[nodiscard]] double intensity(double, double, double, const History&) const override { return m_.rate; }
  [[nodiscard]] double log_likelihood(const EventSequence& seq) const override {
    return static_cast<double>(seq.size()) * std::log(m_.rate) - m_.rate * m_.domain.t_max * m_.domain.area();
  }
  [[nodiscard]] std::unique_ptr<SequenceSlicer> bind(const EventSequence& seq, SpatialRule rule) const override {
    const double r = m_.rate;
    auto f = [r](double, double, double, const History&) { return r; };
    return std::make_unique<PointwiseSlicer<decltype(f)>>(seq, std::move(rule), f);
  }
  /// E[tau] = 1 / (rate x area); the location is uniform, so its mean is the centroid.
  [[nodiscard]] std::optional<std::array<double, 3>> closed_form_next(const History& h) const override {
    return std::array<double, 3>{h.last_time() + 1.0 / (m_.rate * m_.domain.area()), m_.domain.x_mid(),
                                 m_.domain.y_mid()};
  }
  [[nodiscard]] const PoissonModel& model() const noexcept { return m_; }

 private:
  PoissonModel m_;
};

// ---------------------------------------------------------------- STHP

/// lambda0 + c sum_n exp(-beta lag_n) N(d_n; sigma), all parameters positive.
struct SthpModel {
  double log_lambda0 = 0.0;
  double log_c = std::log(0.5);
  double log_beta = 0.0;
  double log_sigma = std::log(0.5);
  Domain domain;
  /// Keeps c at exactly zero (the nested Poisson model).
  bool no_excitation = false;

  [[nodiscard]] double lambda0() const { return std::exp(log_lambda0); }
  [[nodiscard]] double c() const { return no_excitation ? 0.0 : std::exp(log_c); }
  [[nodiscard]] double beta() const { return std::exp(log_beta); }
  [[nodiscard]] double sigma() const { return std::exp(log_sigma); }

  [[nodiscard]] std::array<double, 4> params() const { return {log_lambda0, log_c, log_beta, log_sigma}; }
  void set_params(std::span<const double> p) {
    log_lambda0 = p[0];
    log_c = p[1];
    log_beta = p[2];
    log_sigma = p[3];
  }
};

inline double sthp_intensity(const SthpModel& m, double t, double x, double y, const History& h) {
  const double c = m.c();
  double s = 0.0;
  if (c != 0.0) {
    const double beta = m.beta(), sig = m.sigma();
    const double norm = 1.0 / (2.0 * std::numbers::pi * sig * sig);
    for (std::size_t n = 0; n < h.size(); ++n) {
      if (!(h.t[n] < t)) throw std::invalid_argument("sthp_intensity: history event at or after the query time");
      const double dx = x - h.x[n], dy = y - h.y[n];
      s += std::exp(-beta * (t - h.t[n])) * norm * std::exp(-(dx * dx + dy * dy) / (2.0 * sig * sig));
    }
  }
  return m.lambda0() + c * s;
}

inline constexpr std::size_t kSthpSpatialOrder = 32;

namespace detail {

/// Gaussian mass of N(.; centre, sigma) on [lo, hi] by Gauss-Legendre, and
/// its derivative with respect to log sigma.
inline std::array<double, 2> gaussian_mass_1d(const QuadratureRule1D& r, double centre, double sigma) {
  double m = 0.0, dm = 0.0;
  const double norm = 1.0 / (std::sqrt(2.0 * std::numbers::pi) * sigma);
  for (std::size_t k = 0; k < r.order(); ++k) {
    const double u = r.nodes[k] - centre;
    const double g = r.weights[k] * norm * std::exp(-u * u / (2.0 * sigma * sigma));
    m += g;
    dm += g * (u * u / (sigma * sigma) - 1.0);
  }
  return {m, dm};
}

}  // namespace detail

struct SthpValue {
  double value = 0.0;
  std::array<double, 4> gradient{};  // d / d log-params
};

/// Exact-in-time log likelihood: the exponential kernel integrates in closed
/// form over each inter-event piece, the spatial Gaussian mass by quadrature.
inline SthpValue sthp_log_likelihood(const SthpModel& m, const EventSequence& seq, bool with_gradient = false,
                                     std::size_t spatial_order = kSthpSpatialOrder) {
  const auto& d = m.domain;
  const double l0 = m.lambda0(), c = m.c(), beta = m.beta(), sig = m.sigma();
  const double norm = 1.0 / (2.0 * std::numbers::pi * sig * sig);
  SthpValue out;
  auto& g = out.gradient;
  const std::size_t N = seq.size();
  for (std::size_t n = 0; n < N; ++n) {
    double s = 0.0, s_beta = 0.0, s_sig = 0.0;
    if (c != 0.0) {
      for (std::size_t e = 0; e < n; ++e) {
        const double lag = seq.t[n] - seq.t[e];
        const double dx = seq.x[n] - seq.x[e], dy = seq.y[n] - seq.y[e];
        const double r2 = (dx * dx + dy * dy) / (sig * sig);
        const double k = std::exp(-beta * lag) * norm * std::exp(-0.5 * r2);
        s += k;
        s_beta -= beta * lag * k;
        s_sig += k * (r2 - 2.0);
      }
    }
    const double lam = l0 + c * s;
    out.value += std::log(lam);
    if (with_gradient) {
      g[0] += l0 / lam;
      g[1] += c * s / lam;
      g[2] += c * s_beta / lam;
      g[3] += c * s_sig / lam;
    }
  }
  // Compensator: lambda0 T |S| + c sum_e (1 - exp(-beta (T - t_e))) / beta * M_e.
  const double base = l0 * d.t_max * d.area();
  out.value -= base;
  if (with_gradient) g[0] -= base;
  if (c != 0.0) {
    const auto rx = gauss_legendre(spatial_order, d.x_lo, d.x_hi);
    const auto ry = gauss_legendre(spatial_order, d.y_lo, d.y_hi);
    for (std::size_t e = 0; e < N; ++e) {
      const double L = d.t_max - seq.t[e];
      const double decay = std::exp(-beta * L);
      const double h = (1.0 - decay) / beta;
      const auto mx = detail::gaussian_mass_1d(rx, seq.x[e], sig);
      const auto my = detail::gaussian_mass_1d(ry, seq.y[e], sig);
      const double M = mx[0] * my[0];
      out.value -= c * h * M;
      if (with_gradient) {
        g[1] -= c * h * M;
        g[2] -= c * (L * decay - h) * M;
        g[3] -= c * h * (mx[1] * my[0] + mx[0] * my[1]);
      }
    }
  }
  if (m.no_excitation) g[1] = g[2] = g[3] = 0.0;
  return out;
}

class SthpProcess final : public PointProcess {
 public:
  explicit SthpProcess(SthpModel m) : m_(m) { m_.domain.validate(); }
  [[nodiscard]] std::string kind() const override { return "sthp"; }
  [[nodiscard]] const Domain& domain() const override { return m_.domain; }
  [[nodiscard]] double intensity(double t, double x, double y, const History& h) const override {
    return sthp_intensity(m_, t, x, y, h);
  }
  [[nodiscard]] double log_likelihood(const EventSequence& seq) const override {
    return sthp_log_likelihood(m_, seq).value;
  }
  /// Events whose kernel weight has decayed below 1e-12 of its peak are skipped.
  [[nodiscard]] std::unique_ptr<SequenceSlicer> bind(const EventSequence& seq, SpatialRule rule) const override {
    const double c = m_.c(), beta = m_.beta(), sig = m_.sigma();
    const double norm = 1.0 / (2.0 * std::numbers::pi * sig * sig);
    auto weight = [c, beta](double lag) { return c * std::exp(-beta * lag); };
    auto field = [norm, sig](double dx, double dy, bool) { return norm * std::exp(-(dx * dx + dy * dy) / (2.0 * sig * sig)); };
    return std::make_unique<SeparableSlicer>(seq, std::move(rule), m_.lambda0(), weight, field,
                                             12.0 * std::numbers::ln10 / beta, false);
  }
  [[nodiscard]] const SthpModel& model() const noexcept { return m_; }

 private:
  SthpModel m_;
};

struct SthpFitConfig {
  double lr = 1e-3;
  std::size_t epochs = 50;
  std::size_t batch_size = 1;
  std::uint64_t seed = 0;
  std::size_t spatial_order = kSthpSpatialOrder;
  /// Initial parameters; lambda0 <= 0 means the Poisson MLE.
  double init_lambda0 = 0.0;
  double init_c = 0.5;
  double init_beta = 1.0;
  double init_sigma = 0.5;
  bool no_excitation = false;
};

struct SthpFitResult {
  SthpModel model;
  std::vector<double> epoch_log_likelihood;
};

inline double sthp_dataset_log_likelihood(const SthpModel& m, std::span<const EventSequence> seqs,
                                          std::size_t spatial_order = kSthpSpatialOrder) {
  std::vector<double> parts(seqs.size());
  parallel_for(seqs.size(), [&](std::size_t i) { parts[i] = sthp_log_likelihood(m, seqs[i], false, spatial_order).value; });
  return std::accumulate(parts.begin(), parts.end(), 0.0);
}

/// Adam ascent on the mean per-sequence log likelihood in log-parameter space.
inline SthpFitResult sthp_fit(std::span<const EventSequence> train, const Domain& domain, const SthpFitConfig& cfg = {}) {
  if (train.empty()) throw std::invalid_argument("sthp_fit: training set is empty");
  if (cfg.batch_size < 1) throw std::invalid_argument("sthp_fit: batch size must be at least 1");
  for (std::size_t i = 0; i < train.size(); ++i) {
    try {
      train[i].validate(domain);
    } catch (const std::invalid_argument& e) {
      throw std::invalid_argument("sthp_fit: training sequence " + std::to_string(i) + ": " + e.what());
    }
  }
  SthpModel m;
  m.domain = domain;
  m.no_excitation = cfg.no_excitation;
  std::size_t events = 0;
  for (const auto& s : train) events += s.size();
  const double l0 = cfg.init_lambda0 > 0.0
                        ? cfg.init_lambda0
                        : std::max(1e-3, static_cast<double>(events) /
                                             (static_cast<double>(train.size()) * domain.t_max * domain.area()));
  m.log_lambda0 = std::log(l0);
  m.log_c = std::log(cfg.init_c);
  m.log_beta = std::log(cfg.init_beta);
  m.log_sigma = std::log(cfg.init_sigma);

  SthpFitResult res;
  AdamState adam = AdamState::init(4, cfg.lr);
  std::mt19937_64 rng(cfg.seed ^ 0x27d4eb2fu);
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t stop = std::min(order.size(), start + cfg.batch_size);
      std::vector<SthpValue> parts(stop - start);
      parallel_for(parts.size(), [&](std::size_t j) {
        parts[j] = sthp_log_likelihood(m, train[order[start + j]], true, cfg.spatial_order);
      });
      std::array<double, 4> grad{};
      for (const auto& p : parts)
        for (std::size_t k = 0; k < 4; ++k) grad[k] += p.gradient[k] / static_cast<double>(parts.size());
      auto p = m.params();
      adam_step(adam, p, grad);
      m.set_params(p);
    }
    res.epoch_log_likelihood.push_back(sthp_dataset_log_likelihood(m, train, cfg.spatial_order));
  }
  res.model = m;
  return res;
}

}  // namespace kstpp
