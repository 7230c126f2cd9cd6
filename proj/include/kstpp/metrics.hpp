#pragma once

#include <cmath>
#include <limits>
#include <numeric>
#include <span>
#include <stdexcept>
#include <vector>

#include "kstpp/parallel.hpp"
#include "kstpp/predict.hpp"
#include "kstpp/simulate.hpp"

namespace kstpp {

/// Ground-truth synthetic process (clamped intensity) behind the shared interface.
class SynthProcess final : public PointProcess {
 public:
  explicit SynthProcess(SynthConfig cfg) : cfg_(std::move(cfg)) { cfg_.validate(); }
  [[nodiscard]] std::string kind() const override { return "truth"; }
  [[nodiscard]] const Domain& domain() const override { return cfg_.domain; }
  [[nodiscard]] double intensity(double t, double x, double y, const History& h) const override {
    return synth_intensity(cfg_, t, x, y, h);
  }
  /// Log likelihood with the inter-event compensator by Gauss-Legendre (32 per axis).
  [[nodiscard]] double log_likelihood(const EventSequence& seq) const override {
    const auto& d = cfg_.domain;
    double ll = 0.0;
    for (std::size_t n = 0; n < seq.size(); ++n)
      ll += std::log(std::max(kLogIntensityFloor, synth_intensity(cfg_, seq.t[n], seq.x[n], seq.y[n], seq.prefix(n))));
    for (std::size_t n = 0; n <= seq.size(); ++n) {
      const double lo = n == 0 ? 0.0 : seq.t[n - 1];
      const double hi = n == seq.size() ? d.t_max : seq.t[n];
      if (!(hi > lo)) continue;
      const History h = seq.prefix(n);
      ll -= integrate_box([&](double t, double x, double y) { return synth_intensity(cfg_, t, x, y, h); },
                          make_product_rule(gauss_legendre(32, lo, hi), gauss_legendre(32, d.x_lo, d.x_hi),
                                            gauss_legendre(32, d.y_lo, d.y_hi)));
    }
    return ll;
  }
  [[nodiscard]] std::unique_ptr<SequenceSlicer> bind(const EventSequence& seq, SpatialRule rule) const override {
    const double norm = 1.0 / (2.0 * std::numbers::pi * cfg_.sigma * cfg_.sigma);
    const double two_s2 = 2.0 * cfg_.sigma * cfg_.sigma;
    const double cut_d2 = synth_cutoff_d2(cfg_);
    const auto r = cfg_.rule;
    const bool temporal = r.kind == SwitchRule::Kind::Temporal;
    auto weight = [beta = cfg_.beta](double lag) { return std::exp(-beta * lag); };
    auto field = [=](double dx, double dy, bool past_switch) {
      const double d2 = dx * dx + dy * dy;
      if (d2 > cut_d2) return 0.0;
      const double amp = temporal ? (past_switch ? r.c_above : r.c_below) : r.amplitude(0.0, std::sqrt(d2));
      return amp * norm * std::exp(-d2 / two_s2);
    };
    return std::make_unique<SeparableSlicer>(seq, std::move(rule), cfg_.lambda0, weight, field, synth_cutoff_lag(cfg_),
                                             true, temporal ? std::optional<double>(r.threshold) : std::nullopt);
  }
  [[nodiscard]] std::array<std::size_t, 2> spatial_orders() const override { return {32, 32}; }
  [[nodiscard]] const SynthConfig& config() const noexcept { return cfg_; }

 private:
  SynthConfig cfg_;
};

/// ||estimate - truth|| / ||truth||
inline double relative_l2(std::span<const double> estimate, std::span<const double> truth) {
  if (estimate.size() != truth.size()) throw std::invalid_argument("relative_l2: lengths differ");
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const double e = estimate[i] - truth[i];
    num += e * e;
    den += truth[i] * truth[i];
  }
  if (!(den > 0.0)) throw std::invalid_argument("relative_l2: truth is identically zero");
  return std::sqrt(num) / std::sqrt(den);
}

/// (t, number of history events) pairs.
struct Probe {
  double t = 0.0;
  std::size_t n_history = 0;
};

/// Every event time (history strictly before it) and three equally spaced
/// points inside each gap between successive events.
inline std::vector<Probe> probe_set(const EventSequence& seq) {
  std::vector<Probe> out;
  for (std::size_t n = 0; n < seq.size(); ++n) {
    out.push_back({seq.t[n], n});
    if (n + 1 < seq.size()) {
      const double gap = seq.t[n + 1] - seq.t[n];
      for (int k = 1; k <= 3; ++k) out.push_back({seq.t[n] + gap * k / 4.0, n + 1});
    }
  }
  return out;
}

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;
  std::size_t count = 0;
};

inline MeanStd mean_std(std::span<const double> v) {
  MeanStd r;
  r.count = v.size();
  if (v.empty()) return r;
  r.mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - r.mean) * (x - r.mean);
  r.std = v.size() > 1 ? std::sqrt(ss / static_cast<double>(v.size() - 1)) : 0.0;
  return r;
}

struct IntensityErrorOptions {
  /// Gauss-Legendre order per axis for the spatial marginal.
  std::size_t spatial_order = 32;
  std::size_t grid_rows = 16;
  std::size_t grid_cols = 16;
};

/// Per-sequence values of lambda(t | H) at the probe set.
inline std::vector<double> marginal_at_probes(const PointProcess& p, const EventSequence& seq,
                                              std::span<const Probe> probes, const SpatialRule& rule) {
  const auto slicer = p.bind(seq, rule);
  std::vector<double> buf(rule.size()), out;
  out.reserve(probes.size());
  for (const auto& pr : probes) {
    slicer->eval(pr.t, pr.n_history, buf);
    out.push_back(rule.integrate(buf));
  }
  return out;
}

/// Per-sequence values of lambda(t, x, y | H) at probes x grid, probe-major.
inline std::vector<double> grid_at_probes(const PointProcess& p, const EventSequence& seq,
                                          std::span<const Probe> probes, const SpatialRule& grid) {
  const auto slicer = p.bind(seq, grid);
  std::vector<double> out(probes.size() * grid.size());
  for (std::size_t i = 0; i < probes.size(); ++i)
    slicer->eval(probes[i].t, probes[i].n_history, std::span(out).subspan(i * grid.size(), grid.size()));
  return out;
}

/// Relative L2 error of the temporal marginal intensity, mean and std over sequences.
inline MeanStd temporal_intensity_error(const PointProcess& model, const PointProcess& truth,
                                        std::span<const EventSequence> seqs, const IntensityErrorOptions& opt = {}) {
  const auto rule = SpatialRule::gauss(truth.domain(), opt.spatial_order, opt.spatial_order);
  std::vector<double> errs(seqs.size(), std::numeric_limits<double>::quiet_NaN());
  parallel_for(seqs.size(), [&](std::size_t i) {
    const auto probes = probe_set(seqs[i]);
    if (probes.empty()) return;
    errs[i] = relative_l2(marginal_at_probes(model, seqs[i], probes, rule),
                          marginal_at_probes(truth, seqs[i], probes, rule));
  });
  std::erase_if(errs, [](double e) { return std::isnan(e); });
  return mean_std(errs);
}

inline MeanStd temporal_intensity_error(const PointProcess& model, const SynthConfig& truth,
                                        std::span<const EventSequence> seqs, const IntensityErrorOptions& opt = {}) {
  return temporal_intensity_error(model, SynthProcess(truth), seqs, opt);
}

/// Relative L2 error of lambda(t, x, y | H) on the probe set times a cell-centre grid.
inline MeanStd spatiotemporal_intensity_error(const PointProcess& model, const PointProcess& truth,
                                              std::span<const EventSequence> seqs,
                                              const IntensityErrorOptions& opt = {}) {
  const auto grid = SpatialRule::cell_centers(truth.domain(), opt.grid_rows, opt.grid_cols);
  std::vector<double> errs(seqs.size(), std::numeric_limits<double>::quiet_NaN());
  parallel_for(seqs.size(), [&](std::size_t i) {
    const auto probes = probe_set(seqs[i]);
    if (probes.empty()) return;
    errs[i] = relative_l2(grid_at_probes(model, seqs[i], probes, grid), grid_at_probes(truth, seqs[i], probes, grid));
  });
  std::erase_if(errs, [](double e) { return std::isnan(e); });
  return mean_std(errs);
}

inline MeanStd spatiotemporal_intensity_error(const PointProcess& model, const SynthConfig& truth,
                                              std::span<const EventSequence> seqs,
                                              const IntensityErrorOptions& opt = {}) {
  return spatiotemporal_intensity_error(model, SynthProcess(truth), seqs, opt);
}

struct PredictionErrors {
  double time_rmse = 0.0;
  double euclid_mean = 0.0;
  std::size_t count = 0;
};

/// RMSE of the waiting-time residuals and mean Euclidean location error.
inline PredictionErrors prediction_errors(std::span<const PredictionRecord> records) {
  PredictionErrors r;
  r.count = records.size();
  if (records.empty()) throw std::invalid_argument("prediction_errors: no records");
  double ss = 0.0, de = 0.0;
  for (const auto& p : records) {
    const double e = (p.t_pred - p.t_prev) - (p.t_true - p.t_prev);
    ss += e * e;
    de += std::hypot(p.x_pred - p.x_true, p.y_pred - p.y_true);
  }
  r.time_rmse = std::sqrt(ss / static_cast<double>(records.size()));
  r.euclid_mean = de / static_cast<double>(records.size());
  return r;
}

}  // namespace kstpp
