#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <numbers>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "kstpp/model.hpp"
#include "kstpp/parallel.hpp"

namespace kstpp {

/// How the amplitude c_n of each past event is chosen.
struct SwitchRule {
  enum class Kind { Temporal, Distance };
  Kind kind = Kind::Temporal;
  double threshold = 1.0;
  /// Temporal: lag < threshold. Distance: distance < threshold.
  double c_below = 1.0;
  double c_above = -2.0;

  [[nodiscard]] double amplitude(double lag, double dist) const noexcept {
    const double v = kind == Kind::Temporal ? lag : dist;
    return v < threshold ? c_below : c_above;
  }
  [[nodiscard]] double max_positive() const noexcept { return std::max({c_below, c_above, 0.0}); }
};

/// lambda0 + sum_n c_n exp(-beta lag) N(d_n; sigma), clamped at 0.
struct SynthConfig {
  std::string name = "custom";
  double lambda0 = 2.0;
  double beta = 2.0;
  double sigma = 0.3;
  SwitchRule rule;
  Domain domain{50.0, -2.0, 2.0, -2.0, 2.0};

  void validate() const {
    domain.validate();
    if (!(beta > 0.0) || !(sigma > 0.0)) throw std::invalid_argument("SynthConfig: beta and sigma must be positive");
    if (!(lambda0 >= 0.0)) throw std::invalid_argument("SynthConfig: lambda0 must be nonnegative");
  }

  /// Excitation for lag < 1, inhibition afterwards.
  static SynthConfig syn1() {
    SynthConfig c;
    c.name = "syn1";
    c.lambda0 = 2.0;
    c.beta = 2.0;
    c.sigma = 0.3;
    c.rule = {SwitchRule::Kind::Temporal, 1.0, 1.0, -2.0};
    return c;
  }

  /// Inhibition within distance 1, excitation beyond.
  static SynthConfig syn2() {
    SynthConfig c;
    c.name = "syn2";
    c.lambda0 = 2.0;
    c.beta = 1.5;
    c.sigma = 0.5;
    c.rule = {SwitchRule::Kind::Distance, 1.0, -0.3, 1.0};
    return c;
  }

  static SynthConfig preset(const std::string& name) {
    if (name == "syn1") return syn1();
    if (name == "syn2") return syn2();
    throw std::invalid_argument("unknown preset '" + name + "' (expected syn1 or syn2)");
  }
};

/// Lags past which exp(-beta lag) < 1e-12 are skipped when summing the history.
inline double synth_cutoff_lag(const SynthConfig& cfg) { return 12.0 * std::numbers::ln10 / cfg.beta; }

/// Squared distances past which the spatial factor is below 1e-12 and skipped.
inline double synth_cutoff_d2(const SynthConfig& cfg) { return 24.0 * std::numbers::ln10 * cfg.sigma * cfg.sigma; }

inline double synth_intensity_raw(const SynthConfig& cfg, double t, double x, double y, const History& h) {
  const double norm = 1.0 / (2.0 * std::numbers::pi * cfg.sigma * cfg.sigma);
  const double cut = synth_cutoff_lag(cfg);
  const double cut_d2 = synth_cutoff_d2(cfg);
  double s = cfg.lambda0;
  for (std::size_t n = h.size(); n-- > 0;) {
    const double lag = t - h.t[n];
    if (lag > cut) break;
    const double dx = x - h.x[n], dy = y - h.y[n];
    const double d2 = dx * dx + dy * dy;
    if (d2 > cut_d2) continue;
    s += cfg.rule.amplitude(lag, std::sqrt(d2)) * std::exp(-cfg.beta * lag) * norm *
         std::exp(-d2 / (2.0 * cfg.sigma * cfg.sigma));
  }
  return s;
}

inline double synth_intensity(const SynthConfig& cfg, double t, double x, double y, const History& h) {
  return std::max(0.0, synth_intensity_raw(cfg, t, x, y, h));
}

/// Sup over space of the clamped intensity for every time after t until the next event.
inline double synth_upper_bound(const SynthConfig& cfg, double t, const History& h) {
  const double norm = 1.0 / (2.0 * std::numbers::pi * cfg.sigma * cfg.sigma);
  const double cpos = cfg.rule.max_positive();
  double s = cfg.lambda0;
  if (cpos == 0.0) return s;
  const double cut = synth_cutoff_lag(cfg);
  for (std::size_t n = h.size(); n-- > 0;) {
    if (t - h.t[n] > cut) break;
    s += cpos * std::exp(-cfg.beta * (t - h.t[n])) * norm;
  }
  return s;
}

struct ThinningTrace {
  std::size_t proposals = 0;
  std::size_t accepted = 0;
  std::size_t rejected_negative = 0;
};

struct ThinningResult {
  EventSequence events;
  ThinningTrace trace;
};

using IntensityFn = std::function<double(double, double, double, const History&)>;
using BoundFn = std::function<double(double, const History&)>;

/// Ogata thinning with uniform spatial proposals.
///
/// `bound(t, h)` must dominate intensity(t', x, y, h) per unit area for all
/// t' >= t and all (x, y) until the next accepted event.
inline ThinningResult thin(const IntensityFn& intensity_fn, const Domain& domain, const BoundFn& bound,
                           std::uint64_t seed) {
  domain.validate();
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  ThinningResult out;
  const double area = domain.area();
  double t = 0.0;
  while (true) {
    const double lam_bar = bound(t, out.events.all());
    if (!(lam_bar > 0.0)) break;
    std::exponential_distribution<double> gap(lam_bar * area);
    t += gap(rng);
    if (t > domain.t_max) break;
    const double x = domain.x_lo + (domain.x_hi - domain.x_lo) * unit(rng);
    const double y = domain.y_lo + (domain.y_hi - domain.y_lo) * unit(rng);
    const double u = unit(rng);
    ++out.trace.proposals;
    const double lam = intensity_fn(t, x, y, out.events.all());
    if (lam > lam_bar * (1.0 + 1e-12)) {
      std::ostringstream os;
      os << "thin: intensity " << lam << " exceeds the bound " << lam_bar << " at t = " << t;
      throw std::logic_error(os.str());
    }
    if (lam <= 0.0) {
      ++out.trace.rejected_negative;
      continue;
    }
    if (u * lam_bar < lam) {
      out.events.push_back(t, x, y);
      ++out.trace.accepted;
    }
  }
  return out;
}

inline ThinningResult simulate_synth(const SynthConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  return thin([&](double t, double x, double y, const History& h) { return synth_intensity(cfg, t, x, y, h); },
              cfg.domain, [&](double t, const History& h) { return synth_upper_bound(cfg, t, h); }, seed);
}

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Seed of sequence `index` in split `stream`; each split gets its own counter.
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream, std::uint64_t index) {
  return splitmix64(splitmix64(master ^ splitmix64(stream + 1)) + index);
}

struct SyntheticDataset {
  SynthConfig config;
  std::uint64_t seed = 0;
  std::vector<EventSequence> train;
  std::vector<EventSequence> val;
  std::vector<EventSequence> test;
};

inline std::vector<EventSequence> simulate_split(const SynthConfig& cfg, std::size_t count, std::uint64_t seed,
                                                 std::uint64_t stream) {
  std::vector<EventSequence> out(count);
  parallel_for(count, [&](std::size_t i) { out[i] = simulate_synth(cfg, derive_seed(seed, stream, i)).events; });
  return out;
}

inline SyntheticDataset make_dataset(const SynthConfig& cfg, std::size_t n_train, std::size_t n_val,
                                     std::size_t n_test, std::uint64_t seed) {
  SyntheticDataset d;
  d.config = cfg;
  d.seed = seed;
  d.train = simulate_split(cfg, n_train, seed, 0);
  d.val = simulate_split(cfg, n_val, seed, 1);
  d.test = simulate_split(cfg, n_test, seed, 2);
  return d;
}

}  // namespace kstpp
