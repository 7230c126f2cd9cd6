#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "kstpp/objective.hpp"
#include "kstpp/parallel.hpp"

namespace kstpp {

/// Adam moments. The objective is maximized, so steps ascend.
struct AdamState {
  std::size_t step = 0;
  std::vector<double> m;
  std::vector<double> v;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  static AdamState init(std::size_t n, double lr) {
    AdamState s;
    s.m.assign(n, 0.0);
    s.v.assign(n, 0.0);
    s.lr = lr;
    return s;
  }
};

inline void adam_step(AdamState& s, std::span<double> params, std::span<const double> grad) {
  if (params.size() != s.m.size() || grad.size() != s.m.size())
    throw std::invalid_argument("adam_step: parameter, gradient and state sizes differ");
  ++s.step;
  const double c1 = 1.0 - std::pow(s.beta1, static_cast<double>(s.step));
  const double c2 = 1.0 - std::pow(s.beta2, static_cast<double>(s.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    s.m[i] = s.beta1 * s.m[i] + (1.0 - s.beta1) * grad[i];
    s.v[i] = s.beta2 * s.v[i] + (1.0 - s.beta2) * grad[i] * grad[i];
    const double mh = s.m[i] / c1;
    const double vh = s.v[i] / c2;
    params[i] += s.lr * mh / (std::sqrt(vh) + s.eps);
  }
}

struct FitConfig {
  double lr = 1e-3;
  std::size_t epochs = 100;
  std::size_t batch_size = 1;
  std::size_t patience = 10;
  std::uint64_t seed = 0;
  bool freeze_hyperparams = false;
  /// Keep f at its current values (used for background-only fits).
  bool freeze_influence = false;
  bool stop_gradient_through_inverse = false;
  /// Standard deviation of the initial value tensors; negative keeps the model's values.
  double init_std = 0.01;
  /// Stop after this many optimizer steps in total (0 = no limit).
  std::size_t max_steps = 0;
};

struct StepRecord {
  std::size_t step = 0;
  std::size_t epoch = 0;
  double objective = 0.0;
  double grad_norm = 0.0;
  double wall_ms = 0.0;
};

struct EpochRecord {
  std::size_t epoch = 0;
  double mean_objective = 0.0;
  /// Sum of validation log likelihoods; NaN when no validation split is given.
  double validation_ll = std::numeric_limits<double>::quiet_NaN();
  bool improved = false;
};

struct FitResult {
  KstppModel model;
  std::vector<StepRecord> steps;
  std::vector<EpochRecord> epochs;
  std::size_t best_epoch = 0;
  double best_validation_ll = -std::numeric_limits<double>::infinity();
  bool aborted = false;
  bool early_stopped = false;
  std::string message;
};

/// Fills both value tensors with N(0, std^2) draws from `seed`.
inline void initialize_values(KstppModel& m, std::uint64_t seed, double std_dev) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd(0.0, std_dev);
  for (double& v : m.influence.values().storage()) v = nd(rng);
  for (double& v : m.background.values().storage()) v = nd(rng);
}

namespace detail {

inline std::vector<char> frozen_mask(const KstppModel& m, const FitConfig& cfg) {
  const auto l = ParamVector::layout(m);
  std::vector<char> mask(l.size, 0);
  if (cfg.freeze_influence) {
    for (std::size_t i = l.influence_values; i < l.background_values; ++i) mask[i] = 1;
    for (std::size_t i = l.influence_hyper; i < l.background_hyper; ++i) mask[i] = 1;
  }
  if (cfg.freeze_hyperparams)
    for (std::size_t i = l.influence_hyper; i < l.size; ++i) mask[i] = 1;
  return mask;
}

}  // namespace detail

/// Sum of per-sequence log likelihoods over `seqs`, reduced in sequence order.
inline double dataset_log_likelihood(const KstppModel& model, std::span<const EventSequence> seqs) {
  const Tensor3 alpha_f = detail::gp_alpha(model.influence);
  const Tensor3 alpha_g = detail::gp_alpha(model.background);
  const SequenceEvaluator eval(model, alpha_f, alpha_g);
  std::vector<double> parts(seqs.size());
  parallel_for(seqs.size(), [&](std::size_t i) { parts[i] = eval.run(seqs[i], false).value; });
  return std::accumulate(parts.begin(), parts.end(), 0.0);
}

/// Shuffled mini-batch Adam ascent on log_joint with early stopping on the
/// validation log likelihood. Returns the best-validation model (or the last
/// model when no validation split is supplied).
inline FitResult fit(KstppModel model, std::span<const EventSequence> train, std::span<const EventSequence> validation,
                     const FitConfig& cfg) {
  if (train.empty()) throw std::invalid_argument("fit: training set is empty");
  if (cfg.batch_size < 1) throw std::invalid_argument("fit: batch size must be at least 1");
  if (!(cfg.lr > 0.0)) throw std::invalid_argument("fit: learning rate must be positive");
  for (std::size_t i = 0; i < train.size(); ++i) {
    try {
      train[i].validate(model.domain);
    } catch (const std::invalid_argument& e) {
      throw std::invalid_argument("fit: training sequence " + std::to_string(i) + ": " + e.what());
    }
  }
  if (cfg.init_std >= 0.0) {
    const auto f_saved = model.influence.values();
    initialize_values(model, cfg.seed, cfg.init_std);
    if (cfg.freeze_influence) model.influence.values() = f_saved;
  }

  FitResult res;
  const auto mask = detail::frozen_mask(model, cfg);
  ParamVector params = pack_params(model);
  AdamState adam = AdamState::init(params.size(), cfg.lr);
  std::mt19937_64 shuffle_rng(cfg.seed ^ 0x5bd1e995u);
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);
  const double scale = static_cast<double>(train.size()) / static_cast<double>(cfg.batch_size);
  GradientOptions opt;
  opt.likelihood_scale = scale;
  opt.stop_gradient_through_inverse = cfg.stop_gradient_through_inverse;

  const bool has_val = !validation.empty();
  res.model = model;
  std::size_t since_best = 0;
  std::size_t step = 0;
  std::vector<EventSequence> batch;

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    double obj_sum = 0.0;
    std::size_t obj_count = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const auto t0 = std::chrono::steady_clock::now();
      batch.clear();
      for (std::size_t j = start; j < std::min(order.size(), start + cfg.batch_size); ++j)
        batch.push_back(train[order[j]]);
      // a short final batch keeps the estimator unbiased with its own scale
      opt.likelihood_scale = static_cast<double>(train.size()) / static_cast<double>(batch.size());
      ObjectiveResult r;
      try {
        r = grad_log_joint(model, batch, opt);
      } catch (const std::domain_error& e) {
        res.aborted = true;
        res.message = std::string("aborted at step ") + std::to_string(step + 1) + ": " + e.what();
        if (!has_val) res.model = model;
        return res;
      }
      if (!std::isfinite(r.value)) {
        res.aborted = true;
        res.message = "aborted at step " + std::to_string(step + 1) + ": non-finite objective";
        if (!has_val) res.model = model;
        return res;
      }
      double gn = 0.0;
      for (std::size_t i = 0; i < r.gradient.size(); ++i) {
        if (mask[i]) r.gradient.data[i] = 0.0;
        gn += r.gradient.data[i] * r.gradient.data[i];
      }
      const ParamVector last_good = params;
      adam_step(adam, params.data, r.gradient.data);
      try {
        unpack_params(model, params);
      } catch (const NotPositiveDefinite& e) {
        unpack_params(model, last_good);
        res.aborted = true;
        res.message = "aborted at step " + std::to_string(step + 1) + ": " + e.what();
        if (!has_val) res.model = model;
        return res;
      }
      ++step;
      obj_sum += r.value;
      ++obj_count;
      const auto t1 = std::chrono::steady_clock::now();
      res.steps.push_back({step, epoch, r.value, std::sqrt(gn), std::chrono::duration<double, std::milli>(t1 - t0).count()});
      if (cfg.max_steps && step >= cfg.max_steps) break;
    }

    EpochRecord er;
    er.epoch = epoch;
    er.mean_objective = obj_sum / static_cast<double>(std::max<std::size_t>(obj_count, 1));
    if (has_val) {
      er.validation_ll = dataset_log_likelihood(model, validation);
      if (er.validation_ll > res.best_validation_ll) {
        res.best_validation_ll = er.validation_ll;
        res.best_epoch = epoch;
        res.model = model;
        er.improved = true;
        since_best = 0;
      } else {
        ++since_best;
      }
    } else {
      res.model = model;
      res.best_epoch = epoch;
    }
    res.epochs.push_back(er);
    if (cfg.max_steps && step >= cfg.max_steps) break;
    if (has_val && cfg.patience > 0 && since_best >= cfg.patience) {
      res.early_stopped = true;
      break;
    }
  }
  return res;
}

}  // namespace kstpp
