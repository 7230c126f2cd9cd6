#pragma once

#include <chrono>
#include <string>

#include "kstpp/baselines.hpp"
#include "kstpp/io.hpp"
#include "kstpp/metrics.hpp"
#include "kstpp/train.hpp"

namespace kstpp {

struct FitOutcome {
  Checkpoint checkpoint;
  /// Per-epoch log lines (JSON records).
  std::vector<json> log;
};

/// Sets every background value to softplus^{-1}(rate) for the dataset's empirical rate.
inline void set_empirical_background(KstppModel& m, std::span<const EventSequence> train) {
  std::size_t events = 0;
  for (const auto& s : train) events += s.size();
  const double rate = std::max(1e-6, static_cast<double>(events) /
                                         (static_cast<double>(train.size()) * m.domain.t_max * m.domain.area()));
  const double z = softplus_inverse(rate, m.link_beta);
  for (double& v : m.background.values().storage()) v = z;
}

/// Fits the configured model on the dataset's training split.
inline FitOutcome fit_from_config(const RunConfig& cfg, const Dataset& data) {
  const auto& train = data.split(cfg.train_split);
  const std::vector<EventSequence> empty;
  const auto& val = data.splits.count(cfg.validation_split) ? data.split(cfg.validation_split) : empty;
  const Domain& d = data.manifest.domain;
  FitOutcome out;
  out.checkpoint.model_kind = cfg.model;
  out.checkpoint.domain = d;
  out.checkpoint.run_config = to_json(cfg);
  if (cfg.model == "poisson") {
    out.checkpoint.poisson = poisson_fit(train, d);
    out.checkpoint.summary = {{"rate", out.checkpoint.poisson->rate}};
  } else if (cfg.model == "sthp") {
    const auto r = sthp_fit(train, d, cfg.sthp);
    out.checkpoint.sthp = r.model;
    for (std::size_t e = 0; e < r.epoch_log_likelihood.size(); ++e)
      out.log.push_back({{"epoch", e + 1}, {"train_ll", r.epoch_log_likelihood[e]}});
    out.checkpoint.summary = {{"lambda0", r.model.lambda0()},
                              {"c", r.model.c()},
                              {"beta", r.model.beta()},
                              {"sigma", r.model.sigma()}};
  } else {
    KstppModel m = make_model(d, cfg.kstpp.shape);
    FitConfig fc = cfg.kstpp.fit;
    if (cfg.kstpp.empirical_background) {
      if (fc.init_std >= 0.0) initialize_values(m, fc.seed, fc.init_std);
      set_empirical_background(m, train);
      fc.init_std = -1.0;
    }
    const auto r = fit(std::move(m), train, val, fc);
    for (const auto& e : r.epochs) {
      double obj = e.mean_objective;
      out.log.push_back({{"epoch", e.epoch},
                         {"mean_objective", obj},
                         {"validation_ll", std::isnan(e.validation_ll) ? json(nullptr) : json(e.validation_ll)},
                         {"improved", e.improved}});
    }
    if (r.aborted) throw std::runtime_error("fit: " + r.message);
    out.checkpoint.kstpp = r.model;
    out.checkpoint.summary = {{"steps", r.steps.size()},
                              {"epochs", r.epochs.size()},
                              {"best_epoch", r.best_epoch},
                              {"early_stopped", r.early_stopped}};
    if (!val.empty()) out.checkpoint.summary["best_validation_ll"] = r.best_validation_ll;
  }
  return out;
}

}  // namespace kstpp
