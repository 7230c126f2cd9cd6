// Simulate a small SYN2 dataset, fit KSTPP and a Poisson baseline, then
// compare intensity errors and one next-event prediction.
#include <cstdio>

#include "kstpp/kstpp.hpp"

int main() {
  using namespace kstpp;
  auto truth = SynthConfig::syn2();
  truth.domain = Domain{10.0, -1.0, 1.0, -1.0, 1.0};
  const auto data = make_dataset(truth, 40, 10, 10, 1);

  KstppShape shape;
  shape.influence_grid = {6, 8, 8};
  shape.background_grid = {5, 5};
  shape.influence_kernel = shape.background_kernel = KernelFamily::Matern52;
  shape.quad_orders = {3, 8, 8};
  shape.influence_horizon = 3.0;
  FitConfig cfg;
  cfg.epochs = 5;
  cfg.lr = 0.01;
  cfg.batch_size = 4;
  cfg.init_std = -1.0;  // keep the background set below
  auto model = make_model(truth.domain, shape);
  set_empirical_background(model, data.train);
  const auto fitted = fit(std::move(model), data.train, data.val, cfg);
  if (fitted.aborted) {
    std::fprintf(stderr, "%s\n", fitted.message.c_str());
    return 1;
  }
  const KstppProcess kstpp(fitted.model);
  const PoissonProcess flat(poisson_fit(data.train, truth.domain));

  for (const PointProcess* p : {static_cast<const PointProcess*>(&kstpp), static_cast<const PointProcess*>(&flat)}) {
    const auto e = temporal_intensity_error(*p, truth, data.test);
    std::printf("%-8s temporal relative L2 %.4f +- %.4f\n", p->kind().c_str(), e.mean, e.std);
  }

  const auto& seq = data.test.front();
  const EventSequence prefix = [&] {
    EventSequence s;
    for (std::size_t n = 0; n + 1 < seq.size(); ++n) s.push_back(seq.t[n], seq.x[n], seq.y[n]);
    return s;
  }();
  const auto next = predict_next(kstpp, prefix);
  std::printf("next event: predicted t=%.3f (%.3f, %.3f), observed t=%.3f (%.3f, %.3f)\n", next.t_next, next.x_next,
              next.y_next, seq.t.back(), seq.x.back(), seq.y.back());
  return 0;
}
