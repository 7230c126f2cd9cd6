// kstpp command-line tool: simulate, fit, predict, eval, intensity, import.
//
// Every failure prints one JSON object on stderr and exits nonzero:
//   {"error": "<kind>", "message": "...", "path": "...", "line": N}

#include <CLI11.hpp>

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>

#include "kstpp/kstpp.hpp"

using namespace kstpp;

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::array<double, 4> parse_bounds(const std::vector<double>& v) {
  if (v.size() != 4) throw UsageError("--bounds expects x_lo,x_hi,y_lo,y_hi");
  return {v[0], v[1], v[2], v[3]};
}

void emit(const json& j, const std::string& out) {
  if (out.empty() || out == "-") {
    std::cout << j.dump(2) << "\n";
    return;
  }
  const fs::path p(out);
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream f(p);
  if (!f) throw IoError(out, "cannot open for writing");
  f << j.dump(2) << "\n";
}

std::string env_or(const char* name, std::string fallback) {
  const char* v = std::getenv(name);
  return v && *v ? std::string(v) : fallback;
}

// ---------------------------------------------------------------- simulate

struct SimulateArgs {
  std::string preset = "syn1";
  std::string config;
  std::size_t train = 200, val = 0, test = 0;
  std::uint64_t seed = 0;
  std::string out;
  std::optional<double> t_max;
  std::vector<double> bounds;
};

void run_simulate(const SimulateArgs& a) {
  SynthConfig cfg;
  if (!a.config.empty()) {
    const json j = read_json(a.config);
    try {
      cfg = synth_from_json(j);
    } catch (const std::exception& e) {
      throw IoError(a.config, e.what());
    }
  } else {
    cfg = SynthConfig::preset(a.preset);
  }
  if (a.t_max) cfg.domain.t_max = *a.t_max;
  if (!a.bounds.empty()) {
    const auto b = parse_bounds(a.bounds);
    cfg.domain.x_lo = b[0];
    cfg.domain.x_hi = b[1];
    cfg.domain.y_lo = b[2];
    cfg.domain.y_hi = b[3];
  }
  cfg.validate();
  const std::string out = a.out.empty() ? env_or("KSTPP_OUTPUT", "dataset") : a.out;
  const auto d = dataset_from_synthetic(make_dataset(cfg, a.train, a.val, a.test, a.seed));
  save_dataset(d, out);
  std::size_t events = 0;
  for (const auto& [name, seqs] : d.splits)
    for (const auto& s : seqs) events += s.size();
  std::cout << json{{"dataset", out}, {"generator", cfg.name}, {"splits", d.manifest.splits}, {"events", events}}.dump()
            << "\n";
}

// ---------------------------------------------------------------- fit

struct FitArgs {
  std::string config;
  std::string dataset;
  std::string out;
  std::string log;
  std::string model;
  std::optional<std::size_t> epochs;
  std::optional<std::uint64_t> seed;
};

void run_fit(const FitArgs& a) {
  RunConfig cfg;
  if (!a.config.empty()) {
    const json j = read_json(a.config);
    try {
      cfg = run_config_from_json(j);
    } catch (const std::invalid_argument& e) {
      throw IoError(a.config, e.what());
    } catch (const json::exception& e) {
      throw IoError(a.config, e.what());
    }
  }
  apply_env_overrides(cfg);
  if (!a.dataset.empty()) cfg.dataset = a.dataset;
  if (!a.out.empty()) cfg.output = a.out;
  if (!a.model.empty()) {
    if (a.model != "kstpp" && a.model != "poisson" && a.model != "sthp")
      throw UsageError("--model must be kstpp, poisson or sthp");
    cfg.model = a.model;
  }
  if (a.epochs) cfg.kstpp.fit.epochs = cfg.sthp.epochs = *a.epochs;
  if (a.seed) cfg.kstpp.fit.seed = cfg.sthp.seed = *a.seed;
  if (cfg.dataset.empty()) throw UsageError("fit: no dataset (pass --dataset or set it in the config)");
  if (cfg.output.empty()) cfg.output = "checkpoint.json";
  const Dataset data = load_dataset(cfg.dataset);
  if (!data.splits.count(cfg.train_split))
    throw IoError(cfg.dataset, "dataset has no split '" + cfg.train_split + "'");
  const auto t0 = std::chrono::steady_clock::now();
  const auto outcome = fit_from_config(cfg, data);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  save_checkpoint(outcome.checkpoint, cfg.output);
  const std::string log = a.log.empty() ? cfg.output + ".log.jsonl" : a.log;
  {
    std::ofstream f(log);
    if (!f) throw IoError(log, "cannot open for writing");
    for (const auto& line : outcome.log) f << line.dump() << "\n";
  }
  json summary = outcome.checkpoint.summary;
  summary["checkpoint"] = cfg.output;
  summary["log"] = log;
  summary["model"] = cfg.model;
  summary["seconds"] = secs;
  std::cout << summary.dump() << "\n";
}

// ---------------------------------------------------------------- predict

struct PredictArgs {
  std::string checkpoint;
  std::string dataset;
  std::string split = "test";
  std::string out = "predictions.jsonl";
  std::size_t outer_order = kDefaultImproperOrder;
  std::size_t min_inner_order = 0;
  std::size_t spatial_order = 0;
  bool no_closed_form = false;
};

void run_predict(const PredictArgs& a) {
  const auto ck = load_checkpoint(a.checkpoint);
  const auto data = load_dataset(a.dataset);
  if (!data.splits.count(a.split)) throw IoError(a.dataset, "dataset has no split '" + a.split + "'");
  const auto proc = ck.process();
  PredictOptions opt;
  opt.outer_order = a.outer_order;
  opt.min_inner_order = a.min_inner_order;
  opt.spatial_orders = {a.spatial_order, a.spatial_order};
  opt.use_closed_form = !a.no_closed_form;
  const auto records = predict_dataset(*proc, data.split(a.split), opt);
  const fs::path p(a.out);
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream f(p);
  if (!f) throw IoError(a.out, "cannot open for writing");
  for (const auto& r : records) f << to_json(r).dump() << "\n";
  std::cout << json{{"predictions", a.out}, {"records", records.size()}, {"model", ck.model_kind}}.dump() << "\n";
}

// ---------------------------------------------------------------- eval

struct EvalArgs {
  std::string predictions;
  std::string checkpoint;
  std::string dataset;
  std::string split = "test";
  std::string truth;
  std::string out;
  std::size_t spatial_order = 32;
  std::size_t grid = 16;
};

json mean_std_json(const MeanStd& m) { return {{"mean", m.mean}, {"std", m.std}, {"sequences", m.count}}; }

void run_eval(const EvalArgs& a) {
  if (a.predictions.empty() && a.checkpoint.empty()) throw UsageError("eval: pass --predictions and/or --checkpoint");
  json result = json::object();
  if (!a.predictions.empty()) {
    const auto recs = load_predictions(a.predictions);
    const auto e = prediction_errors(recs);
    result["prediction"] = {{"time_rmse", e.time_rmse}, {"euclidean_mean", e.euclid_mean}, {"records", e.count}};
  }
  if (!a.checkpoint.empty()) {
    if (a.dataset.empty()) throw UsageError("eval: --checkpoint needs --dataset");
    const auto ck = load_checkpoint(a.checkpoint);
    const auto data = load_dataset(a.dataset);
    if (!data.splits.count(a.split)) throw IoError(a.dataset, "dataset has no split '" + a.split + "'");
    const auto& seqs = data.split(a.split);
    const auto proc = ck.process();
    double ll = 0.0, events = 0.0;
    for (const auto& s : seqs) {
      ll += proc->log_likelihood(s);
      events += static_cast<double>(s.size());
    }
    result["log_likelihood"] = {{"total", ll},
                                {"per_sequence", ll / static_cast<double>(std::max<std::size_t>(seqs.size(), 1))},
                                {"per_event", events > 0 ? ll / events : 0.0}};
    std::optional<SynthConfig> truth = data.manifest.generator;
    if (!a.truth.empty()) {
      truth = SynthConfig::preset(a.truth);
      truth->domain = data.manifest.domain;
    }
    if (truth) {
      IntensityErrorOptions opt;
      opt.spatial_order = a.spatial_order;
      opt.grid_rows = opt.grid_cols = a.grid;
      result["temporal_intensity_error"] = mean_std_json(temporal_intensity_error(*proc, *truth, seqs, opt));
      result["spatiotemporal_intensity_error"] = mean_std_json(spatiotemporal_intensity_error(*proc, *truth, seqs, opt));
    }
    result["model"] = ck.model_kind;
    result["split"] = a.split;
  }
  emit(result, a.out);
}

// ---------------------------------------------------------------- intensity

struct IntensityArgs {
  std::string checkpoint;
  std::string dataset;
  std::string split = "test";
  std::size_t sequence = 0;
  std::vector<double> times;
  bool probes = false;
  std::vector<std::size_t> grid{16, 16};
  std::string out;
};

void run_intensity(const IntensityArgs& a) {
  const auto ck = load_checkpoint(a.checkpoint);
  const auto data = load_dataset(a.dataset);
  if (!data.splits.count(a.split)) throw IoError(a.dataset, "dataset has no split '" + a.split + "'");
  const auto& seqs = data.split(a.split);
  if (a.sequence >= seqs.size())
    throw UsageError("--sequence " + std::to_string(a.sequence) + " out of range (split has " +
                     std::to_string(seqs.size()) + ")");
  if (a.grid.size() != 2 || a.grid[0] < 1 || a.grid[1] < 1) throw UsageError("--grid expects nx,ny");
  const auto& seq = seqs[a.sequence];
  std::vector<Probe> probes;
  if (a.probes) probes = probe_set(seq);
  for (double t : a.times) {
    if (!(t > 0.0) || t > ck.domain.t_max) throw UsageError("--times entries must lie in (0, T]");
    std::size_t n = 0;
    while (n < seq.size() && seq.t[n] < t) ++n;
    probes.push_back({t, n});
  }
  if (probes.empty()) throw UsageError("intensity: pass --times and/or --probes");
  const auto grid = SpatialRule::cell_centers(ck.domain, a.grid[0], a.grid[1]);
  const auto proc = ck.process();
  const auto slicer = proc->bind(seq, grid);
  json frames = json::array();
  std::vector<double> buf(grid.size());
  for (const auto& p : probes) {
    slicer->eval(p.t, p.n_history, buf);
    json rows = json::array();
    for (std::size_t i = 0; i < grid.xs.size(); ++i)
      rows.push_back(std::vector<double>(buf.begin() + static_cast<std::ptrdiff_t>(i * grid.ys.size()),
                                         buf.begin() + static_cast<std::ptrdiff_t>((i + 1) * grid.ys.size())));
    frames.push_back({{"t", p.t}, {"n_history", p.n_history}, {"lambda", rows}});
  }
  emit({{"model", ck.model_kind},
        {"sequence", a.sequence},
        {"split", a.split},
        {"x", grid.xs},
        {"y", grid.ys},
        {"layout", "lambda[i][j] at (x[i], y[j])"},
        {"frames", frames}},
       a.out);
}

// ---------------------------------------------------------------- import

struct ImportArgs {
  std::string train, val, test;
  std::string out;
  std::optional<double> t_max;
  std::vector<double> bounds;
};

void run_import(const ImportArgs& a) {
  ImportOptions opt;
  if (!a.train.empty()) opt.files["train"] = a.train;
  if (!a.val.empty()) opt.files["val"] = a.val;
  if (!a.test.empty()) opt.files["test"] = a.test;
  if (opt.files.empty()) throw UsageError("import: pass at least one of --train, --val, --test");
  for (const auto& [name, p] : opt.files)
    if (!fs::exists(p)) throw IoError(p.string(), "input file not found");
  opt.t_max = a.t_max;
  if (!a.bounds.empty()) opt.bounds = parse_bounds(a.bounds);
  ImportStats st;
  const auto d = import_external(opt, &st);
  const std::string out = a.out.empty() ? env_or("KSTPP_OUTPUT", "dataset") : a.out;
  save_dataset(d, out);
  std::cout << json{{"dataset", out},
                    {"sequences", st.sequences},
                    {"events", st.events},
                    {"nudged_ties", st.nudged},
                    {"domain", to_json(d.manifest.domain)}}
                   .dump()
            << "\n";
}

int fail(const std::string& kind, const std::string& message, const std::string& path = {}, std::size_t line = 0,
         int code = 1) {
  json j = {{"error", kind}, {"message", message}};
  if (!path.empty()) j["path"] = path;
  if (line) j["line"] = line;
  std::cerr << j.dump() << std::endl;
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Kernel-based spatiotemporal point processes: simulate, fit, predict and evaluate.\n"
               "Environment: KSTPP_THREADS sets the worker count; KSTPP_DATASET and KSTPP_OUTPUT override paths."};
  app.require_subcommand(1);
  std::optional<std::size_t> threads;
  app.add_option("--threads", threads, "Worker threads (overrides KSTPP_THREADS)")->check(CLI::PositiveNumber);

  SimulateArgs sa;
  auto* sim = app.add_subcommand("simulate", "Generate a synthetic dataset by thinning");
  sim->add_option("--preset", sa.preset, "Generator preset: syn1 or syn2")->capture_default_str();
  sim->add_option("--config", sa.config, "Generator JSON (overrides --preset)");
  sim->add_option("--train", sa.train, "Training sequences")->capture_default_str();
  sim->add_option("--val", sa.val, "Validation sequences")->capture_default_str();
  sim->add_option("--test", sa.test, "Test sequences")->capture_default_str();
  sim->add_option("--seed", sa.seed, "Master seed")->capture_default_str();
  sim->add_option("--out", sa.out, "Output dataset directory (default $KSTPP_OUTPUT or ./dataset)");
  sim->add_option("--t-max", sa.t_max, "Override the time horizon T");
  sim->add_option("--bounds", sa.bounds, "Override the spatial box as x_lo,x_hi,y_lo,y_hi")->delimiter(',');

  FitArgs fa;
  auto* fitc = app.add_subcommand("fit", "Fit a model (kstpp, poisson or sthp) and write a checkpoint");
  fitc->add_option("--config", fa.config, "Run configuration JSON");
  fitc->add_option("--dataset", fa.dataset, "Dataset directory (overrides config and KSTPP_DATASET)");
  fitc->add_option("--out", fa.out, "Checkpoint path (overrides config and KSTPP_OUTPUT)");
  fitc->add_option("--log", fa.log, "Training log path (default <checkpoint>.log.jsonl)");
  fitc->add_option("--model", fa.model, "Model kind: kstpp, poisson or sthp (overrides config)");
  fitc->add_option("--epochs", fa.epochs, "Override the epoch count");
  fitc->add_option("--seed", fa.seed, "Override the optimizer seed");

  PredictArgs pa;
  auto* pred = app.add_subcommand("predict", "Predict each next event of a split by teacher forcing");
  pred->add_option("--checkpoint", pa.checkpoint, "Checkpoint path")->required();
  pred->add_option("--dataset", pa.dataset, "Dataset directory")->required()->envname("KSTPP_DATASET");
  pred->add_option("--split", pa.split, "Split to predict")->capture_default_str();
  pred->add_option("--out", pa.out, "Predictions file (JSON lines)")->capture_default_str();
  pred->add_option("--outer-order", pa.outer_order, "Nodes of the improper time integral")->capture_default_str();
  pred->add_option("--min-inner-order", pa.min_inner_order, "Lower bound on inner GL nodes (0 = model's q0)")
      ->capture_default_str();
  pred->add_option("--spatial-order", pa.spatial_order, "Spatial GL nodes per axis (0 = model's orders)")
      ->capture_default_str();
  pred->add_flag("--no-closed-form", pa.no_closed_form, "Use quadrature even when a closed form exists");

  EvalArgs ea;
  auto* ev = app.add_subcommand("eval", "Compute prediction errors and/or intensity errors against the generator");
  ev->add_option("--predictions", ea.predictions, "Predictions file from `predict`");
  ev->add_option("--checkpoint", ea.checkpoint, "Checkpoint to score on --dataset");
  ev->add_option("--dataset", ea.dataset, "Dataset directory")->envname("KSTPP_DATASET");
  ev->add_option("--split", ea.split, "Split to score")->capture_default_str();
  ev->add_option("--truth", ea.truth, "Ground-truth preset when the manifest has no generator (syn1 or syn2)");
  ev->add_option("--spatial-order", ea.spatial_order, "GL nodes per axis for the temporal marginal")
      ->capture_default_str();
  ev->add_option("--grid", ea.grid, "Cells per axis of the spatiotemporal grid")->capture_default_str();
  ev->add_option("--out", ea.out, "Write the metric table here instead of stdout");

  IntensityArgs ia;
  auto* inten = app.add_subcommand("intensity", "Evaluate lambda(t, x, y | history) on a cell-centre grid");
  inten->add_option("--checkpoint", ia.checkpoint, "Checkpoint path")->required();
  inten->add_option("--dataset", ia.dataset, "Dataset directory")->required()->envname("KSTPP_DATASET");
  inten->add_option("--split", ia.split, "Split holding the sequence")->capture_default_str();
  inten->add_option("--sequence", ia.sequence, "Sequence index within the split")->capture_default_str();
  inten->add_option("--times", ia.times, "Comma-separated probe times")->delimiter(',');
  inten->add_flag("--probes", ia.probes, "Add the standard probe set (event times and 3 points per gap)");
  inten->add_option("--grid", ia.grid, "Grid size nx,ny")->delimiter(',')->capture_default_str();
  inten->add_option("--out", ia.out, "Write JSON here instead of stdout");

  ImportArgs ima;
  auto* imp = app.add_subcommand("import", "Convert external [t, x, y] sequence files into a dataset");
  imp->add_option("--train", ima.train, "Training split file (JSON array or JSON lines)");
  imp->add_option("--val", ima.val, "Validation split file");
  imp->add_option("--test", ima.test, "Test split file");
  imp->add_option("--out", ima.out, "Output dataset directory (default $KSTPP_OUTPUT or ./dataset)");
  imp->add_option("--t-max", ima.t_max, "Horizon T (default: largest time seen)");
  imp->add_option("--bounds", ima.bounds, "Spatial box x_lo,x_hi,y_lo,y_hi (default: bounding box)")->delimiter(',');

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::string msg = e.what();
    return fail("usage", msg, {}, 0, 2);
  }
  if (threads) ::setenv("KSTPP_THREADS", std::to_string(*threads).c_str(), 1);

  try {
    if (*sim) run_simulate(sa);
    if (*fitc) run_fit(fa);
    if (*pred) run_predict(pa);
    if (*ev) run_eval(ea);
    if (*inten) run_intensity(ia);
    if (*imp) run_import(ima);
  } catch (const UsageError& e) {
    return fail("usage", e.what(), {}, 0, 2);
  } catch (const IoError& e) {
    return fail("io", e.what(), e.path(), e.line());
  } catch (const std::invalid_argument& e) {
    return fail("invalid_argument", e.what());
  } catch (const std::domain_error& e) {
    return fail("numerical", e.what());
  } catch (const std::exception& e) {
    return fail("runtime", e.what());
  }
  return 0;
}
