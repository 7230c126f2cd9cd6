#pragma once

#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "kstpp/baselines.hpp"
#include "kstpp/model.hpp"
#include "kstpp/simulate.hpp"
#include "kstpp/train.hpp"

namespace kstpp {

using json = nlohmann::json;
namespace fs = std::filesystem;

inline constexpr const char* kDatasetFormat = "kstpp-data-v1";
inline constexpr const char* kCheckpointFormat = "kstpp-v1";

/// Error tied to a file (and optionally a line) for the CLI's error records.
class IoError : public std::runtime_error {
 public:
  IoError(std::string path, const std::string& what, std::size_t line = 0)
      : std::runtime_error(path + (line ? ":" + std::to_string(line) : std::string()) + ": " + what),
        path_(std::move(path)), line_(line) {}
  [[nodiscard]] const std::string& path() const noexcept { return path_; }
  [[nodiscard]] std::size_t line() const noexcept { return line_; }

 private:
  std::string path_;
  std::size_t line_;
};

/// Keys of `j` must all be in `allowed`; names the offending key otherwise.
inline void require_keys(const json& j, std::initializer_list<const char*> allowed, const std::string& where) {
  if (!j.is_object()) throw std::invalid_argument(where + ": expected an object");
  std::set<std::string> ok(allowed.begin(), allowed.end());
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!ok.count(it.key())) throw std::invalid_argument(where + ": unknown key '" + it.key() + "'");
}

// ---------------------------------------------------------------- small codecs

inline json to_json(const Domain& d) {
  return {{"t_max", d.t_max}, {"x_lo", d.x_lo}, {"x_hi", d.x_hi}, {"y_lo", d.y_lo}, {"y_hi", d.y_hi}};
}

inline Domain domain_from_json(const json& j) {
  require_keys(j, {"t_max", "x_lo", "x_hi", "y_lo", "y_hi"}, "domain");
  Domain d{j.at("t_max").get<double>(), j.at("x_lo").get<double>(), j.at("x_hi").get<double>(),
           j.at("y_lo").get<double>(), j.at("y_hi").get<double>()};
  d.validate();
  return d;
}

inline json to_json(const SynthConfig& c) {
  return {{"name", c.name},
          {"lambda0", c.lambda0},
          {"beta", c.beta},
          {"sigma", c.sigma},
          {"rule",
           {{"kind", c.rule.kind == SwitchRule::Kind::Temporal ? "temporal" : "distance"},
            {"threshold", c.rule.threshold},
            {"c_below", c.rule.c_below},
            {"c_above", c.rule.c_above}}},
          {"domain", to_json(c.domain)}};
}

inline SynthConfig synth_from_json(const json& j) {
  require_keys(j, {"name", "lambda0", "beta", "sigma", "rule", "domain"}, "generator");
  SynthConfig c;
  c.name = j.value("name", "custom");
  c.lambda0 = j.at("lambda0").get<double>();
  c.beta = j.at("beta").get<double>();
  c.sigma = j.at("sigma").get<double>();
  const auto& r = j.at("rule");
  require_keys(r, {"kind", "threshold", "c_below", "c_above"}, "generator.rule");
  const auto kind = r.at("kind").get<std::string>();
  if (kind != "temporal" && kind != "distance")
    throw std::invalid_argument("generator.rule: kind must be 'temporal' or 'distance'");
  c.rule = {kind == "temporal" ? SwitchRule::Kind::Temporal : SwitchRule::Kind::Distance,
            r.at("threshold").get<double>(), r.at("c_below").get<double>(), r.at("c_above").get<double>()};
  c.domain = domain_from_json(j.at("domain"));
  c.validate();
  return c;
}

inline std::string family_name(KernelFamily f) { return f == KernelFamily::SquaredExponential ? "se" : "matern52"; }

inline KernelFamily family_from_name(const std::string& s) {
  if (s == "se") return KernelFamily::SquaredExponential;
  if (s == "matern52") return KernelFamily::Matern52;
  throw std::invalid_argument("unknown kernel family '" + s + "' (expected se or matern52)");
}

inline json sequence_to_json(const EventSequence& s) { return {{"t", s.t}, {"x", s.x}, {"y", s.y}}; }

// ---------------------------------------------------------------- datasets

struct DatasetManifest {
  std::string format_version = kDatasetFormat;
  Domain domain;
  std::optional<SynthConfig> generator;
  std::uint64_t seed = 0;
  /// split name -> sequence count
  std::map<std::string, std::size_t> splits;
  /// Import provenance, e.g. the number of tied times nudged apart.
  json notes = json::object();
};

struct Dataset {
  DatasetManifest manifest;
  std::map<std::string, std::vector<EventSequence>> splits;

  [[nodiscard]] const std::vector<EventSequence>& split(const std::string& name) const {
    auto it = splits.find(name);
    if (it == splits.end()) throw std::invalid_argument("dataset has no split '" + name + "'");
    return it->second;
  }
};

inline void write_text(const fs::path& p, const std::string& text) {
  std::ofstream f(p, std::ios::binary);
  if (!f) throw IoError(p.string(), "cannot open for writing");
  f << text;
  if (!f) throw IoError(p.string(), "write failed");
}

inline std::string read_text(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  if (!f) throw IoError(p.string(), "cannot open for reading");
  std::ostringstream os;
  os << f.rdbuf();
  return os.str();
}

inline json read_json(const fs::path& p) {
  try {
    return json::parse(read_text(p));
  } catch (const json::parse_error& e) {
    throw IoError(p.string(), std::string("malformed JSON: ") + e.what());
  }
}

/// Writes manifest.json and one <split>.jsonl per split into `dir`.
inline void save_dataset(const Dataset& d, const fs::path& dir) {
  fs::create_directories(dir);
  json m = {{"format_version", kDatasetFormat}, {"domain", to_json(d.manifest.domain)}, {"seed", d.manifest.seed}};
  m["generator"] = d.manifest.generator ? to_json(*d.manifest.generator) : json(nullptr);
  json splits = json::object();
  for (const auto& [name, seqs] : d.splits) {
    std::string text;
    for (const auto& s : seqs) text += sequence_to_json(s).dump() + "\n";
    write_text(dir / (name + ".jsonl"), text);
    splits[name] = {{"count", seqs.size()}, {"file", name + ".jsonl"}};
  }
  m["splits"] = splits;
  m["notes"] = d.manifest.notes;
  write_text(dir / "manifest.json", m.dump(2) + "\n");
}

inline std::vector<EventSequence> load_records(const fs::path& file, const Domain& domain) {
  std::ifstream f(file, std::ios::binary);
  if (!f) throw IoError(file.string(), "cannot open for reading");
  std::vector<EventSequence> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const json j = json::parse(line);
      require_keys(j, {"t", "x", "y"}, "record");
      EventSequence s;
      s.t = j.at("t").get<std::vector<double>>();
      s.x = j.at("x").get<std::vector<double>>();
      s.y = j.at("y").get<std::vector<double>>();
      s.validate(domain);
      out.push_back(std::move(s));
    } catch (const json::exception& e) {
      throw IoError(file.string(), std::string("bad record: ") + e.what(), lineno);
    } catch (const std::invalid_argument& e) {
      throw IoError(file.string(), e.what(), lineno);
    }
  }
  return out;
}

inline Dataset load_dataset(const fs::path& dir) {
  const fs::path mp = dir / "manifest.json";
  if (!fs::exists(mp)) throw IoError(mp.string(), "dataset manifest not found");
  const json m = read_json(mp);
  Dataset d;
  try {
    require_keys(m, {"format_version", "domain", "generator", "seed", "splits", "notes"}, "manifest");
    const auto fmt = m.at("format_version").get<std::string>();
    if (fmt != kDatasetFormat) throw std::invalid_argument("unsupported dataset format '" + fmt + "'");
    d.manifest.domain = domain_from_json(m.at("domain"));
    if (m.contains("generator") && !m["generator"].is_null()) d.manifest.generator = synth_from_json(m["generator"]);
    d.manifest.seed = m.value("seed", std::uint64_t{0});
    if (m.contains("notes")) d.manifest.notes = m["notes"];
  } catch (const json::exception& e) {
    throw IoError(mp.string(), e.what());
  } catch (const std::invalid_argument& e) {
    throw IoError(mp.string(), e.what());
  }
  for (auto it = m.at("splits").begin(); it != m.at("splits").end(); ++it) {
    const auto count = it.value().at("count").get<std::size_t>();
    const fs::path file = dir / it.value().at("file").get<std::string>();
    auto seqs = load_records(file, d.manifest.domain);
    if (seqs.size() != count)
      throw IoError(file.string(), "manifest lists " + std::to_string(count) + " sequences, file has " +
                                       std::to_string(seqs.size()));
    d.manifest.splits[it.key()] = count;
    d.splits[it.key()] = std::move(seqs);
  }
  return d;
}

inline Dataset dataset_from_synthetic(const SyntheticDataset& s) {
  Dataset d;
  d.manifest.domain = s.config.domain;
  d.manifest.generator = s.config;
  d.manifest.seed = s.seed;
  for (auto [name, seqs] : {std::pair{"train", &s.train}, std::pair{"val", &s.val}, std::pair{"test", &s.test}}) {
    d.splits[name] = *seqs;
    d.manifest.splits[name] = seqs->size();
  }
  return d;
}

// ---------------------------------------------------------------- import

struct ImportStats {
  std::size_t sequences = 0;
  std::size_t events = 0;
  std::size_t nudged = 0;
};

inline constexpr double kTieNudge = 1e-9;

/// Parses one split of the external layout: a JSON array of sequences (or one
/// sequence per line), each sequence an array of [t, x, y, ...] rows; columns
/// after the third are ignored. Times must be nondecreasing; tied (or zero)
/// times are pushed forward by kTieNudge relative steps so they become
/// strictly increasing.
inline std::vector<EventSequence> parse_external(const fs::path& file, ImportStats& stats) {
  const std::string text = read_text(file);
  std::vector<std::pair<json, std::size_t>> seqs;  // (sequence, line or 0)
  try {
    const json whole = json::parse(text);
    if (!whole.is_array()) throw IoError(file.string(), "expected an array of sequences");
    for (const auto& s : whole) seqs.emplace_back(s, 0);
  } catch (const json::parse_error&) {
    std::istringstream is(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(is, line)) {
      ++lineno;
      if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
      try {
        seqs.emplace_back(json::parse(line), lineno);
      } catch (const json::parse_error& e) {
        throw IoError(file.string(), std::string("malformed JSON: ") + e.what(), lineno);
      }
    }
  }
  std::vector<EventSequence> out;
  for (std::size_t i = 0; i < seqs.size(); ++i) {
    const auto& [j, lineno] = seqs[i];
    const std::string where = "sequence " + std::to_string(i);
    if (!j.is_array()) throw IoError(file.string(), where + ": expected an array of events", lineno);
    EventSequence s;
    double raw_prev = 0.0, prev = 0.0;
    for (std::size_t n = 0; n < j.size(); ++n) {
      const auto& ev = j[n];
      if (!ev.is_array() || ev.size() < 3 || !ev[0].is_number() || !ev[1].is_number() || !ev[2].is_number())
        throw IoError(file.string(), where + " event " + std::to_string(n) + ": expected [t, x, y, ...]", lineno);
      const double raw = ev[0].get<double>();
      if (raw < raw_prev)
        throw IoError(file.string(), where + " event " + std::to_string(n) + ": times decrease", lineno);
      double t = raw;
      if (!(t > prev)) {
        t = prev + kTieNudge * std::max(1.0, std::abs(prev));
        ++stats.nudged;
      }
      s.push_back(t, ev[1].get<double>(), ev[2].get<double>());
      raw_prev = raw;
      prev = t;
    }
    stats.events += s.size();
    ++stats.sequences;
    out.push_back(std::move(s));
  }
  return out;
}

struct ImportOptions {
  /// split name -> external file
  std::map<std::string, fs::path> files;
  /// Horizon; unset means the largest time seen.
  std::optional<double> t_max;
  /// Spatial bounds; unset means the bounding box of all events.
  std::optional<std::array<double, 4>> bounds;
};

inline Dataset import_external(const ImportOptions& opt, ImportStats* stats_out = nullptr) {
  if (opt.files.empty()) throw std::invalid_argument("import: no input files");
  ImportStats stats;
  Dataset d;
  for (const auto& [name, path] : opt.files) d.splits[name] = parse_external(path, stats);
  double t_hi = 0.0, xl = INFINITY, xh = -INFINITY, yl = INFINITY, yh = -INFINITY;
  for (const auto& [name, seqs] : d.splits)
    for (const auto& s : seqs)
      for (std::size_t n = 0; n < s.size(); ++n) {
        t_hi = std::max(t_hi, s.t[n]);
        xl = std::min(xl, s.x[n]);
        xh = std::max(xh, s.x[n]);
        yl = std::min(yl, s.y[n]);
        yh = std::max(yh, s.y[n]);
      }
  Domain dom;
  dom.t_max = opt.t_max ? *opt.t_max : t_hi;
  if (opt.bounds) {
    const auto& b = *opt.bounds;
    dom.x_lo = b[0];
    dom.x_hi = b[1];
    dom.y_lo = b[2];
    dom.y_hi = b[3];
  } else {
    if (!(xh > xl) || !(yh > yl)) throw std::invalid_argument("import: events span no area; pass explicit bounds");
    dom.x_lo = xl;
    dom.x_hi = xh;
    dom.y_lo = yl;
    dom.y_hi = yh;
  }
  dom.validate();
  for (const auto& [name, seqs] : d.splits) {
    for (std::size_t i = 0; i < seqs.size(); ++i) {
      try {
        seqs[i].validate(dom);
      } catch (const std::invalid_argument& e) {
        throw IoError(opt.files.at(name).string(), "sequence " + std::to_string(i) + ": " + e.what());
      }
    }
    d.manifest.splits[name] = seqs.size();
  }
  d.manifest.domain = dom;
  d.manifest.notes = {{"source", "import"}, {"nudged_ties", stats.nudged}, {"tie_nudge", kTieNudge}};
  if (stats_out) *stats_out = stats;
  return d;
}

// ---------------------------------------------------------------- run config

struct KstppSettings {
  KstppShape shape;
  FitConfig fit;
  /// Sets the background to softplus^{-1} of the empirical rate before fitting.
  bool empirical_background = false;
};

struct RunConfig {
  std::string model = "kstpp";  // kstpp | poisson | sthp
  std::string dataset;
  std::string output;
  std::string train_split = "train";
  std::string validation_split = "val";
  KstppSettings kstpp;
  SthpFitConfig sthp;
};

inline std::array<std::size_t, 3> size3(const json& j, const char* key) {
  const auto v = j.at(key).get<std::vector<std::size_t>>();
  if (v.size() != 3) throw std::invalid_argument(std::string("kstpp.") + key + ": expected 3 entries");
  return {v[0], v[1], v[2]};
}

/// Parses a RunConfig; unknown keys and bad values are errors.
inline RunConfig run_config_from_json(const json& j) {
  require_keys(j, {"model", "dataset", "output", "train_split", "validation_split", "kstpp", "sthp", "optimizer"},
               "config");
  RunConfig c;
  c.model = j.value("model", c.model);
  if (c.model != "kstpp" && c.model != "poisson" && c.model != "sthp")
    throw std::invalid_argument("config: model must be kstpp, poisson or sthp");
  c.dataset = j.value("dataset", c.dataset);
  c.output = j.value("output", c.output);
  c.train_split = j.value("train_split", c.train_split);
  c.validation_split = j.value("validation_split", c.validation_split);
  auto& sh = c.kstpp.shape;
  if (j.contains("kstpp")) {
    const auto& k = j["kstpp"];
    require_keys(k,
                 {"influence_grid", "background_grid", "influence_kernel", "background_kernel",
                  "lengthscale_fraction", "initial_variance", "quad_orders", "link_beta", "influence_horizon",
                  "relative_jitter", "freeze_hyperparams", "stop_gradient_through_inverse", "init_std",
                  "empirical_background"},
                 "config.kstpp");
    if (k.contains("influence_grid")) sh.influence_grid = size3(k, "influence_grid");
    if (k.contains("background_grid")) {
      const auto v = k["background_grid"].get<std::vector<std::size_t>>();
      if (v.size() != 2) throw std::invalid_argument("kstpp.background_grid: expected 2 entries");
      sh.background_grid = {v[0], v[1]};
    }
    if (k.contains("influence_kernel")) sh.influence_kernel = family_from_name(k["influence_kernel"]);
    if (k.contains("background_kernel")) sh.background_kernel = family_from_name(k["background_kernel"]);
    sh.lengthscale_fraction = k.value("lengthscale_fraction", sh.lengthscale_fraction);
    sh.initial_variance = k.value("initial_variance", sh.initial_variance);
    if (k.contains("quad_orders")) sh.quad_orders = size3(k, "quad_orders");
    sh.link_beta = k.value("link_beta", sh.link_beta);
    if (k.contains("influence_horizon") && !k["influence_horizon"].is_null())
      sh.influence_horizon = k["influence_horizon"].get<double>();
    sh.relative_jitter = k.value("relative_jitter", sh.relative_jitter);
    c.kstpp.fit.freeze_hyperparams = k.value("freeze_hyperparams", false);
    c.kstpp.fit.stop_gradient_through_inverse = k.value("stop_gradient_through_inverse", false);
    c.kstpp.fit.init_std = k.value("init_std", c.kstpp.fit.init_std);
    c.kstpp.empirical_background = k.value("empirical_background", false);
  }
  for (auto q : sh.quad_orders)
    if (q < 2) throw std::invalid_argument("config.kstpp.quad_orders: orders must be at least 2");
  for (auto g : sh.influence_grid)
    if (g < 2) throw std::invalid_argument("config.kstpp.influence_grid: sizes must be at least 2");
  for (auto g : sh.background_grid)
    if (g < 2) throw std::invalid_argument("config.kstpp.background_grid: sizes must be at least 2");
  if (j.contains("sthp")) {
    const auto& s = j["sthp"];
    require_keys(s, {"init_lambda0", "init_c", "init_beta", "init_sigma", "spatial_order"}, "config.sthp");
    c.sthp.init_lambda0 = s.value("init_lambda0", c.sthp.init_lambda0);
    c.sthp.init_c = s.value("init_c", c.sthp.init_c);
    c.sthp.init_beta = s.value("init_beta", c.sthp.init_beta);
    c.sthp.init_sigma = s.value("init_sigma", c.sthp.init_sigma);
    c.sthp.spatial_order = s.value("spatial_order", c.sthp.spatial_order);
  }
  if (j.contains("optimizer")) {
    const auto& o = j["optimizer"];
    require_keys(o, {"lr", "epochs", "batch_size", "patience", "seed", "max_steps"}, "config.optimizer");
    auto& f = c.kstpp.fit;
    f.lr = o.value("lr", f.lr);
    f.epochs = o.value("epochs", f.epochs);
    f.batch_size = o.value("batch_size", f.batch_size);
    f.patience = o.value("patience", f.patience);
    f.seed = o.value("seed", f.seed);
    f.max_steps = o.value("max_steps", f.max_steps);
    c.sthp.lr = f.lr;
    c.sthp.epochs = f.epochs;
    c.sthp.batch_size = f.batch_size;
    c.sthp.seed = f.seed;
  }
  if (!(c.kstpp.fit.lr > 0.0)) throw std::invalid_argument("config.optimizer.lr must be positive");
  if (c.kstpp.fit.batch_size < 1) throw std::invalid_argument("config.optimizer.batch_size must be at least 1");
  return c;
}

inline json to_json(const RunConfig& c) {
  const auto& sh = c.kstpp.shape;
  const auto& f = c.kstpp.fit;
  return {{"model", c.model},
          {"dataset", c.dataset},
          {"output", c.output},
          {"train_split", c.train_split},
          {"validation_split", c.validation_split},
          {"kstpp",
           {{"influence_grid", sh.influence_grid},
            {"background_grid", sh.background_grid},
            {"influence_kernel", family_name(sh.influence_kernel)},
            {"background_kernel", family_name(sh.background_kernel)},
            {"lengthscale_fraction", sh.lengthscale_fraction},
            {"initial_variance", sh.initial_variance},
            {"quad_orders", sh.quad_orders},
            {"link_beta", sh.link_beta},
            {"influence_horizon", sh.influence_horizon ? json(*sh.influence_horizon) : json(nullptr)},
            {"relative_jitter", sh.relative_jitter},
            {"freeze_hyperparams", f.freeze_hyperparams},
            {"stop_gradient_through_inverse", f.stop_gradient_through_inverse},
            {"init_std", f.init_std},
            {"empirical_background", c.kstpp.empirical_background}}},
          {"sthp",
           {{"init_lambda0", c.sthp.init_lambda0},
            {"init_c", c.sthp.init_c},
            {"init_beta", c.sthp.init_beta},
            {"init_sigma", c.sthp.init_sigma},
            {"spatial_order", c.sthp.spatial_order}}},
          {"optimizer",
           {{"lr", f.lr},
            {"epochs", f.epochs},
            {"batch_size", f.batch_size},
            {"patience", f.patience},
            {"seed", f.seed},
            {"max_steps", f.max_steps}}}};
}

/// Paths may be overridden by KSTPP_DATASET and KSTPP_OUTPUT.
inline void apply_env_overrides(RunConfig& c) {
  if (const char* v = std::getenv("KSTPP_DATASET"); v && *v) c.dataset = v;
  if (const char* v = std::getenv("KSTPP_OUTPUT"); v && *v) c.output = v;
}

// ---------------------------------------------------------------- checkpoints

inline json to_json(const GridGP& gp) {
  json axes = json::array(), kernels = json::array();
  for (const auto& a : gp.axes()) axes.push_back({{"name", a.name}, {"lo", a.lo}, {"hi", a.hi}, {"points", a.points}});
  for (const auto& k : gp.kernels())
    kernels.push_back(
        {{"family", family_name(k.family)}, {"log_lengthscale", k.log_lengthscale}, {"log_variance", k.log_variance}});
  const auto v = gp.values().data();
  return {{"axes", axes},
          {"kernels", kernels},
          {"relative_jitter", gp.relative_jitter()},
          {"values", std::vector<double>(v.begin(), v.end())}};
}

inline GridGP grid_gp_from_json(const json& j) {
  require_keys(j, {"axes", "kernels", "relative_jitter", "values"}, "gp");
  std::vector<AxisGrid> axes;
  for (const auto& a : j.at("axes"))
    axes.push_back({a.at("name").get<std::string>(), a.at("points").get<std::vector<double>>(), a.at("lo").get<double>(),
                    a.at("hi").get<double>()});
  std::vector<KernelSpec> ks;
  for (const auto& k : j.at("kernels"))
    ks.push_back({family_from_name(k.at("family").get<std::string>()), k.at("log_lengthscale").get<double>(),
                  k.at("log_variance").get<double>()});
  Shape3 s = axes.size() == 3 ? Shape3{axes[0].size(), axes[1].size(), axes[2].size()}
                              : Shape3{1, axes.at(0).size(), axes.at(1).size()};
  Tensor3 v(s);
  const auto vals = j.at("values").get<std::vector<double>>();
  if (vals.size() != v.size()) throw std::invalid_argument("gp: value count does not match the grid");
  std::copy(vals.begin(), vals.end(), v.storage().begin());
  return GridGP(std::move(axes), std::move(ks), j.at("relative_jitter").get<double>(), std::move(v));
}

inline json to_json(const KstppModel& m) {
  return {{"link_beta", m.link_beta},
          {"quad_orders", m.quad_orders},
          {"influence_horizon", m.influence_horizon ? json(*m.influence_horizon) : json(nullptr)},
          {"background", to_json(m.background)},
          {"influence", to_json(m.influence)}};
}

inline KstppModel kstpp_from_json(const json& j, const Domain& d) {
  require_keys(j, {"link_beta", "quad_orders", "influence_horizon", "background", "influence"}, "kstpp");
  KstppModel m;
  m.domain = d;
  m.link_beta = j.at("link_beta").get<double>();
  const auto q = j.at("quad_orders").get<std::vector<std::size_t>>();
  if (q.size() != 3) throw std::invalid_argument("kstpp.quad_orders: expected 3 entries");
  m.quad_orders = {q[0], q[1], q[2]};
  if (!j.at("influence_horizon").is_null()) m.influence_horizon = j["influence_horizon"].get<double>();
  m.background = grid_gp_from_json(j.at("background"));
  m.influence = grid_gp_from_json(j.at("influence"));
  m.validate();
  return m;
}

struct Checkpoint {
  std::string model_kind;
  Domain domain;
  std::optional<KstppModel> kstpp;
  std::optional<PoissonModel> poisson;
  std::optional<SthpModel> sthp;
  json run_config = nullptr;
  json summary = json::object();

  [[nodiscard]] std::unique_ptr<PointProcess> process() const {
    if (model_kind == "kstpp") return std::make_unique<KstppProcess>(*kstpp);
    if (model_kind == "poisson") return std::make_unique<PoissonProcess>(*poisson);
    if (model_kind == "sthp") return std::make_unique<SthpProcess>(*sthp);
    throw std::invalid_argument("checkpoint: unknown model kind '" + model_kind + "'");
  }
};

inline json to_json(const Checkpoint& c) {
  json j = {{"format", kCheckpointFormat}, {"model_kind", c.model_kind}, {"domain", to_json(c.domain)}};
  if (c.model_kind == "kstpp") j["model"] = to_json(*c.kstpp);
  if (c.model_kind == "poisson") j["model"] = {{"rate", c.poisson->rate}};
  if (c.model_kind == "sthp")
    j["model"] = {{"log_lambda0", c.sthp->log_lambda0},
                  {"log_c", c.sthp->log_c},
                  {"log_beta", c.sthp->log_beta},
                  {"log_sigma", c.sthp->log_sigma},
                  {"no_excitation", c.sthp->no_excitation}};
  j["run_config"] = c.run_config;
  j["summary"] = c.summary;
  return j;
}

inline void save_checkpoint(const Checkpoint& c, const fs::path& p) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  write_text(p, to_json(c).dump(1) + "\n");
}

inline Checkpoint load_checkpoint(const fs::path& p) {
  if (!fs::exists(p)) throw IoError(p.string(), "checkpoint not found");
  const json j = read_json(p);
  try {
    require_keys(j, {"format", "model_kind", "domain", "model", "run_config", "summary"}, "checkpoint");
    if (j.at("format").get<std::string>() != kCheckpointFormat)
      throw std::invalid_argument("unsupported checkpoint format '" + j["format"].get<std::string>() + "'");
    Checkpoint c;
    c.model_kind = j.at("model_kind").get<std::string>();
    c.domain = domain_from_json(j.at("domain"));
    const auto& m = j.at("model");
    if (c.model_kind == "kstpp") {
      c.kstpp = kstpp_from_json(m, c.domain);
    } else if (c.model_kind == "poisson") {
      c.poisson = PoissonModel{m.at("rate").get<double>(), c.domain};
    } else if (c.model_kind == "sthp") {
      SthpModel s;
      s.log_lambda0 = m.at("log_lambda0").get<double>();
      s.log_c = m.at("log_c").get<double>();
      s.log_beta = m.at("log_beta").get<double>();
      s.log_sigma = m.at("log_sigma").get<double>();
      s.no_excitation = m.value("no_excitation", false);
      s.domain = c.domain;
      c.sthp = s;
    } else {
      throw std::invalid_argument("unknown model kind '" + c.model_kind + "'");
    }
    c.run_config = j.value("run_config", json(nullptr));
    c.summary = j.value("summary", json::object());
    return c;
  } catch (const json::exception& e) {
    throw IoError(p.string(), e.what());
  } catch (const std::invalid_argument& e) {
    throw IoError(p.string(), e.what());
  }
}

// ---------------------------------------------------------------- predictions

inline json to_json(const PredictionRecord& r) {
  return {{"sequence", r.sequence}, {"event", r.event},   {"t_prev", r.t_prev}, {"t_true", r.t_true},
          {"t_pred", r.t_pred},     {"x_true", r.x_true}, {"x_pred", r.x_pred}, {"y_true", r.y_true},
          {"y_pred", r.y_pred}};
}

inline std::vector<PredictionRecord> load_predictions(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  if (!f) throw IoError(p.string(), "cannot open for reading");
  std::vector<PredictionRecord> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const json j = json::parse(line);
      out.push_back({j.at("sequence").get<std::size_t>(), j.at("event").get<std::size_t>(), j.at("t_prev").get<double>(),
                     j.at("t_true").get<double>(), j.at("t_pred").get<double>(), j.at("x_true").get<double>(),
                     j.at("x_pred").get<double>(), j.at("y_true").get<double>(), j.at("y_pred").get<double>()});
    } catch (const json::exception& e) {
      throw IoError(p.string(), std::string("bad prediction record: ") + e.what(), lineno);
    }
  }
  return out;
}

}  // namespace kstpp
