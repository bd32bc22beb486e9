// sphcast command line: data generation, statistics, training, inference,
// evaluation, tracking and spectra.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>

#include "CLI11.hpp"
#include "sphcast/config.hpp"
#include "sphcast/dataset.hpp"
#include "sphcast/models.hpp"
#include "sphcast/objectives.hpp"
#include "sphcast/synth.hpp"
#include "sphcast/tracker.hpp"
#include "sphcast/training.hpp"
#include "sphcast/verification.hpp"

using namespace sphcast;

namespace {

// Writes to `path`, or stdout when it is empty or "-".
void emit(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text << std::flush;
    return;
  }
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!out) throw std::runtime_error("cannot write " + path);
}

std::size_t variable_index(const VariableRegistry& reg, const std::string& name) {
  const std::size_t i = reg.index(name);
  if (reg[i].role == Role::AuxTemporal) throw std::invalid_argument(name + " is not stored in datasets");
  return i;
}

// Predicted channels of a stored sample.
Tensor predicted_rows(const Dataset& ds, std::size_t i) {
  const Tensor s = ds.sample(i);
  const std::size_t n = ds.registry.n_predicted() * ds.grid.size();
  return Tensor(Shape{ds.registry.n_predicted(), ds.grid.size()}, std::vector<double>(s.data.begin(), s.data.begin() + n));
}

struct Common {
  int threads = 1;
};

void add_common(CLI::App* sub, Common& c) {
  sub->add_option("--threads", c.threads, "worker threads; every kernel runs sequentially, so results never depend on it")
      ->check(CLI::PositiveNumber);
}

// ---- gen-data ---------------------------------------------------------------

struct GenData {
  std::string out;
  std::uint64_t seed = SynthConfig{}.seed;
  std::size_t n_lat = SynthConfig{}.n_lat;
  std::size_t steps = SynthConfig{}.n_steps;
};

int run_gen_data(const GenData& o) {
  SynthConfig sc;
  sc.seed = o.seed;
  sc.n_lat = o.n_lat;
  sc.n_steps = o.steps;
  std::cout << "seed=" << o.seed << "\n";
  const Dataset ds = synth_generate(sc);
  write_dataset(ds, o.out);
  std::cout << "samples=" << ds.samples() << "\nchannels=" << ds.channels() << "\ngrid=" << ds.grid.n_lat() << "x"
            << ds.grid.n_lon() << "\n";
  return 0;
}

// ---- stats ----------------------------------------------------------------------

struct Stats {
  std::string data, out;
  std::size_t t_max = 4;
};

int run_stats(const Stats& o) {
  Dataset ds = read_dataset(o.data);
  update_registry_stats(ds);
  StatsFile s{ds.registry, compute_sigma_stats(ds, o.t_max)};
  write_stats(s, o.out);
  char buf[160];
  for (std::size_t v = 0; v < ds.registry.size(); ++v) {
    const auto& spec = ds.registry[v];
    if (spec.role == Role::AuxTemporal) continue;
    std::snprintf(buf, sizeof buf, "%s,mean,%.17g\n%s,std,%.17g\n", spec.name.c_str(), spec.mean, spec.name.c_str(), spec.std);
    std::cout << buf;
  }
  for (std::size_t v = 0; v < s.sigma.names.size(); ++v)
    for (std::size_t k = 1; k <= s.sigma.t_max; ++k) {
      std::snprintf(buf, sizeof buf, "%s,sigma%zu,%.17g\n", s.sigma.names[v].c_str(), k, s.sigma.at(v, k));
      std::cout << buf;
    }
  return 0;
}

// ---- train ------------------------------------------------------------------------

struct Train {
  std::string config, data, stats, out_dir;
  std::optional<long> seed;
  std::vector<std::string> sets;
};

int run_train(const Train& o) {
  Config cfg = o.config.empty() ? default_config() : Config::load(o.config);
  for (const auto& kv : o.sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got " + kv);
    cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (!o.data.empty()) cfg.set("dataset", o.data);
  if (!o.stats.empty()) cfg.set("stats", o.stats);
  if (!o.out_dir.empty()) cfg.set("out_dir", o.out_dir);
  if (o.seed) cfg.set("seed", std::to_string(*o.seed));
  if (cfg.str("dataset").empty() || cfg.str("stats").empty()) throw ConfigError("train needs a dataset and a stats file");

  Dataset ds = read_dataset(cfg.str("dataset"));
  const StatsFile st = read_stats(cfg.str("stats"));
  if (st.registry.size() != ds.registry.size()) throw std::invalid_argument("stats registry does not match the dataset");
  for (std::size_t v = 0; v < ds.registry.size(); ++v) {
    if (st.registry[v].name != ds.registry[v].name || st.registry[v].role != ds.registry[v].role) {
      throw std::invalid_argument("stats registry does not match the dataset at " + ds.registry[v].name);
    }
  }
  ds.registry = st.registry;

  std::cout << "seed=" << cfg.integer("seed") << "\n";
  Trainer t(cfg, ds, st.sigma);
  t.set_log_sink([](const LogRecord& r) { std::cout << format_log(r) << "\n"; });
  t.run();
  std::cout << "generator_steps=" << t.generator_steps() << "\n";
  return 0;
}

// ---- infer ------------------------------------------------------------------------

struct Infer {
  std::string checkpoint, data, out;
  std::size_t index = 0;
  std::size_t steps = 4;
};

int run_infer(const Infer& o) {
  const Checkpoint ck = read_checkpoint(o.checkpoint);
  const auto g = load_generator(ck);
  const Dataset src = read_dataset(o.data);
  if (!(src.grid == g->grid())) throw std::invalid_argument("dataset grid differs from the model grid");
  if (src.registry.size() != ck.registry.size()) throw std::invalid_argument("dataset registry differs from the model's");
  for (std::size_t v = 0; v < src.registry.size(); ++v) {
    if (src.registry[v].name != ck.registry[v].name) throw std::invalid_argument("dataset registry differs from the model's");
  }
  if (o.index >= src.samples()) {
    throw std::out_of_range("index " + std::to_string(o.index) + " beyond " + std::to_string(src.samples()) + " samples");
  }
  const WeatherState s0 = state_from_sample(src, o.index);
  const auto states = rollout(*g, s0, o.steps);

  Dataset out;
  out.grid = src.grid;
  out.registry = ck.registry;
  out.timestep = src.timestep;
  const std::size_t np = src.registry.n_predicted(), P = src.grid.size();
  const Tensor first = src.sample(o.index);
  out.append(s0.time, first);
  for (const auto& s : states) {
    Tensor full = first;
    std::copy_n(s.fields.data.begin(), np * P, full.data.begin());
    out.append(s.time, full);
  }
  write_dataset(out, o.out);
  std::cout << "init_time=" << s0.time << "\nsteps=" << o.steps << "\n";
  return 0;
}

// ---- evaluate ------------------------------------------------------------------------

struct Evaluate {
  std::vector<std::string> forecasts;
  std::string truth, out;
  std::size_t clim_begin = 0, clim_end = 0;
};

int run_evaluate(const Evaluate& o) {
  const Dataset truth = read_dataset(o.truth);
  const auto& reg = truth.registry;
  const std::size_t np = reg.n_predicted(), P = truth.grid.size();
  const std::size_t end = o.clim_end ? o.clim_end : truth.samples();
  if (o.clim_begin >= end || end > truth.samples()) throw std::out_of_range("climatology window outside the truth dataset");
  const Tensor c = climatology(truth, o.clim_begin, end);
  const Tensor clim(Shape{np, P}, std::vector<double>(c.data.begin(), c.data.begin() + np * P));

  std::vector<MetricReport> reports;
  for (const auto& path : o.forecasts) {
    const Dataset f = read_dataset(path);
    if (!(f.grid == truth.grid) || f.registry.size() != reg.size()) {
      throw std::invalid_argument(path + ": grid or registry differs from the truth dataset");
    }
    if (f.samples() < 2) throw std::invalid_argument(path + ": needs an initial state and at least one forecast step");
    std::vector<WeatherState> fc, tr;
    for (std::size_t k = 1; k < f.samples(); ++k) {
      const auto it = std::find(truth.times.begin(), truth.times.end(), f.times[k]);
      if (it == truth.times.end()) throw std::invalid_argument(path + ": no truth at valid time " + std::to_string(f.times[k]));
      fc.push_back({f.times[k], predicted_rows(f, k)});
      tr.push_back({*it, predicted_rows(truth, static_cast<std::size_t>(it - truth.times.begin()))});
    }
    reports.push_back(evaluate_run(fc, tr, clim, reg, truth.grid, f.times[0]));
  }
  const MetricReport rep = average_reports(reports);
  std::cout << "initial_conditions=" << rep.initial_conditions << "\n";
  emit(o.out, rep.to_text());
  return 0;
}

// ---- track ---------------------------------------------------------------------------

struct TrackCmd {
  std::string data, out, var = "sp";
  double lat = 0.0, lon = 0.0;
  double radius = 0.0;
};

int run_track(const TrackCmd& o) {
  const Dataset ds = read_dataset(o.data);
  const std::size_t v = variable_index(ds.registry, o.var);
  if (ds.registry[v].unit != "hPa") throw std::invalid_argument(o.var + " is in " + ds.registry[v].unit + ", not hPa");
  // A 4.5 degree circle can miss the diagonal neighbours on coarse grids.
  const double spacing = 180.0 / static_cast<double>(ds.grid.n_lat());
  const double radius = o.radius > 0.0 ? o.radius : std::max(kDefaultSearchRadiusDeg, 1.5 * spacing);
  std::vector<PressureField> fields;
  for (std::size_t i = 0; i < ds.samples(); ++i) {
    const Tensor s = ds.sample(i);
    const auto row = s.row(v);
    fields.push_back({ds.times[i], std::vector<double>(row.begin(), row.end())});
  }
  const Track t = track(ds.grid, fields, o.lat, o.lon, radius);
  std::cout << "radius_deg=" << radius << "\npoints=" << t.points.size() << "\nstop=" << t.reason << "\n";
  emit(o.out, format_track(t));
  return 0;
}

// ---- spectra ---------------------------------------------------------------------------

struct Spectra {
  std::string data, out, var = "u", pgm;
  long index = -1;
  long l_max = -1;
};

int run_spectra(const Spectra& o) {
  const Dataset ds = read_dataset(o.data);
  const std::size_t v = variable_index(ds.registry, o.var);
  if (ds.samples() == 0) throw std::invalid_argument("dataset is empty");
  const std::size_t i = o.index < 0 ? ds.samples() - 1 : static_cast<std::size_t>(o.index);
  if (i >= ds.samples()) throw std::out_of_range("index beyond the dataset");
  const std::size_t l_max = o.l_max < 0 ? ds.grid.n_lat() / 2 - 1 : static_cast<std::size_t>(o.l_max);
  const Tensor s = ds.sample(i);
  const auto e = degree_spectrum(ds.grid, s.row(v), l_max);
  std::string text;
  char buf[64];
  for (std::size_t l = 0; l < e.size(); ++l) {
    std::snprintf(buf, sizeof buf, "%zu,%.17g\n", l, e[l]);
    text += buf;
  }
  emit(o.out, text);
  if (!o.pgm.empty()) write_pgm(o.pgm, ds.grid, s.row(v));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"sphcast: spherical neural weather forecasting at desk scale"};
  app.require_subcommand(1);
  app.failure_message(CLI::FailureMessage::help);
  Common common;

  GenData gd;
  auto* c_gen = app.add_subcommand("gen-data", "write a synthetic dataset");
  c_gen->add_option("--out", gd.out, "output dataset file")->required();
  c_gen->add_option("--seed", gd.seed, "random seed")->capture_default_str();
  c_gen->add_option("--n-lat", gd.n_lat, "latitude rows (even, >= 8)")->capture_default_str();
  c_gen->add_option("--steps", gd.steps, "number of 6-hourly samples")->capture_default_str();
  add_common(c_gen, common);

  Stats st;
  auto* c_stats = app.add_subcommand("stats", "normalization statistics and sigma table of a dataset");
  c_stats->add_option("--data", st.data, "dataset file")->required();
  c_stats->add_option("--out", st.out, "output stats file")->required();
  c_stats->add_option("--t-max", st.t_max, "longest lead in steps")->capture_default_str()->check(CLI::PositiveNumber);
  add_common(c_stats, common);

  Train tr;
  auto* c_train = app.add_subcommand("train", "run the training schedule");
  c_train->add_option("--config", tr.config, "config file (key = value)");
  c_train->add_option("--data", tr.data, "dataset file (overrides `dataset`)");
  c_train->add_option("--stats", tr.stats, "stats file (overrides `stats`)");
  c_train->add_option("--out-dir", tr.out_dir, "output directory (overrides `out_dir`)");
  c_train->add_option("--seed", tr.seed, "random seed (overrides `seed`, default 1)");
  c_train->add_option("--set", tr.sets, "override one config key, key=value");
  add_common(c_train, common);

  Infer inf;
  auto* c_infer = app.add_subcommand("infer", "autoregressive rollout from one dataset sample");
  c_infer->add_option("--checkpoint", inf.checkpoint, "checkpoint file")->required();
  c_infer->add_option("--data", inf.data, "dataset holding the initial condition")->required();
  c_infer->add_option("--index", inf.index, "sample index of the initial condition")->capture_default_str();
  c_infer->add_option("--steps", inf.steps, "rollout steps")->capture_default_str();
  c_infer->add_option("--out", inf.out, "output dataset (initial state, then each step)")->required();
  add_common(c_infer, common);

  Evaluate ev;
  auto* c_eval = app.add_subcommand("evaluate", "rmse, acc and rqe of forecasts against truth");
  c_eval->add_option("--forecast", ev.forecasts, "forecast dataset(s) written by infer; reports are averaged")->required();
  c_eval->add_option("--truth", ev.truth, "truth dataset")->required();
  c_eval->add_option("--clim-begin", ev.clim_begin, "first truth sample of the climatology")->capture_default_str();
  c_eval->add_option("--clim-end", ev.clim_end, "end of the climatology window (0: all samples)")->capture_default_str();
  c_eval->add_option("--out", ev.out, "report file (default stdout)");
  add_common(c_eval, common);

  TrackCmd tk;
  auto* c_track = app.add_subcommand("track", "follow a pressure low through a dataset");
  c_track->add_option("--data", tk.data, "dataset, e.g. written by infer")->required();
  c_track->add_option("--lat", tk.lat, "initial latitude (a grid row center)")->required();
  c_track->add_option("--lon", tk.lon, "initial longitude (a grid column)")->required();
  c_track->add_option("--radius", tk.radius, "search radius in degrees (default max(4.5, 1.5 grid spacings))");
  c_track->add_option("--var", tk.var, "pressure variable")->capture_default_str();
  c_track->add_option("--out", tk.out, "track file (default stdout)");
  add_common(c_track, common);

  Spectra sp;
  auto* c_spec = app.add_subcommand("spectra", "energy per spherical-harmonic degree of one field");
  c_spec->add_option("--data", sp.data, "dataset file")->required();
  c_spec->add_option("--var", sp.var, "variable")->capture_default_str();
  c_spec->add_option("--index", sp.index, "sample index (default last)");
  c_spec->add_option("--l-max", sp.l_max, "highest degree (default n_lat / 2 - 1)");
  c_spec->add_option("--out", sp.out, "output file (default stdout)");
  c_spec->add_option("--pgm", sp.pgm, "also write the field as a PGM image");
  add_common(c_spec, common);

  auto* c_def = app.add_subcommand("defaults", "print every config key with its default");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e, std::cerr, std::cerr);
    return 2;
  }

  try {
    if (common.threads != 1) std::cout << "threads=" << common.threads << " (kernels run sequentially)\n";
    if (*c_gen) return run_gen_data(gd);
    if (*c_stats) return run_stats(st);
    if (*c_train) return run_train(tr);
    if (*c_infer) return run_infer(inf);
    if (*c_eval) return run_evaluate(ev);
    if (*c_track) return run_track(tk);
    if (*c_spec) return run_spectra(sp);
    if (*c_def) {
      std::cout << default_config().dump();
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "sphcast: error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
