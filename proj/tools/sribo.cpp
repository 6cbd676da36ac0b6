#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "sribo/observability.hpp"
#include "sribo/runner.hpp"

using namespace sribo;
using sribo::detail::format_double;

namespace {

enum Exit { kOk = 0, kUsage = 1, kConfig = 2, kData = 3, kSolver = 4 };

int exit_code(ErrorCode c) {
  switch (c) {
    case ErrorCode::kInvalidDrag:
    case ErrorCode::kInvalidConfig:
    case ErrorCode::kUnknownKey:
    case ErrorCode::kTypeError:
      return kConfig;
    case ErrorCode::kNumericalFailure:
    case ErrorCode::kDegeneratePosition:
      return kSolver;
    default:
      return kData;
  }
}

// errors raised while building the scenario are config errors whatever their code
struct ConfigStageError {
  std::string what;
};

struct Options {
  std::string mode = "srio";
  std::string profile = "indoor";
  std::string config;
  std::string dataset;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::optional<int> kt, kw, stride, ell;
  std::vector<std::string> faults;
  std::optional<double> wrong_init;
  std::optional<double> duration;
  bool velocity_errors = false;
};

void add_common(CLI::App* app, Options& o) {
  app->add_option("--mode", o.mode, "srio | srifo")->check(CLI::IsMember({"srio", "srifo", "SRIO", "SRIFO"}));
  app->add_option("--profile", o.profile, "indoor | outdoor")->check(CLI::IsMember({"indoor", "outdoor", "INDOOR", "OUTDOOR"}));
  app->add_option("--config", o.config, "JSON config overrides");
  app->add_option("--dataset", o.dataset, "dataset CSV (default: simulate)");
  app->add_option("--seed", o.seed, "trajectory and noise seed");
  app->add_option("--duration", o.duration, "simulated duration in s");
  app->add_option("--fault", o.faults, "sensor:start:end, sensor = range | flow (repeatable)");
}

void add_estimator(CLI::App* app, Options& o) {
  app->add_option("--stride", o.stride, "solve every n-th interval");
  app->add_option("--ell", o.ell, "accelerometer samples per range interval");
  app->add_option("--wrong-init", o.wrong_init, "start from x0 = factor * r0 * 1");
  app->add_flag("--velocity-errors", o.velocity_errors, "summarize velocity instead of position");
}

FaultWindow parse_fault(const std::string& s) {
  std::stringstream ss(s);
  std::string sensor, a, b;
  if (!std::getline(ss, sensor, ':') || !std::getline(ss, a, ':') || !std::getline(ss, b) || ss.peek() != EOF) {
    throw ConfigStageError{"bad --fault '" + s + "', expected sensor:start:end"};
  }
  FaultWindow f;
  if (sensor == "range" || sensor == "uwb") f.sensor = Sensor::kRange;
  else if (sensor == "flow") f.sensor = Sensor::kFlow;
  else throw ConfigStageError{"unknown fault sensor '" + sensor + "'"};
  try {
    std::size_t n1 = 0, n2 = 0;
    f.start = std::stod(a, &n1);
    f.end = std::stod(b, &n2);
    if (n1 != a.size() || n2 != b.size()) throw std::invalid_argument("trailing");
  } catch (const std::exception&) {
    throw ConfigStageError{"bad fault times in '" + s + "'"};
  }
  if (!(f.end > f.start)) throw ConfigStageError{"fault end must exceed start in '" + s + "'"};
  return f;
}

Scenario build(const Options& o) {
  try {
    Scenario sc;
    sc.mode = parse_mode(o.mode);
    sc.profile = parse_profile(o.profile);
    sc.config = load_config(o.config, sc.profile);
    if (o.seed) {
      sc.config.trajectory.seed = *o.seed;
      sc.config.noise.seed = *o.seed;
    }
    if (o.duration) sc.config.trajectory.duration = *o.duration;
    if (o.kt) sc.config.estimator.k_t = *o.kt;
    if (o.kw) sc.config.k_w_override = *o.kw;
    if (o.stride) sc.config.estimator.stride = *o.stride;
    if (o.ell) sc.config.estimator.ell = *o.ell;
    sc.config.trajectory.validate();
    for (const auto& f : o.faults) sc.faults.push_back(parse_fault(f));
    if (!o.dataset.empty()) sc.dataset_path = o.dataset;
    sc.wrong_init = o.wrong_init;
    sc.velocity_errors = o.velocity_errors;
    sc.estimator().validate(3);
    return sc;
  } catch (const Error& e) {
    throw ConfigStageError{e.what()};
  }
}

void print_summary(const char* label, const ErrorSummary& s) {
  std::printf("%s  n=%zu\n", label, s.count);
  std::printf("  %-5s %10s %10s %10s\n", "", "x", "y", "z");
  auto row = [](const char* name, const std::vector<double>& v) {
    std::printf("  %-5s", name);
    for (double x : v) std::printf(" %10.4f", x);
    std::printf("\n");
  };
  row("MAE", s.mae);
  row("RMSE", s.rmse);
  row("SAE", s.sae);
  std::printf("  solve time mean %.3f ms, p99 %.3f ms\n", 1e3 * s.time_mean, 1e3 * s.time_p99);
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream f(path);
  if (!f) throw Error(ErrorCode::kIoError, "cannot open '" + path + "' for writing");
  f << text;
  if (!f) throw Error(ErrorCode::kIoError, "write to '" + path + "' failed");
}

int cmd_run(const Options& o) {
  const auto sc = build(o);
  const auto r = run_scenario(sc);
  if (!o.out.empty()) write_trace(o.out, r.trace);
  std::printf("estimates %zu\n", r.trace.size());
  if (r.summary) print_summary(sc.mode == Mode::kSrio ? "SRIO" : "SRIFO", *r.summary);
  else std::printf("no ground truth; trace only\n");
  return kOk;
}

int cmd_sweep(const Options& o, const std::vector<int>& kts, const std::vector<int>& kws, const std::string& timing_out) {
  const auto sc = build(o);
  const auto r = sweep(kts, kws, sc);
  for (const auto& w : r.warnings) std::fprintf(stderr, "warning: %s\n", w.c_str());
  std::printf("%s", sweep_table_text(r.rows).c_str());
  if (!o.out.empty()) write_text(o.out, sweep_table_csv(r.rows));
  if (!timing_out.empty()) {
    const Dataset ds = load_scenario_data(sc);
    std::string csv = "kt,kw,median_s,mean_s,p99_s,samples\n";
    for (const auto& row : r.rows) {
      auto cfg = sc.estimator();
      cfg.k_t = row.key.k_t;
      cfg.k_w = row.key.k_w;
      const auto t = benchmark_solver(ds, cfg, sc.config.drag);
      csv += std::to_string(t.k_t) + "," + std::to_string(t.k_w) + "," + format_double(t.median) + "," +
             format_double(t.mean) + "," + format_double(t.p99) + "," + std::to_string(t.samples) + "\n";
    }
    write_text(timing_out, csv);
  }
  return kOk;
}

int cmd_ablate(const Options& o) {
  const auto sc = build(o);
  const auto r = ablate_drag(sc);
  print_summary("with drag", r.with_drag);
  print_summary("mu = 0", r.without_drag);
  std::printf("mean MAE ratio (mu = 0 / mu) %.4f, axes worse %d\n", r.ratio, r.axes_worse);
  if (!o.out.empty()) {
    std::string csv = "variant,mae_x,mae_y,mae_z,rmse_x,rmse_y,rmse_z,sae_x,sae_y,sae_z\n";
    auto line = [&](const char* name, const ErrorSummary& s) {
      csv += name;
      for (const auto* v : {&s.mae, &s.rmse, &s.sae})
        for (double x : *v) csv += "," + format_double(x);
      csv += "\n";
    };
    line("with_drag", r.with_drag);
    line("no_drag", r.without_drag);
    write_text(o.out, csv);
  }
  return kOk;
}

int cmd_simulate(const Options& o) {
  const auto sc = build(o);
  if (o.out.empty()) throw ConfigStageError{"simulate needs --out"};
  const auto ds = simulate_dataset(sc.config, sc.faults);
  write_dataset(o.out, ds);
  std::printf("wrote %zu samples to %s\n", ds.size(), o.out.c_str());
  return kOk;
}

int cmd_observability(const Options& o) {
  const auto sc = build(o);
  std::vector<TimelineSample> samples;
  if (sc.dataset_path) {
    // recorded data: measured accelerations stand in for the input
    const auto ds = load_scenario_data(sc);
    const VectorXd anchor = ds.anchor.size() == ds.dim() ? ds.anchor : VectorXd::Zero(ds.dim());
    for (std::size_t k = 0; k < ds.size(); ++k) {
      if (!ds.truth_p[k] || !ds.truth_v[k]) continue;
      samples.push_back({ds.t[k], StateVector{*ds.truth_p[k] - anchor, *ds.truth_v[k]}, ds.accel[k]});
    }
  } else {
    const auto tr = generate(sc.config.trajectory, sc.config.drag);
    for (std::size_t k = 0; k < tr.t.size(); ++k) {
      samples.push_back({tr.t[k], StateVector{tr.x[k].p - sc.config.trajectory.anchor, tr.x[k].v}, tr.u[k]});
    }
  }
  if (samples.empty()) throw Error(ErrorCode::kEmptyInput, "observability timeline needs true position and velocity");
  const auto tl = observability_timeline(samples, sc.config.drag.mu, sc.mode, sc.config.condition_threshold);
  std::string csv = "t,rank,condition_number,flagged\n";
  int flagged = 0;
  double worst = 0.0;
  for (const auto& e : tl) {
    csv += format_double(e.t) + "," + std::to_string(e.report.numerical_rank) + "," +
           format_double(e.report.condition_number) + "," + (e.flagged ? "1" : "0") + "\n";
    flagged += e.flagged;
    worst = std::max(worst, e.report.condition_number);
  }
  if (!o.out.empty()) write_text(o.out, csv);
  std::printf("samples %zu, flagged %d, worst condition number %.3g\n", tl.size(), flagged, worst);
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Single-range inertial odometry toolkit"};
  app.require_subcommand(1);
  Options o;
  std::vector<int> kts, kws;
  std::string timing_out;

  auto* run = app.add_subcommand("run", "run the estimator on one scenario");
  add_common(run, o);
  add_estimator(run, o);
  run->add_option("--kt", o.kt, "fitting order");
  run->add_option("--kw", o.kw, "window size");
  run->add_option("--out", o.out, "trace CSV");

  auto* sw = app.add_subcommand("sweep", "error and timing over (kt, kw) pairs");
  add_common(sw, o);
  add_estimator(sw, o);
  sw->add_option("--kt", kts, "fitting orders, comma separated")->delimiter(',');
  sw->add_option("--kw", kws, "window sizes, comma separated")->delimiter(',');
  sw->add_option("--out", o.out, "sweep table CSV");
  sw->add_option("--timing-out", timing_out, "estimator-only timing CSV (median of 200 solves per pair)");

  auto* ab = app.add_subcommand("ablate-drag", "same data with the configured drag and with mu = 0");
  add_common(ab, o);
  add_estimator(ab, o);
  ab->add_option("--kt", o.kt, "fitting order");
  ab->add_option("--kw", o.kw, "window size");
  ab->add_option("--out", o.out, "summary CSV");

  auto* sim = app.add_subcommand("simulate", "write a synthetic dataset");
  add_common(sim, o);
  sim->add_option("--out", o.out, "dataset CSV")->required();

  auto* obs = app.add_subcommand("analyze-observability", "rank and conditioning along the true trajectory");
  add_common(obs, o);
  obs->add_option("--out", o.out, "timeline CSV");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsage;
  }

  try {
    if (run->parsed()) return cmd_run(o);
    if (sw->parsed()) return cmd_sweep(o, kts, kws, timing_out);
    if (ab->parsed()) return cmd_ablate(o);
    if (sim->parsed()) return cmd_simulate(o);
    if (obs->parsed()) return cmd_observability(o);
  } catch (const ConfigStageError& e) {
    std::fprintf(stderr, "error: %s\n", e.what.c_str());
    return kConfig;
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return exit_code(e.code());
  }
  return kUsage;
}
