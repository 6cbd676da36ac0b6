#pragma once

// Experiment plumbing: dataset -> streaming estimator -> trace and error summary.

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "sribo/dataio.hpp"
#include "sribo/error.hpp"
#include "sribo/estimator.hpp"
#include "sribo/metrics.hpp"
#include "sribo/simulator.hpp"

namespace sribo {

struct Scenario {
  Mode mode = Mode::kSrio;
  Profile profile = Profile::kIndoor;
  FullConfig config = default_config(Profile::kIndoor);
  std::optional<std::string> dataset_path;  ///< empty = simulate from config.trajectory / config.noise
  FaultSchedule faults;
  std::optional<double> wrong_init;  ///< x0 = factor * r0 * 1 in the anchor frame
  bool diagnostics = false;
  bool velocity_errors = false;  ///< summarize velocity instead of position errors

  EstimatorConfig estimator() const { return config.for_mode(mode); }
};

struct RunResult {
  std::vector<TraceRow> trace;
  std::vector<Estimate> estimates;
  std::optional<ErrorSummary> summary;  ///< present when the dataset carries truth
  std::vector<double> solve_times;
};

/// Groups ell samples per range interval. Tick j ends at sample j * ell.
inline std::vector<Tick> make_ticks(const Dataset& ds, int ell) {
  if (ell < 1) throw Error(ErrorCode::kInvalidConfig, "ell must be >= 1");
  std::vector<Tick> ticks;
  for (std::size_t end = ell; end < ds.size(); end += ell) {
    Tick tk;
    tk.t = ds.t[end];
    tk.accels.assign(ds.accel.begin() + (end - ell), ds.accel.begin() + end);
    tk.range = ds.range[end];
    tk.flow = ds.flow[end];
    ticks.push_back(std::move(tk));
  }
  return ticks;
}

/// Initial state: truth when known, otherwise (or with a wrong-init factor) a guess built
/// from the first available range r0.
inline StateVector initial_state(const Dataset& ds, std::optional<double> wrong_init) {
  const Eigen::Index d = ds.dim();
  if (ds.size() == 0) throw Error(ErrorCode::kEmptyInput, "dataset is empty");
  if (!wrong_init && ds.truth_p[0]) {
    StateVector x{*ds.truth_p[0], ds.truth_v[0] ? *ds.truth_v[0] : VectorXd::Zero(d)};
    return x;
  }
  double r0 = 0.0;
  bool found = false;
  for (const auto& r : ds.range) {
    if (r) {
      r0 = *r;
      found = true;
      break;
    }
  }
  if (!found) throw Error(ErrorCode::kEmptyInput, "no range measurement to initialize from");
  const VectorXd anchor = ds.anchor.size() == d ? ds.anchor : VectorXd::Zero(d);
  if (wrong_init) {
    const VectorXd guess = *wrong_init * r0 * VectorXd::Ones(d);
    return {anchor + guess, guess};
  }
  return {anchor + r0 / std::sqrt(static_cast<double>(d)) * VectorXd::Ones(d), VectorXd::Zero(d)};
}

inline RunResult run_dataset(const Dataset& ds, const EstimatorConfig& cfg, const DragModel& drag,
                             std::optional<double> wrong_init = std::nullopt, bool diagnostics = false,
                             bool velocity_errors = false) {
  if (ds.size() == 0) throw Error(ErrorCode::kEmptyInput, "dataset is empty");
  if (ds.dim() != drag.dim()) throw Error(ErrorCode::kDimensionMismatch, "dataset and drag model dimensions differ");
  const VectorXd anchor = ds.anchor.size() == ds.dim() ? ds.anchor : VectorXd::Zero(ds.dim());
  WrigglingEstimator est(cfg, drag, initial_state(ds, wrong_init), ds.t[0], anchor);
  est.set_diagnostics(diagnostics);

  RunResult out;
  const auto ticks = make_ticks(ds, cfg.ell);
  for (std::size_t j = 0; j < ticks.size(); ++j) {
    const auto e = est.push(ticks[j]);
    if (!e) continue;
    const std::size_t k = (j + 1) * cfg.ell;
    TraceRow row{e->t, e->x.p, e->x.v, ds.truth_p[k], ds.truth_v[k]};
    out.trace.push_back(std::move(row));
    out.solve_times.push_back(e->solve_time);
    out.estimates.push_back(*e);
  }
  const auto errors = trace_errors(out.trace, velocity_errors);
  if (!errors.empty()) out.summary = summarize(errors, out.solve_times);
  return out;
}

/// Simulated dataset for the scenario's trajectory and noise settings.
inline Dataset simulate_dataset(const FullConfig& config, const FaultSchedule& faults = {}) {
  const auto traj = generate(config.trajectory, config.drag);
  return sense(traj, config.noise, config.trajectory.anchor, faults);
}

inline Dataset load_scenario_data(const Scenario& sc) {
  if (sc.dataset_path) {
    Dataset ds = read_dataset(*sc.dataset_path);
    apply_faults(ds, sc.faults);
    return ds;
  }
  return simulate_dataset(sc.config, sc.faults);
}

inline RunResult run_scenario(const Scenario& sc, const Dataset& ds) {
  return run_dataset(ds, sc.estimator(), sc.config.drag, sc.wrong_init, sc.diagnostics, sc.velocity_errors);
}

inline RunResult run_scenario(const Scenario& sc) { return run_scenario(sc, load_scenario_data(sc)); }

// ---------------------------------------------------------------------------------------

struct SweepResult {
  std::vector<SweepRow> rows;
  std::vector<std::string> warnings;  ///< skipped pairs
};

/// Runs every valid (k_t, k_w) pair on one dataset.
inline SweepResult sweep(const std::vector<int>& kts, const std::vector<int>& kws, const Scenario& sc) {
  SweepResult out;
  if (kts.empty() || kws.empty()) return out;
  const Dataset ds = load_scenario_data(sc);
  std::map<SweepKey, ErrorSummary> results;
  for (int kt : kts) {
    for (int kw : kws) {
      EstimatorConfig cfg = sc.estimator();
      cfg.k_t = kt;
      cfg.k_w = kw;
      try {
        cfg.validate(ds.dim());
      } catch (const Error& e) {
        out.warnings.push_back("skipping k_t=" + std::to_string(kt) + " k_w=" + std::to_string(kw) + ": " + e.what());
        continue;
      }
      const auto r = run_dataset(ds, cfg, sc.config.drag, sc.wrong_init, false, sc.velocity_errors);
      if (!r.summary) throw Error(ErrorCode::kEmptyInput, "sweep needs ground truth");
      results[{kt, kw}] = *r.summary;
    }
  }
  out.rows = sweep_table(results);
  return out;
}

struct AblationResult {
  ErrorSummary with_drag;
  ErrorSummary without_drag;
  double ratio = 1.0;  ///< mean over axes of MAE(mu = 0) / MAE(mu)
  int axes_worse = 0;  ///< axes where MAE(mu = 0) > MAE(mu)
};

inline AblationResult compare_summaries(const ErrorSummary& with_drag, const ErrorSummary& without_drag) {
  AblationResult r{with_drag, without_drag, 0.0, 0};
  const std::size_t n = with_drag.mae.size();
  for (std::size_t i = 0; i < n; ++i) {
    r.ratio += without_drag.mae[i] / with_drag.mae[i];
    if (without_drag.mae[i] > with_drag.mae[i]) ++r.axes_worse;
  }
  r.ratio /= static_cast<double>(n);
  return r;
}

/// Same data, estimator run with the configured mu and with mu = 0.
inline AblationResult ablate_drag(const Scenario& sc, const Dataset& ds) {
  const auto cfg = sc.estimator();
  DragModel no_drag = sc.config.drag;
  no_drag.mu.setZero();
  const auto a = run_dataset(ds, cfg, sc.config.drag, sc.wrong_init, false, sc.velocity_errors);
  const auto b = run_dataset(ds, cfg, no_drag, sc.wrong_init, false, sc.velocity_errors);
  if (!a.summary || !b.summary) throw Error(ErrorCode::kEmptyInput, "ablation needs ground truth");
  return compare_summaries(*a.summary, *b.summary);
}

inline AblationResult ablate_drag(const Scenario& sc) { return ablate_drag(sc, load_scenario_data(sc)); }

// ---------------------------------------------------------------------------------------

struct TimingResult {
  int k_t = 0;
  int k_w = 0;
  double median = 0.0;  ///< s
  double mean = 0.0;    ///< s
  double p99 = 0.0;     ///< s
  std::size_t samples = 0;
};

/// Sequential estimator-only timing: windows are taken from a streaming run and each is
/// re-solved `repeats` times; the first `warmup` solves are discarded.
inline TimingResult benchmark_solver(const Dataset& ds, EstimatorConfig cfg, const DragModel& drag,
                                     std::size_t solves = 200, std::size_t warmup = 20) {
  cfg.validate(ds.dim());
  const auto model = discretize(drag);
  const VectorXd anchor = ds.anchor.size() == ds.dim() ? ds.anchor : VectorXd::Zero(ds.dim());
  WrigglingEstimator est(cfg, drag, initial_state(ds, std::nullopt), ds.t[0], anchor);
  std::vector<MeasurementWindow> windows;
  for (const auto& tk : make_ticks(ds, cfg.ell)) {
    if (est.push(tk)) {
      if (auto w = est.current_window()) windows.push_back(std::move(*w));
    }
    if (windows.size() >= 64) break;
  }
  if (windows.empty()) throw Error(ErrorCode::kEmptyInput, "dataset too short for one window");

  std::vector<double> times;
  double sink = 0.0;
  for (std::size_t i = 0; i < solves + warmup; ++i) {
    const auto r = solve(windows[i % windows.size()], cfg, model);
    sink += r.states.back()[0];
    if (i >= warmup) times.push_back(r.solve_time);
  }
  if (!std::isfinite(sink)) throw Error(ErrorCode::kNumericalFailure, "benchmark produced non-finite states");

  TimingResult t;
  t.k_t = cfg.k_t;
  t.k_w = cfg.k_w;
  t.samples = times.size();
  t.median = percentile(times, 0.5);
  t.p99 = percentile(times, 0.99);
  for (double x : times) t.mean += x;
  t.mean /= static_cast<double>(times.size());
  return t;
}

}  // namespace sribo
