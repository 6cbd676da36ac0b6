#pragma once

// Dimension-reduced wriggling estimator.
//
// A window of k_w range intervals carries k_w + 1 states x_0..x_{k_w}. The cost
//   J = sum_{i<k_w} |x_i - x^-_i|^2_P + sum_{i>=1} |x_i - A x_{i-1} - B u_{i-1}|^2_Q
//     + sum_{i>=1} |y_i - C_i x_i|^2_R
// is linear least squares once the output rows C_i are frozen at the priors. The reduced
// variant restricts each state component to a polynomial of order k_t in normalized window
// time, x = T alpha.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <deque>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "sribo/error.hpp"
#include "sribo/model.hpp"
#include "sribo/observability.hpp"

namespace sribo {

enum class SolverKind { kFull, kReduced };
enum class OutputRowSeeding { kPropagatedPrior, kCopyPrevious };
enum class Sensor { kRange, kFlow };

struct EstimatorConfig {
  int k_w = 38;
  int k_t = 4;
  int ell = 1;
  int stride = 1;
  MatrixXd P_inv;
  MatrixXd Q_inv;
  double R_inv_range = 1.0;
  MatrixXd R_inv_flow;
  Mode mode = Mode::kSrio;
  SolverKind solver = SolverKind::kReduced;
  OutputRowSeeding seeding = OutputRowSeeding::kPropagatedPrior;
  bool scale_q_with_ell = false;  ///< divide Q_inv by ell when pre-integrating
  bool range_faulted = false;
  bool flow_faulted = false;

  /// Tuned weights for a 3-D multirotor; window size depends on the mode.
  static EstimatorConfig defaults(Mode mode) {
    EstimatorConfig c;
    c.mode = mode;
    c.k_w = mode == Mode::kSrio ? 38 : 30;
    c.k_t = 4;
    Eigen::Matrix<double, 6, 1> p;
    p << 2, 1, 2, 2, 1, 2;
    c.P_inv = (0.05 * p).asDiagonal();
    Eigen::Matrix<double, 6, 1> q;
    q << 1, 0.5, 1, 1, 0.5, 1;
    c.Q_inv = q.asDiagonal();
    c.R_inv_range = 1.0;
    c.R_inv_flow = MatrixXd::Identity(3, 3);
    return c;
  }

  Eigen::Index measurement_rows(Eigen::Index d) const { return mode == Mode::kSrio ? 1 : 1 + d; }

  double effective_range_weight() const { return range_faulted ? 0.0 : R_inv_range; }

  MatrixXd effective_flow_weight() const {
    if (flow_faulted) return MatrixXd::Zero(R_inv_flow.rows(), R_inv_flow.cols());
    return R_inv_flow;
  }

  MatrixXd effective_process_weight() const {
    return scale_q_with_ell ? MatrixXd(Q_inv / static_cast<double>(ell)) : Q_inv;
  }

  /// Structural checks shared by every solver entry point.
  void validate_weights(Eigen::Index d) const {
    auto fail = [](const std::string& what) { throw Error(ErrorCode::kInvalidConfig, what); };
    if (ell < 1) fail("pre-integration factor must be >= 1");
    if (stride < 1) fail("stride must be >= 1");
    if (k_w < 1) fail("window size must be >= 1");
    if (P_inv.rows() != 2 * d || P_inv.cols() != 2 * d) fail("P_inv must be 2d x 2d");
    if (Q_inv.rows() != 2 * d || Q_inv.cols() != 2 * d) fail("Q_inv must be 2d x 2d");
    if (!(R_inv_range >= 0.0) || !std::isfinite(R_inv_range)) fail("R_inv_range must be finite and >= 0");
    if (mode == Mode::kSrifo && (R_inv_flow.rows() != d || R_inv_flow.cols() != d)) fail("R_inv_flow must be d x d");
    auto spd = [](const MatrixXd& m) {
      if (!m.isApprox(m.transpose(), 1e-12)) return false;
      Eigen::LLT<MatrixXd> llt(m);
      return llt.info() == Eigen::Success;
    };
    if (!spd(P_inv)) fail("P_inv must be symmetric positive definite");
    if (!spd(Q_inv)) fail("Q_inv must be symmetric positive definite");
    if (mode == Mode::kSrifo) {
      if (!R_inv_flow.isApprox(R_inv_flow.transpose(), 1e-12)) fail("R_inv_flow must be symmetric");
      Eigen::SelfAdjointEigenSolver<MatrixXd> es(R_inv_flow, Eigen::EigenvaluesOnly);
      if (es.eigenvalues().minCoeff() < -1e-12) fail("R_inv_flow must be positive semi-definite");
    }
  }

  /// Full contract for streaming use: k_w > 2d and 2 <= k_t <= k_w.
  void validate(Eigen::Index d) const {
    validate_weights(d);
    if (k_w <= 2 * d) throw Error(ErrorCode::kInvalidConfig, "window size must exceed 2d");
    if (k_t < 2 || k_t > k_w) throw Error(ErrorCode::kInvalidConfig, "fitting order must satisfy 2 <= k_t <= k_w");
  }
};

/// Returns a copy with the sensor's inverse covariance zeroed (faulty) or restored.
inline EstimatorConfig set_fault(EstimatorConfig cfg, Sensor sensor, bool faulty) {
  (sensor == Sensor::kRange ? cfg.range_faulted : cfg.flow_faulted) = faulty;
  return cfg;
}

struct MeasurementWindow {
  std::vector<VectorXd> priors;               ///< x^-_0 .. x^-_{k_w-1}
  std::vector<VectorXd> inputs;               ///< k_w * ell accelerations, chronological
  std::vector<std::optional<double>> ranges;  ///< r_1 .. r_{k_w}; nullopt = missing
  std::vector<std::optional<VectorXd>> flows; ///< empty, or one per range
  std::vector<RowVectorXd> output_rows;       ///< C_1 .. C_{k_w}
  double t0 = 0.0;

  int k_w() const { return static_cast<int>(priors.size()); }
};

/// Fills C_1..C_{k_w-1} from the priors and seeds C_{k_w} from the propagated prior
/// (or a copy of C_{k_w-1}).
inline void seed_output_rows(MeasurementWindow& w, const DiscreteModel& model, int ell,
                             OutputRowSeeding seeding = OutputRowSeeding::kPropagatedPrior) {
  const int n = w.k_w();
  if (n < 1 || static_cast<int>(w.inputs.size()) != n * ell) {
    throw Error(ErrorCode::kInconsistentWindow, "cannot seed output rows for an inconsistent window");
  }
  const Eigen::Index d = model.dim();
  w.output_rows.assign(n, RowVectorXd());
  for (int i = 1; i < n; ++i) w.output_rows[i - 1] = output_row(w.priors[i].head(d));
  if (seeding == OutputRowSeeding::kCopyPrevious && n > 1) {
    w.output_rows[n - 1] = w.output_rows[n - 2];
  } else {
    const auto pre = preintegrate(model, ell, std::span(w.inputs).subspan((n - 1) * ell, ell));
    const VectorXd predicted = pre.A_eff * w.priors[n - 1] + pre.b_eff;
    w.output_rows[n - 1] = output_row(predicted.head(d));
  }
}

namespace detail {

inline void check_window(const MeasurementWindow& w, const EstimatorConfig& cfg, const DiscreteModel& model) {
  const Eigen::Index d = model.dim();
  const int n = w.k_w();
  auto fail = [](const std::string& what) { throw Error(ErrorCode::kInconsistentWindow, what); };
  if (n < 1) fail("window holds no priors");
  if (static_cast<int>(w.inputs.size()) != n * cfg.ell) fail("expected k_w * ell inputs");
  if (static_cast<int>(w.ranges.size()) != n) fail("expected k_w ranges");
  if (static_cast<int>(w.output_rows.size()) != n) fail("expected k_w output rows");
  if (cfg.mode == Mode::kSrifo && static_cast<int>(w.flows.size()) != n) fail("SRIFO requires k_w flow entries");
  for (const auto& x : w.priors) {
    if (x.size() != 2 * d) fail("prior state has wrong length");
  }
  for (const auto& u : w.inputs) {
    if (u.size() != d) fail("input sample has wrong length");
  }
  for (const auto& c : w.output_rows) {
    if (c.size() != 2 * d) fail("output row has wrong length");
  }
  for (const auto& r : w.ranges) {
    if (r && !(*r >= 0.0)) fail("ranges must be non-negative");
  }
  for (const auto& f : w.flows) {
    if (f && f->size() != d) fail("flow sample has wrong length");
  }
  cfg.validate_weights(d);
}

/// Per-step measurement model: rows H (m x 2d), weight R (m x m) and value z.
struct MeasurementBlock {
  MatrixXd H;
  MatrixXd R;
  VectorXd z;
};

inline MeasurementBlock measurement_block(const MeasurementWindow& w, const EstimatorConfig& cfg, Eigen::Index d,
                                          int i) {
  const Eigen::Index m = cfg.measurement_rows(d);
  MeasurementBlock b{MatrixXd::Zero(m, 2 * d), MatrixXd::Zero(m, m), VectorXd::Zero(m)};
  b.H.row(0) = w.output_rows[i];
  if (w.ranges[i]) {
    b.R(0, 0) = cfg.effective_range_weight();
    b.z[0] = *w.ranges[i];
  }
  if (cfg.mode == Mode::kSrifo) {
    b.H.block(1, d, d, d).setIdentity();
    if (w.flows[i]) {
      b.R.bottomRightCorner(d, d) = cfg.effective_flow_weight();
      b.z.tail(d) = *w.flows[i];
    }
  }
  return b;
}

/// Ell-step transition of every interval plus the matching input-block matrices.
struct PreintegrationBlocks {
  MatrixXd A_ell;
  std::vector<MatrixXd> input_gains;  ///< A^{ell-j} B for j = 1..ell
};

inline PreintegrationBlocks preintegration_blocks(const DiscreteModel& model, int ell) {
  PreintegrationBlocks out;
  out.A_ell = matrix_power(model.A, ell);
  out.input_gains.resize(ell);
  MatrixXd g = model.B;
  for (int j = ell; j >= 1; --j) {
    out.input_gains[j - 1] = g;
    g = model.A * g;
  }
  return out;
}

}  // namespace detail

/// Dense E = E_x x - E_theta theta with weight W.
struct LinearSystem {
  MatrixXd E_x;
  MatrixXd E_theta;
  VectorXd theta;
  MatrixXd W;
};

inline LinearSystem assemble_system(const MeasurementWindow& w, const EstimatorConfig& cfg,
                                    const DiscreteModel& model) {
  detail::check_window(w, cfg, model);
  const Eigen::Index d = model.dim();
  const Eigen::Index n = w.k_w();
  const Eigen::Index s = 2 * d;
  const Eigen::Index m = cfg.measurement_rows(d);
  const Eigen::Index ell = cfg.ell;
  const Eigen::Index rows = 2 * s * n + m * n;
  const Eigen::Index cols = s * (n + 1);
  const Eigen::Index theta_len = s * n + d * ell * n + m * n;

  const auto pre = detail::preintegration_blocks(model, cfg.ell);
  const MatrixXd Q = cfg.effective_process_weight();

  LinearSystem sys;
  sys.E_x = MatrixXd::Zero(rows, cols);
  sys.E_theta = MatrixXd::Zero(rows, theta_len);
  sys.theta = VectorXd::Zero(theta_len);
  sys.W = MatrixXd::Zero(rows, rows);

  // prior rows: [I_{2d k_w}, 0]
  for (Eigen::Index i = 0; i < n; ++i) {
    sys.E_x.block(s * i, s * i, s, s).setIdentity();
    sys.E_theta.block(s * i, s * i, s, s).setIdentity();
    sys.theta.segment(s * i, s) = w.priors[i];
    sys.W.block(s * i, s * i, s, s) = cfg.P_inv;
  }
  // process rows: [-A^ell, I] bands, inputs through the pre-integrated B blocks
  const Eigen::Index r0 = s * n;
  const Eigen::Index c0 = s * n;
  for (Eigen::Index i = 0; i < n; ++i) {
    sys.E_x.block(r0 + s * i, s * i, s, s) = -pre.A_ell;
    sys.E_x.block(r0 + s * i, s * (i + 1), s, s).setIdentity();
    for (Eigen::Index j = 0; j < ell; ++j) {
      const Eigen::Index col = c0 + d * (ell * i + j);
      sys.E_theta.block(r0 + s * i, col, s, d) = pre.input_gains[j];
      sys.theta.segment(col, d) = w.inputs[ell * i + j];
    }
    sys.W.block(r0 + s * i, r0 + s * i, s, s) = Q;
  }
  // measurement rows, states 1..k_w
  const Eigen::Index r1 = 2 * s * n;
  const Eigen::Index c1 = s * n + d * ell * n;
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto b = detail::measurement_block(w, cfg, d, static_cast<int>(i));
    sys.E_x.block(r1 + m * i, s * (i + 1), m, s) = b.H;
    sys.E_theta.block(r1 + m * i, c1 + m * i, m, m).setIdentity();
    sys.theta.segment(c1 + m * i, m) = b.z;
    sys.W.block(r1 + m * i, r1 + m * i, m, m) = b.R;
  }
  return sys;
}

/// Normal equations W_E x = rhs assembled block by block (never forms E_x), along with the
/// prior information term I_A^T P^-1 I_A that drives error propagation.
struct NormalEquations {
  MatrixXd W_E;
  VectorXd rhs;
  MatrixXd prior_info;
};

inline NormalEquations normal_equations(const MeasurementWindow& w, const EstimatorConfig& cfg,
                                        const DiscreteModel& model) {
  detail::check_window(w, cfg, model);
  const Eigen::Index d = model.dim();
  const Eigen::Index n = w.k_w();
  const Eigen::Index s = 2 * d;
  const Eigen::Index dim = s * (n + 1);
  const auto pre = detail::preintegration_blocks(model, cfg.ell);
  const MatrixXd Q = cfg.effective_process_weight();
  const MatrixXd AtQ = pre.A_ell.transpose() * Q;
  const MatrixXd AtQA = AtQ * pre.A_ell;

  NormalEquations ne;
  ne.W_E = MatrixXd::Zero(dim, dim);
  ne.rhs = VectorXd::Zero(dim);
  ne.prior_info = MatrixXd::Zero(dim, dim);

  for (Eigen::Index i = 0; i < n; ++i) {
    ne.prior_info.block(s * i, s * i, s, s) = cfg.P_inv;
    ne.W_E.block(s * i, s * i, s, s) += cfg.P_inv;
    ne.rhs.segment(s * i, s) += cfg.P_inv * w.priors[i];
  }
  for (Eigen::Index i = 0; i < n; ++i) {
    VectorXd b = VectorXd::Zero(s);
    for (int j = 0; j < cfg.ell; ++j) b += pre.input_gains[j] * w.inputs[cfg.ell * i + j];
    ne.W_E.block(s * i, s * i, s, s) += AtQA;
    ne.W_E.block(s * i, s * (i + 1), s, s) -= AtQ;
    ne.W_E.block(s * (i + 1), s * i, s, s) -= AtQ.transpose();
    ne.W_E.block(s * (i + 1), s * (i + 1), s, s) += Q;
    ne.rhs.segment(s * i, s) -= AtQ * b;
    ne.rhs.segment(s * (i + 1), s) += Q * b;
  }
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto mb = detail::measurement_block(w, cfg, d, static_cast<int>(i));
    const MatrixXd HtR = mb.H.transpose() * mb.R;
    ne.W_E.block(s * (i + 1), s * (i + 1), s, s) += HtR * mb.H;
    ne.rhs.segment(s * (i + 1), s) += HtR * mb.z;
  }
  return ne;
}

/// Polynomial basis T (2d(k_w+1) x 2d(k_t+1)); node i sits at normalized time i / k_w.
inline MatrixXd build_basis(int k_w, int k_t, Eigen::Index d) {
  if (k_w < 1 || k_t < 0 || k_t > k_w) {
    throw Error(ErrorCode::kInvalidConfig, "basis requires 0 <= k_t <= k_w and k_w >= 1");
  }
  const Eigen::Index s = 2 * d;
  const Eigen::Index terms = k_t + 1;
  MatrixXd T = MatrixXd::Zero(s * (k_w + 1), s * terms);
  for (int i = 0; i <= k_w; ++i) {
    const double tau = static_cast<double>(i) / k_w;
    RowVectorXd powers(terms);
    double acc = 1.0;
    for (Eigen::Index k = 0; k < terms; ++k) {
      powers[k] = acc;
      acc *= tau;
    }
    for (Eigen::Index j = 0; j < s; ++j) T.block(s * i + j, terms * j, 1, terms) = powers;
  }
  return T;
}

struct PolyCoefficients {
  VectorXd alpha;  ///< component-major: alpha_j = coefficients of state component j
  double t0 = 0.0;
  double dt_grid = 0.0;
  int k_w = 0;
  int k_t = 0;

  /// Evaluates the fitted 2d-state at absolute time t.
  VectorXd evaluate(double t) const {
    const Eigen::Index terms = k_t + 1;
    const Eigen::Index s = alpha.size() / terms;
    const double tau = (t - t0) / (k_w * dt_grid);
    VectorXd x(s);
    for (Eigen::Index j = 0; j < s; ++j) {
      double acc = 0.0;
      for (Eigen::Index k = terms - 1; k >= 0; --k) acc = acc * tau + alpha[terms * j + k];
      x[j] = acc;
    }
    return x;
  }
};

struct SolveOptions {
  bool diagnostics = false;  ///< eigen-analysis of the normal matrix (costly for full solves)
};

struct SolveReport {
  std::vector<VectorXd> states;  ///< k_w + 1 stacked states
  std::optional<PolyCoefficients> alpha;
  Eigen::Index normal_dim = 0;
  double min_eig = std::numeric_limits<double>::quiet_NaN();
  double max_eig = std::numeric_limits<double>::quiet_NaN();
  double spectral_radius = std::numeric_limits<double>::quiet_NaN();
  double solve_time = 0.0;  ///< seconds, excluding diagnostics
};

namespace detail {

inline constexpr double kPivotTolerance = 1e-12;

inline VectorXd spd_solve(const MatrixXd& W, const VectorXd& rhs) {
  Eigen::LDLT<MatrixXd> ldlt(W);
  if (ldlt.info() != Eigen::Success) throw Error(ErrorCode::kNumericalFailure, "normal matrix factorization failed");
  const VectorXd D = ldlt.vectorD();
  const double scale = std::max(1.0, D.cwiseAbs().maxCoeff());
  if (!(D.minCoeff() > kPivotTolerance * scale)) {
    throw Error(ErrorCode::kNumericalFailure, "normal matrix is not positive definite");
  }
  return ldlt.solve(rhs);
}

/// rho(W^-1 M) for symmetric W > 0, M >= 0, via the generalized symmetric eigenproblem.
inline double propagation_radius(const MatrixXd& M, const MatrixXd& W) {
  Eigen::GeneralizedSelfAdjointEigenSolver<MatrixXd> ges(M, W, Eigen::EigenvaluesOnly);
  if (ges.info() != Eigen::Success) throw Error(ErrorCode::kNumericalFailure, "propagation eigenproblem failed");
  return ges.eigenvalues().cwiseAbs().maxCoeff();
}

inline std::vector<VectorXd> unstack(const VectorXd& x, Eigen::Index s) {
  std::vector<VectorXd> out(x.size() / s);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x.segment(s * i, s);
  return out;
}

inline void fill_diagnostics(SolveReport& r, const MatrixXd& W, const MatrixXd& M) {
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(W, Eigen::EigenvaluesOnly);
  r.min_eig = es.eigenvalues().minCoeff();
  r.max_eig = es.eigenvalues().maxCoeff();
  r.spectral_radius = propagation_radius(M, W);
}

using Clock = std::chrono::steady_clock;

inline double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

}  // namespace detail

/// Unique minimizer over all k_w + 1 states.
inline SolveReport solve_full(const MeasurementWindow& w, const EstimatorConfig& cfg, const DiscreteModel& model,
                              SolveOptions opts = {}) {
  const auto start = detail::Clock::now();
  const auto ne = normal_equations(w, cfg, model);
  const VectorXd x = detail::spd_solve(ne.W_E, ne.rhs);
  SolveReport r;
  r.solve_time = detail::seconds_since(start);
  r.states = detail::unstack(x, 2 * model.dim());
  r.normal_dim = ne.W_E.rows();
  if (opts.diagnostics) detail::fill_diagnostics(r, ne.W_E, ne.prior_info);
  return r;
}

/// Minimizer restricted to x = T alpha; the normal matrix shrinks to 2d(k_t+1).
inline SolveReport solve_reduced(const MeasurementWindow& w, const EstimatorConfig& cfg, const DiscreteModel& model,
                                 SolveOptions opts = {}) {
  const auto start = detail::Clock::now();
  if (cfg.k_t > w.k_w()) throw Error(ErrorCode::kInvalidConfig, "fitting order exceeds window size");
  const auto ne = normal_equations(w, cfg, model);
  const MatrixXd T = build_basis(w.k_w(), cfg.k_t, model.dim());
  const MatrixXd WT_half = ne.W_E * T;
  const MatrixXd W_T = T.transpose() * WT_half;
  const VectorXd rhs = T.transpose() * ne.rhs;
  const VectorXd alpha = detail::spd_solve(W_T, rhs);
  const VectorXd x = T * alpha;

  SolveReport r;
  r.solve_time = detail::seconds_since(start);
  r.states = detail::unstack(x, 2 * model.dim());
  r.normal_dim = W_T.rows();
  r.alpha = PolyCoefficients{alpha, w.t0, cfg.ell * model.dt, w.k_w(), cfg.k_t};
  if (opts.diagnostics) {
    const MatrixXd M = T.transpose() * ne.prior_info * T;
    detail::fill_diagnostics(r, W_T, M);
  }
  return r;
}

inline SolveReport solve(const MeasurementWindow& w, const EstimatorConfig& cfg, const DiscreteModel& model,
                         SolveOptions opts = {}) {
  return cfg.solver == SolverKind::kFull ? solve_full(w, cfg, model, opts) : solve_reduced(w, cfg, model, opts);
}

/// Spectral radius of the prior-error propagation operator of the configured solver.
inline double check_convergence(const EstimatorConfig& cfg, const DiscreteModel& model, const MeasurementWindow& w) {
  const auto ne = normal_equations(w, cfg, model);
  if (cfg.solver == SolverKind::kFull) return detail::propagation_radius(ne.prior_info, ne.W_E);
  const MatrixXd T = build_basis(w.k_w(), cfg.k_t, model.dim());
  return detail::propagation_radius(T.transpose() * ne.prior_info * T, T.transpose() * ne.W_E * T);
}

/// Worst-case Taylor factor M_h of a k_t-th order fit of exp(-mu t) dynamics over [0, t_bar].
/// Uses xi = 0 in exp(-mu xi t), the loosest admissible choice.
inline double fitting_remainder_factor(double mu, double t_bar, int k_t) {
  if (!(mu > 0.0) || !(t_bar > 0.0) || k_t < 0) {
    throw Error(ErrorCode::kInvalidConfig, "remainder factor requires mu > 0, t_bar > 0, k_t >= 0");
  }
  const double t_peak = (k_t + 1) / mu;
  const double t_eval = t_bar <= t_peak ? t_bar : t_peak;
  const double x = mu * t_eval;
  // x^{k+1} / (k+1)! accumulated term by term to avoid overflow
  double h = 1.0;
  for (int j = 1; j <= k_t + 1; ++j) h *= x / j;
  return h;
}

/// Position remainder bound M_h (|v0| t_bar + 0.5 M_u t_bar^2), meters.
inline double remainder_bound(double mu, double t_bar, int k_t, double v0, double input_bound) {
  const double mh = fitting_remainder_factor(mu, t_bar, k_t);
  return mh * (std::abs(v0) * t_bar + 0.5 * std::abs(input_bound) * t_bar * t_bar);
}

// ---------------------------------------------------------------------------------------
// Streaming

/// One range interval: ell acceleration samples followed by the measurements at its end.
struct Tick {
  double t = 0.0;  ///< time of the measurements (end of the interval)
  std::vector<VectorXd> accels;
  std::optional<double> range;
  std::optional<VectorXd> flow;
};

struct Estimate {
  double t = 0.0;
  StateVector x;  ///< world frame
  bool range_missing = false;
  bool flow_missing = false;
  double spectral_radius = std::numeric_limits<double>::quiet_NaN();
  double min_eig = std::numeric_limits<double>::quiet_NaN();
  double solve_time = 0.0;
};

/// Sliding-window estimator. Each solved window hands its posterior states to the next
/// window as priors; states newer than the last solve are dead-reckoned.
class WrigglingEstimator {
 public:
  WrigglingEstimator(EstimatorConfig cfg, const DragModel& drag, const StateVector& x0, double t0 = 0.0,
                     std::optional<VectorXd> anchor = std::nullopt)
      : cfg_(std::move(cfg)), model_(discretize(drag)), d_(drag.dim()) {
    cfg_.validate(d_);
    anchor_ = anchor ? *anchor : VectorXd::Zero(d_);
    if (x0.dim() != d_ || anchor_.size() != d_) throw Error(ErrorCode::kDimensionMismatch, "initial state dimension");
    VectorXd x = x0.stacked();
    x.head(d_) -= anchor_;
    states_.push_back(x);
    state_times_.push_back(t0);
  }

  const EstimatorConfig& config() const { return cfg_; }
  void set_fault(Sensor sensor, bool faulty) { cfg_ = sribo::set_fault(cfg_, sensor, faulty); }
  void set_diagnostics(bool on) { opts_.diagnostics = on; }

  /// Injects an additive deviation into the state estimates the next solve will use as priors
  /// (anchor-frame offsets; index 0 is the oldest retained state).
  void perturb_priors(const std::vector<VectorXd>& deltas) {
    for (std::size_t i = 0; i < deltas.size() && i < states_.size(); ++i) states_[i] += deltas[i];
  }

  /// Current state buffer (anchor frame), oldest first.
  const std::deque<VectorXd>& states() const { return states_; }

  /// Window that the next solve would use if it ran now; empty optional during warm-up.
  std::optional<MeasurementWindow> current_window() const {
    if (static_cast<int>(ticks_.size()) < cfg_.k_w) return std::nullopt;
    return make_window();
  }

  std::optional<Estimate> push(const Tick& tick) {
    if (static_cast<int>(tick.accels.size()) != cfg_.ell) {
      throw Error(ErrorCode::kInconsistentWindow, "tick must carry exactly ell acceleration samples");
    }
    const auto pre = preintegrate(model_, cfg_.ell, tick.accels);
    states_.push_back(pre.A_eff * states_.back() + pre.b_eff);
    state_times_.push_back(tick.t);
    ticks_.push_back(tick);
    while (static_cast<int>(ticks_.size()) > cfg_.k_w) ticks_.pop_front();
    while (static_cast<int>(states_.size()) > cfg_.k_w + 1) {
      states_.pop_front();
      state_times_.pop_front();
    }
    ++since_solve_;
    if (static_cast<int>(ticks_.size()) < cfg_.k_w) return std::nullopt;
    if (solved_once_ && since_solve_ < cfg_.stride) return std::nullopt;

    const auto window = make_window();
    last_report_ = sribo::solve(window, cfg_, model_, opts_);
    for (std::size_t i = 0; i < last_report_.states.size(); ++i) states_[i] = last_report_.states[i];
    solved_once_ = true;
    since_solve_ = 0;

    Estimate e;
    e.t = tick.t;
    VectorXd x = states_.back();
    x.head(d_) += anchor_;
    e.x = StateVector::from_stacked(x);
    e.range_missing = !tick.range || cfg_.range_faulted;
    e.flow_missing = cfg_.mode == Mode::kSrifo && (!tick.flow || cfg_.flow_faulted);
    e.spectral_radius = last_report_.spectral_radius;
    e.min_eig = last_report_.min_eig;
    e.solve_time = last_report_.solve_time;
    return e;
  }

  const SolveReport& last_report() const { return last_report_; }

 private:
  MeasurementWindow make_window() const {
    MeasurementWindow w;
    const int n = cfg_.k_w;
    w.t0 = state_times_.front();
    w.priors.assign(states_.begin(), states_.begin() + n);
    for (const auto& tk : ticks_) {
      for (const auto& a : tk.accels) w.inputs.push_back(a);
      w.ranges.push_back(tk.range);
      w.flows.push_back(tk.flow);
    }
    // C_1..C_{k_w-1} from the previous posteriors; C_{k_w} from the dead-reckoned newest state.
    w.output_rows.resize(n);
    for (int i = 1; i < n; ++i) w.output_rows[i - 1] = output_row(states_[i].head(d_));
    if (cfg_.seeding == OutputRowSeeding::kCopyPrevious && n > 1) {
      w.output_rows[n - 1] = w.output_rows[n - 2];
    } else {
      w.output_rows[n - 1] = output_row(states_[n].head(d_));
    }
    if (cfg_.mode == Mode::kSrio) w.flows.clear();
    return w;
  }

  EstimatorConfig cfg_;
  DiscreteModel model_;
  Eigen::Index d_;
  VectorXd anchor_;
  SolveOptions opts_;
  std::deque<VectorXd> states_;
  std::deque<double> state_times_;
  std::deque<Tick> ticks_;
  SolveReport last_report_;
  int since_solve_ = 0;
  bool solved_once_ = false;
};

}  // namespace sribo
