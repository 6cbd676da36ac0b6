#include <cmath>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "oracles.hpp"
#include "sribo/estimator.hpp"
#include "sribo/simulator.hpp"

using namespace sribo;

namespace {

DragModel indoor() { return DragModel{Eigen::Vector3d(1.2, 2.4, 4.0), 0.04}; }

EstimatorConfig config(Mode mode, int k_w, int k_t = 4, int ell = 1) {
  auto c = EstimatorConfig::defaults(mode);
  c.k_w = k_w;
  c.k_t = k_t;
  c.ell = ell;
  return c;
}

/// Window cut from a noise-free simulated flight with exact priors.
MeasurementWindow truth_window(const Trajectory& tr, std::size_t start, int k_w, Mode mode, std::vector<VectorXd>* truth) {
  MeasurementWindow w;
  w.t0 = tr.t[start];
  for (int i = 0; i <= k_w; ++i) {
    const auto& x = tr.x[start + i];
    if (truth) truth->push_back(x.stacked());
    if (i < k_w) {
      w.priors.push_back(x.stacked());
      w.inputs.push_back(tr.u[start + i]);
    }
    if (i >= 1) {
      w.ranges.push_back(x.p.norm());
      if (mode == Mode::kSrifo) w.flows.push_back(x.v);
      w.output_rows.push_back(output_row(x.p));
    }
  }
  return w;
}

double max_abs_diff(const std::vector<VectorXd>& a, const std::vector<VectorXd>& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, (a[i] - b[i]).cwiseAbs().maxCoeff());
  return m;
}

double min_eig(const MatrixXd& m) {
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(m, Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

double max_eig(const MatrixXd& m) {
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(m, Eigen::EigenvaluesOnly);
  return es.eigenvalues().maxCoeff();
}

}  // namespace

TEST(Config, DefaultsAndValidation) {
  const auto c = EstimatorConfig::defaults(Mode::kSrio);
  EXPECT_EQ(c.k_w, 38);
  EXPECT_EQ(c.k_t, 4);
  EXPECT_EQ(EstimatorConfig::defaults(Mode::kSrifo).k_w, 30);
  EXPECT_NO_THROW(c.validate(3));
  auto bad = c;
  bad.k_w = 6;
  EXPECT_THROW(bad.validate(3), Error);
  bad = c;
  bad.k_t = 1;
  EXPECT_THROW(bad.validate(3), Error);
  bad = c;
  bad.k_t = 39;
  EXPECT_THROW(bad.validate(3), Error);
  bad = c;
  bad.P_inv(0, 0) = -1.0;
  EXPECT_THROW(bad.validate(3), Error);
  bad = c;
  bad.R_inv_range = -1.0;
  EXPECT_THROW(bad.validate(3), Error);
  bad = c;
  bad.ell = 0;
  EXPECT_THROW(bad.validate(3), Error);
}

TEST(Assemble, Dimensions) {
  const auto model = discretize(indoor());
  std::mt19937_64 rng(1);
  for (Mode mode : {Mode::kSrio, Mode::kSrifo}) {
    const auto w = oracle::random_window(rng, model, {.k_w = 4, .mode = mode});
    const auto sys = assemble_system(w, config(mode, 4, 2), model);
    EXPECT_EQ(sys.E_x.rows(), mode == Mode::kSrio ? 52 : 64);
    EXPECT_EQ(sys.E_x.cols(), 30);
    EXPECT_EQ(sys.W.rows(), sys.E_x.rows());
    EXPECT_EQ(sys.E_theta.rows(), sys.E_x.rows());
    EXPECT_EQ(sys.E_theta.cols(), sys.theta.size());
  }
}

TEST(Assemble, ProcessBandsWithoutPreintegration) {
  const auto model = discretize(indoor());
  std::mt19937_64 rng(2);
  const auto w = oracle::random_window(rng, model, {.k_w = 5});
  const auto sys = assemble_system(w, config(Mode::kSrio, 5, 2), model);
  const Eigen::Index s = 6;
  for (Eigen::Index i = 0; i < 5; ++i) {
    const Eigen::Index r = s * 5 + s * i;
    EXPECT_EQ(MatrixXd(sys.E_x.block(r, s * i, s, s)), MatrixXd(-model.A));
    EXPECT_TRUE(sys.E_x.block(r, s * (i + 1), s, s).isIdentity(0.0));
    EXPECT_EQ(MatrixXd(sys.E_theta.block(r, s * 5 + 3 * i, s, 3)), model.B);
  }
}

TEST(Assemble, PreintegratedBlocks) {
  const auto model = discretize(indoor());
  std::mt19937_64 rng(3);
  const auto w = oracle::random_window(rng, model, {.k_w = 4, .ell = 3});
  const auto sys = assemble_system(w, config(Mode::kSrio, 4, 2, 3), model);
  const MatrixXd A3 = model.A * model.A * model.A;
  EXPECT_TRUE(MatrixXd(sys.E_x.block(24, 0, 6, 6)).isApprox(-A3, 1e-15));
  // input gains A^{ell-j} B for j = 1..ell
  EXPECT_TRUE(MatrixXd(sys.E_theta.block(24, 24, 6, 3)).isApprox(model.A * model.A * model.B, 1e-15));
  EXPECT_TRUE(MatrixXd(sys.E_theta.block(24, 27, 6, 3)).isApprox(model.A * model.B, 1e-15));
  EXPECT_TRUE(MatrixXd(sys.E_theta.block(24, 30, 6, 3)).isApprox(model.B, 1e-15));
}

TEST(Assemble, BlockwiseNormalEquationsMatchDense) {
  const auto model = discretize(indoor());
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 30; ++trial) {
    const Mode mode = trial % 2 ? Mode::kSrifo : Mode::kSrio;
    const int ell = 1 + trial % 3;
    const auto w = oracle::random_window(rng, model, {.k_w = 12, .ell = ell, .mode = mode, .missing_prob = 0.2});
    auto cfg = config(mode, 12, 4, ell);
    cfg.scale_q_with_ell = trial % 4 == 0;
    const auto sys = assemble_system(w, cfg, model);
    const auto ne = normal_equations(w, cfg, model);
    const MatrixXd WE = sys.E_x.transpose() * sys.W * sys.E_x;
    const VectorXd rhs = sys.E_x.transpose() * sys.W * sys.E_theta * sys.theta;
    EXPECT_LT((WE - ne.W_E).cwiseAbs().maxCoeff(), 1e-10 * WE.cwiseAbs().maxCoeff());
    EXPECT_LT((rhs - ne.rhs).cwiseAbs().maxCoeff(), 1e-10 * std::max(1.0, rhs.cwiseAbs().maxCoeff()));
  }
}

TEST(Assemble, InconsistentWindow) {
  const auto model = discretize(indoor());
  std::mt19937_64 rng(5);
  auto w = oracle::random_window(rng, model, {.k_w = 8});
  w.ranges.pop_back();
  try {
    assemble_system(w, config(Mode::kSrio, 8), model);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kInconsistentWindow);
  }
  auto v = oracle::random_window(rng, model, {.k_w = 8, .mode = Mode::kSrifo, .with_flows = false});
  EXPECT_THROW(solve_full(v, config(Mode::kSrifo, 8), model), Error);
}

TEST(SolveFull, NoiseFreeWindowRecoversTruth) {
  const auto drag = indoor();
  const auto model = discretize(drag);
  TrajectorySpec spec;
  spec.duration = 30.0;
  for (auto kind : {TrajectoryKind::kFigureEight, TrajectoryKind::kRandomSmooth}) {
    spec.kind = kind;
    const auto tr = generate(spec, drag);
    for (Mode mode : {Mode::kSrio, Mode::kSrifo}) {
      for (std::size_t start : {0u, 101u, 377u}) {
        std::vector<VectorXd> truth;
        const auto w = truth_window(tr, start, 38, mode, &truth);
        const auto r = solve_full(w, config(mode, 38), model);
        EXPECT_LT(max_abs_diff(r.states, truth), 1e-8);
      }
    }
  }
}

TEST(SolveFull, FaultedSensorsStillFinite) {
  const auto model = discretize(indoor());
  std::mt19937_64 rng(6);
  for (Mode mode : {Mode::kSrio, Mode::kSrifo}) {
    const auto w = oracle::random_window(rng, model, {.k_w = 20, .mode = mode});
    auto cfg = set_fault(config(mode, 20), Sensor::kRange, true);
    cfg = set_fault(cfg, Sensor::kFlow, true);
    for (auto solver : {SolverKind::kFull, SolverKind::kReduced}) {
      cfg.solver = solver;
      const auto r = solve(w, cfg, model, {.diagnostics = true});
      for (const auto& x : r.states) EXPECT_TRUE(x.allFinite());
      EXPECT_GT(r.min_eig, 0.0);
    }
  }
  auto cfg = config(Mode::kSrio, 20);
  cfg.R_inv_range = 0.0;
  const auto w = oracle::random_window(rng, model, {.k_w = 20});
  EXPECT_NO_THROW(solve_full(w, cfg, model));
}

TEST(SolveFull, NormalMatricesPositiveDefinite) {
  const auto model = discretize(indoor());
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 100; ++trial) {
    const Mode mode = trial % 2 ? Mode::kSrifo : Mode::kSrio;
    const int ell = std::array{1, 2, 4}[trial % 3];
    auto w = oracle::random_window(rng, model, {.k_w = 20, .ell = ell, .mode = mode, .missing_prob = 0.1});
    auto cfg = config(mode, 20, 4, ell);
    if (trial % 5 == 0) {
      cfg = set_fault(set_fault(cfg, Sensor::kRange, true), Sensor::kFlow, true);
    }
    const auto ne = normal_equations(w, cfg, model);
    EXPECT_GT(min_eig(ne.W_E), 1e-10 * max_eig(ne.W_E));
    const MatrixXd T = build_basis(20, 4, 3);
    const MatrixXd WT = T.transpose() * ne.W_E * T;
    EXPECT_GT(min_eig(WT), 1e-10 * max_eig(WT));
  }
}

TEST(Basis, ShapesAndRank) {
  const MatrixXd sq = build_basis(6, 6, 3);
  EXPECT_EQ(sq.rows(), 42);
  EXPECT_EQ(sq.cols(), 42);
  EXPECT_EQ(Eigen::FullPivLU<MatrixXd>(sq).rank(), 42);

  const MatrixXd c = build_basis(10, 0, 3);
  for (int i = 0; i <= 10; ++i) EXPECT_TRUE(c.block(6 * i, 0, 6, 6).isIdentity(0.0));

  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 30; ++trial) {
    const int k_w = 7 + trial % 40;
    const int k_t = trial % std::min(k_w, 9);
    const MatrixXd T = build_basis(k_w, k_t, 3);
    EXPECT_EQ(T.rows(), 6 * (k_w + 1));
    EXPECT_EQ(T.cols(), 6 * (k_t + 1));
    Eigen::JacobiSVD<MatrixXd> svd(T);
    const auto& sv = svd.singularValues();
    EXPECT_GT(sv[sv.size() - 1], 1e-10 * sv[0]);
  }
  EXPECT_THROW(build_basis(4, 5, 3), Error);
}

TEST(SolveReduced, FullOrderEqualsFull) {
  const auto model = discretize(indoor());
  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 50; ++trial) {
    const Mode mode = trial % 2 ? Mode::kSrifo : Mode::kSrio;
    const auto w = oracle::random_window(rng, model, {.k_w = 6, .mode = mode});
    const auto cfg = config(mode, 6, 6);
    const auto full = solve_full(w, cfg, model);
    const auto red = solve_reduced(w, cfg, model);
    EXPECT_LT(max_abs_diff(full.states, red.states), 1e-8);
  }
}

TEST(SolveReduced, NormalDimension) {
  const auto model = discretize(indoor());
  std::mt19937_64 rng(10);
  const auto w = oracle::random_window(rng, model, {.k_w = 38});
  const auto cfg = config(Mode::kSrio, 38, 4);
  EXPECT_EQ(solve_reduced(w, cfg, model).normal_dim, 30);
  EXPECT_EQ(solve_full(w, cfg, model).normal_dim, 234);
}

TEST(SolveReduced, PolynomialEvaluationMatchesStates) {
  const auto model = discretize(indoor());
  std::mt19937_64 rng(11);
  auto w = oracle::random_window(rng, model, {.k_w = 20, .ell = 2});
  w.t0 = 3.0;
  const auto r = solve_reduced(w, config(Mode::kSrio, 20, 4, 2), model);
  ASSERT_TRUE(r.alpha.has_value());
  for (int i = 0; i <= 20; ++i) {
    const double t = 3.0 + i * 2 * 0.04;
    EXPECT_LT((r.alpha->evaluate(t) - r.states[i]).cwiseAbs().maxCoeff(), 1e-10);
  }
}

TEST(SolveReduced, OptimalityCertificate) {
  const auto drag = indoor();
  const auto model = discretize(drag);
  std::mt19937_64 rng(12);
  std::normal_distribution<double> g(0.0, 1.0);
  for (int trial = 0; trial < 10; ++trial) {
    const Mode mode = trial % 2 ? Mode::kSrifo : Mode::kSrio;
    const auto w = oracle::random_window(rng, model, {.k_w = 16, .mode = mode});
    for (auto solver : {SolverKind::kFull, SolverKind::kReduced}) {
      auto cfg = config(mode, 16, 4);
      cfg.solver = solver;
      const auto r = solve(w, cfg, model);
      const double J = oracle::window_cost(w, cfg, model, r.states);
      const MatrixXd T = build_basis(16, 4, 3);
      for (int k = 0; k < 50; ++k) {
        VectorXd dx;
        if (solver == SolverKind::kFull) {
          dx = VectorXd(6 * 17);
          for (auto& c : dx) c = 1e-2 * g(rng);
        } else {
          VectorXd da(T.cols());
          for (auto& c : da) c = 1e-2 * g(rng);
          dx = T * da;
        }
        const auto perturbed = oracle::split(oracle::stack(r.states) + dx, 6);
        EXPECT_LE(J, oracle::window_cost(w, cfg, model, perturbed) * (1 + 1e-12));
      }
    }
  }
}

TEST(SolveReduced, TruthCostNotBelowMinimizer) {
  const auto drag = indoor();
  const auto model = discretize(drag);
  TrajectorySpec spec;
  spec.duration = 20.0;
  const auto tr = generate(spec, drag);
  std::vector<VectorXd> truth;
  auto w = truth_window(tr, 50, 38, Mode::kSrio, &truth);
  std::mt19937_64 rng(13);
  std::normal_distribution<double> g(0.0, 0.2);
  for (auto& p : w.priors)
    for (auto& c : p) c += g(rng);
  for (auto& r : w.ranges) *r += 0.5 * g(rng);
  const auto cfg = config(Mode::kSrio, 38);
  for (auto solver : {SolverKind::kFull, SolverKind::kReduced}) {
    auto c = cfg;
    c.solver = solver;
    const auto r = solve(w, c, model);
    if (solver == SolverKind::kFull) {
      EXPECT_LE(oracle::window_cost(w, c, model, r.states), oracle::window_cost(w, c, model, truth));
    }
    // the reduced minimizer is optimal over the polynomial subspace only; compare with the
    // least-squares projection of the truth onto that subspace
    const MatrixXd T = build_basis(38, 4, 3);
    const VectorXd a = T.colPivHouseholderQr().solve(oracle::stack(truth));
    const auto projected = oracle::split(T * a, 6);
    if (solver == SolverKind::kReduced) {
      EXPECT_LE(oracle::window_cost(w, c, model, r.states), oracle::window_cost(w, c, model, projected));
    }
  }
}

TEST(SolveReduced, GradientCheck) {
  const auto model = discretize(indoor());
  std::mt19937_64 rng(14);
  std::normal_distribution<double> g(0.0, 1.0);
  for (int trial = 0; trial < 20; ++trial) {
    const Mode mode = trial % 2 ? Mode::kSrifo : Mode::kSrio;
    const auto w = oracle::random_window(rng, model, {.k_w = 20, .mode = mode});
    const auto cfg = config(mode, 20, 4);
    const auto r = solve_reduced(w, cfg, model);
    const VectorXd alpha = r.alpha->alpha;
    const MatrixXd T = build_basis(20, 4, 3);
    const auto ne = normal_equations(w, cfg, model);
    const MatrixXd WT = T.transpose() * ne.W_E * T;
    const VectorXd b = T.transpose() * ne.rhs;
    auto J = [&](const VectorXd& a) { return oracle::window_cost(w, cfg, model, oracle::split(T * a, 6)); };
    auto fd = [&](const VectorXd& a) {
      VectorXd grad(a.size());
      for (Eigen::Index i = 0; i < a.size(); ++i) {
        const double h = 1e-4 * std::max(1.0, std::abs(a[i]));
        VectorXd ap = a, am = a;
        ap[i] += h;
        am[i] -= h;
        grad[i] = (J(ap) - J(am)) / (2 * h);
      }
      return grad;
    };
    // residual of the normal equations vanishes at the minimizer
    const VectorXd res = WT * alpha - b;
    EXPECT_LT(res.norm(), 1e-8 * std::max(1.0, b.norm()));
    // away from the minimizer the analytic gradient 2 (W_T a - T^T rhs) matches finite differences
    VectorXd probe = alpha;
    for (auto& c : probe) c += 0.1 * g(rng);
    const VectorXd analytic = 2.0 * (WT * probe - b);
    const VectorXd numeric = fd(probe);
    EXPECT_LT((analytic - numeric).norm(), 1e-4 * analytic.norm());
    // and at the minimizer the finite-difference gradient is negligible on that scale
    EXPECT_LT(fd(alpha).norm(), 1e-4 * analytic.norm());
  }
}

TEST(SolveReduced, MaeCloseToFullSolver) {
  const auto drag = indoor();
  TrajectorySpec spec;
  spec.duration = 60.0;
  spec.kind = TrajectoryKind::kRandomSmooth;
  const auto tr = generate(spec, drag);
  const auto ds = sense(tr, NoiseSpec{}, VectorXd::Zero(3));
  double mae[2][3] = {};
  for (int s = 0; s < 2; ++s) {
    auto cfg = EstimatorConfig::defaults(Mode::kSrio);
    cfg.solver = s == 0 ? SolverKind::kFull : SolverKind::kReduced;
    WrigglingEstimator est(cfg, drag, tr.x[0], 0.0);
    int n = 0;
    for (std::size_t k = 1; k < ds.size(); ++k) {
      Tick tk{ds.t[k], {ds.accel[k - 1]}, ds.range[k], ds.flow[k]};
      if (auto e = est.push(tk)) {
        for (int a = 0; a < 3; ++a) mae[s][a] += std::abs(e->x.p[a] - tr.x[k].p[a]);
        ++n;
      }
    }
    for (auto& m : mae[s]) m /= n;
  }
  for (int a = 0; a < 3; ++a) {
    EXPECT_LT(mae[1][a], 2.0 * mae[0][a]) << "axis " << a;
  }
}

TEST(Fault, FlowFaultedSrifoEqualsSrio) {
  const auto model = discretize(indoor());
  std::mt19937_64 rng(15);
  for (int trial = 0; trial < 20; ++trial) {
    const auto w = oracle::random_window(rng, model, {.k_w = 30, .mode = Mode::kSrifo, .missing_prob = 0.1});
    auto srio_w = w;
    srio_w.flows.clear();
    for (auto solver : {SolverKind::kFull, SolverKind::kReduced}) {
      auto a = set_fault(config(Mode::kSrifo, 30), Sensor::kFlow, true);
      auto b = config(Mode::kSrio, 30);
      a.solver = b.solver = solver;
      const auto ra = solve(w, a, model);
      const auto rb = solve(srio_w, b, model);
      EXPECT_LT(max_abs_diff(ra.states, rb.states), 1e-12);
    }
  }
}

TEST(Fault, UnfaultRestores) {
  const auto c = EstimatorConfig::defaults(Mode::kSrifo);
  const auto f = set_fault(set_fault(c, Sensor::kRange, true), Sensor::kFlow, true);
  EXPECT_EQ(f.effective_range_weight(), 0.0);
  EXPECT_TRUE(f.effective_flow_weight().isZero(0.0));
  const auto u = set_fault(set_fault(f, Sensor::kRange, false), Sensor::kFlow, false);
  EXPECT_EQ(u.effective_range_weight(), c.R_inv_range);
  EXPECT_EQ(u.effective_flow_weight(), c.R_inv_flow);
  EXPECT_EQ(u.range_faulted, c.range_faulted);
  EXPECT_EQ(u.flow_faulted, c.flow_faulted);
}

TEST(Remainder, Examples) {
  EXPECT_NEAR(fitting_remainder_factor(1.0, 1.0, 4), 1.0 / 120.0, 1e-15);
  EXPECT_LE(fitting_remainder_factor(2.0, 0.5, 4), 0.01);
  double prev = fitting_remainder_factor(1.0, 1.0, 1);
  for (int k = 2; k < 20; ++k) {
    const double h = fitting_remainder_factor(1.0, 1.0, k);
    EXPECT_LT(h, prev);
    prev = h;
  }
  EXPECT_LT(prev, 1e-15);
  // past the peak of h the factor saturates at h((k_t + 1) / mu)
  EXPECT_DOUBLE_EQ(fitting_remainder_factor(1.0, 50.0, 4), fitting_remainder_factor(1.0, 5.0, 4));
  EXPECT_THROW(fitting_remainder_factor(0.0, 1.0, 4), Error);
}

TEST(Remainder, BoundsLeastSquaresFit) {
  // mu = 1.2, t_bar = 1.52, k_t = 4, v0 = 1, M_u = 3
  const double mu = 1.2, tb = 1.52, v0 = 1.0, u = 3.0;
  const int n = 400;
  MatrixXd V(n, 5);
  VectorXd p(n);
  for (int i = 0; i < n; ++i) {
    const double t = tb * i / (n - 1);
    for (int k = 0; k < 5; ++k) V(i, k) = std::pow(t / tb, k);
    p[i] = closed_form_position(mu, 0.0, v0, u, t);
  }
  const VectorXd c = V.colPivHouseholderQr().solve(p);
  const double err = (V * c - p).cwiseAbs().maxCoeff();
  EXPECT_GT(remainder_bound(mu, tb, 4, v0, u), err);
}

TEST(Convergence, GenericWindowRadiusInUnitInterval) {
  const auto model = discretize(indoor());
  std::mt19937_64 rng(16);
  for (int trial = 0; trial < 20; ++trial) {
    for (Mode mode : {Mode::kSrio, Mode::kSrifo}) {
      const auto w = oracle::random_window(rng, model, {.k_w = 38, .mode = mode});
      for (auto solver : {SolverKind::kFull, SolverKind::kReduced}) {
        auto cfg = config(mode, 38);
        cfg.solver = solver;
        const double rho = check_convergence(cfg, model, w);
        EXPECT_GT(rho, 0.0);
        EXPECT_LT(rho, 1.0);
      }
    }
  }
}

TEST(Convergence, VanishingPriorWeight) {
  const auto model = discretize(indoor());
  std::mt19937_64 rng(17);
  const auto w = oracle::random_window(rng, model, {.k_w = 38});
  auto cfg = config(Mode::kSrio, 38);
  double prev = 1.0;
  for (double scale : {1.0, 1e-2, 1e-4, 1e-6}) {
    cfg.P_inv = scale * EstimatorConfig::defaults(Mode::kSrio).P_inv;
    const double rho = check_convergence(cfg, model, w);
    EXPECT_LT(rho, prev);
    prev = rho;
  }
  EXPECT_LT(prev, 1e-2);
}

// Linear response to a prior deviation with the output rows held fixed: the posterior
// deviation measured in the prior-information seminorm shrinks by at least rho.
TEST(Convergence, PriorDeviationContraction) {
  const auto model = discretize(indoor());
  std::mt19937_64 rng(18);
  std::normal_distribution<double> g(0.0, 1.0);
  for (int trial = 0; trial < 20; ++trial) {
    const Mode mode = trial % 2 ? Mode::kSrifo : Mode::kSrio;
    const auto w = oracle::random_window(rng, model, {.k_w = 38, .mode = mode});
    for (auto solver : {SolverKind::kFull, SolverKind::kReduced}) {
      auto cfg = config(mode, 38);
      cfg.solver = solver;
      const double rho = check_convergence(cfg, model, w);
      auto w2 = w;
      VectorXd z = VectorXd::Zero(6 * 39);
      for (int i = 0; i < 38; ++i) {
        VectorXd d(6);
        for (auto& c : d) c = g(rng);
        w2.priors[i] += d;
        z.segment(6 * i, 6) = d;
      }
      const auto a = solve(w, cfg, model);
      const auto b = solve(w2, cfg, model);
      const VectorXd dx = oracle::stack(b.states) - oracle::stack(a.states);
      const MatrixXd M = normal_equations(w, cfg, model).prior_info;
      const double before = std::sqrt(z.dot(M * z));
      const double after = std::sqrt(dx.dot(M * dx));
      EXPECT_LE(after, rho * before * (1 + 1e-9));
    }
  }
}

TEST(Wriggle, StaticTruthIsFixedPoint) {
  const auto drag = indoor();
  const StateVector x0{Eigen::Vector3d(3, -2, 1), VectorXd::Zero(3)};
  for (Mode mode : {Mode::kSrio, Mode::kSrifo}) {
    WrigglingEstimator est(EstimatorConfig::defaults(mode), drag, x0, 0.0);
    int emitted = 0;
    for (int k = 1; k <= 120; ++k) {
      Tick tk{0.04 * k, {VectorXd::Zero(3)}, x0.p.norm(), VectorXd::Zero(3)};
      if (auto e = est.push(tk)) {
        ++emitted;
        EXPECT_LT((e->x.p - x0.p).cwiseAbs().maxCoeff(), 1e-10);
        EXPECT_LT(e->x.v.cwiseAbs().maxCoeff(), 1e-10);
      }
    }
    EXPECT_EQ(emitted, 120 - EstimatorConfig::defaults(mode).k_w + 1);
  }
}

TEST(Wriggle, NoiseFreeRunTracksTruth) {
  const auto drag = indoor();
  TrajectorySpec spec;
  spec.duration = 40.0;
  const auto tr = generate(spec, drag);
  const auto ds = sense(tr, NoiseSpec::zero(), VectorXd::Zero(3));
  for (Mode mode : {Mode::kSrio, Mode::kSrifo}) {
    for (auto solver : {SolverKind::kFull, SolverKind::kReduced}) {
      auto cfg = EstimatorConfig::defaults(mode);
      cfg.solver = solver;
      WrigglingEstimator est(cfg, drag, tr.x[0], 0.0);
      double worst = 0.0;
      for (std::size_t k = 1; k < ds.size(); ++k) {
        if (auto e = est.push({ds.t[k], {ds.accel[k - 1]}, ds.range[k], ds.flow[k]})) {
          worst = std::max(worst, (e->x.p - tr.x[k].p).cwiseAbs().maxCoeff());
        }
      }
      if (solver == SolverKind::kFull) {
        EXPECT_LT(worst, 1e-6);
      } else {
        EXPECT_LT(worst, 0.05);  // polynomial approximation error only
      }
    }
  }
}

TEST(Wriggle, WrongInitConverges) {
  const auto drag = indoor();
  TrajectorySpec spec;
  spec.duration = 40.0;
  const auto tr = generate(spec, drag);
  const auto ds = sense(tr, NoiseSpec{}, VectorXd::Zero(3));
  const double r0 = tr.x[0].p.norm();
  const StateVector wrong{2 * r0 * VectorXd::Ones(3), 2 * r0 * VectorXd::Ones(3)};
  WrigglingEstimator est(EstimatorConfig::defaults(Mode::kSrio), drag, wrong, 0.0);
  std::vector<double> err;
  for (std::size_t k = 1; k < ds.size(); ++k) {
    if (auto e = est.push({ds.t[k], {ds.accel[k - 1]}, ds.range[k], std::nullopt})) {
      err.push_back((e->x.p - tr.x[k].p).norm());
    }
  }
  ASSERT_GT(err.size(), 100u);
  double tail = 0.0;
  for (std::size_t i = err.size() - 100; i < err.size(); ++i) tail = std::max(tail, err[i]);
  EXPECT_LT(tail, 0.5 * err.front());
  EXPECT_LT(tail, 1.0);
}

TEST(Wriggle, SpectralRadiusBelowOneOnEverySolve) {
  const auto drag = indoor();
  TrajectorySpec spec;
  spec.duration = 20.0;
  spec.kind = TrajectoryKind::kRandomSmooth;
  const auto tr = generate(spec, drag);
  const auto ds = sense(tr, NoiseSpec{}, VectorXd::Zero(3));
  WrigglingEstimator est(EstimatorConfig::defaults(Mode::kSrio), drag, tr.x[0], 0.0);
  est.set_diagnostics(true);
  int solves = 0;
  for (std::size_t k = 1; k < ds.size(); ++k) {
    if (auto e = est.push({ds.t[k], {ds.accel[k - 1]}, ds.range[k], std::nullopt})) {
      ++solves;
      EXPECT_LT(e->spectral_radius, 1.0);
      EXPECT_GT(e->min_eig, 0.0);
    }
  }
  EXPECT_GT(solves, 400);
}

TEST(Wriggle, PreintegrationSpansLongerWindow) {
  const auto drag = indoor();
  TrajectorySpec spec;
  spec.duration = 20.0;
  const auto tr = generate(spec, drag);
  const auto ds = sense(tr, NoiseSpec::zero(), VectorXd::Zero(3));
  std::vector<std::pair<double, Eigen::Index>> spans;
  for (int ell : {1, 2, 4}) {
    auto cfg = EstimatorConfig::defaults(Mode::kSrio);
    cfg.ell = ell;
    WrigglingEstimator est(cfg, drag, tr.x[0], 0.0);
    for (std::size_t end = ell; end < ds.size(); end += ell) {
      Tick tk{ds.t[end], {}, ds.range[end], std::nullopt};
      for (std::size_t j = end - ell; j < end; ++j) tk.accels.push_back(ds.accel[j]);
      est.push(tk);
    }
    const auto w = est.current_window();
    ASSERT_TRUE(w.has_value());
    EXPECT_EQ(static_cast<int>(w->inputs.size()), 38 * ell);
    spans.push_back({38 * ell * drag.dt, est.last_report().normal_dim});
  }
  EXPECT_DOUBLE_EQ(spans[1].first, 2 * spans[0].first);
  EXPECT_DOUBLE_EQ(spans[2].first, 4 * spans[0].first);
  EXPECT_EQ(spans[0].second, spans[1].second);
  EXPECT_EQ(spans[0].second, spans[2].second);
}

TEST(Wriggle, CopyPreviousSeedingRuns) {
  const auto drag = indoor();
  TrajectorySpec spec;
  spec.duration = 10.0;
  const auto tr = generate(spec, drag);
  auto cfg = EstimatorConfig::defaults(Mode::kSrio);
  cfg.seeding = OutputRowSeeding::kCopyPrevious;
  cfg.stride = 3;
  WrigglingEstimator est(cfg, drag, tr.x[0], 0.0);
  int emitted = 0;
  for (std::size_t k = 1; k < tr.t.size(); ++k) {
    if (est.push({tr.t[k], {tr.u[k - 1]}, tr.x[k].p.norm(), std::nullopt})) ++emitted;
  }
  // first solve once the window is full, then every third tick
  const int ticks = static_cast<int>(tr.t.size()) - 1;
  EXPECT_EQ(emitted, 1 + (ticks - 38) / 3);
}
