#pragma once

// Synthetic flights for the drag model plus IMU / UWB / optical-flow measurement synthesis.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "sribo/error.hpp"
#include "sribo/estimator.hpp"
#include "sribo/model.hpp"

namespace sribo {

enum class TrajectoryKind { kFigureEight, kRandomSmooth, kQuasiStatic, kConstantVelocity };

struct TrajectorySpec {
  TrajectoryKind kind = TrajectoryKind::kFigureEight;
  double duration = 120.0;      ///< s
  double velocity_scale = 1.5;  ///< m/s, peak speed target
  double accel_scale = 3.0;     ///< m/s^2, input bound M_u
  std::uint64_t seed = 1;
  VectorXd anchor = VectorXd::Zero(3);
  VectorXd center;  ///< flight-area center; empty = anchor + (0.3, 0, 0.3)

  void validate() const {
    if (!(duration > 0.0)) throw Error(ErrorCode::kInvalidConfig, "duration must be positive");
    if (!(velocity_scale >= 0.0) || !(accel_scale >= 0.0)) {
      throw Error(ErrorCode::kInvalidConfig, "velocity and acceleration scales must be non-negative");
    }
  }
};

struct NoiseSpec {
  double accel_sigma = 0.2;       ///< m/s^2 per axis
  double range_sigma = 0.10;      ///< m
  double flow_sigma = 0.05;       ///< m/s per axis
  double accel_bias_walk = 0.01;  ///< m/s^2 / sqrt(s)
  std::uint64_t seed = 7;

  static NoiseSpec zero() { return {0.0, 0.0, 0.0, 0.0, 0}; }

  void validate() const {
    if (!(accel_sigma >= 0.0) || !(range_sigma >= 0.0) || !(flow_sigma >= 0.0) || !(accel_bias_walk >= 0.0)) {
      throw Error(ErrorCode::kInvalidConfig, "noise magnitudes must be non-negative");
    }
  }
};

struct FaultWindow {
  Sensor sensor = Sensor::kRange;
  double start = 0.0;
  double end = 0.0;
};

using FaultSchedule = std::vector<FaultWindow>;

/// Ground truth on the output grid; u[k] is held constant over [t_k, t_{k+1}).
struct Trajectory {
  std::vector<double> t;
  std::vector<StateVector> x;
  std::vector<VectorXd> u;
  double dt = 0.0;
};

struct Dataset {
  std::vector<double> t;
  std::vector<VectorXd> accel;
  std::vector<std::optional<double>> range;
  std::vector<std::optional<VectorXd>> flow;
  std::vector<std::optional<VectorXd>> truth_p;
  std::vector<std::optional<VectorXd>> truth_v;
  FaultSchedule faults;
  VectorXd anchor = VectorXd::Zero(3);

  std::size_t size() const { return t.size(); }
  Eigen::Index dim() const { return accel.empty() ? 0 : accel.front().size(); }
};

namespace detail {

/// Desired path with analytic position, velocity and acceleration per axis.
struct Harmonic {
  double amplitude = 0.0;  ///< position amplitude
  double omega = 0.0;
  double phase = 0.0;
};

struct DesiredPath {
  VectorXd center;
  std::vector<std::vector<Harmonic>> axes;
  VectorXd constant_velocity;  ///< non-empty for CONSTANT_VELOCITY

  void eval(double t, VectorXd& p, VectorXd& v, VectorXd& a) const {
    const Eigen::Index d = center.size();
    p = center;
    v = VectorXd::Zero(d);
    a = VectorXd::Zero(d);
    for (Eigen::Index i = 0; i < d; ++i) {
      for (const auto& h : axes[i]) {
        const double arg = h.omega * t + h.phase;
        p[i] += h.amplitude * std::sin(arg);
        v[i] += h.amplitude * h.omega * std::cos(arg);
        a[i] -= h.amplitude * h.omega * h.omega * std::sin(arg);
      }
    }
  }
};

inline DesiredPath make_path(const TrajectorySpec& spec, Eigen::Index d) {
  DesiredPath path;
  if (spec.center.size() == d) {
    path.center = spec.center;
  } else {
    path.center = spec.anchor.size() == d ? spec.anchor : VectorXd::Zero(d);
    // close to the anchor so the line of sight sweeps widely
    VectorXd offset = VectorXd::Constant(d, 0.3);
    offset[1] = 0.0;
    path.center += offset;
  }
  path.axes.assign(d, {});
  const double pi = std::numbers::pi;
  switch (spec.kind) {
    case TrajectoryKind::kFigureEight: {
      const double w = 2.0 * pi / 8.0;
      const double vs = spec.velocity_scale;
      path.axes[0] = {{vs / w, w, 0.0}};
      path.axes[1] = {{0.8 * vs / (2.0 * w), 2.0 * w, 0.0}};
      for (Eigen::Index i = 2; i < d; ++i) path.axes[i] = {{0.8 * vs / (3.0 * w), 3.0 * w, 0.7 * i}};
      break;
    }
    case TrajectoryKind::kRandomSmooth:
    case TrajectoryKind::kQuasiStatic: {
      std::mt19937_64 rng(spec.seed);
      std::uniform_real_distribution<double> freq(0.04, 0.25);  // Hz
      std::uniform_real_distribution<double> phase(0.0, 2.0 * pi);
      std::uniform_real_distribution<double> weight(0.5, 1.0);
      const double peak = spec.kind == TrajectoryKind::kQuasiStatic ? 0.05 : spec.velocity_scale;
      constexpr int kHarmonics = 4;
      for (Eigen::Index i = 0; i < d; ++i) {
        std::vector<Harmonic> hs(kHarmonics);
        double wsum = 0.0;
        for (auto& h : hs) {
          h.omega = 2.0 * pi * freq(rng);
          h.phase = phase(rng);
          h.amplitude = weight(rng);
          wsum += h.amplitude;
        }
        // per-axis speed share: vertical motion smaller than horizontal
        const double axis_peak = (i >= 2 ? 0.3 : 0.8) * peak;
        for (auto& h : hs) h.amplitude = axis_peak * (h.amplitude / wsum) / h.omega;
        path.axes[i] = std::move(hs);
      }
      break;
    }
    case TrajectoryKind::kConstantVelocity: {
      VectorXd dir = VectorXd::Ones(d);
      path.constant_velocity = spec.velocity_scale * dir / dir.norm();
      break;
    }
  }
  return path;
}

}  // namespace detail

/// Ground truth propagated with the discrete drag model at the drag sampling period.
/// Inputs are feedforward along a desired path with light position/velocity feedback,
/// clipped per axis to accel_scale.
inline Trajectory generate(const TrajectorySpec& spec, const DragModel& drag) {
  spec.validate();
  const auto model = discretize(drag);
  const Eigen::Index d = drag.dim();
  const double dt = drag.dt;
  const auto path = detail::make_path(spec, d);
  const auto samples = static_cast<std::size_t>(std::floor(spec.duration / dt + 1e-9)) + 1;

  Trajectory traj;
  traj.dt = dt;
  traj.t.reserve(samples);
  traj.x.reserve(samples);
  traj.u.reserve(samples);

  const VectorXd keep = VectorXd::Ones(d) - dt * drag.mu;  // discrete velocity decay
  VectorXd p, v, a;
  path.eval(0.0, p, v, a);
  VectorXd x(2 * d);
  if (spec.kind == TrajectoryKind::kConstantVelocity) {
    x << path.center, VectorXd::Zero(d);
  } else {
    x << p, v;
  }
  constexpr double kp = 0.5;
  constexpr double kd = 1.0;
  for (std::size_t k = 0; k < samples; ++k) {
    const double t = static_cast<double>(k) * dt;
    VectorXd u(d);
    if (spec.kind == TrajectoryKind::kConstantVelocity) {
      u = drag.mu.cwiseProduct(path.constant_velocity);
    } else {
      VectorXd p1, v1, a1;
      path.eval(t, p, v, a);
      path.eval(t + dt, p1, v1, a1);
      // exact discrete inverse for the velocity update, plus feedback on the drift
      const VectorXd ff = (v1 - keep.cwiseProduct(v)) / dt;
      u = ff + kp * (p - x.head(d)) + kd * (v - x.tail(d));
    }
    u = u.cwiseMax(-spec.accel_scale).cwiseMin(spec.accel_scale);
    traj.t.push_back(t);
    traj.x.push_back(StateVector::from_stacked(x));
    traj.u.push_back(u);
    x = model.A * x + model.B * u;
  }
  return traj;
}

inline bool in_fault(const FaultSchedule& faults, Sensor sensor, double t) {
  for (const auto& f : faults) {
    if (f.sensor == sensor && t >= f.start && t <= f.end) return true;
  }
  return false;
}

/// Replaces faulted measurements with missing markers and records the schedule.
inline void apply_faults(Dataset& ds, const FaultSchedule& faults) {
  for (const auto& f : faults) {
    if (!(f.start < f.end)) throw Error(ErrorCode::kInvalidConfig, "fault window must satisfy start < end");
  }
  for (std::size_t k = 0; k < ds.size(); ++k) {
    if (in_fault(faults, Sensor::kRange, ds.t[k])) ds.range[k].reset();
    if (in_fault(faults, Sensor::kFlow, ds.t[k])) ds.flow[k].reset();
  }
  ds.faults.insert(ds.faults.end(), faults.begin(), faults.end());
}

/// Measurement synthesis: range = |p - anchor| + n_r, accel = u + bias + n_a, flow = v + n_f.
inline Dataset sense(const Trajectory& traj, const NoiseSpec& noise, const VectorXd& anchor,
                     const FaultSchedule& faults = {}) {
  noise.validate();
  if (traj.t.empty()) throw Error(ErrorCode::kEmptyInput, "trajectory is empty");
  const Eigen::Index d = traj.x.front().dim();
  if (anchor.size() != d) throw Error(ErrorCode::kDimensionMismatch, "anchor dimension");

  std::mt19937_64 rng(noise.seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  auto draw = [&](double sigma) {
    VectorXd n(d);
    for (Eigen::Index i = 0; i < d; ++i) n[i] = sigma * gauss(rng);
    return n;
  };

  Dataset ds;
  ds.anchor = anchor;
  const std::size_t n = traj.t.size();
  ds.t = traj.t;
  ds.accel.resize(n);
  ds.range.resize(n);
  ds.flow.resize(n);
  ds.truth_p.resize(n);
  ds.truth_v.resize(n);
  VectorXd bias = VectorXd::Zero(d);
  const double bias_step = noise.accel_bias_walk * std::sqrt(traj.dt);
  for (std::size_t k = 0; k < n; ++k) {
    const auto& x = traj.x[k];
    const double dist = (x.p - anchor).norm();
    if (dist < kDegeneratePositionEpsilon) {
      throw Error(ErrorCode::kAnchorCollision, "trajectory passes through the anchor at t=" + std::to_string(traj.t[k]));
    }
    // fixed draw order keeps datasets bit-identical across runs
    const VectorXd na = draw(noise.accel_sigma);
    const double nr = noise.range_sigma * gauss(rng);
    const VectorXd nf = draw(noise.flow_sigma);
    ds.accel[k] = traj.u[k] + bias + na;
    ds.range[k] = std::max(0.0, dist + nr);
    ds.flow[k] = x.v + nf;
    ds.truth_p[k] = x.p;
    ds.truth_v[k] = x.v;
    bias += draw(bias_step);
  }
  apply_faults(ds, faults);
  return ds;
}

}  // namespace sribo
