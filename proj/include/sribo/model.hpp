#pragma once

// Drag-augmented point-mass model of a multirotor:
//   p' = v,  v' = u - mu v,  y = |p|  (anchor at the origin)
// u is the gravity-compensated acceleration expressed in the world frame.

#include <cmath>
#include <span>
#include <string>

#include <Eigen/Dense>

#include "sribo/error.hpp"

namespace sribo {

using Eigen::MatrixXd;
using Eigen::RowVectorXd;
using Eigen::VectorXd;

/// Robots co-located with the anchor within this distance have no defined bearing.
inline constexpr double kDegeneratePositionEpsilon = 1e-6;

/// Stacked x = [p; v] in d dimensions.
struct StateVector {
  VectorXd p;
  VectorXd v;

  StateVector() = default;
  StateVector(VectorXd position, VectorXd velocity) : p(std::move(position)), v(std::move(velocity)) {
    if (p.size() != v.size()) {
      throw Error(ErrorCode::kDimensionMismatch, "position and velocity lengths differ");
    }
  }

  static StateVector zero(Eigen::Index d) { return {VectorXd::Zero(d), VectorXd::Zero(d)}; }

  static StateVector from_stacked(const VectorXd& x) {
    if (x.size() % 2 != 0) {
      throw Error(ErrorCode::kDimensionMismatch, "stacked state must have even length");
    }
    const Eigen::Index d = x.size() / 2;
    return {x.head(d), x.tail(d)};
  }

  Eigen::Index dim() const { return p.size(); }

  VectorXd stacked() const {
    VectorXd x(2 * dim());
    x << p, v;
    return x;
  }

  bool finite() const { return p.allFinite() && v.allFinite(); }
};

struct DragModel {
  VectorXd mu;  ///< diagonal drag coefficients, 1/s
  double dt = 0.04;

  Eigen::Index dim() const { return mu.size(); }

  void validate() const {
    if (mu.size() < 2) {
      throw Error(ErrorCode::kInvalidDrag, "at least two spatial dimensions are required");
    }
    if (!(dt > 0.0) || !std::isfinite(dt)) {
      throw Error(ErrorCode::kInvalidDrag, "sampling period must be positive");
    }
    for (Eigen::Index i = 0; i < mu.size(); ++i) {
      if (!(mu[i] >= 0.0) || !std::isfinite(mu[i])) {
        throw Error(ErrorCode::kInvalidDrag, "drag coefficients must be finite and non-negative");
      }
      if (1.0 - dt * mu[i] <= 0.0) {
        throw Error(ErrorCode::kInvalidDrag,
                    "1 - dt*mu must stay positive (axis " + std::to_string(i) + ")");
      }
    }
  }
};

/// Zero-order-hold Euler discretization x_{k+1} = A x_k + B u_k.
struct DiscreteModel {
  MatrixXd A;
  MatrixXd B;
  double dt = 0.0;

  Eigen::Index dim() const { return B.cols(); }
};

inline DiscreteModel discretize(const DragModel& drag) {
  drag.validate();
  const Eigen::Index d = drag.dim();
  const double dt = drag.dt;
  DiscreteModel m;
  m.dt = dt;
  m.A = MatrixXd::Identity(2 * d, 2 * d);
  m.A.topRightCorner(d, d).diagonal().setConstant(dt);
  m.A.bottomRightCorner(d, d).diagonal() = VectorXd::Ones(d) - dt * drag.mu;
  m.B = MatrixXd::Zero(2 * d, d);
  m.B.topRows(d).diagonal().setConstant(0.5 * dt * dt);
  m.B.bottomRows(d).diagonal().setConstant(dt);
  return m;
}

/// Linearized range row [p^T/|p|, 0]: C x reproduces |p| at the linearization point.
inline RowVectorXd output_row(const VectorXd& p) {
  const double n = p.norm();
  if (!(n >= kDegeneratePositionEpsilon)) {
    throw Error(ErrorCode::kDegeneratePosition, "position too close to the anchor");
  }
  RowVectorXd row = RowVectorXd::Zero(2 * p.size());
  row.head(p.size()) = p.transpose() / n;
  return row;
}

inline VectorXd step(const DiscreteModel& model, const VectorXd& x, const VectorXd& u) {
  if (x.size() != model.A.cols() || u.size() != model.B.cols()) {
    throw Error(ErrorCode::kDimensionMismatch, "state or input length does not match the model");
  }
  return model.A * x + model.B * u;
}

inline StateVector step(const DiscreteModel& model, const StateVector& x, const VectorXd& u) {
  return StateVector::from_stacked(step(model, x.stacked(), u));
}

/// Repeated multiplication; exponents are small (pre-integration factors).
inline MatrixXd matrix_power(const MatrixXd& a, int exponent) {
  MatrixXd out = MatrixXd::Identity(a.rows(), a.cols());
  for (int i = 0; i < exponent; ++i) out = out * a;
  return out;
}

struct Preintegrated {
  MatrixXd A_eff;
  VectorXd b_eff;
};

/// Compounds `ell` chronologically ordered input samples into one transition
///   x_{k+1} = A^ell x_k + sum_j A^(ell-j) B u_{k,j}.
inline Preintegrated preintegrate(const DiscreteModel& model, int ell, std::span<const VectorXd> inputs) {
  if (ell < 1 || static_cast<int>(inputs.size()) != ell) {
    throw Error(ErrorCode::kDimensionMismatch,
                "expected " + std::to_string(ell) + " input samples, got " + std::to_string(inputs.size()));
  }
  Preintegrated out;
  out.A_eff = matrix_power(model.A, ell);
  out.b_eff = VectorXd::Zero(model.A.rows());
  for (const auto& u : inputs) {
    if (u.size() != model.B.cols()) {
      throw Error(ErrorCode::kDimensionMismatch, "input sample length does not match the model");
    }
    out.b_eff = model.A * out.b_eff + model.B * u;
  }
  return out;
}

/// Small-angle lateral acceleration of a hovering multirotor: (g sin(pitch), -g sin(roll)).
inline Eigen::Vector2d acceleration_from_attitude(double pitch, double roll, double g) {
  return {g * std::sin(pitch), -g * std::sin(roll)};
}

/// Velocity of one axis under a constant input, v' = u - mu v.
inline double closed_form_velocity(double mu, double v0, double u, double t) {
  if (mu == 0.0) return v0 + u * t;
  const double decay = std::exp(-mu * t);
  return v0 * decay + (u / mu) * (1.0 - decay);
}

/// Position companion of closed_form_velocity.
inline double closed_form_position(double mu, double p0, double v0, double u, double t) {
  if (mu == 0.0) return p0 + v0 * t + 0.5 * u * t * t;
  const double decay = -std::expm1(-mu * t);  // 1 - e^{-mu t}
  return p0 + (u / mu) * t + (v0 - u / mu) * decay / mu;
}

}  // namespace sribo
