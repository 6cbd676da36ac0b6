#pragma once

// Nonlinear observability of the range-only (SRIO) and range+flow (SRIFO) systems
// from closed-form Lie derivatives along f(x, u) = [v; u - mu v].

#include <algorithm>
#include <limits>
#include <vector>

#include <Eigen/Dense>

#include "sribo/error.hpp"
#include "sribo/model.hpp"

namespace sribo {

inline constexpr double kRankRelativeTolerance = 1e-10;
inline constexpr double kDefaultConditionThreshold = 1e6;

struct ObservabilityReport {
  MatrixXd matrix;
  VectorXd singular_values;
  int numerical_rank = 0;
  double condition_number = std::numeric_limits<double>::infinity();
  bool observable = false;
};

namespace detail {

inline void check_lie_inputs(const VectorXd& p, const VectorXd& v, const VectorXd& u, const VectorXd& mu) {
  if (v.size() != p.size() || u.size() != p.size() || mu.size() != p.size()) {
    throw Error(ErrorCode::kDimensionMismatch, "p, v, u and mu must share one dimension");
  }
}

}  // namespace detail

/// Rank and conditioning of an assembled observability matrix. A singular value counts
/// toward the rank iff it exceeds max(rows, cols) * sigma_max * 1e-10.
inline ObservabilityReport analyze_observability(MatrixXd matrix, Eigen::Index state_dim) {
  ObservabilityReport r;
  Eigen::JacobiSVD<MatrixXd> svd(matrix);
  r.singular_values = svd.singularValues();
  r.matrix = std::move(matrix);
  const double smax = r.singular_values.size() > 0 ? r.singular_values[0] : 0.0;
  const double tol =
      static_cast<double>(std::max(r.matrix.rows(), r.matrix.cols())) * smax * kRankRelativeTolerance;
  for (Eigen::Index i = 0; i < r.singular_values.size(); ++i) {
    if (r.singular_values[i] > tol) ++r.numerical_rank;
  }
  r.observable = r.numerical_rank == state_dim;
  if (r.observable && smax > 0.0) {
    r.condition_number = smax / r.singular_values[state_dim - 1];
  }
  return r;
}

/// L^0 h ... L^order h for h = 0.5 |p|^2. Orders above 6 are not available in closed form.
inline std::vector<double> lie_derivatives_srio(const VectorXd& p, const VectorXd& v, const VectorXd& u,
                                                const VectorXd& mu, int order) {
  detail::check_lie_inputs(p, v, u, mu);
  if (order < 0 || order > 6) throw Error(ErrorCode::kInvalidConfig, "Lie derivative order must be in [0, 6]");
  const auto M = mu.asDiagonal();
  const VectorXd w = u - M * v;  // acceleration including drag
  const VectorXd mu2 = mu.cwiseAbs2();
  const VectorXd mu3 = mu2.cwiseProduct(mu);
  const VectorXd mu4 = mu2.cwiseAbs2();

  std::vector<double> out;
  out.push_back(0.5 * p.squaredNorm());
  if (order >= 1) out.push_back(p.dot(v));
  if (order >= 2) out.push_back(v.squaredNorm() + p.dot(w));
  if (order >= 3) out.push_back((3.0 * v - M * p).dot(w));
  if (order >= 4) out.push_back((3.0 * u - 7.0 * (M * v) + mu2.asDiagonal() * p).dot(w));
  if (order >= 5) {
    out.push_back((15.0 * (mu2.asDiagonal() * v) - 10.0 * (M * u) - mu3.asDiagonal() * p).dot(w));
  }
  if (order >= 6) {
    out.push_back((25.0 * (mu2.asDiagonal() * u) - 31.0 * (mu3.asDiagonal() * v) + mu4.asDiagonal() * p).dot(w));
  }
  return out;
}

/// Vector-valued Lie derivatives of h = [0.5 |p|^2; v], orders 0..3.
inline std::vector<VectorXd> lie_derivatives_srifo(const VectorXd& p, const VectorXd& v, const VectorXd& u,
                                                   const VectorXd& mu, int order) {
  detail::check_lie_inputs(p, v, u, mu);
  if (order < 0 || order > 3) throw Error(ErrorCode::kInvalidConfig, "Lie derivative order must be in [0, 3]");
  const Eigen::Index d = p.size();
  const auto M = mu.asDiagonal();
  const VectorXd w = u - M * v;
  const auto scalars = lie_derivatives_srio(p, v, u, mu, order);

  std::vector<VectorXd> out;
  VectorXd flow_part = v;
  for (int k = 0; k <= order; ++k) {
    VectorXd entry(1 + d);
    entry[0] = scalars[k];
    entry.tail(d) = flow_part;
    out.push_back(entry);
    // d/dt of v is w; each further derivative of w multiplies by -mu.
    flow_part = (k == 0) ? w : VectorXd(-(M * flow_part));
  }
  return out;
}

/// Gradient rows of L^0..L^5 h (6 row blocks of width 2d).
inline MatrixXd observability_rows_srio(const VectorXd& p, const VectorXd& v, const VectorXd& u,
                                        const VectorXd& mu) {
  detail::check_lie_inputs(p, v, u, mu);
  const Eigen::Index d = p.size();
  const auto M = mu.asDiagonal();
  const VectorXd w = u - M * v;
  const VectorXd mu2 = mu.cwiseAbs2();
  const VectorXd mu3 = mu2.cwiseProduct(mu);
  const VectorXd mu4 = mu2.cwiseAbs2();

  MatrixXd O(6, 2 * d);
  O.row(0) << p.transpose(), RowVectorXd::Zero(d);
  O.row(1) << v.transpose(), p.transpose();
  O.row(2) << w.transpose(), (2.0 * v - M * p).transpose();
  O.row(3) << -(M * w).transpose(), (3.0 * u - 6.0 * (M * v) + mu2.asDiagonal() * p).transpose();
  O.row(4) << (mu2.asDiagonal() * w).transpose(),
      (-10.0 * (M * u) + 14.0 * (mu2.asDiagonal() * v) - mu3.asDiagonal() * p).transpose();
  O.row(5) << -(mu3.asDiagonal() * w).transpose(),
      (25.0 * (mu2.asDiagonal() * u) - 30.0 * (mu3.asDiagonal() * v) + mu4.asDiagonal() * p).transpose();
  return O;
}

/// Block rows [p^T 0; 0 I; v^T p^T; 0 -mu; (u - mu v)^T (2v - mu p)^T].
inline MatrixXd observability_rows_srifo(const VectorXd& p, const VectorXd& v, const VectorXd& u,
                                         const VectorXd& mu) {
  detail::check_lie_inputs(p, v, u, mu);
  const Eigen::Index d = p.size();
  const auto M = mu.asDiagonal();
  MatrixXd O = MatrixXd::Zero(2 * d + 3, 2 * d);
  O.row(0).head(d) = p.transpose();
  O.block(1, d, d, d).setIdentity();
  O.row(d + 1) << v.transpose(), p.transpose();
  O.block(d + 2, d, d, d).diagonal() = -mu;
  O.row(2 * d + 2) << (u - M * v).transpose(), (2.0 * v - M * p).transpose();
  return O;
}

inline ObservabilityReport observability_matrix_srio(const StateVector& x, const VectorXd& u, const VectorXd& mu) {
  if (!(x.p.norm() >= kDegeneratePositionEpsilon)) {
    throw Error(ErrorCode::kDegeneratePosition, "observability undefined at the anchor");
  }
  return analyze_observability(observability_rows_srio(x.p, x.v, u, mu), 2 * x.dim());
}

inline ObservabilityReport observability_matrix_srifo(const StateVector& x, const VectorXd& u, const VectorXd& mu) {
  if (!(x.p.norm() >= kDegeneratePositionEpsilon)) {
    throw Error(ErrorCode::kDegeneratePosition, "observability undefined at the anchor");
  }
  return analyze_observability(observability_rows_srifo(x.p, x.v, u, mu), 2 * x.dim());
}

enum class Mode { kSrio, kSrifo };

struct TimelineSample {
  double t = 0.0;
  StateVector x;
  VectorXd u;
};

struct TimelineEntry {
  double t = 0.0;
  ObservabilityReport report;
  bool flagged = false;  ///< condition number above threshold (or rank deficient)
};

inline std::vector<TimelineEntry> observability_timeline(const std::vector<TimelineSample>& trajectory,
                                                         const VectorXd& mu, Mode mode = Mode::kSrio,
                                                         double condition_threshold = kDefaultConditionThreshold) {
  if (trajectory.empty()) throw Error(ErrorCode::kEmptyInput, "observability timeline needs samples");
  std::vector<TimelineEntry> out;
  out.reserve(trajectory.size());
  for (const auto& s : trajectory) {
    TimelineEntry e;
    e.t = s.t;
    e.report = mode == Mode::kSrio ? observability_matrix_srio(s.x, s.u, mu) : observability_matrix_srifo(s.x, s.u, mu);
    e.flagged = !e.report.observable || e.report.condition_number > condition_threshold;
    out.push_back(std::move(e));
  }
  return out;
}

}  // namespace sribo
