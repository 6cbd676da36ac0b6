#pragma once

// File formats.
//
// Dataset CSV (one row per 25 Hz sample, header required):
//   t,ax,ay,az,range,vx,vy,vz,gx,gy,gz[,gvx,gvy,gvz]
// range / vx..vz / g* may be empty (missing or faulted; never sentinel numbers).
// gvx..gvz (ground-truth velocity) is an optional trailing block; a file either has it
// on every row or not at all.
//
// Trace CSV (one row per emitted estimate):
//   t,px,py,pz,vx,vy,vz,true_px,true_py,true_pz,true_vx,true_vy,true_vz,
//   err_px,err_py,err_pz,err_vx,err_vy,err_vz
// err_* = estimate - truth; truth and error columns are empty where no truth exists.
//
// Config: a JSON object of overrides on top of the compiled-in profile defaults.

#include <charconv>
#include <cstdio>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "sribo/error.hpp"
#include "sribo/estimator.hpp"
#include "sribo/metrics.hpp"
#include "sribo/simulator.hpp"

namespace sribo {

inline constexpr std::string_view kDatasetHeader = "t,ax,ay,az,range,vx,vy,vz,gx,gy,gz";
inline constexpr std::string_view kDatasetHeaderWithVelocity = "t,ax,ay,az,range,vx,vy,vz,gx,gy,gz,gvx,gvy,gvz";
inline constexpr std::string_view kTraceHeader =
    "t,px,py,pz,vx,vy,vz,true_px,true_py,true_pz,true_vx,true_vy,true_vz,"
    "err_px,err_py,err_pz,err_vx,err_vy,err_vz";

namespace detail {

inline std::string format_double(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

inline void append_vector(std::string& line, const std::optional<VectorXd>& v, Eigen::Index d) {
  for (Eigen::Index i = 0; i < d; ++i) {
    line += ',';
    if (v) line += format_double((*v)[i]);
  }
}

inline std::vector<std::string_view> split_csv(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(',', start);
    out.push_back(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

inline std::optional<double> parse_field(std::string_view field, std::size_t line_no) {
  field = trim(field);
  if (field.empty()) return std::nullopt;
  double value = 0.0;
  const auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), value);
  if (ec != std::errc() || ptr != field.data() + field.size()) {
    throw Error(ErrorCode::kParseError, "line " + std::to_string(line_no) + ": bad number '" + std::string(field) + "'");
  }
  return value;
}

inline double parse_required(std::string_view field, std::size_t line_no, const char* name) {
  const auto v = parse_field(field, line_no);
  if (!v) throw Error(ErrorCode::kParseError, "line " + std::to_string(line_no) + ": missing " + name);
  return *v;
}

/// All-or-nothing vector: either every component is present or none.
inline std::optional<VectorXd> parse_vector(const std::vector<std::string_view>& f, std::size_t first, Eigen::Index d,
                                            std::size_t line_no) {
  VectorXd v(d);
  int present = 0;
  for (Eigen::Index i = 0; i < d; ++i) {
    const auto x = parse_field(f[first + i], line_no);
    if (x) {
      v[i] = *x;
      ++present;
    }
  }
  if (present == 0) return std::nullopt;
  if (present != d) {
    throw Error(ErrorCode::kParseError, "line " + std::to_string(line_no) + ": partially empty vector");
  }
  return v;
}

inline std::ofstream open_out(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::kIoError, "cannot open '" + path + "' for writing");
  return out;
}

inline std::ifstream open_in(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIoError, "cannot open '" + path + "'");
  return in;
}

}  // namespace detail

// ---------------------------------------------------------------------------------------
// Dataset

inline void write_dataset(std::ostream& out, const Dataset& ds) {
  constexpr Eigen::Index d = 3;
  if (ds.size() > 0 && ds.dim() != d) throw Error(ErrorCode::kDimensionMismatch, "dataset files are 3-D");
  bool with_velocity = ds.size() > 0;
  for (const auto& v : ds.truth_v) with_velocity = with_velocity && v.has_value();
  out << (with_velocity ? kDatasetHeaderWithVelocity : kDatasetHeader) << '\n';
  for (std::size_t k = 0; k < ds.size(); ++k) {
    std::string line = detail::format_double(ds.t[k]);
    detail::append_vector(line, ds.accel[k], d);
    line += ',';
    if (ds.range[k]) line += detail::format_double(*ds.range[k]);
    detail::append_vector(line, ds.flow[k], d);
    detail::append_vector(line, ds.truth_p[k], d);
    if (with_velocity) detail::append_vector(line, ds.truth_v[k], d);
    out << line << '\n';
  }
  if (!out) throw Error(ErrorCode::kIoError, "dataset write failed");
}

inline void write_dataset(const std::string& path, const Dataset& ds) {
  auto out = detail::open_out(path);
  write_dataset(out, ds);
}

/// Parses a dataset; the anchor is not part of the file and stays at the origin.
inline Dataset read_dataset(std::istream& in) {
  constexpr Eigen::Index d = 3;
  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorCode::kParseError, "line 1: missing header");
  const auto header = detail::trim(line);
  bool with_velocity = false;
  if (header == kDatasetHeaderWithVelocity) {
    with_velocity = true;
  } else if (header != kDatasetHeader) {
    throw Error(ErrorCode::kParseError, "line 1: unexpected header '" + std::string(header) + "'");
  }
  const std::size_t columns = with_velocity ? 14 : 11;

  Dataset ds;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::trim(line).empty()) continue;
    const auto f = detail::split_csv(line);
    if (f.size() != columns) {
      throw Error(ErrorCode::kParseError, "line " + std::to_string(line_no) + ": expected " +
                                              std::to_string(columns) + " columns, got " + std::to_string(f.size()));
    }
    const double t = detail::parse_required(f[0], line_no, "time");
    if (!ds.t.empty() && !(t > ds.t.back())) {
      throw Error(ErrorCode::kNonMonotoneTime, "line " + std::to_string(line_no) + ": time does not increase");
    }
    const auto accel = detail::parse_vector(f, 1, d, line_no);
    if (!accel) throw Error(ErrorCode::kParseError, "line " + std::to_string(line_no) + ": missing acceleration");
    const auto range = detail::parse_field(f[4], line_no);
    if (range && !(*range >= 0.0)) {
      throw Error(ErrorCode::kParseError, "line " + std::to_string(line_no) + ": negative range");
    }
    ds.t.push_back(t);
    ds.accel.push_back(*accel);
    ds.range.push_back(range);
    ds.flow.push_back(detail::parse_vector(f, 5, d, line_no));
    ds.truth_p.push_back(detail::parse_vector(f, 8, d, line_no));
    ds.truth_v.push_back(with_velocity ? detail::parse_vector(f, 11, d, line_no) : std::nullopt);
  }
  return ds;
}

inline Dataset read_dataset(const std::string& path) {
  auto in = detail::open_in(path);
  return read_dataset(in);
}

// ---------------------------------------------------------------------------------------
// Trace

struct TraceRow {
  double t = 0.0;
  VectorXd p;
  VectorXd v;
  std::optional<VectorXd> true_p;
  std::optional<VectorXd> true_v;
};

inline void write_trace(std::ostream& out, const std::vector<TraceRow>& rows) {
  constexpr Eigen::Index d = 3;
  out << kTraceHeader << '\n';
  for (const auto& r : rows) {
    if (r.p.size() != d || r.v.size() != d) throw Error(ErrorCode::kDimensionMismatch, "trace files are 3-D");
    std::string line = detail::format_double(r.t);
    detail::append_vector(line, r.p, d);
    detail::append_vector(line, r.v, d);
    detail::append_vector(line, r.true_p, d);
    detail::append_vector(line, r.true_v, d);
    detail::append_vector(line, r.true_p ? std::optional<VectorXd>(r.p - *r.true_p) : std::nullopt, d);
    detail::append_vector(line, r.true_v ? std::optional<VectorXd>(r.v - *r.true_v) : std::nullopt, d);
    out << line << '\n';
  }
  if (!out) throw Error(ErrorCode::kIoError, "trace write failed");
}

inline void write_trace(const std::string& path, const std::vector<TraceRow>& rows) {
  auto out = detail::open_out(path);
  write_trace(out, rows);
}

inline std::vector<TraceRow> read_trace(std::istream& in) {
  constexpr Eigen::Index d = 3;
  std::string line;
  if (!std::getline(in, line) || detail::trim(line) != kTraceHeader) {
    throw Error(ErrorCode::kParseError, "line 1: unexpected trace header");
  }
  std::vector<TraceRow> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::trim(line).empty()) continue;
    const auto f = detail::split_csv(line);
    if (f.size() != 19) throw Error(ErrorCode::kParseError, "line " + std::to_string(line_no) + ": expected 19 columns");
    TraceRow r;
    r.t = detail::parse_required(f[0], line_no, "time");
    const auto p = detail::parse_vector(f, 1, d, line_no);
    const auto v = detail::parse_vector(f, 4, d, line_no);
    if (!p || !v) throw Error(ErrorCode::kParseError, "line " + std::to_string(line_no) + ": missing estimate");
    r.p = *p;
    r.v = *v;
    r.true_p = detail::parse_vector(f, 7, d, line_no);
    r.true_v = detail::parse_vector(f, 10, d, line_no);
    rows.push_back(std::move(r));
  }
  return rows;
}

inline std::vector<TraceRow> read_trace(const std::string& path) {
  auto in = detail::open_in(path);
  return read_trace(in);
}

/// Per-axis position (or velocity) errors of the rows that carry truth.
inline std::vector<std::vector<double>> trace_errors(const std::vector<TraceRow>& rows, bool velocity = false) {
  std::vector<std::vector<double>> errors;
  for (const auto& r : rows) {
    const auto& truth = velocity ? r.true_v : r.true_p;
    if (!truth) continue;
    const VectorXd e = (velocity ? r.v : r.p) - *truth;
    if (errors.empty()) errors.resize(e.size());
    for (Eigen::Index i = 0; i < e.size(); ++i) errors[i].push_back(e[i]);
  }
  return errors;
}

// ---------------------------------------------------------------------------------------
// Config

enum class Profile { kIndoor, kOutdoor };

struct FullConfig {
  DragModel drag;
  EstimatorConfig estimator;      ///< k_w resolved lazily from the mode unless overridden
  std::optional<int> k_w_override;
  NoiseSpec noise;
  TrajectorySpec trajectory;
  double condition_threshold = kDefaultConditionThreshold;

  /// Estimator settings for `mode` (window size 38 for SRIO, 30 for SRIFO unless overridden).
  EstimatorConfig for_mode(Mode mode) const {
    EstimatorConfig c = estimator;
    c.mode = mode;
    c.k_w = k_w_override ? *k_w_override : (mode == Mode::kSrio ? 38 : 30);
    return c;
  }
};

inline DragModel profile_drag(Profile profile) {
  DragModel drag;
  drag.dt = 0.04;
  drag.mu = VectorXd(3);
  if (profile == Profile::kIndoor) {
    drag.mu << 1.2, 2.4, 4.0;
  } else {
    drag.mu << 0.3, 0.45, 1.5;
  }
  return drag;
}

inline FullConfig default_config(Profile profile) {
  FullConfig c;
  c.drag = profile_drag(profile);
  c.estimator = EstimatorConfig::defaults(Mode::kSrio);
  return c;
}

namespace detail {

inline VectorXd json_vector(const nlohmann::json& j, const std::string& key, Eigen::Index n) {
  if (!j.is_array() || static_cast<Eigen::Index>(j.size()) != n) {
    throw Error(ErrorCode::kTypeError, "'" + key + "' must be an array of " + std::to_string(n) + " numbers");
  }
  VectorXd v(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    if (!j[i].is_number()) throw Error(ErrorCode::kTypeError, "'" + key + "' must hold numbers");
    v[i] = j[i].get<double>();
  }
  return v;
}

/// A diagonal given as an array of n numbers, or a full n x n nested array.
inline MatrixXd json_matrix(const nlohmann::json& j, const std::string& key, Eigen::Index n) {
  if (j.is_array() && static_cast<Eigen::Index>(j.size()) == n && !j.empty() && j[0].is_array()) {
    MatrixXd m(n, n);
    for (Eigen::Index r = 0; r < n; ++r) m.row(r) = json_vector(j[r], key, n).transpose();
    return m;
  }
  return json_vector(j, key, n).asDiagonal();
}

inline double json_number(const nlohmann::json& j, const std::string& key) {
  if (!j.is_number()) throw Error(ErrorCode::kTypeError, "'" + key + "' must be a number");
  return j.get<double>();
}

inline int json_int(const nlohmann::json& j, const std::string& key) {
  if (!j.is_number_integer()) throw Error(ErrorCode::kTypeError, "'" + key + "' must be an integer");
  return j.get<int>();
}

inline std::string json_string(const nlohmann::json& j, const std::string& key) {
  if (!j.is_string()) throw Error(ErrorCode::kTypeError, "'" + key + "' must be a string");
  return j.get<std::string>();
}

inline bool json_bool(const nlohmann::json& j, const std::string& key) {
  if (!j.is_boolean()) throw Error(ErrorCode::kTypeError, "'" + key + "' must be a boolean");
  return j.get<bool>();
}

template <typename Enum>
Enum json_enum(const nlohmann::json& j, const std::string& key, const std::map<std::string, Enum>& names) {
  const auto s = json_string(j, key);
  const auto it = names.find(s);
  if (it == names.end()) throw Error(ErrorCode::kTypeError, "'" + key + "': unknown value '" + s + "'");
  return it->second;
}

}  // namespace detail

inline Mode parse_mode(const std::string& s) {
  if (s == "srio" || s == "SRIO") return Mode::kSrio;
  if (s == "srifo" || s == "SRIFO") return Mode::kSrifo;
  throw Error(ErrorCode::kInvalidConfig, "unknown mode '" + s + "'");
}

inline Profile parse_profile(const std::string& s) {
  if (s == "indoor" || s == "INDOOR") return Profile::kIndoor;
  if (s == "outdoor" || s == "OUTDOOR") return Profile::kOutdoor;
  throw Error(ErrorCode::kInvalidConfig, "unknown profile '" + s + "'");
}

inline TrajectoryKind parse_trajectory_kind(const std::string& s) {
  static const std::map<std::string, TrajectoryKind> names{{"figure_eight", TrajectoryKind::kFigureEight},
                                                           {"random_smooth", TrajectoryKind::kRandomSmooth},
                                                           {"quasi_static", TrajectoryKind::kQuasiStatic},
                                                           {"constant_velocity", TrajectoryKind::kConstantVelocity}};
  const auto it = names.find(s);
  if (it == names.end()) throw Error(ErrorCode::kInvalidConfig, "unknown trajectory kind '" + s + "'");
  return it->second;
}

/// Applies JSON overrides to the profile defaults. Unknown keys are rejected.
inline FullConfig parse_config(const nlohmann::json& j, Profile profile) {
  if (!j.is_object()) throw Error(ErrorCode::kTypeError, "config must be a JSON object");
  FullConfig c = default_config(profile);
  auto& e = c.estimator;
  for (const auto& [key, value] : j.items()) {
    using namespace detail;
    if (key == "mu") c.drag.mu = json_vector(value, key, 3);
    else if (key == "dt") c.drag.dt = json_number(value, key);
    else if (key == "kw") c.k_w_override = json_int(value, key);
    else if (key == "kt") e.k_t = json_int(value, key);
    else if (key == "ell") e.ell = json_int(value, key);
    else if (key == "stride") e.stride = json_int(value, key);
    else if (key == "p_inv") e.P_inv = json_matrix(value, key, 6);
    else if (key == "q_inv") e.Q_inv = json_matrix(value, key, 6);
    else if (key == "r_inv") e.R_inv_range = json_number(value, key);
    else if (key == "r_inv_flow") e.R_inv_flow = json_matrix(value, key, 3);
    else if (key == "mode") e.mode = parse_mode(json_string(value, key));
    else if (key == "solver") e.solver = json_enum<SolverKind>(value, key, {{"full", SolverKind::kFull}, {"reduced", SolverKind::kReduced}});
    else if (key == "output_row_seeding")
      e.seeding = json_enum<OutputRowSeeding>(
          value, key, {{"propagated", OutputRowSeeding::kPropagatedPrior}, {"copy", OutputRowSeeding::kCopyPrevious}});
    else if (key == "scale_q_with_ell") e.scale_q_with_ell = json_bool(value, key);
    else if (key == "accel_sigma") c.noise.accel_sigma = json_number(value, key);
    else if (key == "range_sigma") c.noise.range_sigma = json_number(value, key);
    else if (key == "flow_sigma") c.noise.flow_sigma = json_number(value, key);
    else if (key == "accel_bias_walk") c.noise.accel_bias_walk = json_number(value, key);
    else if (key == "noise_seed") c.noise.seed = static_cast<std::uint64_t>(json_int(value, key));
    else if (key == "trajectory") c.trajectory.kind = parse_trajectory_kind(json_string(value, key));
    else if (key == "duration") c.trajectory.duration = json_number(value, key);
    else if (key == "velocity_scale") c.trajectory.velocity_scale = json_number(value, key);
    else if (key == "accel_scale") c.trajectory.accel_scale = json_number(value, key);
    else if (key == "seed") c.trajectory.seed = static_cast<std::uint64_t>(json_int(value, key));
    else if (key == "anchor") c.trajectory.anchor = json_vector(value, key, 3);
    else if (key == "center") c.trajectory.center = json_vector(value, key, 3);
    else if (key == "condition_threshold") c.condition_threshold = json_number(value, key);
    else throw Error(ErrorCode::kUnknownKey, "unknown config key '" + key + "'");
  }
  c.drag.validate();
  c.noise.validate();
  c.trajectory.validate();
  return c;
}

/// Empty path = profile defaults.
inline FullConfig load_config(const std::string& path, Profile profile) {
  if (path.empty()) return default_config(profile);
  auto in = detail::open_in(path);
  std::stringstream buf;
  buf << in.rdbuf();
  const auto text = buf.str();
  if (detail::trim(text).find_first_not_of(" \t\r\n") == std::string_view::npos) return default_config(profile);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& ex) {
    throw Error(ErrorCode::kParseError, ex.what());
  }
  return parse_config(j, profile);
}

}  // namespace sribo
