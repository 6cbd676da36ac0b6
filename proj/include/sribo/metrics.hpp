#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "sribo/error.hpp"

namespace sribo {

/// Per-axis MAE / RMSE / SAE. SAE is the population (1/N) standard deviation of |e|.
struct ErrorSummary {
  std::vector<double> mae;
  std::vector<double> rmse;
  std::vector<double> sae;
  std::size_t count = 0;
  double time_mean = 0.0;  ///< s
  double time_p99 = 0.0;   ///< s
};

/// Nearest-rank percentile of an unsorted sample.
inline double percentile(std::vector<double> xs, double q) {
  if (xs.empty()) return 0.0;
  std::sort(xs.begin(), xs.end());
  const auto rank = static_cast<std::size_t>(std::ceil(q * static_cast<double>(xs.size())));
  return xs[std::clamp<std::size_t>(rank, 1, xs.size()) - 1];
}

/// `errors[axis][sample]`; `times` may be empty.
inline ErrorSummary summarize(const std::vector<std::vector<double>>& errors, const std::vector<double>& times = {}) {
  if (errors.empty() || errors.front().empty()) throw Error(ErrorCode::kEmptyInput, "no errors to summarize");
  ErrorSummary s;
  s.count = errors.front().size();
  for (const auto& axis : errors) {
    if (axis.size() != s.count) throw Error(ErrorCode::kDimensionMismatch, "axes hold different sample counts");
    const double n = static_cast<double>(axis.size());
    double abs_sum = 0.0;
    double sq_sum = 0.0;
    for (double e : axis) {
      abs_sum += std::abs(e);
      sq_sum += e * e;
    }
    const double mae = abs_sum / n;
    double var = 0.0;
    for (double e : axis) var += (std::abs(e) - mae) * (std::abs(e) - mae);
    s.mae.push_back(mae);
    s.rmse.push_back(std::sqrt(sq_sum / n));
    s.sae.push_back(std::sqrt(var / n));
  }
  if (!times.empty()) {
    double sum = 0.0;
    for (double t : times) sum += t;
    s.time_mean = sum / static_cast<double>(times.size());
    s.time_p99 = percentile(times, 0.99);
  }
  return s;
}

struct SweepKey {
  int k_t = 0;
  int k_w = 0;
  auto operator<=>(const SweepKey&) const = default;
};

struct SweepRow {
  SweepKey key;
  ErrorSummary summary;
};

/// Rows sorted by (k_t, k_w).
inline std::vector<SweepRow> sweep_table(const std::map<SweepKey, ErrorSummary>& results) {
  std::vector<SweepRow> rows;
  rows.reserve(results.size());
  for (const auto& [k, s] : results) rows.push_back({k, s});
  return rows;
}

inline std::string sweep_table_csv(const std::vector<SweepRow>& rows) {
  std::string out = "kt,kw,mae_x,mae_y,mae_z,rmse_x,rmse_y,rmse_z,sae_x,sae_y,sae_z,time_mean_s,time_p99_s\n";
  char buf[64];
  for (const auto& r : rows) {
    out += std::to_string(r.key.k_t) + "," + std::to_string(r.key.k_w);
    for (const auto* v : {&r.summary.mae, &r.summary.rmse, &r.summary.sae}) {
      for (double x : *v) {
        std::snprintf(buf, sizeof buf, ",%.17g", x);
        out += buf;
      }
    }
    std::snprintf(buf, sizeof buf, ",%.17g,%.17g\n", r.summary.time_mean, r.summary.time_p99);
    out += buf;
  }
  return out;
}

inline std::string sweep_table_text(const std::vector<SweepRow>& rows) {
  std::string out;
  char buf[256];
  std::snprintf(buf, sizeof buf, "%4s %4s | %23s | %23s | %23s | %10s\n", "kt", "kw", "MAE x/y/z (m)",
                "RMSE x/y/z (m)", "SAE x/y/z (m)", "mean (ms)");
  out += buf;
  for (const auto& r : rows) {
    const auto& s = r.summary;
    auto axis = [](const std::vector<double>& v, std::size_t i) { return i < v.size() ? v[i] : 0.0; };
    std::snprintf(buf, sizeof buf, "%4d %4d | %7.3f %7.3f %7.3f | %7.3f %7.3f %7.3f | %7.3f %7.3f %7.3f | %10.4f\n",
                  r.key.k_t, r.key.k_w, axis(s.mae, 0), axis(s.mae, 1), axis(s.mae, 2), axis(s.rmse, 0),
                  axis(s.rmse, 1), axis(s.rmse, 2), axis(s.sae, 0), axis(s.sae, 1), axis(s.sae, 2),
                  1e3 * s.time_mean);
    out += buf;
  }
  return out;
}

}  // namespace sribo
