#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "rmis/errors.hpp"
#include "rmis/problems.hpp"
#include "rmis/stepper.hpp"

namespace rmis {

inline constexpr double kFitLow = 1e-9;
inline constexpr double kFitHigh = 1.0;

/// Least-squares slope of log(err) against log(h) over the points with
/// lo <= err <= hi; NaN with fewer than two such points.
inline double fit_order(const std::vector<double>& h, const std::vector<double>& err,
                        double lo = kFitLow, double hi = kFitHigh) {
  if (h.size() != err.size()) throw InvalidArgument("fit_order: length mismatch");
  double n = 0, sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t k = 0; k < h.size(); ++k) {
    if (!(err[k] >= lo && err[k] <= hi) || !(h[k] > 0.0)) continue;
    const double x = std::log(h[k]), y = std::log(err[k]);
    n += 1;
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  const double den = n * sxx - sx * sx;
  if (n < 2 || den == 0.0) return std::numeric_limits<double>::quiet_NaN();
  return (n * sxy - sx * sy) / den;
}

/// RMS over steps n = 1..M and all components of y_n - ref_n.
inline double rms_error(const std::vector<Eigen::VectorXd>& y, const Eigen::MatrixXd& ref) {
  if (y.size() != static_cast<std::size_t>(ref.rows()))
    throw InvalidArgument("rms_error: step count mismatch");
  if (y.empty()) return 0.0;
  double s = 0.0;
  for (std::size_t n = 0; n < y.size(); ++n)
    s += (y[n].transpose() - ref.row(static_cast<Eigen::Index>(n))).squaredNorm();
  return std::sqrt(s / static_cast<double>(y.size() * y.front().size()));
}

struct ConvergenceReport {
  std::string method;
  std::string problem;
  int m = 0;
  std::vector<double> h_values;
  std::vector<double> rms_errors;   // +inf where the run blew up
  std::vector<long> total_calls;    // -1 where the run blew up
  double fitted_order = std::numeric_limits<double>::quiet_NaN();
  double fit_low = kFitLow;
  double fit_high = kFitHigh;
  double reference_h = 0.0;
  double reference_change = 0.0;
};

struct ConvergenceOptions {
  double ref_tol = kDefaultReferenceTolerance;
  std::optional<std::filesystem::path> refcache;  // no caching when empty
};

/// Default step lists, halving from a problem-specific start.
inline std::vector<double> default_h_list(const std::string& problem) {
  double h0 = 0.1;
  if (problem == "linear") h0 = 2e-2;
  else if (problem == "brusselator") h0 = 4e-2;
  std::vector<double> h;
  for (int k = 0; k <= 6; ++k) h.push_back(h0 / static_cast<double>(1 << k));
  return h;
}

/// Reference states at t0 + k*hmin, k = 1..span/hmin.
inline ReferenceSolution reference_for(const MultirateProblem& problem, double h_min,
                                       const ConvergenceOptions& opt) {
  const double span = problem.tf - problem.t0;
  const long M = std::lround(span / h_min);
  if (M < 1 || std::abs(M * h_min - span) > 1e-9 * span)
    throw InvalidArgument("step " + std::to_string(h_min) + " does not divide the time span");
  std::vector<double> grid(M);
  for (long k = 0; k < M; ++k) grid[k] = problem.t0 + static_cast<double>(k + 1) * h_min;
  if (opt.refcache) return cached_reference(problem, grid, opt.ref_tol, *opt.refcache);
  return reference_solution(problem, grid, opt.ref_tol);
}

/// Integrate at each h and measure the RMS error against a fine reference.
inline ConvergenceReport run_convergence(const MethodSpec& spec, const MultirateProblem& problem,
                                         std::vector<double> h_list, int m,
                                         const ConvergenceOptions& opt = {}) {
  if (h_list.empty()) throw InvalidArgument("empty step list");
  for (double h : h_list)
    if (!(h > 0.0)) throw InvalidArgument("step sizes must be positive");
  const double h_min = *std::min_element(h_list.begin(), h_list.end());
  const ReferenceSolution ref = reference_for(problem, h_min, opt);

  ConvergenceReport rep;
  rep.method = spec.name;
  rep.problem = problem.name;
  rep.m = m;
  rep.reference_h = ref.h_ref;
  rep.reference_change = ref.rms_change;
  for (double h : h_list) {
    const double ratio = h / h_min;
    const long stride = std::lround(ratio);
    if (std::abs(ratio - stride) > 1e-9 * ratio)
      throw InvalidArgument("every step must be an integer multiple of the smallest");
    rep.h_values.push_back(h);
    try {
      const auto traj = integrate(problem, spec, h);
      std::vector<Eigen::VectorXd> y(traj.y.begin() + 1, traj.y.end());
      Eigen::MatrixXd r(static_cast<Eigen::Index>(y.size()), problem.dim);
      for (std::size_t n = 0; n < y.size(); ++n)
        r.row(static_cast<Eigen::Index>(n)) = ref.y.row(static_cast<Eigen::Index>((n + 1) * stride - 1));
      rep.rms_errors.push_back(rms_error(y, r));
      rep.total_calls.push_back(traj.fast_calls + traj.slow_calls);
    } catch (const NonFiniteState&) {
      rep.rms_errors.push_back(std::numeric_limits<double>::infinity());
      rep.total_calls.push_back(-1);
    }
  }
  rep.fitted_order = fit_order(rep.h_values, rep.rms_errors, rep.fit_low, rep.fit_high);
  return rep;
}

}  // namespace rmis
