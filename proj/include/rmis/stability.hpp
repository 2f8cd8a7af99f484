#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "rmis/butcher.hpp"
#include "rmis/errors.hpp"
#include "rmis/stepper.hpp"

namespace rmis {

inline constexpr int kXiPoints = 100;
inline constexpr int kEtaPoints = 200;
inline constexpr double kStabilityMargin = 1e-12;

/// Z = h G from the reduced parameters (kappa, xi, eta). Row 0 is the fast
/// component, row 1 the slow one.
inline Eigen::Matrix2d point_from_parameters(double kappa, double xi, double eta,
                                             double coupling_scale = 1.0) {
  if (!(kappa > 0.0) || !std::isfinite(kappa))
    throw InvalidArgument("kappa must be positive");
  if (!(xi > -1.0 && xi < 0.0)) throw InvalidArgument("xi must lie in (-1, 0)");
  if (!(eta > -1.0 && eta < 1.0)) throw InvalidArgument("eta must lie in (-1, 1)");
  if (coupling_scale == 0.0 || !std::isfinite(coupling_scale))
    throw InvalidArgument("coupling scale must be finite and nonzero");
  const double g11 = xi / (1.0 + xi);
  const double g22 = kappa * g11;
  const double beta = 2.0 * eta / (1.0 + eta);
  const double off = std::sqrt(std::abs(beta * g11 * g22));
  Eigen::Matrix2d Z;
  Z(0, 0) = g11;
  Z(1, 1) = g22;
  Z(0, 1) = (beta < 0.0 ? -off : off) * coupling_scale;
  Z(1, 0) = off / coupling_scale;
  return Z;
}

/// The linear map y_n -> y_{n+1} of one step (h = 1) on y' = Z y, with the
/// first row as the fast right-hand side and the second as the slow one.
inline Eigen::Matrix2d amplification_matrix(const MethodSpec& spec, const Eigen::Matrix2d& Z) {
  BasicMultirateProblem<Eigen::Vector2d> p;
  p.name = "dahlquist2";
  p.dim = 2;
  p.f_fast = [Z](double, const Eigen::Vector2d& y) {
    return Eigen::Vector2d(Z.row(0).dot(y), 0.0);
  };
  p.f_slow = [Z](double, const Eigen::Vector2d& y) {
    return Eigen::Vector2d(0.0, Z.row(1).dot(y));
  };
  p.y0 = Eigen::Vector2d::Zero();
  StepWorkspace<Eigen::Vector2d> ws;
  ws.prepare(spec, p.y0);
  Eigen::Matrix2d S;
  S.col(0) = step(p, spec, 0.0, Eigen::Vector2d(1.0, 0.0), 1.0, ws).y_next;
  S.col(1) = step(p, spec, 0.0, Eigen::Vector2d(0.0, 1.0), 1.0, ws).y_next;
  return S;
}

/// Largest eigenvalue modulus of a 2x2 matrix via trace and determinant.
inline double spectral_radius(const Eigen::Matrix2d& S) {
  if (!S.allFinite()) return std::numeric_limits<double>::infinity();
  const double half = 0.5 * S.trace();
  const double det = S.determinant();
  const double disc = half * half - det;
  if (disc >= 0.0) {
    const double r = std::sqrt(disc);
    return std::max(std::abs(half + r), std::abs(half - r));
  }
  return std::sqrt(det);  // complex pair with |lambda|^2 = det
}

struct StabilityScan {
  std::string method;
  double kappa = 0.0;
  Eigen::VectorXd xi_grid;   // 100 cell-centred values in (-1, 0)
  Eigen::VectorXd eta_grid;  // 200 cell-centred values in (-1, 1)
  Eigen::MatrixXd spectral_radius;  // eta x xi
  Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic> stable;
  double area_fraction = 0.0;

  /// Indices of the grid point nearest (xi, eta).
  std::pair<int, int> nearest(double xi, double eta) const {
    Eigen::Index i, j;
    (xi_grid.array() - xi).abs().minCoeff(&i);
    (eta_grid.array() - eta).abs().minCoeff(&j);
    return {static_cast<int>(j), static_cast<int>(i)};
  }
  bool stable_near(double xi, double eta) const {
    const auto [j, i] = nearest(xi, eta);
    return stable(j, i);
  }
};

inline Eigen::VectorXd cell_centred(int n, double lo, double hi) {
  Eigen::VectorXd g(n);
  for (int k = 0; k < n; ++k) g(k) = lo + (hi - lo) * (k + 0.5) / n;
  return g;
}

struct ScanOptions {
  double coupling_scale = 1.0;
};

inline StabilityScan scan(const MethodSpec& spec, double kappa, const ScanOptions& opt = {}) {
  validate_spec(spec);
  StabilityScan s;
  s.method = spec.name;
  s.kappa = kappa;
  s.xi_grid = cell_centred(kXiPoints, -1.0, 0.0);
  s.eta_grid = cell_centred(kEtaPoints, -1.0, 1.0);
  s.spectral_radius.resize(kEtaPoints, kXiPoints);
  s.stable.resize(kEtaPoints, kXiPoints);
  long count = 0;
  for (int j = 0; j < kEtaPoints; ++j)
    for (int i = 0; i < kXiPoints; ++i) {
      const auto Z = point_from_parameters(kappa, s.xi_grid(i), s.eta_grid(j), opt.coupling_scale);
      double rho;
      try {
        rho = spectral_radius(amplification_matrix(spec, Z));
      } catch (const NonFiniteState&) {
        rho = std::numeric_limits<double>::infinity();
      }
      s.spectral_radius(j, i) = rho;
      s.stable(j, i) = rho < 1.0 - kStabilityMargin;
      count += s.stable(j, i);
    }
  s.area_fraction = static_cast<double>(count) / (kXiPoints * kEtaPoints);
  return s;
}

/// Most negative xi of the run of stable points on the eta row nearest
/// `eta` that starts next to xi = 0; NaN when the point nearest 0 is unstable.
inline double stable_xi_extent(const StabilityScan& s, double eta = 0.0) {
  const int j = s.nearest(-0.5, eta).first;
  double extent = std::numeric_limits<double>::quiet_NaN();
  for (int i = kXiPoints - 1; i >= 0 && s.stable(j, i); --i) extent = s.xi_grid(i);
  return extent;
}

// ---------------------------------------------------------------------------
// One-parameter families of outer tables

enum class FamilyCurve { MIS, RMIS };

/// Points 0 < c2 < c3 < 1 on the zero set of the MIS third-order curve or
/// the RMIS fourth-order curve, found by bracketing in c2 along a
/// cell-centred grid of c3 values.
inline std::vector<std::pair<double, double>> trace_condition_curve(FamilyCurve which,
                                                                    int n_c3 = 400,
                                                                    int n_c2 = 800) {
  auto value = [which](double c2, double c3) {
    const auto v = family_condition_curves(c2, c3);
    return which == FamilyCurve::MIS ? v.first : v.second;
  };
  std::vector<std::pair<double, double>> pts;
  for (int k = 0; k < n_c3; ++k) {
    const double c3 = (k + 0.5) / n_c3;
    for (int q = 0; q < n_c2; ++q) {
      double a = c3 * q / n_c2, b = c3 * (q + 1) / n_c2;
      double fa = value(a, c3), fb = value(b, c3);
      if (fa == 0.0) {
        if (a > 0.0) pts.emplace_back(a, c3);
        continue;
      }
      if (fa * fb >= 0.0) continue;
      for (int it = 0; it < 100 && b - a > 1e-15; ++it) {
        const double m = 0.5 * (a + b);
        const double fm = value(m, c3);
        if (fa * fm <= 0.0) {
          b = m;
        } else {
          a = m;
          fa = fm;
        }
      }
      pts.emplace_back(0.5 * (a + b), c3);
    }
  }
  return pts;
}

struct FamilyResult {
  double c2 = 0.0;
  double c3 = 0.0;
  ButcherTable table;
  StabilityScan scan;
};

/// Method built from one family member used as both outer and inner table.
inline MethodSpec family_method(const ButcherTable& t, FamilyCurve which, int m) {
  MethodSpec spec;
  spec.name = std::string(which == FamilyCurve::MIS ? "mis-" : "rmis-") + t.name;
  spec.kind = which == FamilyCurve::MIS ? MethodKind::MIS : MethodKind::RMIS;
  spec.outer = t;
  spec.inner = t;
  spec.subcycles = default_subcycles(t, m);
  return spec;
}

/// Scan each candidate and keep the largest stable area; ties go to the
/// smaller c2. Singular or inadmissible family points are skipped.
inline FamilyResult maximize_area(FamilyCurve which, double kappa,
                                  const std::vector<std::pair<Rational, Rational>>& candidates) {
  const int m = std::max(1, static_cast<int>(std::lround(kappa)));
  std::optional<FamilyResult> best;
  for (const auto& [c2, c3] : candidates) {
    ButcherTable t;
    try {
      t = butcher_family(c2, c3);
    } catch (const SingularFamilyPoint&) {
      continue;
    }
    MethodSpec spec;
    try {
      spec = family_method(t, which, m);
      validate_spec(spec);
    } catch (const DomainError&) {
      continue;
    }
    FamilyResult r{c2.convert_to<double>(), c3.convert_to<double>(), t, scan(spec, kappa)};
    if (!best || r.scan.area_fraction > best->scan.area_fraction ||
        (r.scan.area_fraction == best->scan.area_fraction && r.c2 < best->c2))
      best = std::move(r);
  }
  if (!best) throw NoAdmissibleSample();
  return *best;
}

/// n_samples points spread evenly over the traced curve, plus the two points
/// where both curves meet.
inline std::vector<std::pair<Rational, Rational>> family_samples(FamilyCurve which, int n_samples) {
  if (n_samples < 1) throw InvalidArgument("n_samples must be positive");
  const auto pts = trace_condition_curve(which, std::max(200, 2 * n_samples));
  std::vector<std::pair<Rational, Rational>> out;
  if (!pts.empty()) {
    for (int k = 0; k < n_samples; ++k) {
      const auto idx = static_cast<std::size_t>(
          (static_cast<double>(k) + 0.5) * static_cast<double>(pts.size()) / n_samples);
      const auto& p = pts[std::min(idx, pts.size() - 1)];
      out.emplace_back(Rational(p.first), Rational(p.second));
    }
  }
  out.emplace_back(Rational(1, 3), Rational(2, 3));
  out.push_back(alternate_intersection_point());
  return out;
}

inline FamilyResult maximize_area(FamilyCurve which, double kappa, int n_samples) {
  return maximize_area(which, kappa, family_samples(which, n_samples));
}

}  // namespace rmis
