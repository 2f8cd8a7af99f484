#pragma once

#include <Eigen/Dense>
#include <boost/multiprecision/cpp_int.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <string>
#include <utility>

#include "rmis/errors.hpp"

namespace rmis {

using Rational = boost::multiprecision::cpp_rational;

/// A single-rate Runge-Kutta method {A, b, c}.
struct ButcherTable {
  std::string name;
  Eigen::MatrixXd A;
  Eigen::VectorXd b;
  Eigen::VectorXd c;

  int stages() const { return static_cast<int>(b.size()); }

  /// Strictly lower triangular A.
  bool is_explicit() const {
    for (int i = 0; i < A.rows(); ++i)
      for (int j = i; j < A.cols(); ++j)
        if (A(i, j) != 0.0) return false;
    return true;
  }

  /// First row of A and c_1 identically zero.
  bool explicit_first_stage() const {
    if (c(0) != 0.0) return false;
    return (A.row(0).array() == 0.0).all();
  }

  /// max_i |c_i - sum_j A_ij|
  double row_sum_residual() const {
    return (A.rowwise().sum() - c).cwiseAbs().maxCoeff();
  }
};

/// Row sums of A must reproduce c to this tolerance (relative to the largest
/// absolute row sum, floored at 1) for a table to be accepted.
inline constexpr double kRowSumTolerance = 1e-12;

inline ButcherTable make_table(std::string name, Eigen::MatrixXd A,
                               Eigen::VectorXd b, Eigen::VectorXd c) {
  const auto s = b.size();
  if (s < 1) throw InvalidTable(name + ": empty table");
  if (A.rows() != s || A.cols() != s || c.size() != s)
    throw InvalidTable(name + ": A must be s x s and b, c of length s");
  if (!A.allFinite() || !b.allFinite() || !c.allFinite())
    throw InvalidTable(name + ": non-finite coefficient");
  ButcherTable t{std::move(name), std::move(A), std::move(b), std::move(c)};
  const double scale = std::max(1.0, t.A.cwiseAbs().rowwise().sum().maxCoeff());
  if (t.row_sum_residual() > kRowSumTolerance * scale)
    throw InvalidTable(t.name + ": row sums of A do not match c");
  return t;
}

/// Kutta's 3/8-Rule.
inline ButcherTable make_three_eighths() {
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(4, 4);
  A(1, 0) = 1.0 / 3.0;
  A(2, 0) = -1.0 / 3.0;
  A(2, 1) = 1.0;
  A(3, 0) = 1.0;
  A(3, 1) = -1.0;
  A(3, 2) = 1.0;
  Eigen::VectorXd b(4), c(4);
  b << 1.0 / 8.0, 3.0 / 8.0, 3.0 / 8.0, 1.0 / 8.0;
  c << 0.0, 1.0 / 3.0, 2.0 / 3.0, 1.0;
  return make_table("3/8-Rule", std::move(A), std::move(b), std::move(c));
}

/// Three-stage, third-order table commonly used as the MIS outer method.
inline ButcherTable make_kw3() {
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(3, 3);
  A(1, 0) = 1.0 / 3.0;
  A(2, 0) = -3.0 / 16.0;
  A(2, 1) = 15.0 / 16.0;
  Eigen::VectorXd b(3), c(3);
  b << 1.0 / 6.0, 3.0 / 10.0, 8.0 / 15.0;
  c << 0.0, 1.0 / 3.0, 3.0 / 4.0;
  return make_table("KW3", std::move(A), std::move(b), std::move(c));
}

inline ButcherTable make_forward_euler() {
  return make_table("ForwardEuler", Eigen::MatrixXd::Zero(1, 1),
                    Eigen::VectorXd::Ones(1), Eigen::VectorXd::Zero(1));
}

/// Magnitude below which a family denominator is treated as zero.
inline constexpr double kFamilySingularTolerance = 1e-12;

/// Butcher's two-parameter family of explicit 4-stage, 4th-order methods.
///
/// Evaluated in exact rational arithmetic and rounded once per coefficient,
/// so rational inputs such as (1/3, 2/3) reproduce the shipped 3/8-Rule
/// bit for bit.
inline ButcherTable butcher_family(const Rational& c2, const Rational& c3) {
  const Rational one(1);
  const Rational d_joint = -4 * c3 + 6 * c3 * c2 + 3 - 4 * c2;
  const std::array<std::pair<const char*, Rational>, 7> denominators{{
      {"c2", c2},
      {"2c2-1", 2 * c2 - one},
      {"c2-1", c2 - one},
      {"c3", c3},
      {"c3-1", c3 - one},
      {"c3-c2", c3 - c2},
      {"-4c3+6c3c2+3-4c2", d_joint},
  }};
  for (const auto& [label, value] : denominators) {
    const double v = value.convert_to<double>();
    if (std::abs(v) <= kFamilySingularTolerance)
      throw SingularFamilyPoint(label, v);
  }

  std::array<std::array<Rational, 4>, 4> a{};
  a[1][0] = c2;
  a[2][0] = c3 * (c3 + 4 * c2 * c2 - 3 * c2) / (2 * c2 * (2 * c2 - 1));
  a[2][1] = -c3 * (c3 - c2) / (2 * c2 * (2 * c2 - 1));
  a[3][0] = (-12 * c3 * c2 * c2 + 12 * c3 * c3 * c2 * c2 + 4 * c2 * c2 -
             6 * c2 + 15 * c2 * c3 - 12 * c3 * c3 * c2 + 2 + 4 * c3 * c3 -
             5 * c3) /
            (2 * c2 * c3 * d_joint);
  a[3][1] = (c2 - 1) * (4 * c3 * c3 - 5 * c3 + 2 - c2) /
            (2 * c2 * (c3 - c2) * d_joint);
  a[3][2] = -(2 * c2 - 1) * (c2 - 1) * (c3 - 1) / (c3 * (c3 - c2) * d_joint);

  std::array<Rational, 4> b{
      (6 * c3 * c2 - 2 * c3 - 2 * c2 + 1) / (12 * c3 * c2),
      -(2 * c3 - 1) / (12 * c2 * (c2 - 1) * (c3 - c2)),
      (2 * c2 - 1) / (12 * c3 * (c2 - c3 * c2 + c3 * c3 - c3)),
      d_joint / (12 * (c3 - 1) * (c2 - 1)),
  };

  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(4, 4);
  Eigen::VectorXd bv(4), cv(4);
  for (int i = 0; i < 4; ++i) {
    Rational row_sum(0);
    for (int j = 0; j < i; ++j) {
      A(i, j) = a[i][j].convert_to<double>();
      row_sum += a[i][j];
    }
    cv(i) = row_sum.convert_to<double>();
    bv(i) = b[i].convert_to<double>();
  }
  return make_table("Butcher4(" + std::to_string(c2.convert_to<double>()) +
                        "," + std::to_string(c3.convert_to<double>()) + ")",
                    std::move(A), std::move(bv), std::move(cv));
}

inline ButcherTable butcher_family(double c2, double c3) {
  return butcher_family(Rational(c2), Rational(c3));
}

/// Residuals of the eight classical conditions through order 4, in the order
/// b.1, b.c, b.c^2, b.Ac, b.c^3, (b*c).Ac, b.Ac^2, b.AAc.
inline std::array<double, 8> classical_residuals(const ButcherTable& t) {
  const Eigen::VectorXd& b = t.b;
  const Eigen::VectorXd& c = t.c;
  const Eigen::VectorXd c2 = c.cwiseProduct(c);
  const Eigen::VectorXd Ac = t.A * c;
  return {
      std::abs(b.sum() - 1.0),
      std::abs(b.dot(c) - 0.5),
      std::abs(b.dot(c2) - 1.0 / 3.0),
      std::abs(b.dot(Ac) - 1.0 / 6.0),
      std::abs(b.dot(c2.cwiseProduct(c)) - 0.25),
      std::abs(b.cwiseProduct(c).dot(Ac) - 0.125),
      std::abs(b.dot(t.A * c2) - 1.0 / 12.0),
      std::abs(b.dot(t.A * Ac) - 1.0 / 24.0),
  };
}

/// Largest p <= 4 with every classical condition through order p below 1e-10.
inline int classical_order(const ButcherTable& t, double tol = 1e-10) {
  const auto r = classical_residuals(t);
  constexpr std::array<int, 5> last_index{-1, 0, 1, 3, 7};
  int order = 0;
  for (int p = 1; p <= 4; ++p) {
    for (int k = last_index[p - 1] + 1; k <= last_index[p]; ++k)
      if (!(r[k] < tol)) return order;
    order = p;
  }
  return order;
}

/// LHS - 1/3 of the third-order MIS condition on the outer table.
inline double rfsmr3_residual(const ButcherTable& outer) {
  const Eigen::VectorXd Ac = outer.A * outer.c;
  const Eigen::VectorXd& c = outer.c;
  const int s = outer.stages();
  double sum = 0.0;
  for (int i = 1; i < s; ++i) sum += (c(i) - c(i - 1)) * (Ac(i) + Ac(i - 1));
  sum += (1.0 - c(s - 1)) * (0.5 + Ac(s - 1));
  return sum - 1.0 / 3.0;
}

/// The weight vector v^O of the fourth-order RMIS condition v.(A c) = 1/12.
inline Eigen::VectorXd outer_v_vector(const ButcherTable& outer) {
  const int s = outer.stages();
  const Eigen::VectorXd& b = outer.b;
  const Eigen::VectorXd& c = outer.c;
  Eigen::VectorXd v = Eigen::VectorXd::Zero(s);
  if (s < 2) return v;
  for (int i = 1; i < s - 1; ++i)
    v(i) = b(i) * (c(i) - c(i - 1)) +
           (c(i + 1) - c(i - 1)) * b.tail(s - i - 1).sum();
  v(s - 1) = b(s - 1) * (c(s - 1) - c(s - 2));
  return v;
}

/// v^O.(A^O c^O) - 1/12; zero means the RMIS fourth-order condition holds.
inline double rmis4_residual(const ButcherTable& outer) {
  if (outer.stages() < 2)
    throw InvalidOuter("rmis4_residual needs at least two stages");
  return outer_v_vector(outer).dot(outer.A * outer.c) - 1.0 / 12.0;
}

/// Values of the two polynomials whose zero sets, for the 4-stage family, are
/// the MIS third-order curve and the RMIS fourth-order curve.
inline std::pair<double, double> family_condition_curves(double c2,
                                                         double c3) {
  const double mis =
      3.0 * (c2 - 1.0) *
          (6 * c2 * c2 * c3 * c3 - 4 * c2 * c2 * c3 - 6 * c2 * c3 * c3 * c3 +
           8 * c2 * c3 * c3 - 11 * c2 * c3 + 6 * c2 + 4 * c3 * c3 * c3 -
           7 * c3 * c3 + 7 * c3 - 3) -
      2.0 * (2 * c2 - 1) * (4 * c2 + 4 * c3 - 6 * c2 * c3 - 3);
  const double inner = 4 * c2 * (3 * c3 + 1) - 6 * c3 * c3 + 2 * c3 - 3;
  const double rmis = 36 * std::pow(c3, 4) - 120 * std::pow(c3, 3) +
                      80 * c3 * c3 - 12 * c3 + 1 - inner * inner;
  return {mis, rmis};
}

/// The second outer table satisfying both conditions with c2 <= c3, stored as
/// the exact dyadic rationals.
inline std::pair<Rational, Rational> alternate_intersection_point() {
  return {Rational(2502984374488603LL) / Rational(9007199254740992LL),
          Rational(2843567935040037LL) / Rational(4503599627370496LL)};
}

}  // namespace rmis
