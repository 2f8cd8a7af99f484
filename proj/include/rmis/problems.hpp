#pragma once

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "rmis/butcher.hpp"
#include "rmis/errors.hpp"
#include "rmis/stepper.hpp"

namespace rmis {

struct InverterChainParams {
  int n_inverters = 100;
  int n_fast = 3;
  double gamma = 100.0;
  double y_op = 5.0;
  double y_T = 1.0;
  double y_0_pin = 0.0;
  double t0 = 0.0;
  double tf = 7.0;
};

struct BrusselatorParams {
  double a = 1.2;
  double b = 2.5;
  double epsilon = 1e-2;
  Eigen::Vector3d y0{3.9, 1.1, 2.8};
  double t0 = 0.0;
  double tf = 10.0;
};

/// Input voltage of the first inverter.
template <class T = double>
T inverter_input(T t) {
  if (t < 5) return T(0);
  return t - 5;
}

/// Drain current model (max(G-S-T,0))^2 - (max(G-D-T,0))^2.
template <class T = double>
T inverter_g(T yG, T yD, T yS, T yT) {
  const T a = std::max<T>(yG - yS - yT, T(0));
  const T b = std::max<T>(yG - yD - yT, T(0));
  return a * a - b * b;
}

namespace detail {

template <class T>
T inverter_component(const InverterChainParams& p, T t, const Eigen::Matrix<T, Eigen::Dynamic, 1>& y,
                     int k) {
  const T gate = k == 0 ? inverter_input<T>(t) : y(k - 1);
  return T(p.y_op) - y(k) - T(p.gamma) * inverter_g<T>(gate, y(k), T(p.y_0_pin), T(p.y_T));
}

}  // namespace detail

inline MultirateProblem inverter_chain(const InverterChainParams& p = {}) {
  if (p.n_inverters < 1 || p.n_fast < 1 || p.n_fast > p.n_inverters)
    throw InvalidArgument("inverter chain needs 1 <= n_fast <= n_inverters");
  if (!(p.gamma >= 0.0)) throw InvalidArgument("inverter chain needs gamma >= 0");
  if (!(p.tf > p.t0)) throw InvalidArgument("inverter chain needs t0 < tf");

  MultirateProblem prob;
  prob.name = "inverter";
  prob.dim = p.n_inverters;
  prob.f_fast = [p](double t, const Eigen::VectorXd& y) {
    Eigen::VectorXd f = Eigen::VectorXd::Zero(p.n_inverters);
    for (int k = 0; k < p.n_fast; ++k) f(k) = detail::inverter_component(p, t, y, k);
    return f;
  };
  prob.f_slow = [p](double t, const Eigen::VectorXd& y) {
    Eigen::VectorXd f = Eigen::VectorXd::Zero(p.n_inverters);
    for (int k = p.n_fast; k < p.n_inverters; ++k) f(k) = detail::inverter_component(p, t, y, k);
    return f;
  };
  // The chain amplifies rounding errors from stage to stage; a double
  // precision reference stalls near 1e-7.
  prob.f_extended = [p](ExtendedReal t, const ExtendedVector& y) {
    ExtendedVector f(p.n_inverters);
    for (int k = 0; k < p.n_inverters; ++k) f(k) = detail::inverter_component(p, t, y, k);
    return f;
  };
  prob.y0 = Eigen::VectorXd::Zero(p.n_inverters);
  prob.t0 = p.t0;
  prob.tf = p.tf;
  prob.params = {{"n_inverters", p.n_inverters}, {"n_fast", p.n_fast},
                 {"gamma", p.gamma},             {"y_op", p.y_op},
                 {"y_T", p.y_T},                 {"y_0_pin", p.y_0_pin},
                 {"t0", p.t0},                   {"tf", p.tf}};
  return prob;
}

inline Eigen::Matrix2d linear_coupling_matrix() {
  Eigen::Matrix2d G;
  G << -5.0, -1900.0, 5.0, -50.0;
  return G;
}

inline Eigen::Vector2d linear_analytic(double t) {
  const double r = std::sqrt(1439.0);
  const double w = 5.0 * r * t / 2.0;
  const double e = std::exp(-55.0 * t / 2.0);
  return {e * (std::cos(w) - 751.0 / r * std::sin(w)),
          e * (std::cos(w) - 7.0 / r * std::sin(w))};
}

/// Two-component linear problem with strong fast/slow coupling.
inline MultirateProblem linear_coupled() {
  MultirateProblem prob;
  prob.name = "linear";
  prob.dim = 2;
  prob.f_fast = [](double, const Eigen::VectorXd& y) {
    Eigen::VectorXd f(2);
    f << -5.0 * y(0) - 1900.0 * y(1), 0.0;
    return f;
  };
  prob.f_slow = [](double, const Eigen::VectorXd& y) {
    Eigen::VectorXd f(2);
    f << 0.0, 5.0 * y(0) - 50.0 * y(1);
    return f;
  };
  prob.y0 = Eigen::Vector2d(1.0, 1.0);
  prob.t0 = 0.0;
  prob.tf = 1.0;
  prob.analytic = [](double t) -> Eigen::VectorXd { return linear_analytic(t); };
  return prob;
}

inline MultirateProblem brusselator(const BrusselatorParams& p = {}) {
  if (!(p.epsilon > 0.0)) throw InvalidArgument("brusselator needs epsilon > 0");
  if (!(p.tf > p.t0)) throw InvalidArgument("brusselator needs t0 < tf");
  MultirateProblem prob;
  prob.name = "brusselator";
  prob.dim = 3;
  prob.f_fast = [p](double, const Eigen::VectorXd& y) {
    Eigen::VectorXd f(3);
    f << 0.0, 0.0, (p.b - y(2)) / p.epsilon;
    return f;
  };
  prob.f_slow = [p](double, const Eigen::VectorXd& y) {
    Eigen::VectorXd f(3);
    const double y1sq = y(0) * y(0);
    f << p.a - (y(2) + 1.0) * y(0) + y(1) * y1sq, y(2) * y(0) - y(1) * y1sq,
        -y(2) * y(0);
    return f;
  };
  prob.y0 = p.y0;
  prob.t0 = p.t0;
  prob.tf = p.tf;
  prob.params = {{"a", p.a},
                 {"b", p.b},
                 {"epsilon", p.epsilon},
                 {"y0", {p.y0(0), p.y0(1), p.y0(2)}},
                 {"t0", p.t0},
                 {"tf", p.tf}};
  return prob;
}

/// y' = 0.
inline MultirateProblem zero_problem(int dim = 2) {
  MultirateProblem prob;
  prob.name = "zero";
  prob.dim = dim;
  auto zero = [dim](double, const Eigen::VectorXd&) -> Eigen::VectorXd {
    return Eigen::VectorXd::Zero(dim);
  };
  prob.f_fast = zero;
  prob.f_slow = zero;
  prob.y0 = Eigen::VectorXd::LinSpaced(dim, 1.0, static_cast<double>(dim));
  prob.analytic = [y0 = prob.y0](double) { return y0; };
  prob.params = {{"dim", dim}};
  return prob;
}

inline const std::vector<std::string>& problem_names() {
  static const std::vector<std::string> names{"inverter", "linear", "brusselator", "zero"};
  return names;
}

namespace detail {

template <class T>
void take(const nlohmann::json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw InvalidArgument(std::string("parameter '") + key + "' has the wrong type");
  }
}

inline void reject_unknown(const nlohmann::json& j, std::initializer_list<const char*> keys) {
  for (const auto& [k, v] : j.items()) {
    bool known = false;
    for (const char* key : keys) known = known || k == key;
    if (!known) throw InvalidArgument("unknown problem parameter '" + k + "'");
  }
}

}  // namespace detail

/// Problem by name with optional parameter overrides.
inline MultirateProblem problem_by_name(const std::string& name,
                                        const nlohmann::json& overrides = nlohmann::json::object()) {
  if (!overrides.is_object()) throw InvalidArgument("problem parameters must be a JSON object");
  if (name == "inverter") {
    detail::reject_unknown(overrides, {"n_inverters", "n_fast", "gamma", "y_op", "y_T",
                                       "y_0_pin", "t0", "tf"});
    InverterChainParams p;
    detail::take(overrides, "n_inverters", p.n_inverters);
    detail::take(overrides, "n_fast", p.n_fast);
    detail::take(overrides, "gamma", p.gamma);
    detail::take(overrides, "y_op", p.y_op);
    detail::take(overrides, "y_T", p.y_T);
    detail::take(overrides, "y_0_pin", p.y_0_pin);
    detail::take(overrides, "t0", p.t0);
    detail::take(overrides, "tf", p.tf);
    return inverter_chain(p);
  }
  if (name == "linear") {
    detail::reject_unknown(overrides, {});
    return linear_coupled();
  }
  if (name == "brusselator") {
    detail::reject_unknown(overrides, {"a", "b", "epsilon", "y0", "t0", "tf"});
    BrusselatorParams p;
    detail::take(overrides, "a", p.a);
    detail::take(overrides, "b", p.b);
    detail::take(overrides, "epsilon", p.epsilon);
    detail::take(overrides, "t0", p.t0);
    detail::take(overrides, "tf", p.tf);
    if (overrides.contains("y0")) {
      std::vector<double> y0;
      detail::take(overrides, "y0", y0);
      if (y0.size() != 3) throw InvalidArgument("brusselator y0 needs 3 entries");
      p.y0 = Eigen::Vector3d(y0[0], y0[1], y0[2]);
    }
    return brusselator(p);
  }
  if (name == "zero") {
    detail::reject_unknown(overrides, {"dim"});
    int dim = 2;
    detail::take(overrides, "dim", dim);
    if (dim < 1) throw InvalidArgument("zero problem needs dim >= 1");
    return zero_problem(dim);
  }
  throw InvalidArgument("unknown problem '" + name + "'");
}

// ---------------------------------------------------------------------------
// Reference solutions

/// States on a uniform grid t0 + k*spacing, k = first..first+count-1.
struct ReferenceSolution {
  std::vector<double> t;
  Eigen::MatrixXd y;  // one row per grid point
  double h_ref = 0.0;
  int halvings = 0;
  double rms_change = 0.0;
};

/// RMS over grid points and components, as used for errors.
inline double rms_difference(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  if (a.size() == 0) return 0.0;
  const double s = (a - b).squaredNorm() / static_cast<double>(a.size());
  return std::sqrt(s);
}

inline constexpr double kDefaultReferenceTolerance = 1e-11;
inline constexpr int kMaxReferenceHalvings = 24;

namespace detail {

struct UniformGrid {
  long first = 0;  // index of t_grid[0] in units of spacing from t0
  double spacing = 0.0;
  long count = 0;
};

inline UniformGrid classify_grid(const MultirateProblem& p, const std::vector<double>& t) {
  if (t.empty()) throw InvalidArgument("reference grid is empty");
  const double span = p.tf - p.t0;
  const double tol = 1e-9 * std::max(1.0, std::abs(span));
  for (double x : t)
    if (x < p.t0 - tol || x > p.tf + tol)
      throw InvalidArgument("reference grid point outside the time span");
  UniformGrid g;
  g.count = static_cast<long>(t.size());
  if (t.size() == 1) {
    g.spacing = t[0] - p.t0;
    g.first = 1;
    if (!(g.spacing > 0.0)) {
      g.spacing = span;
      g.first = 0;
    }
    return g;
  }
  g.spacing = (t.back() - t.front()) / static_cast<double>(t.size() - 1);
  if (!(g.spacing > 0.0)) throw InvalidArgument("reference grid must be increasing");
  for (std::size_t k = 0; k < t.size(); ++k)
    if (std::abs(t[k] - (t.front() + k * g.spacing)) > tol)
      throw InvalidArgument("reference grid must be uniformly spaced");
  const double off = (t.front() - p.t0) / g.spacing;
  g.first = std::lround(off);
  if (std::abs(off - g.first) > 1e-9)
    throw InvalidArgument("reference grid must be aligned with t0");
  return g;
}

/// Fixed-step 3/8-Rule with `sub` steps per grid spacing, in the scalar
/// type of `rhs`.
template <class T, class RHS>
Eigen::MatrixXd fine_solve(const MultirateProblem& p, const UniformGrid& g, long sub,
                           const RHS& rhs) {
  using Vec = Eigen::Matrix<T, Eigen::Dynamic, 1>;
  static const ButcherTable rk = make_three_eighths();
  const T h = T(g.spacing) / T(sub);
  const T t0(p.t0);
  Eigen::MatrixXd out(g.count, p.dim);
  Vec y = p.y0.cast<T>();
  std::vector<Vec> K(rk.stages());
  Vec Y;
  long next_row = 0;
  const long last_step = (g.first + g.count - 1) * sub;
  if (g.first == 0) out.row(next_row++) = p.y0.transpose();
  for (long n = 0; n < last_step; ++n) {
    const T t = t0 + T(n) * h;
    for (int i = 0; i < rk.stages(); ++i) {
      Y = y;
      for (int j = 0; j < i; ++j)
        if (rk.A(i, j) != 0.0) Y += (h * T(rk.A(i, j))) * K[j];
      K[i] = rhs(t + T(rk.c(i)) * h, Y);
    }
    for (int i = 0; i < rk.stages(); ++i) y += (h * T(rk.b(i))) * K[i];
    using std::isfinite;
    bool finite = true;
    for (Eigen::Index k = 0; k < y.size(); ++k) finite = finite && isfinite(y(k));
    if (!finite) {
      out.setConstant(std::numeric_limits<double>::infinity());
      return out;
    }
    if ((n + 1) % sub == 0 && (n + 1) / sub >= g.first)
      out.row(next_row++) = y.template cast<double>().transpose();
  }
  return out;
}

inline Eigen::MatrixXd fine_solve(const MultirateProblem& p, const UniformGrid& g, long sub) {
  if (p.f_extended) return fine_solve<ExtendedReal>(p, g, sub, p.f_extended);
  return fine_solve<double>(p, g, sub, [&p](double t, const Eigen::VectorXd& y) {
    return Eigen::VectorXd(p.f_fast(t, y) + p.f_slow(t, y));
  });
}

}  // namespace detail

/// Successive halving of a fine 3/8-Rule step until two levels agree to
/// target_rms on the grid. Runs in quad precision when the problem has
/// f_extended.
inline ReferenceSolution reference_solution(const MultirateProblem& problem,
                                            const std::vector<double>& t_grid,
                                            double target_rms = kDefaultReferenceTolerance,
                                            int max_halvings = kMaxReferenceHalvings) {
  if (!(target_rms > 0.0)) throw InvalidArgument("target_rms must be positive");
  const auto grid = detail::classify_grid(problem, t_grid);
  ReferenceSolution ref;
  ref.t = t_grid;
  Eigen::MatrixXd prev = detail::fine_solve(problem, grid, 1);
  for (int k = 1; k <= max_halvings; ++k) {
    const long sub = 1L << k;
    Eigen::MatrixXd cur = detail::fine_solve(problem, grid, sub);
    const double change = rms_difference(cur, prev);
    if (change < target_rms) {
      ref.y = std::move(cur);
      ref.h_ref = grid.spacing / static_cast<double>(sub);
      ref.halvings = k;
      ref.rms_change = change;
      return ref;
    }
    prev = std::move(cur);
  }
  throw NoConvergence("reference solution did not reach RMS change " +
                      std::to_string(target_rms) + " after " +
                      std::to_string(max_halvings) + " halvings");
}

/// 64-bit FNV-1a.
inline std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 1099511628211ULL;
  }
  return h;
}

inline std::filesystem::path default_refcache_dir() {
  if (const char* env = std::getenv("MULTIRATE_REFCACHE"); env && *env) return env;
  return "refcache";
}

inline nlohmann::json reference_key(const MultirateProblem& p, const std::vector<double>& t_grid,
                                    double target_rms) {
  std::vector<double> y0(p.y0.data(), p.y0.data() + p.y0.size());
  return {{"engine", "3/8-Rule halving v1"},
          {"precision", p.f_extended ? "float128" : "double"},
          {"problem", p.name},
          {"params", p.params},
          {"t0", p.t0},
          {"y0", y0},
          {"grid", {{"first", t_grid.front()}, {"last", t_grid.back()}, {"count", t_grid.size()}}},
          {"target_rms", target_rms}};
}

/// reference_solution with an on-disk cache: <hash>.bin holds the states
/// row-major, <hash>.json the key and metadata.
inline ReferenceSolution cached_reference(const MultirateProblem& problem,
                                          const std::vector<double>& t_grid,
                                          double target_rms,
                                          const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  const nlohmann::json key = reference_key(problem, t_grid, target_rms);
  char name[17];
  std::snprintf(name, sizeof name, "%016llx",
                static_cast<unsigned long long>(fnv1a(key.dump())));
  const fs::path bin = dir / (std::string(name) + ".bin");
  const fs::path manifest = dir / (std::string(name) + ".json");

  std::error_code ec;
  if (fs::exists(manifest, ec) && fs::exists(bin, ec)) {
    try {
      std::ifstream mf(manifest);
      const auto m = nlohmann::json::parse(mf);
      const auto rows = m.at("rows").get<long>();
      const auto cols = m.at("cols").get<long>();
      if (m.at("key") == key && rows == static_cast<long>(t_grid.size()) && cols == problem.dim) {
        ReferenceSolution ref;
        ref.t = t_grid;
        ref.y.resize(rows, cols);
        Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> buf(rows, cols);
        std::ifstream bf(bin, std::ios::binary);
        bf.read(reinterpret_cast<char*>(buf.data()),
                static_cast<std::streamsize>(sizeof(double) * rows * cols));
        if (bf.gcount() == static_cast<std::streamsize>(sizeof(double) * rows * cols)) {
          ref.y = buf;
          ref.h_ref = m.at("h_ref").get<double>();
          ref.halvings = m.at("halvings").get<int>();
          ref.rms_change = m.at("rms_change").get<double>();
          return ref;
        }
      }
    } catch (const std::exception&) {
      // unreadable entry: recompute and overwrite
    }
  }

  ReferenceSolution ref = reference_solution(problem, t_grid, target_rms);
  fs::create_directories(dir, ec);
  if (ec) return ref;
  const std::string tag = "." + std::to_string(std::random_device{}()) + ".tmp";
  {
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> buf = ref.y;
    std::ofstream bf(bin.string() + tag, std::ios::binary);
    bf.write(reinterpret_cast<const char*>(buf.data()),
             static_cast<std::streamsize>(sizeof(double) * buf.size()));
  }
  {
    std::ofstream mf(manifest.string() + tag);
    mf << nlohmann::json{{"key", key},
                         {"rows", ref.y.rows()},
                         {"cols", ref.y.cols()},
                         {"h_ref", ref.h_ref},
                         {"halvings", ref.halvings},
                         {"rms_change", ref.rms_change}}
              .dump(2);
  }
  fs::rename(bin.string() + tag, bin, ec);
  fs::rename(manifest.string() + tag, manifest, ec);
  return ref;
}

}  // namespace rmis
