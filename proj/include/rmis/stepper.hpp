#pragma once

#include <Eigen/Dense>
#include <boost/multiprecision/float128.hpp>
#include <nlohmann/json.hpp>

#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "rmis/butcher.hpp"
#include "rmis/errors.hpp"
#include "rmis/gark.hpp"

namespace rmis {

using ExtendedReal = boost::multiprecision::float128;
using ExtendedVector = Eigen::Matrix<ExtendedReal, Eigen::Dynamic, 1>;

/// y' = f_fast(t, y) + f_slow(t, y). Partitioned problems are expressed by
/// zero-padding each callback outside its own components.
template <class State>
struct BasicMultirateProblem {
  using RHS = std::function<State(double, const State&)>;

  std::string name;
  int dim = 0;
  RHS f_fast;
  RHS f_slow;
  State y0;
  double t0 = 0.0;
  double tf = 1.0;
  std::function<State(double)> analytic;
  // Optional f_fast + f_slow in quad precision; the reference engine prefers it.
  std::function<ExtendedVector(ExtendedReal, const ExtendedVector&)> f_extended;
  nlohmann::json params = nlohmann::json::object();
};

using MultirateProblem = BasicMultirateProblem<Eigen::VectorXd>;

enum class MethodKind { MIS, RMIS, RMIS_with_MIS_embedding, Unstructured };

inline const char* kind_name(MethodKind k) {
  switch (k) {
    case MethodKind::MIS: return "MIS";
    case MethodKind::RMIS: return "RMIS";
    case MethodKind::RMIS_with_MIS_embedding: return "RMIS+MIS";
    case MethodKind::Unstructured: return "Unstructured";
  }
  return "?";
}

/// Outer/inner pair plus subcycling schedule. For Unstructured methods
/// fast_weights holds one weight per active fast stage (stages lying in
/// nonzero-width intervals, in substep order).
struct MethodSpec {
  std::string name;
  MethodKind kind = MethodKind::RMIS;
  ButcherTable outer;
  ButcherTable inner;
  std::vector<int> subcycles;  // one entry per nonzero-width outer interval
  Eigen::VectorXd fast_weights;
};

/// n equal substeps of t_inner over the unit interval, as a single table.
inline ButcherTable subcycle_inner(const ButcherTable& t, int n) {
  if (n < 1) throw InvalidArgument("subcycle count must be positive");
  if (n == 1) return t;
  const int s = t.stages();
  const int N = n * s;
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(N, N);
  Eigen::VectorXd b(N), c(N);
  for (int q = 0; q < n; ++q) {
    A.block(q * s, q * s, s, s) = t.A / n;
    for (int p = 0; p < q; ++p)
      A.block(q * s, p * s, s, s).rowwise() = t.b.transpose() / n;
    b.segment(q * s, s) = t.b / n;
    c.segment(q * s, s) = (Eigen::VectorXd::Constant(s, q) + t.c) / n;
  }
  return make_table(t.name + "x" + std::to_string(n), std::move(A), std::move(b),
                    std::move(c));
}

namespace detail {

inline std::vector<double> interval_widths(const ButcherTable& outer) {
  std::vector<double> w(outer.stages());
  for (int i = 0; i < outer.stages(); ++i) w[i] = interval_width(outer, i);
  return w;
}

}  // namespace detail

inline int nonzero_interval_count(const ButcherTable& outer) {
  int k = 0;
  for (double w : detail::interval_widths(outer))
    if (w > 0.0) ++k;
  return k;
}

/// Equal subcycle count on every nonzero-width interval so that the total
/// reaches m; one extra substep when the intervals differ in width.
inline std::vector<int> default_subcycles(const ButcherTable& outer, int m) {
  if (m < 1) throw InvalidArgument("m must be positive");
  std::vector<double> widths;
  for (double w : detail::interval_widths(outer))
    if (w > 0.0) widths.push_back(w);
  if (widths.empty()) throw InvalidOuter(outer.name + ": no nonzero-width interval");
  const int k = static_cast<int>(widths.size());
  int n = (m + k - 1) / k;
  for (double w : widths)
    if (std::abs(w - widths.front()) > 1e-12) {
      ++n;
      break;
    }
  return std::vector<int>(k, n);
}

/// Subcycle count per outer interval (0 for zero-width intervals).
inline std::vector<int> interval_schedule(const MethodSpec& spec) {
  const auto widths = detail::interval_widths(spec.outer);
  std::vector<int> n(widths.size(), 0);
  std::size_t k = 0;
  for (std::size_t i = 0; i < widths.size(); ++i) {
    if (widths[i] <= 0.0) continue;
    if (k >= spec.subcycles.size())
      throw InvalidArgument(spec.name + ": too few subcycle counts");
    n[i] = spec.subcycles[k++];
    if (n[i] < 1) throw InvalidArgument(spec.name + ": subcycle counts must be positive");
  }
  if (k != spec.subcycles.size())
    throw InvalidArgument(spec.name + ": too many subcycle counts");
  return n;
}

/// Inner table per outer interval: the subcycled composition on nonzero
/// intervals, the plain inner table on zero-width ones.
inline std::vector<ButcherTable> interval_inners(const MethodSpec& spec) {
  const auto n = interval_schedule(spec);
  std::vector<ButcherTable> inners;
  for (int ni : n) inners.push_back(ni > 0 ? subcycle_inner(spec.inner, ni) : spec.inner);
  return inners;
}

inline void validate_spec(const MethodSpec& spec) {
  detail::validate_outer(spec.outer);
  if (!spec.inner.is_explicit())
    throw InvalidArgument(spec.inner.name + ": implicit inner tables are not supported");
  if (spec.kind != MethodKind::MIS && !spec.inner.explicit_first_stage())
    throw InnerNotExplicitFirstStage();
  const auto n = interval_schedule(spec);
  if (spec.kind == MethodKind::Unstructured) {
    long active = 0;
    for (int ni : n) active += static_cast<long>(ni) * spec.inner.stages();
    if (spec.fast_weights.size() != active)
      throw InvalidArgument(spec.name + ": fast weight count does not match schedule");
  }
}

/// The GARK tableau realized by a method spec.
inline GarkTableau tableau_for(const MethodSpec& spec) {
  validate_spec(spec);
  const auto inners = interval_inners(spec);
  GarkTableau g;
  switch (spec.kind) {
    case MethodKind::MIS: g = assemble_mis(spec.outer, inners); break;
    case MethodKind::RMIS: g = assemble_rmis(spec.outer, inners, false); break;
    case MethodKind::RMIS_with_MIS_embedding:
      g = assemble_rmis(spec.outer, inners, true);
      break;
    case MethodKind::Unstructured:
      g = assemble_mis(spec.outer, inners);
      g.b_f = pad_fast_weights(g, spec.fast_weights);
      g.provenance.kind = "Unstructured";
      break;
  }
  g.provenance.inner = spec.inner.name;
  return g;
}

/// Per-step cost s_I * sum(n_i) + s_O.
inline long nominal_calls_per_step(const MethodSpec& spec) {
  long n = 0;
  for (int ni : spec.subcycles) n += ni;
  return n * spec.inner.stages() + spec.outer.stages();
}

// ---------------------------------------------------------------------------
// Method catalog

inline const std::vector<std::string>& method_names() {
  static const std::vector<std::string> names{
      "mis-38", "mis-kw3", "rmis-38", "rmis-kw3", "opt-38-minnorm",
      "rmis-38-emb", "rmis-kw3-emb"};
  return names;
}

/// The shipped methods, with the default subcycle schedule for m.
inline MethodSpec make_method(const std::string& name, int m) {
  MethodSpec spec;
  spec.name = name;
  const bool kw3 = name.find("kw3") != std::string::npos;
  spec.outer = kw3 ? make_kw3() : make_three_eighths();
  spec.inner = spec.outer;
  if (name == "mis-38" || name == "mis-kw3") {
    spec.kind = MethodKind::MIS;
  } else if (name == "rmis-38" || name == "rmis-kw3") {
    spec.kind = MethodKind::RMIS;
  } else if (name == "rmis-38-emb" || name == "rmis-kw3-emb") {
    spec.kind = MethodKind::RMIS_with_MIS_embedding;
  } else if (name == "opt-38-minnorm") {
    spec.kind = MethodKind::Unstructured;
  } else {
    throw InvalidArgument("unknown method '" + name + "'");
  }
  spec.subcycles = default_subcycles(spec.outer, m);
  if (spec.kind == MethodKind::Unstructured) {
    for (int n : spec.subcycles)
      if (n != spec.subcycles.front())
        throw InvalidArgument(name + ": needs an even subcycle schedule");
    spec.fast_weights = optimize_fast_weights(
        spec.outer, subcycle_inner(spec.inner, spec.subcycles.front()));
  }
  return spec;
}

// ---------------------------------------------------------------------------
// Memory-efficient step

template <class State>
struct StepOutput {
  State y_next;
  std::optional<State> y_embedded;
  long n_fast_calls = 0;
  long n_slow_calls = 0;
};

/// Scratch reused across steps: the running solution, one accumulator, the
/// interval base, slow increment and fast increment, the inner-stage slopes
/// and the slow-stage slopes (s_I + s_O + 5 vectors).
template <class State>
struct StepWorkspace {
  State v;
  State acc;
  State base;
  State slow;
  State fast;
  std::vector<State> F;
  std::vector<State> Fs;
  std::vector<int> schedule;
  std::vector<double> widths;

  void prepare(const MethodSpec& spec, const State& like) {
    v = like;
    acc = like;
    base = like;
    slow = like;
    fast = like;
    F.assign(spec.inner.stages(), like);
    Fs.assign(spec.outer.stages(), like);
    schedule = interval_schedule(spec);
    widths = detail::interval_widths(spec.outer);
  }
};

namespace detail {

template <class State>
void require_finite(const State& x, const char* where, int stage, double t) {
  if (!x.allFinite()) throw NonFiniteState(where, stage, t);
}

}  // namespace detail

/// One step of size h. Each outer interval is traversed by n_i substeps of
/// the inner method on the fast right-hand side, forced by a constant
/// combination of the slow slopes collected so far. The forcing is applied
/// in closed form, v = base + tau * slow + fast, so components without a
/// fast part pick up no rounding from the substeps.
template <class State>
StepOutput<State> step(const BasicMultirateProblem<State>& problem,
                       const MethodSpec& spec, double t_n, const State& y_n,
                       double h, StepWorkspace<State>& ws) {
  if (!(h > 0.0)) throw InvalidArgument("step size must be positive");
  if (ws.Fs.size() != static_cast<std::size_t>(spec.outer.stages()) ||
      ws.F.size() != static_cast<std::size_t>(spec.inner.stages()) ||
      ws.v.size() != y_n.size())
    ws.prepare(spec, y_n);
  else
    ws.schedule = interval_schedule(spec);

  const ButcherTable& O = spec.outer;
  const ButcherTable& I = spec.inner;
  const int so = O.stages();
  const int si = I.stages();
  const bool relaxed = spec.kind == MethodKind::RMIS ||
                       spec.kind == MethodKind::RMIS_with_MIS_embedding;
  const bool unstructured = spec.kind == MethodKind::Unstructured;

  StepOutput<State> out;
  State& v = ws.v;
  State& acc = ws.acc;  // RMIS / unstructured solution
  v = y_n;
  if (relaxed || unstructured) acc = y_n;

  // h * sum_l d_l Fs[l], d = (next outer row) - (row i)
  auto slow_increment = [&](State& x, int i) {
    x.setZero();
    for (int l = 0; l <= i; ++l) {
      const double next = (i + 1 < so) ? O.A(i + 1, l) : O.b(l);
      const double d = next - O.A(i, l);
      if (d != 0.0) x += (h * d) * ws.Fs[l];
    }
  };

  long weight_index = 0;
  for (int i = 0; i < so; ++i) {
    const double ti = t_n + O.c(i) * h;
    ws.Fs[i] = problem.f_slow(ti, v);
    ++out.n_slow_calls;
    detail::require_finite(ws.Fs[i], "slow stage", i, ti);
    if (relaxed) acc += (h * O.b(i)) * ws.Fs[i];
    slow_increment(ws.slow, i);

    const int n = ws.schedule[i];
    const double w = ws.widths[i];
    if (n == 0) {
      if (relaxed) {
        ws.F[0] = problem.f_fast(ti, v);
        ++out.n_fast_calls;
        detail::require_finite(ws.F[0], "fast stage", i * si, ti);
        acc += (h * O.b(i)) * ws.F[0];
      }
      v += ws.slow;
      continue;
    }

    ws.base = v;
    ws.fast.setZero();
    const double dt = w * h / n;
    for (int q = 0; q < n; ++q) {
      for (int j = 0; j < si; ++j) {
        State& Fj = ws.F[j];
        const double tau = (q + I.c(j)) / n;
        Fj = ws.base + ws.fast;
        if (tau != 0.0) Fj += tau * ws.slow;
        for (int l = 0; l < j; ++l)
          if (I.A(j, l) != 0.0) Fj += (dt * I.A(j, l)) * ws.F[l];
        const double t = t_n + (O.c(i) + w * tau) * h;
        Fj = problem.f_fast(t, Fj);
        ++out.n_fast_calls;
        detail::require_finite(Fj, "fast stage", i * si + j, t);
        if (relaxed && q == 0 && j == 0) acc += (h * O.b(i)) * Fj;
      }
      for (int j = 0; j < si; ++j) {
        if (I.b(j) != 0.0) ws.fast += (dt * I.b(j)) * ws.F[j];
        if (unstructured) {
          const double bw = spec.fast_weights(weight_index++);
          if (bw != 0.0) acc += (h * bw) * ws.F[j];
        }
      }
    }
    v = ws.base + ws.slow + ws.fast;
    detail::require_finite(v, "outer interval", i, t_n + h * O.c(i));
  }

  if (unstructured) {
    for (int l = 0; l < so; ++l) acc += (h * O.b(l)) * ws.Fs[l];
  }

  if (relaxed || unstructured) {
    out.y_next = acc;
    if (spec.kind == MethodKind::RMIS_with_MIS_embedding) out.y_embedded = v;
  } else {
    out.y_next = v;
  }
  detail::require_finite(out.y_next, "solution", -1, t_n + h);
  return out;
}

template <class State>
StepOutput<State> step(const BasicMultirateProblem<State>& problem,
                       const MethodSpec& spec, double t_n, const State& y_n,
                       double h) {
  StepWorkspace<State> ws;
  ws.prepare(spec, y_n);
  return step(problem, spec, t_n, y_n, h, ws);
}

// ---------------------------------------------------------------------------
// Dense GARK step (oracle)

template <class State>
struct DenseStepResult {
  State y_next;
  std::optional<State> y_embedded;
};

/// Order in which the combined fast+slow stages can be computed explicitly;
/// fast stages are numbered 0..s_f-1, slow stages s_f..s_f+s_s-1.
inline std::vector<int> explicit_stage_order(const GarkTableau& g) {
  const int sf = g.fast_stages();
  const int ss = g.slow_stages();
  const int N = sf + ss;
  auto coeff = [&](int i, int j) {
    const bool fi = i < sf, fj = j < sf;
    const int ri = fi ? i : i - sf, cj = fj ? j : j - sf;
    if (fi) return fj ? g.A_ff(ri, cj) : g.A_fs(ri, cj);
    return fj ? g.A_sf(ri, cj) : g.A_ss(ri, cj);
  };
  std::vector<int> indegree(N, 0);
  std::vector<std::vector<int>> dependents(N);
  for (int i = 0; i < N; ++i)
    for (int j = 0; j < N; ++j)
      if (coeff(i, j) != 0.0) {
        if (i == j) throw NotExplicitlyOrderable("stage " + std::to_string(i) + " depends on itself");
        ++indegree[i];
        dependents[j].push_back(i);
      }
  std::vector<int> order, ready;
  for (int i = N - 1; i >= 0; --i)
    if (indegree[i] == 0) ready.push_back(i);
  while (!ready.empty()) {
    const int k = ready.back();
    ready.pop_back();
    order.push_back(k);
    for (int d : dependents[k])
      if (--indegree[d] == 0) ready.push_back(d);
  }
  if (static_cast<int>(order.size()) != N)
    throw NotExplicitlyOrderable("combined stage dependencies contain a cycle");
  return order;
}

/// All stages of the expanded tableau computed literally, then the update.
template <class State>
DenseStepResult<State> dense_gark_step(const GarkTableau& g,
                                       const BasicMultirateProblem<State>& problem,
                                       double t_n, const State& y_n, double h) {
  const int sf = g.fast_stages();
  const int ss = g.slow_stages();
  const auto order = explicit_stage_order(g);
  std::vector<State> Ff(sf, y_n), Fs(ss, y_n);
  for (int k : order) {
    const bool fast = k < sf;
    const int r = fast ? k : k - sf;
    const auto& Af = fast ? g.A_ff : g.A_sf;
    const auto& As = fast ? g.A_fs : g.A_ss;
    State Y = y_n;
    for (int j = 0; j < sf; ++j)
      if (Af(r, j) != 0.0) Y += (h * Af(r, j)) * Ff[j];
    for (int j = 0; j < ss; ++j)
      if (As(r, j) != 0.0) Y += (h * As(r, j)) * Fs[j];
    if (fast) {
      const double t = t_n + g.c_f(r) * h;
      Ff[r] = problem.f_fast(t, Y);
      detail::require_finite(Ff[r], "fast stage", r, t);
    } else {
      const double t = t_n + g.c_s(r) * h;
      Fs[r] = problem.f_slow(t, Y);
      detail::require_finite(Fs[r], "slow stage", r, t);
    }
  }
  auto update = [&](const Eigen::VectorXd& bf) {
    State y = y_n;
    for (int j = 0; j < sf; ++j)
      if (bf(j) != 0.0) y += (h * bf(j)) * Ff[j];
    for (int j = 0; j < ss; ++j)
      if (g.b_s(j) != 0.0) y += (h * g.b_s(j)) * Fs[j];
    return y;
  };
  DenseStepResult<State> res{update(g.b_f), std::nullopt};
  if (g.b_f_embedded) res.y_embedded = update(*g.b_f_embedded);
  return res;
}

// ---------------------------------------------------------------------------
// Fixed-step integration

template <class State>
struct Trajectory {
  std::vector<double> t;
  std::vector<State> y;
  long steps = 0;
  long fast_calls = 0;
  long slow_calls = 0;
};

/// Fixed steps t0 + n h; a final short step covers any remainder.
template <class State>
Trajectory<State> integrate(const BasicMultirateProblem<State>& problem,
                            const MethodSpec& spec, double h) {
  if (!(h > 0.0)) throw InvalidArgument("step size must be positive");
  validate_spec(spec);
  const double span = problem.tf - problem.t0;
  if (!(span > 0.0)) throw InvalidArgument("empty time span");
  auto M = static_cast<long>(std::floor(span / h + 1e-9));
  const double rest = span - static_cast<double>(M) * h;
  const bool short_step = rest > 1e-12 * span;

  Trajectory<State> traj;
  traj.t.reserve(M + 2);
  traj.y.reserve(M + 2);
  traj.t.push_back(problem.t0);
  traj.y.push_back(problem.y0);
  StepWorkspace<State> ws;
  ws.prepare(spec, problem.y0);
  const long total = M + (short_step ? 1 : 0);
  for (long n = 0; n < total; ++n) {
    const double t = problem.t0 + static_cast<double>(n) * h;
    const double hn = (n < M) ? h : rest;
    auto out = step(problem, spec, t, traj.y.back(), hn, ws);
    traj.fast_calls += out.n_fast_calls;
    traj.slow_calls += out.n_slow_calls;
    ++traj.steps;
    traj.t.push_back(n + 1 < total || !short_step
                         ? problem.t0 + static_cast<double>(n + 1) * h
                         : problem.tf);
    traj.y.push_back(std::move(out.y_next));
  }
  return traj;
}

}  // namespace rmis
