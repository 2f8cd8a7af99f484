#pragma once

#include <Eigen/Dense>
#include <Eigen/SVD>

#include <algorithm>
#include <array>
#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "rmis/butcher.hpp"
#include "rmis/errors.hpp"

namespace rmis {

/// Which rate a GARK coefficient block belongs to.
enum class Rate { fast, slow };

inline char rate_letter(Rate r) { return r == Rate::fast ? 'f' : 's'; }

/// One block row of the fast stages: the inner method run across the outer
/// interval [c_i, c_{i+1}] (with c_{s+1} = 1).
struct FastBlock {
  int offset = 0;
  int stages = 0;
  double width = 0.0;
};

/// Two-rate GARK tableau.
struct GarkTableau {
  Eigen::MatrixXd A_ff, A_fs, A_sf, A_ss;
  Eigen::VectorXd b_f, b_s, c_f, c_s;
  std::optional<Eigen::VectorXd> b_f_embedded;

  struct Provenance {
    std::string outer;
    std::string inner;
    std::string kind;
  } provenance;

  /// Block structure of the fast stages; empty for tableaus not assembled
  /// from an outer/inner pair.
  std::vector<FastBlock> blocks;

  int fast_stages() const { return static_cast<int>(b_f.size()); }
  int slow_stages() const { return static_cast<int>(b_s.size()); }

  const Eigen::MatrixXd& A(Rate row, Rate col) const {
    if (row == Rate::fast) return col == Rate::fast ? A_ff : A_fs;
    return col == Rate::fast ? A_sf : A_ss;
  }
  const Eigen::VectorXd& b(Rate r) const { return r == Rate::fast ? b_f : b_s; }
  const Eigen::VectorXd& c(Rate r) const { return r == Rate::fast ? c_f : c_s; }
};

/// max over both partitions of |row sums of each block row - c|.
inline double internal_consistency_residual(const GarkTableau& g) {
  double r = 0.0;
  for (Rate row : {Rate::fast, Rate::slow}) {
    if (g.c(row).size() == 0) continue;
    for (Rate col : {Rate::fast, Rate::slow}) {
      const Eigen::VectorXd sums = g.A(row, col).rowwise().sum();
      r = std::max(r, (sums - g.c(row)).cwiseAbs().maxCoeff());
    }
  }
  return r;
}

namespace detail {

inline void validate_outer(const ButcherTable& outer) {
  if (!outer.is_explicit())
    throw InvalidOuter(outer.name + ": outer table must be explicit");
  if (outer.c(0) != 0.0)
    throw InvalidOuter(outer.name + ": outer table needs c_1 = 0");
  for (int i = 1; i < outer.stages(); ++i)
    if (outer.c(i) < outer.c(i - 1))
      throw InvalidOuter(outer.name + ": outer abcissae must be nondecreasing");
  if (outer.c(outer.stages() - 1) > 1.0)
    throw InvalidOuter(outer.name + ": outer abcissae must not exceed 1");
}

/// Width of outer interval i, where the interval after the last stage ends at 1.
inline double interval_width(const ButcherTable& outer, int i) {
  const int s = outer.stages();
  const double upper = (i + 1 < s) ? outer.c(i + 1) : 1.0;
  return upper - outer.c(i);
}

/// Row i+1 of A^O, or b^O past the last stage.
inline Eigen::RowVectorXd next_outer_row(const ButcherTable& outer, int i) {
  if (i + 1 < outer.stages()) return outer.A.row(i + 1);
  return outer.b.transpose();
}

}  // namespace detail

/// Assemble the MIS tableau from an outer table and one inner table per
/// outer interval (possibly differing, e.g. for unevenly spaced abcissae).
inline GarkTableau assemble_mis(const ButcherTable& outer,
                                std::span<const ButcherTable> inners) {
  detail::validate_outer(outer);
  const int so = outer.stages();
  if (static_cast<int>(inners.size()) != so)
    throw InvalidArgument("assemble_mis: need one inner table per outer stage");

  GarkTableau g;
  int sf = 0;
  for (int i = 0; i < so; ++i) {
    g.blocks.push_back({sf, inners[i].stages(), detail::interval_width(outer, i)});
    sf += inners[i].stages();
  }

  g.A_ff = Eigen::MatrixXd::Zero(sf, sf);
  g.A_fs = Eigen::MatrixXd::Zero(sf, so);
  g.A_sf = Eigen::MatrixXd::Zero(so, sf);
  g.A_ss = outer.A;
  g.b_s = outer.b;
  g.c_s = outer.c;
  g.b_f = Eigen::VectorXd::Zero(sf);
  g.c_f = Eigen::VectorXd::Zero(sf);

  for (int i = 0; i < so; ++i) {
    const ButcherTable& in = inners[i];
    const FastBlock& bi = g.blocks[i];
    const int si = in.stages();
    g.A_ff.block(bi.offset, bi.offset, si, si) = bi.width * in.A;
    for (int j = 0; j < i; ++j) {
      const FastBlock& bj = g.blocks[j];
      g.A_ff.block(bi.offset, bj.offset, si, bj.stages).rowwise() =
          bj.width * inners[j].b.transpose();
    }
    const Eigen::RowVectorXd row_i = outer.A.row(i);
    const Eigen::RowVectorXd delta = detail::next_outer_row(outer, i) - row_i;
    for (int r = 0; r < si; ++r)
      g.A_fs.row(bi.offset + r) = row_i + in.c(r) * delta;
    g.c_f.segment(bi.offset, si) =
        Eigen::VectorXd::Constant(si, outer.c(i)) + bi.width * in.c;
    g.b_f.segment(bi.offset, si) = bi.width * in.b;
    for (int k = i + 1; k < so; ++k)
      g.A_sf.block(k, bi.offset, 1, si) = bi.width * in.b.transpose();
  }

  g.provenance = {outer.name, inners.empty() ? "" : inners[0].name, "MIS"};
  return g;
}

inline GarkTableau assemble_mis(const ButcherTable& outer,
                                const ButcherTable& inner) {
  const std::vector<ButcherTable> inners(outer.stages(), inner);
  return assemble_mis(outer, inners);
}

/// MIS blocks with the relaxed fast weights b^f = (b_1 e_1, ..., b_s e_1).
inline GarkTableau assemble_rmis(const ButcherTable& outer,
                                 std::span<const ButcherTable> inners,
                                 bool with_embedding) {
  for (const auto& in : inners)
    if (!in.explicit_first_stage()) throw InnerNotExplicitFirstStage();
  GarkTableau g = assemble_mis(outer, inners);
  if (with_embedding) g.b_f_embedded = g.b_f;
  g.b_f.setZero();
  for (int i = 0; i < outer.stages(); ++i) g.b_f(g.blocks[i].offset) = outer.b(i);
  g.provenance.kind = with_embedding ? "RMIS+MIS" : "RMIS";
  return g;
}

inline GarkTableau assemble_rmis(const ButcherTable& outer,
                                 const ButcherTable& inner,
                                 bool with_embedding = false) {
  const std::vector<ButcherTable> inners(outer.stages(), inner);
  return assemble_rmis(outer, inners, with_embedding);
}

// ---------------------------------------------------------------------------
// Order conditions

struct ConditionEntry {
  std::string label;
  int order = 0;
  Rate sigma = Rate::fast;
  double residual = 0.0;
};

struct ConditionReport {
  std::vector<ConditionEntry> entries;
  int satisfied_order = 0;
  Eigen::VectorXd v_outer;

  /// Residual for a canonical label such as "4d:f,s,f"; throws if absent.
  double residual(const std::string& label) const {
    for (const auto& e : entries)
      if (e.label == label) return e.residual;
    throw InvalidArgument("unknown condition label " + label);
  }

  double max_residual(int order, std::optional<Rate> sigma = {}) const {
    double m = 0.0;
    for (const auto& e : entries)
      if (e.order == order && (!sigma || e.sigma == *sigma))
        m = std::max(m, e.residual);
    return m;
  }
};

inline constexpr double kDefaultConditionTolerance = 1e-10;
inline constexpr double kConsistencyTolerance = 1e-10;

namespace detail {

/// Row vector r and right-hand side q such that the condition reads r.b^sigma = q.
struct LinearCondition {
  std::string label;
  int order;
  Rate sigma;
  Eigen::VectorXd row;
  double rhs;
};

inline std::string label_of(const char* tag, std::initializer_list<Rate> rates) {
  std::string s = tag;
  s += ':';
  bool first = true;
  for (Rate r : rates) {
    if (!first) s += ',';
    s += rate_letter(r);
    first = false;
  }
  return s;
}

/// All conditions for one value of sigma, each linear in b^sigma.
inline std::vector<LinearCondition> conditions_for(const GarkTableau& g,
                                                   Rate sigma) {
  constexpr std::array<Rate, 2> rates{Rate::fast, Rate::slow};
  const Eigen::VectorXd& c = g.c(sigma);
  const Eigen::Index n = c.size();
  std::vector<LinearCondition> out;

  out.push_back({label_of("1", {sigma}), 1, sigma, Eigen::VectorXd::Ones(n), 1.0});
  out.push_back({label_of("2", {sigma}), 2, sigma, c, 0.5});
  out.push_back({label_of("3a", {sigma}), 3, sigma, c.cwiseProduct(c), 1.0 / 3.0});
  for (Rate nu : rates)
    out.push_back({label_of("3b", {sigma, nu}), 3, sigma,
                   g.A(sigma, nu) * g.c(nu), 1.0 / 6.0});
  out.push_back({label_of("4a", {sigma}), 4, sigma,
                 c.cwiseProduct(c).cwiseProduct(c), 0.25});
  for (Rate nu : rates)
    out.push_back({label_of("4b", {sigma, nu}), 4, sigma,
                   c.cwiseProduct(g.A(sigma, nu) * g.c(nu)), 0.125});
  for (Rate nu : rates)
    out.push_back({label_of("4c", {sigma, nu}), 4, sigma,
                   g.A(sigma, nu) * g.c(nu).cwiseProduct(g.c(nu)), 1.0 / 12.0});
  for (Rate mu : rates)
    for (Rate nu : rates)
      out.push_back({label_of("4d", {sigma, mu, nu}), 4, sigma,
                     g.A(sigma, mu) * (g.A(mu, nu) * g.c(nu)), 1.0 / 24.0});
  return out;
}

}  // namespace detail

/// Evaluate all 28 two-rate GARK conditions through order 4.
inline ConditionReport check_conditions(
    const GarkTableau& g, double tol = kDefaultConditionTolerance) {
  const double consistency = internal_consistency_residual(g);
  if (!(consistency <= kConsistencyTolerance))
    throw NotInternallyConsistent(consistency);

  ConditionReport report;
  for (Rate sigma : {Rate::fast, Rate::slow})
    for (auto& cond : detail::conditions_for(g, sigma))
      report.entries.push_back({cond.label, cond.order, sigma,
                                std::abs(cond.row.dot(g.b(sigma)) - cond.rhs)});
  std::stable_sort(report.entries.begin(), report.entries.end(),
                   [](const ConditionEntry& a, const ConditionEntry& b) {
                     return a.order < b.order;
                   });

  report.satisfied_order = 0;
  for (int p = 1; p <= 4; ++p) {
    bool ok = true;
    for (const auto& e : report.entries)
      if (e.order == p && !(e.residual < tol)) ok = false;
    if (!ok) break;
    report.satisfied_order = p;
  }

  ButcherTable slow{"slow", g.A_ss, g.b_s, g.c_s};
  report.v_outer = outer_v_vector(slow);
  return report;
}

/// Largest residual of the five structural identities that hold for the
/// relaxed fast weights (moments up to q_max plus four block transfers).
inline double verify_lemma_identities(const ButcherTable& outer,
                                      const ButcherTable& inner, int q_max) {
  const GarkTableau g = assemble_rmis(outer, inner);
  double worst = 0.0;
  auto track = [&worst](double r) { worst = std::max(worst, r); };

  for (int q = 0; q <= q_max; ++q) {
    const double fast = g.b_f.dot(g.c_f.array().pow(q).matrix());
    const double slow = g.b_s.dot(g.c_s.array().pow(q).matrix());
    track(std::abs(fast - slow));
  }
  const Eigen::VectorXd bc_f = g.b_f.cwiseProduct(g.c_f);
  const Eigen::VectorXd bc_s = g.b_s.cwiseProduct(g.c_s);
  auto gap = [](const Eigen::RowVectorXd& x, const Eigen::RowVectorXd& y) {
    return (x - y).cwiseAbs().maxCoeff();
  };
  track(gap(g.b_f.transpose() * g.A_ff, g.b_s.transpose() * g.A_sf));
  track(gap(g.b_f.transpose() * g.A_fs, g.b_s.transpose() * g.A_ss));
  track(gap(bc_f.transpose() * g.A_ff, bc_s.transpose() * g.A_sf));
  track(gap(bc_f.transpose() * g.A_fs, bc_s.transpose() * g.A_ss));
  return worst;
}

// ---------------------------------------------------------------------------
// Fast-weight optimization

/// The 14 fast conditions as a linear system M b^f = rhs.
struct FastConditionSystem {
  Eigen::MatrixXd matrix;
  Eigen::VectorXd rhs;
  std::vector<std::string> labels;
};

inline FastConditionSystem fast_condition_system(const GarkTableau& g) {
  const auto conds = detail::conditions_for(g, Rate::fast);
  FastConditionSystem sys;
  sys.matrix.resize(static_cast<Eigen::Index>(conds.size()), g.fast_stages());
  sys.rhs.resize(static_cast<Eigen::Index>(conds.size()));
  for (std::size_t k = 0; k < conds.size(); ++k) {
    sys.matrix.row(static_cast<Eigen::Index>(k)) = conds[k].row.transpose();
    sys.rhs(static_cast<Eigen::Index>(k)) = conds[k].rhs;
    sys.labels.push_back(conds[k].label);
  }
  return sys;
}

/// Fast stages lying in outer intervals of nonzero width; weights on the
/// stages of a zero-width interval are pinned to zero.
inline std::vector<int> active_fast_stages(const GarkTableau& g) {
  std::vector<int> idx;
  for (const auto& blk : g.blocks)
    if (blk.width > 0.0)
      for (int r = 0; r < blk.stages; ++r) idx.push_back(blk.offset + r);
  return idx;
}

inline constexpr double kRankThreshold = 1e-9;
inline constexpr double kFastWeightResidualTolerance = 1e-11;

/// Minimum-Euclidean-norm fast weights satisfying the 14 fast conditions,
/// restricted to the active fast stages (length = s_I * number of
/// nonzero-width intervals, e.g. 408 for the 3/8-Rule subcycled 34 times).
inline Eigen::VectorXd optimize_fast_weights(const ButcherTable& outer,
                                             const ButcherTable& inner) {
  const GarkTableau g = assemble_mis(outer, inner);
  const FastConditionSystem sys = fast_condition_system(g);
  const std::vector<int> active = active_fast_stages(g);

  Eigen::MatrixXd M(sys.matrix.rows(), static_cast<Eigen::Index>(active.size()));
  for (std::size_t k = 0; k < active.size(); ++k)
    M.col(static_cast<Eigen::Index>(k)) = sys.matrix.col(active[k]);

  Eigen::JacobiSVD<Eigen::MatrixXd> svd(M, Eigen::ComputeThinU | Eigen::ComputeThinV);
  svd.setThreshold(kRankThreshold);
  const Eigen::VectorXd x = svd.solve(sys.rhs);
  const double residual = (M * x - sys.rhs).cwiseAbs().maxCoeff();
  if (!(residual < kFastWeightResidualTolerance))
    throw RankDeficient(static_cast<int>(svd.rank()), static_cast<int>(M.rows()),
                        residual);
  return x;
}

/// Scatter active-stage weights into the full fast-stage layout of g.
inline Eigen::VectorXd pad_fast_weights(const GarkTableau& g,
                                        const Eigen::VectorXd& active_weights) {
  const std::vector<int> active = active_fast_stages(g);
  if (static_cast<Eigen::Index>(active.size()) != active_weights.size())
    throw InvalidArgument("pad_fast_weights: weight count does not match the "
                          "active fast stages");
  Eigen::VectorXd full = Eigen::VectorXd::Zero(g.fast_stages());
  for (std::size_t k = 0; k < active.size(); ++k)
    full(active[k]) = active_weights(static_cast<Eigen::Index>(k));
  return full;
}

}  // namespace rmis
