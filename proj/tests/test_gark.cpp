#include <gtest/gtest.h>

#include <random>

#include "rmis/gark.hpp"
#include "rmis/stepper.hpp"

using namespace rmis;

namespace {

int count_order(const ConditionReport& r, int p) {
  int n = 0;
  for (const auto& e : r.entries) n += e.order == p;
  return n;
}

}  // namespace

TEST(Assemble, MisShapesAndWeights) {
  const auto t = make_three_eighths();
  const auto g = assemble_mis(t, t);
  EXPECT_EQ(g.fast_stages(), 16);
  EXPECT_EQ(g.slow_stages(), 4);
  EXPECT_EQ(g.A_ss, t.A);
  EXPECT_EQ(g.b_s, t.b);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 4; ++j) EXPECT_NEAR(g.b_f(4 * i + j), t.b(j) / 3.0, 1e-16);
  for (int j = 12; j < 16; ++j) EXPECT_EQ(g.b_f(j), 0.0);
  EXPECT_FALSE(g.b_f_embedded.has_value());
  EXPECT_LT(internal_consistency_residual(g), 1e-13);
}

TEST(Assemble, MisBlocksByHand) {
  // Forward Euler inner, Heun-type outer: small enough to write out.
  Eigen::MatrixXd A(2, 2);
  A << 0, 0, 0.5, 0;
  Eigen::VectorXd b(2), c(2);
  b << 0, 1;
  c << 0, 0.5;
  const auto mid = make_table("midpoint", A, b, c);
  const auto g = assemble_mis(mid, make_forward_euler());
  // widths 1/2, 1/2; A_ff = [[0,0],[1/2,0]]
  Eigen::MatrixXd Aff(2, 2);
  Aff << 0, 0, 0.5, 0;
  EXPECT_EQ(g.A_ff, Aff);
  // A_fs rows: row_i of A^O (c^I = 0)
  EXPECT_EQ(g.A_fs, A);
  Eigen::MatrixXd Asf(2, 2);
  Asf << 0, 0, 0.5, 0;
  EXPECT_EQ(g.A_sf, Asf);
  EXPECT_EQ(g.c_f, c);
  EXPECT_EQ(g.b_f, Eigen::Vector2d(0.5, 0.5));
}

TEST(Assemble, RmisWeights) {
  const auto t = make_three_eighths();
  const auto g = assemble_rmis(t, t, true);
  Eigen::VectorXd expect = Eigen::VectorXd::Zero(16);
  expect(0) = 1.0 / 8;
  expect(4) = 3.0 / 8;
  expect(8) = 3.0 / 8;
  expect(12) = 1.0 / 8;
  EXPECT_EQ(g.b_f, expect);
  ASSERT_TRUE(g.b_f_embedded.has_value());
  for (int j = 0; j < 4; ++j) EXPECT_NEAR((*g.b_f_embedded)(j), t.b(j) / 3.0, 1e-16);
}

TEST(Assemble, KW3WeightsSumToOne) {
  const auto t = make_kw3();
  const auto g = assemble_rmis(t, t, true);
  EXPECT_NEAR(g.b_f.sum(), 1.0, 1e-15);
  EXPECT_NEAR(g.b_f_embedded->sum(), 1.0, 1e-15);
  // trailing interval [3/4, 1] carries a nonzero embedded block
  EXPECT_NEAR(g.b_f_embedded->tail(3).sum(), 0.25, 1e-15);
}

TEST(Assemble, RejectsBadOuter) {
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(2, 2);
  A(1, 0) = 0.5;
  Eigen::VectorXd b(2), c(2);
  b << 0, 1;
  c << 0, 0.5;
  auto bad = make_table("x", A, b, c);
  bad.c(0) = 0.1;
  EXPECT_THROW(assemble_mis(bad, make_forward_euler()), InvalidOuter);
  A(1, 0) = 1.5;
  c(1) = 1.5;
  EXPECT_THROW(assemble_mis(make_table("y", A, b, c), make_forward_euler()), InvalidOuter);
  A(1, 0) = 0.5;
  A(0, 1) = 0.1;
  c << 0.1, 0.5;
  EXPECT_THROW(assemble_mis(make_table("z", A, b, c), make_forward_euler()), InvalidOuter);
}

TEST(Assemble, RmisNeedsExplicitFirstStage) {
  Eigen::MatrixXd A(1, 1);
  A << 0.5;
  const auto mid = make_table("implicit-midpoint", A, Eigen::VectorXd::Ones(1),
                              Eigen::VectorXd::Constant(1, 0.5));
  EXPECT_THROW(assemble_rmis(make_three_eighths(), mid), InnerNotExplicitFirstStage);
  EXPECT_NO_THROW(assemble_mis(make_three_eighths(), mid));
}

TEST(Conditions, Has28CanonicalLabels) {
  const auto t = make_three_eighths();
  const auto r = check_conditions(assemble_rmis(t, t));
  ASSERT_EQ(r.entries.size(), 28u);
  EXPECT_EQ(count_order(r, 1), 2);
  EXPECT_EQ(count_order(r, 2), 2);
  EXPECT_EQ(count_order(r, 3), 6);
  EXPECT_EQ(count_order(r, 4), 18);
  EXPECT_EQ(r.entries.front().label, "1:f");
  EXPECT_NO_THROW(r.residual("4d:f,s,f"));
  EXPECT_NO_THROW(r.residual("3b:s,f"));
  EXPECT_THROW(r.residual("5:f"), InvalidArgument);
}

TEST(Conditions, RmisThreeEighthsIsFourthOrder) {
  const auto t = make_three_eighths();
  const auto r = check_conditions(assemble_rmis(t, t));
  EXPECT_EQ(r.satisfied_order, 4);
  for (const auto& e : r.entries) EXPECT_LT(e.residual, 1e-13) << e.label;
}

TEST(Conditions, MisThreeEighthsIsThirdOrder) {
  const auto t = make_three_eighths();
  const auto r = check_conditions(assemble_mis(t, t));
  EXPECT_EQ(r.satisfied_order, 3);
  EXPECT_GT(r.max_residual(4, Rate::fast), 1e-3);
  EXPECT_LT(r.max_residual(4, Rate::slow), 1e-13);
}

TEST(Conditions, KW3PairsAreThirdOrder) {
  const auto t = make_kw3();
  EXPECT_EQ(check_conditions(assemble_mis(t, t)).satisfied_order, 3);
  EXPECT_EQ(check_conditions(assemble_rmis(t, t)).satisfied_order, 3);
}

TEST(Conditions, SubcycledRmisStaysFourthOrder) {
  const auto t = make_three_eighths();
  for (int n : {2, 5, 34}) {
    const auto r = check_conditions(assemble_rmis(t, subcycle_inner(t, n)));
    EXPECT_EQ(r.satisfied_order, 4) << n;
  }
}

TEST(Conditions, VOuterRecorded) {
  const auto t = make_three_eighths();
  const auto r = check_conditions(assemble_mis(t, t));
  EXPECT_LT((r.v_outer - outer_v_vector(t)).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(Conditions, RejectsInconsistentTableau) {
  const auto t = make_three_eighths();
  auto g = assemble_mis(t, t);
  g.A_fs(3, 0) += 1e-6;
  EXPECT_THROW(check_conditions(g), NotInternallyConsistent);
}

TEST(Conditions, FamilyOuterFollowsRmisResidual) {
  // On the RMIS curve: order 4; off it: order 3.
  const auto [c2, c3] = alternate_intersection_point();
  const auto on = butcher_family(c2, c3);
  EXPECT_EQ(check_conditions(assemble_rmis(on, make_three_eighths())).satisfied_order, 4);
  const auto off = butcher_family(0.4, 0.7);
  EXPECT_EQ(check_conditions(assemble_rmis(off, make_three_eighths())).satisfied_order, 3);
  EXPECT_EQ(check_conditions(assemble_rmis(off, make_kw3())).satisfied_order, 3);
}

TEST(Conditions, SlowSideIndependentOfFastWeights) {
  const auto t = make_three_eighths();
  auto g = assemble_rmis(t, t);
  std::mt19937 rng(3);
  std::normal_distribution<double> nd;
  for (int k = 0; k < g.fast_stages(); ++k) g.b_f(k) = nd(rng);
  const auto r = check_conditions(g);
  for (const auto& e : r.entries)
    if (e.sigma == Rate::slow) {
      EXPECT_LT(e.residual, 1e-13) << e.label;
    }
  EXPECT_EQ(r.satisfied_order, 0);
}

TEST(Conditions, SlowFastTransferIdentity) {
  // A_sf c_f = c_s^2 / 2
  for (const auto& outer : {make_three_eighths(), make_kw3(), butcher_family(0.4, 0.7)})
    for (const auto& inner : {make_three_eighths(), make_kw3(), subcycle_inner(make_kw3(), 3)}) {
      const auto g = assemble_mis(outer, inner);
      const Eigen::VectorXd lhs = g.A_sf * g.c_f;
      const Eigen::VectorXd rhs = 0.5 * g.c_s.cwiseProduct(g.c_s);
      EXPECT_LT((lhs - rhs).cwiseAbs().maxCoeff(), 1e-13);
    }
}

TEST(Lemma, IdentitiesHold) {
  EXPECT_LT(verify_lemma_identities(make_three_eighths(), make_three_eighths(), 4), 1e-13);
  EXPECT_LT(verify_lemma_identities(make_kw3(), make_kw3(), 4), 1e-13);
  EXPECT_LT(verify_lemma_identities(butcher_family(0.4, 0.7), make_kw3(), 4), 1e-13);
}

TEST(Optimize, StructuredWeightsAreFeasible) {
  const auto t = make_three_eighths();
  const auto g = assemble_rmis(t, t);
  const auto sys = fast_condition_system(g);
  EXPECT_EQ(sys.matrix.rows(), 14);
  EXPECT_LT((sys.matrix * g.b_f - sys.rhs).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Optimize, MinNormThreeEighthsSubcycled) {
  const auto t = make_three_eighths();
  const auto inner = subcycle_inner(t, 34);
  const auto w = optimize_fast_weights(t, inner);
  ASSERT_EQ(w.size(), 408);
  auto g = assemble_rmis(t, inner);
  const auto full = pad_fast_weights(g, w);
  const auto sys = fast_condition_system(g);
  EXPECT_LT((sys.matrix * full - sys.rhs).cwiseAbs().maxCoeff(), 1e-11);
  // smaller norm than the structured feasible point
  EXPECT_LT(w.norm(), g.b_f.norm());
  g.b_f = full;
  EXPECT_EQ(check_conditions(g).satisfied_order, 4);
}

TEST(Optimize, MinNormIsOrthogonalToNullSpace) {
  const auto t = make_three_eighths();
  const auto w = optimize_fast_weights(t, t);
  ASSERT_EQ(w.size(), 12);
  auto g = assemble_mis(t, t);
  const auto sys = fast_condition_system(g);
  Eigen::MatrixXd M(14, 12);
  for (int k = 0; k < 12; ++k) M.col(k) = sys.matrix.col(k);
  // w lies in the row space of M
  const Eigen::VectorXd proj = M.transpose() * M.transpose().colPivHouseholderQr().solve(w);
  EXPECT_LT((proj - w).norm(), 1e-10);
}

TEST(Optimize, InconsistentSystemIsRankDeficient) {
  // Forward Euler inner, a single fast stage per interval: 14 conditions cannot hold.
  EXPECT_THROW(optimize_fast_weights(make_three_eighths(), make_forward_euler()), RankDeficient);
}

TEST(Optimize, PadChecksLength) {
  const auto t = make_three_eighths();
  const auto g = assemble_mis(t, t);
  EXPECT_THROW(pad_fast_weights(g, Eigen::VectorXd::Zero(5)), InvalidArgument);
  const auto full = pad_fast_weights(g, Eigen::VectorXd::Ones(12));
  EXPECT_EQ(full.size(), 16);
  EXPECT_EQ(full.tail(4).sum(), 0.0);
}
