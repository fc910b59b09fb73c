#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "bearing_forge/formation_graph.hpp"
#include "test_support.hpp"

using namespace bearing_forge;
using bearing_forge::testing::random_unit;

namespace {

ErrorCode code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "expected an exception";
  return ErrorCode::IoError;
}

}  // namespace

TEST(SensingGraph, StoresEdgesSymmetrically) {
  const SensingGraph g(3, 2, 1, {{0, 1}, {2, 1}});
  EXPECT_TRUE(g.has_edge(1, 0));
  EXPECT_TRUE(g.has_edge(1, 2));
  EXPECT_FALSE(g.has_edge(0, 2));
  EXPECT_EQ(g.edges().size(), 4u);
  EXPECT_EQ(g.undirected_edges().size(), 2u);
  EXPECT_EQ(g.neighbors(1), (std::set<int>{0, 2}));
  EXPECT_EQ(g.follower_count(), 2);
}

TEST(SensingGraph, RejectsMalformedInput) {
  EXPECT_THROW(SensingGraph(3, 2, 1, {{0, 0}}), Error);
  EXPECT_THROW(SensingGraph(3, 2, 1, {{0, 3}}), Error);
  EXPECT_THROW(SensingGraph(2, 2, 1, {}), Error);
  EXPECT_THROW(SensingGraph(3, 1, 1, {}), Error);
  EXPECT_THROW(SensingGraph(3, 2, 3, {}), Error);
  EXPECT_THROW(SensingGraph(3, 2, 0, {}), Error);
}

TEST(UnitBearing, AxisAlignedAndDiagonal) {
  EXPECT_TRUE(unit_bearing(Eigen::Vector2d(1, 0), Eigen::Vector2d(0, 0)).isApprox(Eigen::Vector2d(1, 0)));
  EXPECT_TRUE(unit_bearing(Eigen::Vector2d(0, 0), Eigen::Vector2d(0, 2)).isApprox(Eigen::Vector2d(0, -1)));
  const VectorXd g = unit_bearing(Eigen::Vector2d(1, 1), Eigen::Vector2d(0, 0));
  EXPECT_NEAR(g(0), 1.0 / std::sqrt(2.0), 1e-15);
  EXPECT_NEAR(g(1), 1.0 / std::sqrt(2.0), 1e-15);
}

TEST(UnitBearing, CoincidentPointsAreDegenerate) {
  EXPECT_EQ(code_of([] { unit_bearing(Eigen::Vector2d(1, 1), Eigen::Vector2d(1, 1 + 1e-12)); }),
            ErrorCode::DegenerateBearing);
}

TEST(Projector, Examples) {
  EXPECT_TRUE(projector(Eigen::Vector2d(1, 0)).isApprox((MatrixXd(2, 2) << 0, 0, 0, 1).finished()));
  EXPECT_TRUE(projector(Eigen::Vector2d(0, 1)).isApprox((MatrixXd(2, 2) << 1, 0, 0, 0).finished()));
  const double s = 1.0 / std::sqrt(2.0);
  const MatrixXd p = projector(Eigen::Vector2d(s, s));
  EXPECT_TRUE(p.isApprox((MatrixXd(2, 2) << 0.5, -0.5, -0.5, 0.5).finished(), 1e-15));
}

TEST(Projector, RejectsNonUnit) {
  EXPECT_EQ(code_of([] { projector(Eigen::Vector2d(1, 1)); }), ErrorCode::NonUnitInput);
}

TEST(Projector, IdempotentSymmetricAnnihilating) {
  std::mt19937 rng(7);
  for (int trial = 0; trial < 1000; ++trial) {
    const int d = 2 + trial % 2;
    const VectorXd g = random_unit(rng, d);
    const MatrixXd p = projector(g);
    EXPECT_LE((p * p - p).norm(), 1e-12);
    EXPECT_LE((p - p.transpose()).norm(), 1e-12);
    EXPECT_LE((p * g).norm(), 1e-12);
  }
}

TEST(BearingSet, StoresAntisymmetricUnitVectors) {
  BearingSet b(2);
  b.set(0, 1, Eigen::Vector2d(0.6, 0.8));
  EXPECT_TRUE(b.at(1, 0).isApprox(Eigen::Vector2d(-0.6, -0.8)));
  EXPECT_NEAR(b.at(0, 1).norm(), 1.0, 1e-12);
  EXPECT_EQ(code_of([&] { (void)b.at(0, 2); }), ErrorCode::MissingBearing);
  EXPECT_EQ(code_of([&] { b.set(0, 2, Eigen::Vector2d(1, 1)); }), ErrorCode::NonUnitInput);
}

TEST(BearingLaplacian, SingleEdgeExpansion) {
  // n = 2 is below the graph minimum, so embed the edge in a 3-agent graph
  // with an isolated third agent and compare the leading 4x4 block.
  const SensingGraph g(3, 2, 1, {{0, 1}});
  BearingSet b(2);
  b.set(0, 1, Eigen::Vector2d(1, 0));
  const BearingLaplacian lap = build_bearing_laplacian(g, b);
  const MatrixXd p = (MatrixXd(2, 2) << 0, 0, 0, 1).finished();
  MatrixXd expected = MatrixXd::Zero(4, 4);
  expected << p, -p, -p, p;
  EXPECT_TRUE(lap.full.topLeftCorner(4, 4).isApprox(expected));
  EXPECT_TRUE(lap.full.bottomRows(2).isZero());
}

TEST(BearingLaplacian, MissingBearingIsReported) {
  const SensingGraph g(3, 2, 1, {{0, 1}, {1, 2}});
  BearingSet b(2);
  b.set(0, 1, Eigen::Vector2d(1, 0));
  EXPECT_EQ(code_of([&] { build_bearing_laplacian(g, b); }), ErrorCode::MissingBearing);
}

TEST(BearingLaplacian, UnitSquareFollowerBlockIsNonsingular) {
  const auto g = bearing_forge::testing::unit_square_graph();
  const auto lap = build_bearing_laplacian(g, BearingSet::from_positions(g, bearing_forge::testing::unit_square_positions()));
  EXPECT_GT(linalg::min_singular_value(lap.ff), 1e-8);
  // B_ff eigenvalues are 1 -+ 1/sqrt(2) and 2 -+ 1/sqrt(2) for this layout.
  EXPECT_NEAR(linalg::symmetric_min_eigenvalue(lap.ff), 1.0 - 1.0 / std::sqrt(2.0), 1e-12);
  EXPECT_TRUE(lap.fl.isApprox(lap.lf.transpose()));
}

TEST(BearingLaplacian, RandomGraphProperties) {
  std::mt19937 rng(11);
  std::uniform_int_distribution<int> nd(3, 8);
  for (int trial = 0; trial < 300; ++trial) {
    const int n = nd(rng);
    const int d = 2 + trial % 2;
    const SensingGraph g(n, d, 1 + trial % (n - 1), bearing_forge::testing::random_edges(rng, n, 0.5));
    BearingSet b(d);
    for (const auto& [i, j] : g.undirected_edges()) b.set(i, j, random_unit(rng, d));
    const BearingLaplacian lap = build_bearing_laplacian(g, b);
    EXPECT_LE((lap.full - lap.full.transpose()).norm(), 1e-12);
    EXPECT_GE(linalg::symmetric_min_eigenvalue(lap.full), -1e-10);
    const VectorXd v = VectorXd::Random(d);
    EXPECT_LE((lap.full * v.replicate(n, 1)).norm(), 1e-10);
  }
}

TEST(BearingLaplacian, DesiredPositionsSatisfyBearingConstraints) {
  std::mt19937 rng(5);
  for (int trial = 0; trial < 200; ++trial) {
    const int n = 3 + trial % 6;
    const int d = 2 + trial % 2;
    const SensingGraph g(n, d, 1, bearing_forge::testing::random_edges(rng, n, 0.6));
    const VectorXd p = bearing_forge::testing::random_positions(rng, n, d);
    const BearingLaplacian lap = build_bearing_laplacian(g, BearingSet::from_positions(g, p));
    EXPECT_LE((lap.full * p).norm(), 1e-10);
  }
}

TEST(Localization, RecoversUnitSquare) {
  const auto g = bearing_forge::testing::unit_square_graph();
  const VectorXd p = bearing_forge::testing::unit_square_positions();
  const auto lap = build_bearing_laplacian(g, BearingSet::from_positions(g, p));
  const TargetFormation t = localize_followers(lap, p.head(4), Eigen::Vector2d(0.5, 0));
  EXPECT_LE((t.positions - p.tail(4)).norm(), 1e-12);
  EXPECT_TRUE(t.velocities.isApprox((VectorXd(4) << 0.5, 0, 0.5, 0).finished()));
  EXPECT_LE((lap.ff * t.positions + lap.fl * p.head(4)).norm(), 1e-8 * (1.0 + p.head(4).norm()));
}

TEST(Localization, CollinearFollowerIsNotLocalizable) {
  const SensingGraph g(3, 2, 2, {{2, 0}, {2, 1}});
  VectorXd p(6);
  p << 0, 0, 2, 0, 1, 0;
  const auto lap = build_bearing_laplacian(g, BearingSet::from_positions(g, p));
  // Follower (index 2) sees leaders along +-x: both projectors are diag(0,1).
  EXPECT_TRUE(lap.ff.isApprox((MatrixXd(2, 2) << 0, 0, 0, 2).finished()));
  EXPECT_EQ(code_of([&] { localize_followers(lap, p.head(4), Eigen::Vector2d::Zero()); }),
            ErrorCode::NotLocalizable);
}

TEST(Localization, RandomGenericFormations) {
  std::mt19937 rng(23);
  int checked = 0;
  for (int trial = 0; checked < 200 && trial < 2000; ++trial) {
    const int n = 4 + trial % 5;
    const int d = 2 + trial % 2;
    const int nl = 2 + trial % (n - 3);
    const SensingGraph g(n, d, nl, bearing_forge::testing::random_edges(rng, n, 0.7));
    const VectorXd p = bearing_forge::testing::random_positions(rng, n, d);
    const auto lap = build_bearing_laplacian(g, BearingSet::from_positions(g, p));
    if (linalg::min_singular_value(lap.ff) < 1e-6) continue;
    const auto t = localize_followers(lap, p.head(nl * d), VectorXd::Zero(d));
    EXPECT_LE((t.positions - p.tail((n - nl) * d)).norm(), 1e-8);
    ++checked;
  }
  EXPECT_EQ(checked, 200);
}
