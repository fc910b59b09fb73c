#include <gtest/gtest.h>

#include <random>

#include "bearing_forge/internal_model.hpp"
#include "test_support.hpp"

using namespace bearing_forge;

namespace {

CanonicalExosystem exosystem_for(const std::vector<double>& freqs) {
  DisturbanceSpec spec = DisturbanceSpec::zero(1);
  spec.constant(0) = 1.0;
  for (double w : freqs) spec.terms.push_back({w, VectorXd::Ones(1), VectorXd::Zero(1)});
  return build_canonical(spec);
}

}  // namespace

TEST(ChooseMN, ScalarCase) {
  const auto [m, n] = choose_MN(0);
  EXPECT_EQ(m, MatrixXd::Constant(1, 1, -1.0));
  EXPECT_EQ(n, MatrixXd::Constant(1, 1, 1.0));
}

TEST(ChooseMN, CubicCompanion) {
  const auto [m, n] = choose_MN(1);
  const MatrixXd want = (MatrixXd(3, 3) << 0, 1, 0, 0, 0, 1, -6, -11, -6).finished();
  EXPECT_EQ(m, want);
  EXPECT_EQ(n, (MatrixXd(3, 1) << 0, 0, 1).finished());
}

TEST(ChooseMN, ControllableHurwitzAndDisjoint) {
  for (int r = 0; r <= 4; ++r) {
    const auto [m, n] = choose_MN(r);
    const int q = 2 * r + 1;
    EXPECT_EQ(linalg::controllability_rank(m, n), q) << "r=" << r;
    // Exact oracle: the integer controllability matrix is anti-triangular
    // with a unit anti-diagonal, so its determinant is +-1.
    const MatrixXd c = linalg::controllability_matrix(m, n);
    for (int i = 0; i < q; ++i) {
      EXPECT_EQ(c(i, q - 1 - i), 1.0);
      for (int j = 0; j < q - 1 - i; ++j) EXPECT_EQ(c(i, j), 0.0);
    }
    // PBH oracle: [lambda I - M, N] has full row rank at every eigenvalue.
    for (int k = 1; k <= q; ++k) {
      MatrixXd pbh(q, q + 1);
      pbh << -k * MatrixXd::Identity(q, q) - m, n;
      EXPECT_GT(Eigen::JacobiSVD<MatrixXd>(pbh).singularValues()(q - 1), 1e-8);
    }
    EXPECT_TRUE(linalg::is_hurwitz(m));
    Eigen::VectorXcd want(q);
    for (int k = 0; k < q; ++k) want(k) = -(k + 1.0);
    EXPECT_LE(bearing_forge::testing::spectrum_distance(linalg::eigenvalues(m), want), 1e-6 * q * q);
  }
  EXPECT_THROW(choose_MN(-1), Error);
}

TEST(Sylvester, ScalarCase) {
  const MatrixXd t = solve_sylvester(MatrixXd::Zero(1, 1), MatrixXd::Constant(1, 1, -1.0),
                                     MatrixXd::Ones(1, 1), RowVectorXd::Ones(1));
  EXPECT_NEAR(t(0, 0), 1.0, 1e-15);
  EXPECT_NEAR(compute_E(t, RowVectorXd::Ones(1))(0), 1.0, 1e-15);
}

TEST(Sylvester, ConstantModelReducesToIdentity) {
  const auto model = synthesize_internal_model(exosystem_for({}));
  EXPECT_EQ(model.m(0, 0), -1.0);
  EXPECT_EQ(model.n(0, 0), 1.0);
  EXPECT_NEAR(model.t(0, 0), 1.0, 1e-15);
  EXPECT_NEAR(model.e(0), 1.0, 1e-15);
}

TEST(Sylvester, UnitFrequencyResidual) {
  const auto exo = exosystem_for({1.0});
  const auto [m, n] = choose_MN(1);
  const MatrixXd t = solve_sylvester(exo.phi, m, n, exo.psi);
  EXPECT_LE((t * exo.phi - m * t - n * exo.psi).norm(), 1e-10);
  EXPECT_GT(std::abs(t.determinant()), 1e-10);
}

TEST(Sylvester, OverlappingSpectraRejected) {
  try {
    solve_sylvester(MatrixXd::Zero(1, 1), MatrixXd::Zero(1, 1), MatrixXd::Ones(1, 1), RowVectorXd::Ones(1));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::SingularSylvesterOperator);
  }
}

TEST(Sylvester, UncontrollablePairGivesSingularT) {
  // N = 0 forces T = 0.
  try {
    solve_sylvester(MatrixXd::Zero(1, 1), MatrixXd::Constant(1, 1, -1.0), MatrixXd::Zero(1, 1), RowVectorXd::Ones(1));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::SingularT);
  }
}

TEST(ComputeE, Examples) {
  EXPECT_NEAR(compute_E(MatrixXd::Ones(1, 1), RowVectorXd::Ones(1))(0), 1.0, 1e-15);
  const RowVectorXd e = compute_E(2.0 * MatrixXd::Identity(3, 3), (RowVectorXd(3) << 1, 0, 0).finished());
  EXPECT_TRUE(e.isApprox((RowVectorXd(3) << 0.5, 0, 0).finished()));
  std::mt19937 rng(31);
  std::normal_distribution<double> g;
  for (int trial = 0; trial < 100; ++trial) {
    MatrixXd t(3, 3);
    for (int k = 0; k < 9; ++k) t(k) = g(rng);
    if (linalg::min_singular_value(t) < 1e-3) continue;
    RowVectorXd psi(3);
    for (int k = 0; k < 3; ++k) psi(k) = g(rng);
    EXPECT_LE((compute_E(t, psi) * t - psi).norm(), 1e-9);
  }
  EXPECT_THROW(compute_E(MatrixXd::Zero(2, 2), RowVectorXd::Ones(2)), Error);
}

namespace {

std::vector<double> random_frequencies(std::mt19937& rng, int r) {
  std::uniform_real_distribution<double> w(1e-3, 10.0);
  std::vector<double> freqs;
  while (static_cast<int>(freqs.size()) < r) {
    const double x = w(rng);
    bool clash = false;
    for (double y : freqs) clash |= std::abs(x - y) < 0.05;
    if (!clash) freqs.push_back(x);
  }
  return freqs;
}

}  // namespace

TEST(InternalModel, RandomSynthesisInvariantsUpToTwoSinusoids) {
  std::mt19937 rng(41);
  for (int trial = 0; trial < 300; ++trial) {
    const int r = trial % 3;
    const auto exo = exosystem_for(random_frequencies(rng, r));
    const auto model = synthesize_internal_model(exo);
    EXPECT_LE((model.t * exo.phi - model.m * model.t - model.n * exo.psi).norm(), 1e-10 * (1.0 + model.t.norm()))
        << "r=" << r;
    EXPECT_GT(linalg::min_singular_value(model.t), 1e-10);
    EXPECT_LE((model.e * model.t - exo.psi).norm(), 1e-9);
    EXPECT_TRUE(linalg::is_hurwitz(model.m));
    EXPECT_EQ(linalg::controllability_rank(model.m, model.n), 2 * r + 1);
  }
}

TEST(InternalModel, ResidualInvariantsAtThreeAndFourSinusoids) {
  // T itself can be numerically singular here (see SingularTGuard), so the
  // solution is taken before the nonsingularity check.
  std::mt19937 rng(43);
  for (int trial = 0; trial < 100; ++trial) {
    const int r = 3 + trial % 2;
    const auto exo = exosystem_for(random_frequencies(rng, r));
    const auto [m, n] = choose_MN(r);
    const MatrixXd t = detail::sylvester_solution(exo.phi, m, n, exo.psi);
    EXPECT_LE((t * exo.phi - m * t - n * exo.psi).norm(), 1e-10 * (1.0 + t.norm())) << "r=" << r;
    EXPECT_TRUE(linalg::is_hurwitz(m));
    EXPECT_EQ(linalg::controllability_rank(m, n), 2 * r + 1);
  }
}

TEST(InternalModel, SingularTGuard) {
  // Four clustered high frequencies: sigma_min(T) is about 1e-15 even in
  // extended precision, below the 1e-10 threshold.
  try {
    (void)synthesize_internal_model(exosystem_for({7.63854, 7.03004, 8.33956, 8.01998}));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::SingularT);
  }
  // Low, well-separated frequencies stay above it.
  EXPECT_NO_THROW((void)synthesize_internal_model(exosystem_for({0.5, 1.0, 1.5, 2.0})));
}

TEST(Parameterization, CanonicalBasis) {
  const auto p0 = build_parameterization(0, RowVectorXd::Ones(1));
  EXPECT_EQ(p0.size(), 1);
  EXPECT_EQ(p0.basis, MatrixXd::Ones(1, 1));
  EXPECT_EQ(*p0.theta_true, VectorXd::Ones(1));

  const RowVectorXd e = RowVectorXd::Random(3);
  const auto p1 = build_parameterization(1, e);
  EXPECT_LE((p1.estimate(*p1.theta_true) - e).norm(), 1e-12);
  EXPECT_TRUE(p1.estimate(VectorXd::Zero(3)).isZero());
  EXPECT_FALSE(build_parameterization(2).theta_true.has_value());
  EXPECT_THROW(build_parameterization(1, RowVectorXd::Ones(2)), Error);
}
