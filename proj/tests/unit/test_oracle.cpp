#include <gtest/gtest.h>

#include "snellmesh/builtins.hpp"
#include "snellmesh/oracle.hpp"

using namespace snell;

namespace {

// Values below were computed by hand and rechecked with a separate numpy script.
constexpr double kV00 = 0.6375;
constexpr double kV01 = 1.59;

FiniteChainSpec toy_with_criteria(double g) {
  auto spec = toychain_spec();
  for (auto& c : spec.criteria) c.setConstant(g);
  return spec;
}

}  // namespace

TEST(SnellStandard, ToyChainIgnoringCriteria) {
  const auto u = snell_standard(toychain());
  EXPECT_DOUBLE_EQ(u[2](0), 1.0);
  EXPECT_DOUBLE_EQ(u[2](1), 2.0);
  EXPECT_NEAR(u[1](0), 1.5, 1e-15);
  EXPECT_NEAR(u[1](1), 1.8, 1e-15);
  EXPECT_NEAR(u[0](0), 1.65, 1e-15);
  EXPECT_NEAR(u[0](1), 1.74, 1e-15);
}

TEST(SnellStandard, ZeroHorizonAndConstantPayoff) {
  auto spec = toychain_spec();
  spec.transitions.clear();
  spec.criteria.clear();
  spec.epsilon.clear();
  spec.payoffs = {Eigen::Vector2d(3.0, 4.0)};
  const auto u = snell_standard(make_finite_model(spec));
  ASSERT_EQ(u.size(), 1u);
  EXPECT_EQ(u[0], Eigen::Vector2d(3.0, 4.0));

  spec = toychain_spec();
  for (auto& f : spec.payoffs) f.setConstant(0.7);
  for (const auto& uk : snell_standard(make_finite_model(spec))) EXPECT_NEAR((uk.array() - 0.7).abs().maxCoeff(), 0.0, 1e-15);
}

TEST(SnellWithCriteria, ToyChainValues) {
  const auto v = snell_with_criteria(toychain());
  EXPECT_EQ(v[2], Eigen::Vector2d(1.0, 2.0));
  EXPECT_NEAR(v[1](0), 0.75, 1e-15);
  EXPECT_NEAR(v[1](1), 1.8, 1e-15);
  EXPECT_NEAR(v[0](0), kV00, 1e-15);
  EXPECT_NEAR(v[0](1), kV01, 1e-15);
}

TEST(SnellWithCriteria, UnitCriteriaGivesStandardEnvelope) {
  const auto m = make_finite_model(toy_with_criteria(1.0));
  const auto u = snell_standard(m), v = snell_with_criteria(m);
  for (std::size_t k = 0; k < u.size(); ++k) EXPECT_EQ(u[k], v[k]);
}

TEST(SnellWithCriteria, ZeroCriteriaGivesPayoff) {
  const auto spec = toy_with_criteria(0.0);
  const auto v = snell_with_criteria(make_finite_model(spec));
  for (std::size_t k = 0; k < 2; ++k) EXPECT_EQ(v[k], spec.payoffs[k]);
}

TEST(SnellWithCriteria, DominatesPayoffOnRandomModels) {
  Stream s(11);
  for (int i = 0; i < 100; ++i) {
    const auto t = tabulate(random_finite_model(s));
    const auto v = snell_with_criteria(t);
    EXPECT_EQ(v[t.horizon], t.payoffs[t.horizon]);
    for (std::size_t k = 0; k <= t.horizon; ++k) EXPECT_TRUE((v[k].array() >= t.payoffs[k].array()).all());
  }
}

TEST(SnellPathSpace, ToyChainPaths) {
  const auto paths = snell_path_space(toychain());
  EXPECT_NEAR(paths.at({0, 1}), 0.9, 1e-15);
  EXPECT_NEAR(paths.at({0}), kV00, 1e-15);
  EXPECT_NEAR(paths.at({0, 0, 1}), 0.5, 1e-15);
  EXPECT_EQ(paths.path_count(2), 8u);
  EXPECT_EQ(paths.decode(2, 5), (std::vector<std::size_t>{1, 0, 1}));
}

TEST(SnellPathSpace, EnumerationCap) {
  OracleLimits limits;
  limits.max_paths = 4;
  EXPECT_THROW(snell_path_space(toychain(), limits), EnumerationTooLarge);
}

TEST(PathEquivalence, ToyChainAndUnitCriteria) {
  EXPECT_LE(check_path_equivalence(toychain()), 1e-12);
  EXPECT_EQ(check_path_equivalence(make_finite_model(toy_with_criteria(1.0))), 0.0);
}

TEST(PathEquivalence, DetectsInjectedFault) {
  const auto t = tabulate(toychain());
  auto v = snell_with_criteria(t);
  v[1](0) += 0.1;
  EXPECT_GE(path_equivalence_discrepancy(t, snell_path_space(t), v), 0.05);
}

TEST(EtaFlow, ToyChain) {
  const auto flow = compute_eta_flow(toychain());
  EXPECT_EQ(flow.eta[0], Eigen::Vector2d(1.0, 0.0));
  EXPECT_NEAR(flow.eta[1](0), 0.5, 1e-15);
  EXPECT_NEAR(flow.eta[1](1), 0.5, 1e-15);
  EXPECT_NEAR(flow.eta[2](0), 0.3, 1e-15);
  EXPECT_NEAR(flow.eta[2](1), 0.7, 1e-15);
  EXPECT_NEAR(flow.masses[1], 0.75, 1e-15);
  EXPECT_NEAR(flow.normalizer, 0.375, 1e-15);
}

TEST(EtaFlow, UnitCriteriaGivesMarginals) {
  const auto t = tabulate(make_finite_model(toy_with_criteria(1.0)));
  const auto flow = compute_eta_flow(t);
  EXPECT_EQ(flow.normalizer, 1.0);
  Eigen::VectorXd marginal = t.initial;
  for (std::size_t k = 1; k <= t.horizon; ++k) {
    marginal = t.transitions[k - 1].transpose() * marginal;
    EXPECT_NEAR((flow.eta[k] - marginal).cwiseAbs().maxCoeff(), 0.0, 1e-15);
  }
}

TEST(EtaFlow, ZeroInitialCriteriaIsDegenerateAtStepOne) {
  auto spec = toychain_spec();
  spec.criteria[0].setZero();
  try {
    compute_eta_flow(make_finite_model(spec));
    FAIL() << "expected DegenerateFlowError";
  } catch (const DegenerateFlowError& e) {
    EXPECT_EQ(e.step(), 1u);
  }
}

TEST(EtaFlow, ProbabilityVectorsAndNormalizerOnRandomModels) {
  Stream s(12);
  for (int i = 0; i < 100; ++i) {
    const auto flow = compute_eta_flow(random_finite_model(s));
    double z = 1.0;
    for (double m : flow.masses) z *= m;
    EXPECT_NEAR(flow.normalizer, z, 1e-12);
    for (const auto& eta : flow.eta) {
      EXPECT_NEAR(eta.sum(), 1.0, 1e-12);
      EXPECT_TRUE((eta.array() >= 0.0).all());
    }
  }
}

TEST(VerifyOptimality, ToyChain) {
  const auto check = verify_optimality(toychain());
  EXPECT_NEAR(check.best_value, kV00, 1e-15);
  EXPECT_LE(check.gap, 1e-10);
  EXPECT_EQ(check.policies, 16u);
}

TEST(VerifyOptimality, DegenerateCases) {
  auto spec = toychain_spec();
  spec.payoffs[2].setZero();
  EXPECT_EQ(verify_optimality(make_finite_model(spec)).best_value, 0.0);

  spec = toychain_spec();
  spec.transitions.clear();
  spec.criteria.clear();
  spec.epsilon.clear();
  spec.initial = Eigen::Vector2d(0.25, 0.75);
  spec.payoffs = {Eigen::Vector2d(2.0, 4.0)};
  EXPECT_NEAR(verify_optimality(make_finite_model(spec)).best_value, 3.5, 1e-15);
}

TEST(VerifyOptimality, PolicyCap) {
  OracleLimits limits;
  limits.max_policy_bits = 3;
  EXPECT_THROW(verify_optimality(toychain(), limits), EnumerationTooLarge);
}

TEST(Tabulate, RejectsContinuousModels) {
  EXPECT_THROW(tabulate(build_gaussian_ar1({})), UnsupportedModelError);
}
