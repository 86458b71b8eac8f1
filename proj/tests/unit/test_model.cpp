#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "snellmesh/builtins.hpp"
#include "snellmesh/model.hpp"
#include "snellmesh/random.hpp"

using namespace snell;

namespace {

State cat(std::size_t i) { return State::category(i); }

}  // namespace

TEST(StateTest, MembershipAndOrdering) {
  EXPECT_TRUE(cat(1).belongs_to(StateSpace::finite(2)));
  EXPECT_FALSE(cat(2).belongs_to(StateSpace::finite(2)));
  EXPECT_TRUE(State::point(0.3).belongs_to(StateSpace::continuous(1)));
  EXPECT_FALSE(State::point({0.3, 1.0}).belongs_to(StateSpace::continuous(1)));
  EXPECT_FALSE(cat(0).belongs_to(StateSpace::continuous(1)));
  EXPECT_TRUE(cat(0) < cat(1));
  EXPECT_EQ(cat(3), cat(3));
  EXPECT_EQ(cat(3).to_string(), "3");
}

TEST(ValidateModel, ToyChainIsClean) {
  const auto report = validate_model(toychain());
  EXPECT_TRUE(report.ok()) << report.summary();
}

TEST(ValidateModel, EpsilonBoundViolationNamesStep) {
  auto spec = toychain_spec();
  spec.epsilon = {3.0, 0.0};
  const auto report = validate_model(make_finite_model(spec));
  ASSERT_EQ(report.violations.size(), 1u);
  EXPECT_EQ(report.violations[0].step, std::optional<std::size_t>(0));
  EXPECT_NE(report.violations[0].message.find("epsilon"), std::string::npos);
}

TEST(ValidateModel, NonStochasticRowIsReported) {
  auto spec = toychain_spec();
  spec.transitions[0](0, 1) = 0.6;
  const auto report = validate_model(make_finite_model(spec));
  ASSERT_EQ(report.violations.size(), 1u);
  EXPECT_EQ(report.violations[0].step, std::optional<std::size_t>(1));
  EXPECT_NE(report.violations[0].message.find("row 0"), std::string::npos);
}

TEST(ValidateModel, ZeroDensityAndNegativePayoffAreReported) {
  auto spec = toychain_spec();
  spec.transitions[1] << 1.0, 0.0, 0.2, 0.8;
  spec.payoffs[2](0) = -1.0;
  const auto report = validate_model(make_finite_model(spec));
  EXPECT_EQ(report.violations.size(), 2u);
}

TEST(ValidateModel, ContinuousModelsAreProbed) {
  EXPECT_TRUE(validate_model(build_gaussian_ar1({})).ok());
  Ar1Criteria bad;
  bad.custom = [](std::size_t, double x) { return x > 0 ? 2.0 : 0.5; };
  bad.custom_bound = 1.0;
  EXPECT_FALSE(validate_model(build_gaussian_ar1({}, {}, bad)).ok());
}

TEST(MakeFiniteModel, RejectsMismatchedTables) {
  auto spec = toychain_spec();
  spec.payoffs.pop_back();
  EXPECT_THROW(make_finite_model(spec), ContractError);
  spec = toychain_spec();
  spec.criteria[1] = Eigen::VectorXd::Ones(3);
  EXPECT_THROW(make_finite_model(spec), ContractError);
}

TEST(TransitionDensity, ToyChainEntries) {
  const auto m = toychain();
  EXPECT_DOUBLE_EQ(transition_density(m, 1, cat(0), cat(1)), 0.5);
  EXPECT_DOUBLE_EQ(transition_density(m, 2, cat(1), cat(0)), 0.2);
  EXPECT_THROW(transition_density(m, 0, cat(0), cat(0)), ContractError);
  EXPECT_THROW(transition_density(m, 3, cat(0), cat(0)), ContractError);
}

TEST(TransitionDensity, GaussianAr1AtOrigin) {
  const auto m = build_gaussian_ar1({});
  const double expected = 1.0 / std::sqrt(2.0 * std::numbers::pi);
  for (std::size_t k = 1; k <= 3; ++k)
    EXPECT_NEAR(transition_density(m, k, State::point(0.0), State::point(0.0)), expected, 1e-15);
  EXPECT_NEAR(expected, 0.39894, 1e-5);
}

TEST(TransitionDensity, NonPositiveDensityIsAContractError) {
  auto spec = toychain_spec();
  spec.transitions[0] << 1.0, 0.0, 0.2, 0.8;
  const auto m = make_finite_model(spec);
  EXPECT_THROW(transition_density(m, 1, cat(0), cat(1)), ModelContractError);
}

TEST(SampleTransition, SupportAndFrequency) {
  const auto m = toychain();
  Stream s(42);
  std::size_t ones = 0;
  constexpr std::size_t draws = 100000;
  for (std::size_t i = 0; i < draws; ++i) {
    const State y = sample_transition(m, 1, cat(0), s);
    ASSERT_TRUE(y.belongs_to(m.space(1)));
    ones += y.index();
  }
  EXPECT_NEAR(static_cast<double>(ones) / draws, 0.5, 0.01);
}

TEST(SampleTransition, SameSeedSameOutput) {
  const auto m = build_gaussian_ar1({});
  Stream a(9), b(9);
  for (int i = 0; i < 20; ++i) EXPECT_EQ(sample_transition(m, 1, State::point(0.2), a),
                                         sample_transition(m, 1, State::point(0.2), b));
}

TEST(SampleTransition, ChiSquareGoodnessOfFit) {
  // 4-state row, 40000 draws; 3 degrees of freedom, 99.9% critical value 16.27.
  FiniteChainSpec spec;
  spec.initial = Eigen::VectorXd::Constant(4, 0.25);
  Eigen::MatrixXd p(4, 4);
  p << 0.1, 0.2, 0.3, 0.4, 0.25, 0.25, 0.25, 0.25, 0.7, 0.1, 0.1, 0.1, 0.05, 0.05, 0.45, 0.45;
  spec.transitions = {p};
  spec.payoffs = {Eigen::VectorXd::Zero(4), Eigen::VectorXd::Zero(4)};
  spec.criteria = {Eigen::VectorXd::Ones(4)};
  const auto m = make_finite_model(spec);
  Stream s(2024);
  constexpr int draws = 40000;
  for (std::size_t x = 0; x < 4; ++x) {
    std::array<int, 4> counts{};
    for (int i = 0; i < draws; ++i) ++counts[sample_transition(m, 1, cat(x), s).index()];
    double chi2 = 0.0;
    for (int y = 0; y < 4; ++y) {
      const double expected = draws * p(static_cast<Eigen::Index>(x), y);
      chi2 += (counts[y] - expected) * (counts[y] - expected) / expected;
    }
    EXPECT_LT(chi2, 16.27) << "row " << x;
  }
}

TEST(BuildGaussianAr1, DiscountCriteria) {
  Ar1Criteria c;
  c.preset = "discount";
  c.rate = 0.05;
  const auto m = build_gaussian_ar1({}, {"put", 1.0, {}}, c);
  for (std::size_t k = 0; k < 3; ++k) {
    EXPECT_NEAR(m.criterion(k, State::point(0.7)), std::exp(-0.05), 1e-15);
    EXPECT_NEAR(m.criteria_bounds[k], 0.95123, 1e-5);
  }
}

TEST(BuildGaussianAr1, SoftBarrierWithZeroBetaIsOne) {
  Ar1Criteria c;
  c.preset = "soft-barrier";
  c.beta = 0.0;
  c.barrier = 0.5;
  const auto m = build_gaussian_ar1({}, {}, c);
  for (double x : {-3.0, 0.0, 0.5, 4.0}) EXPECT_EQ(m.criterion(1, State::point(x)), 1.0);
}

TEST(BuildGaussianAr1, ZeroHorizonAndBadSigma) {
  Ar1Params p;
  p.horizon = 0;
  const auto m = build_gaussian_ar1(p);
  EXPECT_EQ(m.horizon, 0u);
  EXPECT_TRUE(validate_model(m).ok());
  p.sigma = 0.0;
  EXPECT_THROW(build_gaussian_ar1(p), ContractError);
}

TEST(RandomModels, AlwaysValid) {
  Stream s(77);
  for (int i = 0; i < 200; ++i) {
    const auto m = random_finite_model(s);
    const auto report = validate_model(m);
    ASSERT_TRUE(report.ok()) << report.summary();
    EXPECT_LE(m.horizon, 4u);
    for (const auto& sp : m.spaces) EXPECT_LE(sp.size, 4u);
  }
}

TEST(SeedSplitting, StreamsAreDistinctAndStable) {
  EXPECT_NE(run_seed(1, 0), run_seed(1, 1));
  EXPECT_NE(step_stream(5, 1, Phase::selection).engine()(), step_stream(5, 1, Phase::mutation).engine()());
  EXPECT_EQ(step_stream(5, 2, Phase::init).engine()(), step_stream(5, 2, Phase::init).engine()());
  Stream u(3);
  for (int i = 0; i < 1000; ++i) {
    const double x = u.uniform();
    ASSERT_GE(x, 0.0);
    ASSERT_LT(x, 1.0);
  }
}
