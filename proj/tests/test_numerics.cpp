#include <cmath>

#include <gtest/gtest.h>

#include "helpers.hpp"
#include "wfda/expbasis.hpp"
#include "wfda/numerics.hpp"
#include "wfda/simgen.hpp"

using namespace wfda;

namespace {

WeightSpec normalized_s2_shape() { return make_step({0.0, 0.25, 0.5, 0.75, 1.0}, {0.0, 2.0 / 3, 4.0 / 3, 2.0}); }

}  // namespace

TEST(Domain, BoundedNeedsOrderedEndpoints) {
  EXPECT_THROW(Domain::bounded(1.0, 1.0), ConfigError);
  EXPECT_THROW(Domain::bounded(2.0, 1.0), ConfigError);
  const Domain d = Domain::bounded(0.0, 2.0);
  EXPECT_TRUE(d.contains(2.0));
  EXPECT_FALSE(d.contains(2.1));
  EXPECT_TRUE(Domain::unbounded_right(0.0).contains(1e9));
  EXPECT_FALSE(Domain::unbounded_right(0.0).contains(-0.5));
}

TEST(EvaluateWeight, ScenarioTwoStepAtPointEight) {
  EXPECT_DOUBLE_EQ(evaluate_weight(sim::s2_weight(), 0.8), 0.5);
}

TEST(EvaluateWeight, UniformIsOne) { EXPECT_EQ(evaluate_weight(UniformWeight{}, 0.3), 1.0); }

TEST(EvaluateWeight, ExponentialAtOriginIsRate) { EXPECT_EQ(evaluate_weight(ExponentialWeight{2.0}, 0.0), 2.0); }

TEST(EvaluateWeight, StepBreakpointsTakeRightInterval) {
  const WeightSpec w = sim::s2_weight();
  EXPECT_EQ(evaluate_weight(w, 0.25), 1.0 / 6);
  EXPECT_EQ(evaluate_weight(w, 0.5), 1.0 / 3);
  EXPECT_EQ(evaluate_weight(w, 0.75), 0.5);
  EXPECT_EQ(evaluate_weight(w, 1.0), 0.5);  // last interval closed
  EXPECT_EQ(evaluate_weight(w, 0.0), 0.0);
}

TEST(EvaluateWeight, OutsideSupportThrows) {
  EXPECT_THROW(evaluate_weight(sim::s2_weight(), 1.01), DomainError);
  EXPECT_THROW(evaluate_weight(sim::s2_weight(), -0.01), DomainError);
  EXPECT_THROW(evaluate_weight(ExponentialWeight{1.0}, -1.0), DomainError);
}

TEST(EvaluateWeight, HalfNormalDensity) {
  const double s = 1.5;
  EXPECT_NEAR(evaluate_weight(HalfNormalWeight{s}, 0.0), std::sqrt(2.0 / M_PI) / s, 1e-15);
  EXPECT_NEAR(evaluate_weight(HalfNormalWeight{s}, s), std::sqrt(2.0 / M_PI) / s * std::exp(-0.5), 1e-15);
}

TEST(EvaluateWeight, NonnegativeEverywhere) {
  const std::vector<WeightSpec> specs{UniformWeight{}, sim::s2_weight(), ExponentialWeight{0.7},
                                      HalfNormalWeight{2.0}};
  for (const auto& w : specs)
    for (int i = 0; i <= 1000; ++i) EXPECT_GE(evaluate_weight(w, i / 1000.0), 0.0);
}

TEST(WeightSpecValidation, RejectsMalformedSteps) {
  EXPECT_THROW(make_step({0.0, 1.0}, {1.0, 2.0}), ConfigError);
  EXPECT_THROW(make_step({0.0, 0.5, 0.5}, {1.0, 2.0}), ConfigError);
  EXPECT_THROW(make_step({0.0, 1.0}, {-1.0}), InvariantError);
  EXPECT_THROW(validate(WeightSpec{ExponentialWeight{0.0}}), ConfigError);
  EXPECT_THROW(validate(WeightSpec{HalfNormalWeight{-1.0}}), ConfigError);
}

TEST(WeightSpecValidation, FamilyMustMatchDomain) {
  EXPECT_THROW(check_compatible(ExponentialWeight{1.0}, Domain::bounded(0, 1)), ConfigError);
  EXPECT_THROW(check_compatible(UniformWeight{}, Domain::unbounded_right(0)), ConfigError);
  EXPECT_THROW(check_compatible(sim::s2_weight(), Domain::unbounded_right(0)), ConfigError);
  EXPECT_NO_THROW(check_compatible(HalfNormalWeight{1.0}, Domain::unbounded_right(0)));
}

TEST(BuildGrid, UnitIntervalTrapezoid) {
  const WorkingGrid g = build_grid(Domain::bounded(0, 1), 101, UniformWeight{});
  EXPECT_EQ(g.size(), 101);
  EXPECT_NEAR(g.quad_weights.sum(), 1.0, 1e-14);
  EXPECT_EQ(g.points[0], 0.0);
  EXPECT_EQ(g.points[100], 1.0);
  EXPECT_FALSE(g.truncation.has_value());
}

TEST(BuildGrid, ExponentialTruncationAtQuantile) {
  const WorkingGrid g = build_grid(Domain::unbounded_right(0), 101, ExponentialWeight{1.0});
  const double closed_form = -std::log(1.0 - 0.999) / 1.0;
  EXPECT_NEAR(g.points[100], closed_form, 1e-12);
  EXPECT_NEAR(g.points[100], 6.9078, 1e-4);
  ASSERT_TRUE(g.truncation.has_value());
  EXPECT_EQ(*g.truncation, g.points[100]);
  EXPECT_NEAR(g.quad_weights.sum(), closed_form, 1e-12);
}

TEST(BuildGrid, HalfNormalTruncationAtQuantile) {
  const WorkingGrid g = build_grid(Domain::unbounded_right(0), 101, HalfNormalWeight{2.0});
  // P(|N(0, 4)| <= x) = 0.999 at x = 2 * 3.2905267...
  EXPECT_NEAR(g.points[100], 2.0 * 3.2905267314919255, 1e-9);
}

TEST(BuildGrid, TwoNodeWeights) {
  const WorkingGrid g = build_grid(Domain::bounded(0, 1), 2, UniformWeight{});
  EXPECT_EQ(g.quad_weights[0], 0.5);
  EXPECT_EQ(g.quad_weights[1], 0.5);
}

TEST(BuildGrid, Errors) {
  EXPECT_THROW(build_grid(Domain::bounded(0, 1), 1, UniformWeight{}), ParameterError);
  EXPECT_THROW(build_grid(Domain::unbounded_right(0), 101, UniformWeight{}), ConfigError);
  EXPECT_THROW(build_grid(Domain::unbounded_right(0), 101, sim::s2_weight()), ConfigError);
}

TEST(BuildGrid, UpperCapAndTailOverride) {
  GridOptions go;
  go.upper_cap = 3.0;
  EXPECT_EQ(build_grid(Domain::unbounded_right(0), 11, ExponentialWeight{1.0}, go).points[10], 3.0);
  GridOptions tail;
  tail.tail_probability = 0.99;
  EXPECT_NEAR(build_grid(Domain::unbounded_right(0), 11, ExponentialWeight{1.0}, tail).points[10], -std::log(0.01),
              1e-12);
}

TEST(BuildGrid, LinearIntegrandExact) {
  const WorkingGrid g = build_grid(Domain::bounded(0, 1), 37, UniformWeight{});
  EXPECT_NEAR(integrate(g.points, g), 0.5, 1e-12);
}

TEST(GridFromPoints, RejectsUnsortedPoints) {
  Vector p(3);
  p << 0.0, 0.5, 0.5;
  EXPECT_THROW(grid_from_points(Domain::bounded(0, 1), p), ParameterError);
  p << 0.0, 0.5, 1.5;
  EXPECT_THROW(grid_from_points(Domain::bounded(0, 1), p), DomainError);
}

TEST(Integrate, ConstantOnUnitInterval) {
  const WorkingGrid g = build_grid(Domain::bounded(0, 1), 101, UniformWeight{});
  EXPECT_NEAR(integrate(Vector::Ones(101), g), 1.0, 1e-14);
}

TEST(Integrate, ScenarioTwoWeightMass) {
  // Exact piecewise value (1/6 + 1/3 + 1/2) / 4; breakpoints are grid nodes of
  // a 1001-point grid, so the trapezoid error is confined to three cells.
  const double exact = (1.0 / 6 + 1.0 / 3 + 1.0 / 2) / 4;
  EXPECT_DOUBLE_EQ(exact, 0.25);
  EXPECT_NEAR(weight_mass(sim::s2_weight(), Domain::bounded(0, 1)), exact, 1e-15);
  const WorkingGrid g = build_grid(Domain::bounded(0, 1), 1001, UniformWeight{});
  EXPECT_NEAR(integrate(evaluate_weight(sim::s2_weight(), g), g), exact, 1e-3);
}

TEST(Integrate, ExponentialMassUpToQuantile) {
  const WeightSpec w = ExponentialWeight{2.0};
  const WorkingGrid g = build_grid(Domain::unbounded_right(0), 101, w);
  EXPECT_NEAR(integrate(evaluate_weight(w, g), g), 0.999, 1e-3);
}

TEST(Integrate, LengthMismatchThrows) {
  const WorkingGrid g = build_grid(Domain::bounded(0, 1), 11, UniformWeight{});
  EXPECT_THROW(integrate(Vector::Ones(10), g), ShapeError);
  EXPECT_THROW(inner_product_nu(Vector::Ones(11), Vector::Ones(12), UniformWeight{}, g), ShapeError);
}

TEST(InnerProduct, OnesUnderUniform) {
  const WorkingGrid g = build_grid(Domain::bounded(0, 1), 101, UniformWeight{});
  EXPECT_NEAR(inner_product_nu(Vector::Ones(101), Vector::Ones(101), UniformWeight{}, g), 1.0, 1e-14);
}

TEST(InnerProduct, LaguerrePairUnderExponentialMatchesGaussLaguerre) {
  // Oracle: 64-node Gauss-Laguerre rule from Golub-Welsch.
  const auto [x, wq] = oracle::golub_welsch_laguerre(64);
  double oracle = 0.0;
  for (int i = 0; i < 64; ++i) oracle += wq[i] * 1.0 * (1.0 - x[i]);
  EXPECT_NEAR(oracle, 0.0, 1e-10);

  const WeightSpec w = ExponentialWeight{1.0};
  GridOptions go;
  go.tail_probability = 1.0 - 1e-9;
  const WorkingGrid g = build_grid(Domain::unbounded_right(0), 4001, w, go);
  const ExpBasis basis(1.0, 2);
  Vector f(g.size()), h(g.size());
  for (Eigen::Index i = 0; i < g.size(); ++i) {
    f[i] = evaluate_basis(basis, 1, g.points[i]);
    h[i] = evaluate_basis(basis, 2, g.points[i]);
  }
  EXPECT_NEAR(inner_product_nu(f, h, w, g), oracle, 1e-4);
}

TEST(InnerProduct, CosineNormUnderUniform) {
  const WorkingGrid g = build_grid(Domain::bounded(0, 1), 1001, UniformWeight{});
  Vector psi(g.size());
  for (Eigen::Index i = 0; i < g.size(); ++i) psi[i] = std::sqrt(2.0) * std::cos(M_PI * g.points[i]);
  EXPECT_NEAR(inner_product_nu(psi, psi, UniformWeight{}, g), 1.0, 1e-6);
}

TEST(InnerProduct, SymmetricAndBilinear) {
  const WeightSpec w = normalized_s2_shape();
  const WorkingGrid g = build_grid(Domain::bounded(0, 1), 101, UniformWeight{});
  std::mt19937_64 eng(3);
  std::normal_distribution<double> z;
  Vector f(101), h(101), k(101);
  for (int i = 0; i < 101; ++i) {
    f[i] = z(eng);
    h[i] = z(eng);
    k[i] = z(eng);
  }
  const double a = 1.7, b = -0.3;
  const double fh = inner_product_nu(f, h, w, g);
  EXPECT_NEAR(fh, inner_product_nu(h, f, w, g), 1e-14);
  const Vector lin = a * f + b * k;
  EXPECT_NEAR(inner_product_nu(lin, h, w, g), a * fh + b * inner_product_nu(k, h, w, g), 1e-12);
}

TEST(Normalization, ParametricDensitiesOnDefaultGrid) {
  const Domain dom = Domain::unbounded_right(0);
  const std::vector<WeightSpec> specs{ExponentialWeight{1.0}, ExponentialWeight{0.25}, ExponentialWeight{4.0},
                                      HalfNormalWeight{1.0}, HalfNormalWeight{3.0}};
  for (const auto& w : specs) {
    const WorkingGrid g = build_grid(dom, 101, w);
    EXPECT_LT(std::abs(integrate(evaluate_weight(w, g), g) - 1.0), 5e-3) << describe(w);
  }
}

TEST(Normalization, UniformAndStepAnalytic) {
  EXPECT_LT(std::abs(weight_mass(UniformWeight{}, Domain::bounded(0, 1)) - 1.0), 1e-10);
  EXPECT_LT(std::abs(weight_mass(normalized_s2_shape(), Domain::bounded(0, 1)) - 1.0), 1e-10);
  EXPECT_TRUE(is_normalized(normalized_s2_shape(), Domain::bounded(0, 1)));
  EXPECT_FALSE(is_normalized(sim::s2_weight(), Domain::bounded(0, 1)));
  EXPECT_TRUE(is_normalized(make_step({2.0, 3.0, 6.0}, {0.25, 0.25}), Domain::bounded(2, 6)));
}

TEST(Interpolation, LinearWithConstantEnds) {
  Vector xs(3), ys(3);
  xs << 0.0, 1.0, 2.0;
  ys << 0.0, 2.0, 0.0;
  EXPECT_DOUBLE_EQ(interpolate_linear(xs, ys, 0.5), 1.0);
  EXPECT_DOUBLE_EQ(interpolate_linear(xs, ys, 1.5), 1.0);
  EXPECT_DOUBLE_EQ(interpolate_linear(xs, ys, -3.0), 0.0);
  EXPECT_DOUBLE_EQ(interpolate_linear(xs, ys, 9.0), 0.0);
  EXPECT_DOUBLE_EQ(interpolate_linear(xs, ys, 1.0), 2.0);
}
