#include <gtest/gtest.h>

#include <cmath>

#include "kernelsmith/error.hpp"
#include "kernelsmith/random.hpp"
#include "kernelsmith/sampler.hpp"
#include "oracles.hpp"

namespace ks {
namespace {

double area(double b2, double c, double a) {
  return oracle::integrate([&](double x) { return parabola(b2, c, x); }, a, 1.0);
}

TEST(CurveAlgebra, HalfwayInvertedParabola) {
  EXPECT_NEAR(solve_parabola_b2(0.5, 3.0, 1.0), -12.0, 1e-12);
  EXPECT_NEAR(area(-12.0, 3.0, 0.5), 1.0, 1e-9);
}

TEST(CurveAlgebra, ConstantCurveSpendsBudgetExactly) {
  EXPECT_DOUBLE_EQ(solve_parabola_b2(0.0, 0.7, 0.7), 0.0);
  EXPECT_NEAR(solve_parabola_c(0.5, 0.0, 1.0), 2.0, 1e-12);
}

TEST(CurveAlgebra, FullIntervalClosedForm) {
  // Over [0, 1] the integral is b2 / 12 + c.
  EXPECT_NEAR(solve_parabola_c(0.0, 0.5, 0.2), 0.2 - 0.5 / 12.0, 1e-12);
}

TEST(CurveAlgebra, EndOfCurveIsSignalled) {
  try {
    solve_parabola_b2(1.0, 3.0, 1.0);
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kEndOfCurve);
  }
  EXPECT_THROW(solve_parabola_c(1.0, 0.5, 1.0), Error);
}

TEST(CurveAlgebra, RandomGridAgreesWithQuadrature) {
  Rng rng(3);
  for (int i = 0; i < 200; ++i) {
    const double a = rng.uniform(0.0, 0.95);
    const double k = rng.uniform(0.0, 5.0);
    const double t = rng.uniform(0.0, 3.0);
    EXPECT_NEAR(area(solve_parabola_b2(a, k, t), k, a), t, 1e-9);
    EXPECT_NEAR(area(k, solve_parabola_c(a, k, t), a), t, 1e-9);
  }
}

TEST(CurveAlgebra, ParabolaIsCentredAtHalf) {
  EXPECT_DOUBLE_EQ(parabola(2.0, 1.0, 0.5), 1.0);
  EXPECT_DOUBLE_EQ(parabola(2.0, 1.0, 0.0), parabola(2.0, 1.0, 1.0));
}

TEST(ExpectedLength, RoundsAndClamps) {
  DecodeConfig cfg;
  EXPECT_EQ(expected_length(10, cfg), 17u);
  cfg.max_len = 12;
  EXPECT_EQ(expected_length(10, cfg), 12u);
  cfg.expansion_factor = 1.0;
  EXPECT_EQ(expected_length(0, cfg), 1u);
}

TEST(TokenNovelty, Examples) {
  const std::vector<double> two = {std::log(0.9), std::log(0.1)};
  EXPECT_NEAR(token_novelty(two, 1.0, 1), 0.8, 1e-12);
  EXPECT_DOUBLE_EQ(token_novelty(two, 1.0, 0), 0.0);
  const std::vector<double> uniform(5, std::log(0.2));
  for (TokenId i = 0; i < 5; ++i) EXPECT_DOUBLE_EQ(token_novelty(uniform, 0.7, i), 0.0);
}

TEST(TokenNovelty, DirectSoftmaxEvaluation) {
  Rng rng(12);
  for (int rep = 0; rep < 50; ++rep) {
    std::vector<double> lp(7);
    double z = 0.0;
    for (double& x : lp) z += std::exp(x = rng.uniform(-6.0, 0.0));
    for (double& x : lp) x -= std::log(z);
    const double tau = rng.uniform(0.1, 2.0);
    const auto chosen = static_cast<TokenId>(rng.index(lp.size()));
    std::vector<double> p(lp.size());
    double zt = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) zt += p[i] = std::exp(lp[i] / tau);
    double peak = 0.0;
    for (double& x : p) peak = std::max(peak, x /= zt);
    const double nov = token_novelty(lp, tau, chosen);
    EXPECT_NEAR(nov, peak - p[static_cast<std::size_t>(chosen)], 1e-12);
    EXPECT_GE(nov, 0.0);
    EXPECT_LT(nov, 1.0);
  }
}

}  // namespace
}  // namespace ks
