#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "pnstein/mc.hpp"
#include "pnstein/moments.hpp"
#include "pnstein/stein.hpp"

using namespace pnstein;

namespace {

std::vector<TestFunction> monomials_to(int k) {
  std::vector<TestFunction> out;
  for (int i = 0; i <= k; ++i) out.push_back(TestFunction::monomial(i));
  return out;
}

}  // namespace

TEST(Mc, ConfigValidation) {
  SamplerConfig cfg;
  cfg.count = 0;
  EXPECT_THROW(cfg.check(), Error);
  cfg.count = 10;
  cfg.batch = 11;
  EXPECT_THROW(cfg.check(), Error);
  cfg.batch = 4;
  EXPECT_EQ(cfg.batches(), 3);
  EXPECT_EQ(cfg.batch_size(2), 2);
}

TEST(Mc, SameSeedSameDraws) {
  const auto mp = MeanParams::validate(1, -2, 0.5, 1.5, 0.3, 3);
  SamplerConfig cfg{9, 1000, 100};
  const auto a = sample_mean_of_products(mp, cfg);
  const auto b = sample_mean_of_products(mp, cfg);
  ASSERT_EQ(a.size(), 1000u);
  for (int i = 0; i < 100; ++i) EXPECT_EQ(a[i], b[i]);
  cfg.seed = 10;
  EXPECT_NE(sample_mean_of_products(mp, cfg)[0], a[0]);
}

TEST(Mc, ThreadCountDoesNotChangeEstimates) {
  const auto mp = MeanParams::validate(0.7, 1.1, 1, 2, -0.4, 2);
  SamplerConfig cfg{5, 200'000, 10'000, 1};
  const auto one = estimate_stein_expectations(mp, operator_a1(mp), monomials_to(3), cfg);
  cfg.threads = 4;
  const auto four = estimate_stein_expectations(mp, operator_a1(mp), monomials_to(3), cfg);
  for (std::size_t i = 0; i < one.size(); ++i) {
    EXPECT_EQ(one[i].mean, four[i].mean);
    EXPECT_EQ(one[i].stderr_, four[i].stderr_);
    EXPECT_EQ(one[i].count, 200'000);
  }
}

TEST(Mc, WelfordMergeMatchesSinglePass) {
  detail::MultiWelford all(1), left(1), right(1);
  for (int i = 0; i < 1000; ++i) {
    const double x = std::sin(0.37 * i) * 10 + 3;
    all.add({x});
    (i < 300 ? left : right).add({x});
  }
  left.merge(right);
  EXPECT_NEAR(left.mean[0], all.mean[0], 1e-12);
  EXPECT_NEAR(left.m2[0], all.m2[0], 1e-9);
  EXPECT_EQ(left.n, 1000);
}

TEST(Mc, SampleMeans) {
  SamplerConfig cfg{1, 1'000'000, 1 << 16};
  const auto zero = MeanParams::validate(0, 0, 1, 1, 0, 1);
  const auto e0 = estimate_functionals([&] { return MeanProductSampler(zero); }, {[](double x) { return x; }}, cfg);
  EXPECT_LE(std::abs(e0[0].mean), 4 * e0[0].stderr_);
  for (const auto& mp : {MeanParams::validate(1.5, -0.5, 2, 0.7, 0.6, 1), MeanParams::validate(-1, 2, 1, 1, -0.8, 4)}) {
    const auto e = estimate_functionals([&] { return MeanProductSampler(mp); }, {[](double x) { return x; }}, cfg);
    const auto& p = mp.base();
    EXPECT_LE(std::abs(e[0].mean - (p.mu_x() * p.mu_y() + p.rho() * p.s())), 4 * e[0].stderr_);
  }
}

// E[A f(W)] vanishes for each operator on a parameter set it applies to.
TEST(Mc, AllOperatorsOnMonomials) {
  struct Case {
    OperatorKind kind;
    MeanParams mp;
  };
  const std::vector<Case> cases = {
      {OperatorKind::A1, MeanParams::validate(1, 2, 1, 2, 0.5, 3)},
      {OperatorKind::A2, MeanParams::validate(2, 1, 2, 1, -0.3, 2)},
      {OperatorKind::A3, MeanParams::validate(0, 0, 1.5, 0.5, 0.25, 3)},
      {OperatorKind::A4, MeanParams::validate(0, 0, 1.5, 0.5, 0.25, 3)},
      {OperatorKind::A5, MeanParams::validate(0, 0, 2, 1.5, 0, 1)},
      {OperatorKind::A6, MeanParams::validate(1, 2, 1, 1, 0, 1)},
      {OperatorKind::A7, MeanParams::validate(1.5, 1.5, 1, 1, 0, 1)},
  };
  SamplerConfig cfg{2025, 1'000'000, 1 << 16};
  for (const auto& c : cases) {
    const auto spec = operator_special(c.kind, c.mp);
    const auto est = estimate_stein_expectations(c.mp, spec, monomials_to(4), cfg);
    for (std::size_t k = 0; k < est.size(); ++k) {
      EXPECT_LE(std::abs(est[k].z_score()), 4.0) << to_string(c.kind) << " x^" << k;
    }
  }
}

TEST(Mc, A2WithGaussianWeight) {
  const auto mp = MeanParams::validate(1, 0.5, 2, 1, 0.4, 2);
  const auto f = TestFunction::gaussian_times_poly(2.0, {0.5, -1.0, 0.3});
  const auto e = estimate_stein_expectation(mp, operator_a2(mp), f, SamplerConfig{3, 1'000'000, 1 << 16});
  EXPECT_LE(std::abs(e.z_score()), 4.0);
}

// Under a normal law with the same mean m and variance v, A1 applied to x^2
// has expectation a_{1,0} (m^3 + 3 m v - E W^3): every other term only
// involves the first two moments, which agree.
TEST(Mc, WrongDistributionIsDetected) {
  const auto mp = MeanParams::validate(1, 2, 1, 1, 0.5, 1);
  const auto spec = operator_a1(mp);
  const auto raw = raw_moments(mp, 3);
  const double m = raw[1];
  const double v = raw[2] - m * m;
  const double expected = spec[0].a1 * (m * m * m + 3 * m * v - raw[3]);
  ASSERT_GT(std::abs(expected), 1.0);
  const auto e = estimate_stein_expectation_normal(m, v, spec, TestFunction::monomial(2), SamplerConfig{4, 1'000'000, 1 << 16});
  EXPECT_GT(std::abs(e.mean), 6 * e.stderr_);
  EXPECT_LE(std::abs(e.mean - expected), 4 * e.stderr_);
  // the same operator is centred under the right law
  const auto ok = estimate_stein_expectation(mp, spec, TestFunction::monomial(2), SamplerConfig{4, 1'000'000, 1 << 16});
  EXPECT_LE(std::abs(ok.z_score()), 4.0);
}

TEST(Mc, NormalBaseline) {
  const auto e = estimate_normal_stein(1.5, 2.0, TestFunction::monomial(3), SamplerConfig{6, 1'000'000, 1 << 16});
  EXPECT_LE(std::abs(e.z_score()), 4.0);
  EXPECT_THROW(NormalSampler(0.0, 0.0), Error);
}

TEST(Mc, CfAtZero) {
  const auto e = estimate_cf(MeanParams::validate(1, 1, 1, 1, 0.2, 2), 0.0, SamplerConfig{7, 10'000, 1000});
  EXPECT_EQ(e.re.mean, 1.0);
  EXPECT_EQ(e.re.stderr_, 0.0);
  EXPECT_EQ(e.im.mean, 0.0);
  EXPECT_EQ(e.im.stderr_, 0.0);
}

TEST(Mc, MomentEstimates) {
  const auto mp = MeanParams::validate(0.5, 1.5, 1.2, 0.8, -0.3, 2);
  const auto var = closed_form_four(mp).variance;
  const auto e2 = estimate_moment(mp, 2, true, SamplerConfig{8, 1'000'000, 1 << 16});
  EXPECT_LE(std::abs(e2.mean - var), 4 * e2.stderr_);
  const auto e6 = estimate_moment(MeanParams::validate(1, 0, 1, 1, 0, 1), 6, false, SamplerConfig{8, 1'000'000, 1 << 16});
  EXPECT_LE(std::abs(e6.mean - 1140.0), 4 * e6.stderr_);
  EXPECT_THROW(estimate_moment(mp, -1, false, SamplerConfig{}), Error);
}
