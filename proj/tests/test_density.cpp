#include <gtest/gtest.h>

#include <boost/math/quadrature/exp_sinh.hpp>
#include <boost/math/quadrature/tanh_sinh.hpp>
#include <cmath>
#include <numbers>

#include "oracles.hpp"
#include "pnstein/bessel.hpp"
#include "pnstein/density.hpp"
#include "pnstein/mc.hpp"
#include "pnstein/moments.hpp"

using namespace pnstein;

namespace {

double pdf(const ProductNormalParams& p, double x) { return require_converged(pdf_product(p, x)).value(); }

// Integral of g over the real line split at 0, where the density is singular.
template <class G>
double integrate_line(G g) {
  boost::math::quadrature::exp_sinh<double> es;
  const double right = es.integrate(g, 0.0, std::numeric_limits<double>::infinity(), 1e-12);
  const double left = es.integrate([&](double u) { return g(-u); }, 0.0, std::numeric_limits<double>::infinity(), 1e-12);
  return left + right;
}

const ProductNormalParams kSweep[] = {
    ProductNormalParams::validate(0, 0, 1, 1, 0),       ProductNormalParams::validate(1, -1, 0.5, 2, 0.9),
    ProductNormalParams::validate(3, 3, 1, 1, -0.9),    ProductNormalParams::validate(-3, 1, 2, 0.5, 0),
    ProductNormalParams::validate(1, 0, 1, 2, 0.9),     ProductNormalParams::validate(0, -3, 0.5, 0.5, -0.9),
    ProductNormalParams::validate(-1, -1, 2, 2, 0),     ProductNormalParams::validate(3, -3, 1, 1, 0.9),
    ProductNormalParams::validate(1, 3, 0.5, 1, -0.9),  ProductNormalParams::validate(-3, 0, 2, 1, 0),
};

}  // namespace

TEST(Density, ZeroMeanProductIsBesselK0) {
  const auto p = ProductNormalParams::validate(0, 0, 1, 1, 0);
  const double ref = bessel_k(BesselOrder::integer(0), 1.0) / std::numbers::pi;
  const auto v = pdf_product(p, 1.0);
  EXPECT_TRUE(v.converged);
  EXPECT_EQ(v.terms_used, 1);
  EXPECT_LE(oracle::rel_err(v.value(), ref), 1e-15);
  EXPECT_LE(oracle::rel_err(pdf_mean_zero_means(MeanParams(p, 1), 1.0).value(), ref), 1e-14);
}

TEST(Density, SingularPointAtZero) {
  const auto p = ProductNormalParams::validate(1, 2, 1, 1, 0.3);
  try {
    pdf_product(p, 0.0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::SingularPoint);
  }
  EXPECT_THROW(pdf_mean_zero_means(MeanParams::validate(0, 0, 1, 1, 0, 1), 0.0), Error);
  // n >= 2: finite limit
  EXPECT_TRUE(std::isfinite(pdf_mean_zero_means(MeanParams::validate(0, 0, 1, 1, 0, 2), 0.0).value()));
  EXPECT_TRUE(std::isfinite(pdf_mean_zero_means(MeanParams::validate(0, 0, 1, 1, 0.4, 5), 0.0).value()));
}

TEST(Density, SingleSeriesMatchesDoubleSeries) {
  for (const auto& p : {ProductNormalParams::validate(1, 0, 1, 1, 0), ProductNormalParams::validate(0, 2.5, 0.7, 1.3, 0),
                        ProductNormalParams::validate(-2, 0, 1.5, 0.6, 0)}) {
    for (int i = 0; i < 41; ++i) {
      const double x = -6.0 + 12.0 * i / 40.0 + 0.013;
      const double a = pdf(p, x);
      const double b = require_converged(pdf_single_zero_mean(p, x)).value();
      EXPECT_LE(oracle::rel_err(a, b), 1e-10) << x;
    }
  }
}

TEST(Density, SingleSeriesCaseChecks) {
  EXPECT_THROW(pdf_single_zero_mean(ProductNormalParams::validate(1, 0, 1, 1, 0.2), 1.0), Error);
  EXPECT_THROW(pdf_single_zero_mean(ProductNormalParams::validate(1, 1, 1, 1, 0), 1.0), Error);
  const auto z = ProductNormalParams::validate(0, 0, 2, 1.5, 0);
  EXPECT_LE(oracle::rel_err(pdf_single_zero_mean(z, 0.8).value(),
                            bessel_k(BesselOrder::integer(0), 0.8 / 3.0) / (std::numbers::pi * 3.0)),
            1e-14);
}

TEST(Density, MeanOfTwoIsLaplace) {
  const auto mp = MeanParams::validate(0, 0, 1, 1, 0, 2);
  for (double x : {-3.0, -1.0, 0.25, 1.0, 4.0}) {
    EXPECT_LE(oracle::rel_err(pdf_mean_zero_means(mp, x).value(), std::exp(-2.0 * std::abs(x))), 1e-14) << x;
  }
}

TEST(Density, ZeroMeanClosedFormMatchesSeriesAtNOne) {
  for (double rho : {-0.6, 0.0, 0.45}) {
    const auto mp = MeanParams::validate(0, 0, 1.3, 0.8, rho, 1);
    for (double x : {-5.0, -0.3, 0.01, 0.7, 2.0, 9.0}) {
      EXPECT_LE(oracle::rel_err(pdf(mp.base(), x), pdf_mean_zero_means(mp, x).value()), 1e-10);
    }
  }
}

TEST(Density, ZeroMeanClosedFormIntegratesToOne) {
  const auto mp = MeanParams::validate(0, 0, 1, 2, 0.3, 5);
  boost::math::quadrature::tanh_sinh<double> ts;
  auto f = [&](double u) { return pdf_mean_zero_means(mp, u).value(); };
  const double total = integrate_line(f);
  EXPECT_NEAR(total, 1.0, 1e-10);
}

TEST(Density, SingleSeriesIntegratesToOne) {
  const auto p = ProductNormalParams::validate(1.5, 0, 1, 0.8, 0);
  const double total = integrate_line([&](double u) { return pdf_single_zero_mean(p, u).value(); });
  EXPECT_NEAR(total, 1.0, 1e-8);
}

TEST(Density, NormalisationSweep) {
  for (const auto& p : kSweep) {
    const double total = integrate_line([&](double u) { return pdf(p, u); });
    EXPECT_NEAR(total, 1.0, 1e-6) << p.mu_x() << " " << p.mu_y() << " " << p.rho();
  }
}

TEST(Density, ConvergedValuesArePositive) {
  for (const auto& p : kSweep) {
    for (double x : oracle::logspace(1e-6, 200, 30)) {
      for (double sx : {-x, x}) {
        const auto v = pdf_product(p, sx);
        ASSERT_TRUE(v.converged);
        EXPECT_EQ(v.sign, 1);
        EXPECT_GE(v.value(), 0.0);
      }
    }
  }
}

TEST(Density, MomentsMatchClosedForms) {
  for (const auto& p : {kSweep[1], kSweep[3], kSweep[4]}) {
    const auto four = closed_form_four(MeanParams(p, 1));
    for (int k = 1; k <= 4; ++k) {
      const double m = integrate_line([&](double u) {
        const double f = pdf(p, u);
        return f == 0.0 ? 0.0 : std::pow(u, k) * f;  // avoid inf * 0 far out
      });
      const double scale = std::pow(four.variance, 0.5 * k);
      EXPECT_LE(std::abs(m - four.raw[k - 1]), 1e-6 * std::max(std::abs(four.raw[k - 1]), scale)) << k;
    }
  }
}

TEST(Density, SeriesFallsBackWhenItCancels) {
  // Large opposite means make the signed series lose every digit.
  const auto p = ProductNormalParams::validate(3, -3, 1, 1, 0.9);
  SeriesControl raw_ctl;
  raw_ctl.allow_integral_fallback = false;
  const auto raw = pdf_product(p, 5.0, raw_ctl);
  const auto good = pdf_product(p, 5.0);
  EXPECT_EQ(good.method, DensityMethod::IntegralRepresentation);
  EXPECT_TRUE(good.converged);
  EXPECT_GT(good.value(), 0.0);
  // The series and the integral agree where the series is well conditioned.
  const auto q = ProductNormalParams::validate(1, 0.5, 1, 1, 0.3);
  const auto s = pdf_product(q, 1.5);
  ASSERT_EQ(s.method, DensityMethod::Series);
  EXPECT_LE(oracle::rel_err(s.value(), detail::product_density_integral(q, 1.5).value()), 1e-12);
  (void)raw;
}

TEST(Density, NotConvergedIsReported) {
  const auto p = ProductNormalParams::validate(2, 1.5, 1, 1, 0.1);
  SeriesControl ctl;
  ctl.max_outer = 2;
  ctl.allow_integral_fallback = false;
  const auto v = pdf_product(p, 3.0, ctl);
  EXPECT_FALSE(v.converged);
  try {
    require_converged(v);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::NotConverged);
  }
}

TEST(Density, OdeResidualLaplace) {
  const auto mp = MeanParams::validate(0, 0, 1, 1, 0, 2);
  EXPECT_LE(ode_residual_density(mp, 1.5, pdf_mean_zero_means_derivatives(mp, 1.5)), 1e-10);
  // hand-written derivatives of exp(-2|x|) for x > 0
  const double e = std::exp(-3.0);
  const Derivatives d{e, -2 * e, 4 * e, -8 * e, 16 * e};
  EXPECT_LE(ode_residual_density(mp, 1.5, d), 1e-14);
}

TEST(Density, OdeResidualZeroMeansAnalytic) {
  const auto mp = MeanParams::validate(0, 0, 1, 1, 0.4, 3);
  for (double x : {-2.0, -1.0, -0.5, 0.5, 1.0, 2.0}) {
    EXPECT_LE(ode_residual_density(mp, x, pdf_mean_zero_means_derivatives(mp, x)), 1e-8) << x;
  }
}

TEST(Density, AnalyticDerivativesMatchFiniteDifferences) {
  const auto mp = MeanParams::validate(0, 0, 1, 1, -0.4, 5);
  for (double x : {-1.7, 0.6, 2.3}) {
    const auto a = pdf_mean_zero_means_derivatives(mp, x);
    const auto fd = richardson_derivatives([&](double u) { return pdf_mean_zero_means(mp, u).value(); }, x, 0.02);
    for (int k = 0; k < 5; ++k) EXPECT_NEAR(a[k], fd[k], 1e-6 * std::max(1.0, std::abs(a[k]))) << x << " " << k;
  }
}

TEST(Density, OdeResidualGeneralFiniteDifference) {
  const auto mp = MeanParams::validate(1, 0.5, 1, 1, 0.2, 1);
  EXPECT_LE(ode_residual_density(mp, 1.0, pdf_product_derivatives_fd(mp.base(), 1.0)), 1e-4);
}

TEST(Density, OdeNeedsUnitVariances) {
  const auto mp = MeanParams::validate(0, 0, 2, 1, 0, 2);
  EXPECT_THROW(ode_residual_density(mp, 1.0, pdf_mean_zero_means_derivatives(mp, 1.0)), Error);
}

TEST(Density, CdfBasics) {
  const auto z = ProductNormalParams::validate(0, 0, 1, 1, 0);
  EXPECT_NEAR(cdf_product(z, 0.0), 0.5, 1e-12);
  for (const auto& p : {kSweep[1], kSweep[2], kSweep[7]}) {
    const double scale = detail::product_scale(p);
    EXPECT_GE(cdf_product(p, 1e6 * scale), 1.0 - 1e-8);
    EXPECT_LE(cdf_product(p, -1e6 * scale), 1e-8);
    double prev = 0.0;
    for (int i = -6; i <= 6; ++i) {
      const double c = cdf_product(p, 0.5 * i * scale);
      EXPECT_GE(c, prev - 1e-12);
      prev = c;
    }
  }
}

// Interval probabilities from the density against counts from 10^7 draws.
TEST(Density, MonteCarloIntervalProbabilities) {
  const auto mp = MeanParams::validate(1, 2, 1, 2, 0.5, 1);
  const auto& p = mp.base();
  const double mean = p.mu_x() * p.mu_y() + p.rho() * p.s();
  std::vector<double> grid;
  for (int i = 0; i < 41; ++i) grid.push_back(-6.0 + 16.0 * i / 40.0);
  std::vector<double> cdf;
  for (double x : grid) cdf.push_back(cdf_product(p, x));
  std::vector<std::function<double(double)>> gs;
  for (std::size_t i = 0; i + 1 < grid.size(); ++i) {
    gs.emplace_back([a = grid[i], b = grid[i + 1]](double w) { return (w > a && w <= b) ? 1.0 : 0.0; });
  }
  gs.emplace_back([mean](double w) { return w <= mean ? 1.0 : 0.0; });
  SamplerConfig cfg{2024, 10'000'000, 1 << 18};
  const auto est = estimate_functionals([&] { return MeanProductSampler(mp); }, gs, cfg);
  for (std::size_t i = 0; i + 1 < grid.size(); ++i) {
    const double prob = cdf[i + 1] - cdf[i];
    EXPECT_LE(std::abs(est[i].mean - prob), 4.0 * est[i].stderr_ + 1e-12) << grid[i];
  }
  const double at_mean = cdf_product(p, mean);
  EXPECT_LE(std::abs(est.back().mean - at_mean), 4.0 * est.back().stderr_);
}
