#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <string_view>
#include <vector>

#include <boost/math/quadrature/exp_sinh.hpp>
#include <boost/math/quadrature/tanh_sinh.hpp>

#include "pnstein/bessel.hpp"
#include "pnstein/error.hpp"
#include "pnstein/log_space.hpp"
#include "pnstein/numdiff.hpp"
#include "pnstein/params.hpp"

namespace pnstein {

/// Truncation policy for the infinite Bessel series.
struct SeriesControl {
  double rel_tol = 1e-14;
  int max_outer = 300;
  /// Switch to the integral representation when the series cannot be summed
  /// to full accuracy (non-convergence or heavy cancellation).
  bool allow_integral_fallback = true;

  void check() const {
    if (!(rel_tol > 0.0 && rel_tol < 1.0) || max_outer < 1) {
      throw Error(ErrorCode::InvalidArgument, "SeriesControl requires 0 < rel_tol < 1 and max_outer >= 1");
    }
  }
};

enum class DensityMethod { Series, ClosedForm, IntegralRepresentation };

constexpr std::string_view to_string(DensityMethod m) noexcept {
  switch (m) {
    case DensityMethod::Series: return "series";
    case DensityMethod::ClosedForm: return "closed_form";
    case DensityMethod::IntegralRepresentation: return "integral";
  }
  return "unknown";
}

/// A density value kept as log|p| and sign. A converged value always has
/// sign +1.
struct DensityValue {
  double log_abs = -std::numeric_limits<double>::infinity();
  int sign = 1;
  bool converged = false;
  int terms_used = 0;
  DensityMethod method = DensityMethod::Series;

  double value() const { return sign * std::exp(log_abs); }
};

/// Throws NotConverged unless v converged.
inline const DensityValue& require_converged(const DensityValue& v) {
  if (!v.converged) {
    throw Error(ErrorCode::NotConverged, "density series did not converge within max_outer blocks");
  }
  return v;
}

namespace detail {

inline constexpr double kMaxCancellationDigits = 4.0;

inline void require_nonzero_point(double x) {
  if (x == 0.0) {
    throw Error(ErrorCode::SingularPoint, "the density has a logarithmic singularity at x = 0");
  }
  if (!std::isfinite(x)) {
    throw Error(ErrorCode::InvalidArgument, "density argument must be finite");
  }
}

inline double log_cosh(double w) {
  const double a = std::abs(w);
  return a + std::log1p(std::exp(-2.0 * a)) - std::numbers::ln2;
}

/// Shared scalars of the double series and its integral form.
struct ProductSeriesSetup {
  double c;         // 1 - rho^2
  double s;         // sigma_x sigma_y
  double z;         // |x| / (c s), the Bessel argument
  double a;         // sign(x) (r_x - rho r_y)
  double b;         // r_y - rho r_x
  double log_pref;  // log of the exponential prefactor / (pi s sqrt(c))

  ProductSeriesSetup(const ProductNormalParams& p, double x) {
    const double rho = p.rho();
    const double rx = p.r_x();
    const double ry = p.r_y();
    c = (1.0 - rho) * (1.0 + rho);
    s = p.s();
    z = std::abs(x) / (c * s);
    a = (x < 0 ? -1.0 : 1.0) * (rx - rho * ry);
    b = ry - rho * rx;
    log_pref = -(rx * rx + ry * ry - 2.0 * rho * (x / s + rx * ry)) / (2.0 * c) -
               std::log(std::numbers::pi * s) - 0.5 * std::log(c);
  }
};

/// Sums the inner binomial series in closed form inside the integral
/// representation of K_nu, which leaves a positive integrand:
///   p(x) = (pref / 2) * int_R cosh(w(u)) exp(-z cosh u) du,
///   w(u) = |a e^{u/2} + b e^{-u/2}| sqrt(|x|/s) / c.
/// The integrand is analytic and decays doubly exponentially, so the
/// trapezoidal rule converges geometrically.
inline DensityValue product_density_integral(const ProductNormalParams& p, double x) {
  const ProductSeriesSetup st(p, x);
  const double root = std::sqrt(std::abs(x) / st.s) / st.c;
  auto psi = [&](double u) {
    const double w = (st.a * std::exp(0.5 * u) + st.b * std::exp(-0.5 * u)) * root;
    return -st.z * std::cosh(u) + log_cosh(w);
  };

  // Locate the region where psi is within 50 of its maximum: a coarse scan
  // first, then repeated zooming for the narrow peaks of large |x|.
  constexpr double span = 60.0;
  constexpr double cutoff = 50.0;
  double left = -span;
  double right = span;
  int points = static_cast<int>(2 * span / 0.125);
  double best = -std::numeric_limits<double>::infinity();
  std::vector<double> vals;
  for (int round = 0; round < 40; ++round) {
    const double h = (right - left) / points;
    vals.assign(points + 1, 0.0);
    best = -std::numeric_limits<double>::infinity();
    for (int i = 0; i <= points; ++i) {
      vals[i] = psi(left + i * h);
      best = std::max(best, vals[i]);
    }
    int lo = 0;
    int hi = points;
    while (lo < points && vals[lo] < best - cutoff) ++lo;
    while (hi > 0 && vals[hi] < best - cutoff) --hi;
    const double new_left = left + std::max(lo - 1, 0) * h;
    const double new_right = left + std::min(hi + 1, points) * h;
    left = new_left;
    right = new_right;
    if (hi - lo >= 32) break;
    points = 256;
  }

  auto trapezoid = [&](int intervals) {
    const double h = (right - left) / intervals;
    double acc = 0.0;
    for (int i = 0; i <= intervals; ++i) {
      const double wgt = (i == 0 || i == intervals) ? 0.5 : 1.0;
      acc += wgt * std::exp(psi(left + i * h) - best);
    }
    return acc * h;
  };

  // The exponent itself carries rounding error proportional to its size.
  const double tol = std::max(1e-15, 8.0 * std::numeric_limits<double>::epsilon() *
                                         (st.z + std::abs(best) + 1.0));
  int intervals = 64;
  double prev = trapezoid(intervals);
  double cur = prev;
  bool done = false;
  while (intervals < (1 << 18)) {
    intervals *= 2;
    cur = trapezoid(intervals);
    if (std::abs(cur - prev) <= tol * std::abs(cur)) {
      done = true;
      break;
    }
    prev = cur;
  }
  DensityValue out;
  out.log_abs = st.log_pref - std::numbers::ln2 + best + std::log(cur);
  out.sign = 1;
  out.converged = done;
  out.terms_used = intervals + 1;
  out.method = DensityMethod::IntegralRepresentation;
  return out;
}

inline const std::vector<double>& log_factorials(int up_to) {
  thread_local std::vector<double> table{0.0};
  while (static_cast<int>(table.size()) <= up_to) {
    table.push_back(table.back() + std::log(static_cast<double>(table.size())));
  }
  return table;
}

/// Double series in signed log space.
inline DensityValue product_density_series(const ProductNormalParams& p, double x,
                                           const SeriesControl& ctl, double* log_abs_total) {
  const ProductSeriesSetup st(p, x);
  const int max_n = ctl.max_outer;
  const std::vector<double> log_k = log_bessel_k_sequence(BesselOrder::integer(max_n), st.z);
  const std::vector<double>& lf = log_factorials(2 * max_n + 1);
  constexpr double ninf = -std::numeric_limits<double>::infinity();
  const double la = st.a == 0.0 ? ninf : std::log(std::abs(st.a));
  const double lb = st.b == 0.0 ? ninf : std::log(std::abs(st.b));
  const double log_ratio = std::log(std::abs(x) / st.s);
  const double log_c = std::log(st.c);
  const double log_tol = std::log(ctl.rel_tol);

  SignedLogSum total;
  int small_blocks = 0;
  int terms = 0;
  bool converged = false;
  for (int n = 0; n <= max_n; ++n) {
    const int two_n = 2 * n;
    const double base = n * log_ratio - two_n * log_c;
    SignedLogSum block;
    for (int m = 0; m <= two_n; ++m) {
      const int rest = two_n - m;
      if ((m > 0 && st.a == 0.0) || (rest > 0 && st.b == 0.0)) continue;
      // C(2n, m) / (2n)! = 1 / (m! (2n-m)!)
      double lt = base - lf[m] - lf[rest] + log_k[std::abs(m - n)];
      if (m > 0) lt += m * la;
      if (rest > 0) lt += rest * lb;
      int sign = 1;
      if (st.a < 0.0 && (m % 2 == 1)) sign = -sign;
      if (st.b < 0.0 && (rest % 2 == 1)) sign = -sign;
      block.add(lt, sign);
      ++terms;
    }
    total.add(block);
    const double block_log = block.log_abs_total();
    if (block_log < log_tol + total.log_positive()) {
      if (++small_blocks == 2) {
        converged = true;
        break;
      }
    } else {
      small_blocks = 0;
    }
  }
  const auto r = total.result();
  if (log_abs_total) *log_abs_total = total.log_abs_total() + st.log_pref;
  DensityValue out;
  out.log_abs = r.log_abs + st.log_pref;
  out.sign = r.sign;
  out.converged = converged;
  out.terms_used = terms;
  out.method = DensityMethod::Series;
  return out;
}

}  // namespace detail

/// Density of Z = XY at x != 0 from the double Bessel series
///
///   p(x) = E * sum_n sum_{m=0}^{2n} |x|^n sign(x)^m C(2n, m) a^m b^{2n-m}
///          K_{m-n}(|x| / ((1-rho^2) s)) / (pi s (2n)! (1-rho^2)^{2n+1/2} s^n),
///
/// written with a = r_x - rho r_y, b = r_y - rho r_x, s = sigma_x sigma_y and
/// E the exponential prefactor. Terms are accumulated as signed logs; the
/// outer sum stops once two consecutive blocks fall below rel_tol of the
/// positive part.
///
/// When the terms of the series have mixed signs the sum can lose many
/// digits (large |rho| with means of opposite effective sign). If more than
/// four digits would be lost, or the series needs more than max_outer blocks,
/// the value is recomputed from the equivalent single integral unless the
/// fallback is disabled in `ctl`.
inline DensityValue pdf_product(const ProductNormalParams& p, double x, const SeriesControl& ctl = {}) {
  ctl.check();
  detail::require_nonzero_point(x);

  // Rough index of the largest series block; beyond max_outer the series is hopeless.
  const detail::ProductSeriesSetup st(p, x);
  const double q = std::sqrt(std::abs(x) / st.s) * (std::abs(st.a) + std::abs(st.b)) / st.c;
  const double needed = 0.5 * (q + 10.0 * std::sqrt(q) + 20.0);
  if (ctl.allow_integral_fallback && needed > ctl.max_outer) {
    return detail::product_density_integral(p, x);
  }

  double log_total = 0.0;
  DensityValue v = detail::product_density_series(p, x, ctl, &log_total);
  const double lost_digits = (log_total - v.log_abs) / std::numbers::ln10;
  const bool trustworthy = v.converged && v.sign > 0 && lost_digits <= detail::kMaxCancellationDigits;
  if (!trustworthy && ctl.allow_integral_fallback) {
    return detail::product_density_integral(p, x);
  }
  return v;
}

/// Density of Z when one mean is zero and rho = 0, from the single series
///   p(x) = exp(-r^2/2) / (pi s) * sum_n mu^{2n} |x|^n K_n(|x|/s) / ((2n)! sigma^{3n} sigma'^n),
/// where mu, sigma belong to the variable with the non-zero mean.
inline DensityValue pdf_single_zero_mean(const ProductNormalParams& p, double x,
                                         const SeriesControl& ctl = {}) {
  ctl.check();
  if (p.rho() != 0.0 || (p.mu_x() != 0.0 && p.mu_y() != 0.0)) {
    throw Error(ErrorCode::CaseMismatch, "single-series density needs rho = 0 and a zero mean");
  }
  detail::require_nonzero_point(x);
  // By symmetry of X and Y, put the possibly non-zero mean on X.
  const bool swap = p.mu_x() == 0.0;
  const double mu = swap ? p.mu_y() : p.mu_x();
  const double sig = swap ? p.sigma_y() : p.sigma_x();
  const double sig_other = swap ? p.sigma_x() : p.sigma_y();
  const double s = p.s();
  const double z = std::abs(x) / s;
  const int max_n = ctl.max_outer;
  const std::vector<double>& lf = detail::log_factorials(2 * max_n + 1);

  const double log_pref = -0.5 * (mu / sig) * (mu / sig) - std::log(std::numbers::pi * s);
  DensityValue out;
  out.method = DensityMethod::Series;
  if (mu == 0.0) {
    out.log_abs = log_pref + log_bessel_k(BesselOrder::integer(0), z);
    out.converged = true;
    out.terms_used = 1;
    return out;
  }
  const std::vector<double> log_k = log_bessel_k_sequence(BesselOrder::integer(max_n), z);
  const double step = std::log(mu * mu * std::abs(x) / (sig * sig * sig * sig_other));
  const double log_tol = std::log(ctl.rel_tol);
  LogSumExp total;
  int small = 0;
  for (int n = 0; n <= max_n; ++n) {
    const double lt = n * step - lf[2 * n] + log_k[n];
    total.add(lt);
    ++out.terms_used;
    if (lt < log_tol + total.log()) {
      if (++small == 2) {
        out.converged = true;
        break;
      }
    } else {
      small = 0;
    }
  }
  out.log_abs = log_pref + total.log();
  return out;
}

/// Closed-form density of the mean of n copies when both means vanish
/// (a variance-gamma law):
///   p(x) = 2^{(1-n)/2} |x|^{(n-1)/2} exp(rho x / (s_n c)) K_{(n-1)/2}(|x| / (s_n c))
///          / (s_n^{(n+1)/2} sqrt(pi c) Gamma(n/2)),   c = 1 - rho^2.
/// For n >= 2 the value at x = 0 is the finite limit.
inline DensityValue pdf_mean_zero_means(const MeanParams& mp, double x) {
  const auto& p = mp.base();
  if (p.mu_x() != 0.0 || p.mu_y() != 0.0) {
    throw Error(ErrorCode::CaseMismatch, "closed-form mean density needs mu_x = mu_y = 0");
  }
  if (!std::isfinite(x)) throw Error(ErrorCode::InvalidArgument, "density argument must be finite");
  const int n = mp.n();
  if (x == 0.0 && n == 1) {
    throw Error(ErrorCode::SingularPoint, "the density of Z has a logarithmic singularity at x = 0");
  }
  const double rho = p.rho();
  const double c = (1.0 - rho) * (1.0 + rho);
  const double sn = mp.s_n();
  const double scale = sn * c;
  const double nu = 0.5 * (n - 1);
  const double log_norm = 0.5 * (1 - n) * std::numbers::ln2 - 0.5 * (n + 1) * std::log(sn) -
                          0.5 * std::log(std::numbers::pi * c) - std::lgamma(0.5 * n);
  DensityValue out;
  out.method = DensityMethod::ClosedForm;
  out.converged = true;
  out.terms_used = 1;
  if (x == 0.0) {
    // |x|^nu K_nu(|x|/scale) -> Gamma(nu)/2 (2 scale)^nu
    out.log_abs = log_norm + std::lgamma(nu) - std::numbers::ln2 + nu * std::log(2.0 * scale);
    return out;
  }
  const double ax = std::abs(x);
  out.log_abs = log_norm + nu * std::log(ax) + rho * x / scale +
                log_bessel_k(BesselOrder(n - 1), ax / scale);
  return out;
}

/// p, p', p'', p''', p'''' of the zero-mean closed form, differentiated
/// symbolically. Each derivative of x^a K_b(x/C) is expanded with
///   d/dx [x^a K_b(x/C)] = (a - b) x^{a-1} K_b(x/C) - x^a K_{b-1}(x/C) / C
/// and the exponential factor is handled by the Leibniz rule. Negative x
/// uses p(x) = q(-x) where q has rho replaced by -rho.
inline Derivatives pdf_mean_zero_means_derivatives(const MeanParams& mp, double x) {
  const auto& p = mp.base();
  if (p.mu_x() != 0.0 || p.mu_y() != 0.0) {
    throw Error(ErrorCode::CaseMismatch, "closed-form mean density needs mu_x = mu_y = 0");
  }
  detail::require_nonzero_point(x);
  const int n = mp.n();
  const double rho_eff = x < 0.0 ? -p.rho() : p.rho();
  const double y = std::abs(x);
  const double c = (1.0 - p.rho()) * (1.0 + p.rho());
  const double scale = mp.s_n() * c;
  const double log_norm = 0.5 * (1 - n) * std::numbers::ln2 - 0.5 * (n + 1) * std::log(mp.s_n()) -
                          0.5 * std::log(std::numbers::pi * c) - std::lgamma(0.5 * n);

  // Terms coef * y^{a/2} K_{b/2}(y/scale), exponents stored doubled.
  struct Term {
    double coef;
    int twice_a;
    int twice_b;
  };
  std::array<std::vector<Term>, 5> u;
  u[0] = {{1.0, n - 1, n - 1}};
  for (int k = 1; k < 5; ++k) {
    for (const Term& t : u[k - 1]) {
      const double a_minus_b = 0.5 * (t.twice_a - t.twice_b);
      if (a_minus_b != 0.0) u[k].push_back({t.coef * a_minus_b, t.twice_a - 2, t.twice_b});
      u[k].push_back({-t.coef / scale, t.twice_a, t.twice_b - 2});
    }
  }
  const double log_y = std::log(y);
  const double log_front = log_norm + rho_eff * y / scale;
  std::array<double, 5> ud{};
  for (int k = 0; k < 5; ++k) {
    for (const Term& t : u[k]) {
      const double lk = log_bessel_k(BesselOrder(t.twice_b), y / scale);
      ud[k] += t.coef * std::exp(log_front + 0.5 * t.twice_a * log_y + lk);
    }
  }
  const double g = rho_eff / scale;
  Derivatives out{};
  for (int k = 0; k < 5; ++k) {
    double acc = 0.0;
    double binom = 1.0;
    for (int j = 0; j <= k; ++j) {
      acc += binom * std::pow(g, k - j) * ud[j];
      binom = binom * (k - j) / (j + 1);
    }
    out[k] = (x < 0.0 && (k % 2 == 1)) ? -acc : acc;
  }
  return out;
}

/// Normalised residual of the fourth-order ODE satisfied by the density of
/// the mean of n copies (unit variances):
///   (1-r^2)^2 x p'''' + (1-r^2)((1-r^2)(4-n) - 4 r n x) p'''
///   + n((6r^2-2) n x - 12 r (1-r^2) + n(3r(1-r^2) + r my^2 - r^2 mx my - mx my + r mx^2)) p''
///   + n^2(2(6r^2-2) - n(2 r mx my - mx^2 - my^2 + 3r^2 - 1) + 4 r n x) p'
///   + n^3(4r + n(x - mx my - r)) p
/// divided by the largest of the five terms in absolute value.
inline double ode_residual_density(const MeanParams& mp, double x, const Derivatives& d) {
  const auto& p = mp.base();
  if (p.sigma_x() != 1.0 || p.sigma_y() != 1.0) {
    throw Error(ErrorCode::CaseMismatch, "the density ODE is stated for unit variances");
  }
  const double r = p.rho();
  const double mx = p.mu_x();
  const double my = p.mu_y();
  const double n = mp.n();
  const double c = (1.0 - r) * (1.0 + r);
  const std::array<double, 5> terms{
      n * n * n * (4.0 * r + n * (x - mx * my - r)) * d[0],
      n * n * (2.0 * (6.0 * r * r - 2.0) - n * (2.0 * r * mx * my - mx * mx - my * my + 3.0 * r * r - 1.0) +
               4.0 * r * n * x) * d[1],
      n * ((6.0 * r * r - 2.0) * n * x - 12.0 * r * c +
           n * (3.0 * r * c + r * my * my - r * r * mx * my - mx * my + r * mx * mx)) * d[2],
      c * (c * (4.0 - n) - 4.0 * r * n * x) * d[3],
      c * c * x * d[4],
  };
  double sum = 0.0;
  double biggest = 0.0;
  for (double t : terms) {
    sum += t;
    biggest = std::max(biggest, std::abs(t));
  }
  return biggest == 0.0 ? 0.0 : std::abs(sum) / biggest;
}

/// Step used for finite-difference derivatives of the series density.
inline double density_fd_step(double x) { return std::max(1e-2, 1e-2 * std::abs(x)); }

/// Derivatives of pdf_product by Richardson-extrapolated 7-point stencils.
inline Derivatives pdf_product_derivatives_fd(const ProductNormalParams& p, double x,
                                              const SeriesControl& ctl = {}) {
  const double h = density_fd_step(x);
  if (std::abs(x) <= 3.0 * h) {
    throw Error(ErrorCode::SingularPoint, "finite-difference stencil would straddle x = 0");
  }
  auto f = [&](double u) { return require_converged(pdf_product(p, u, ctl)).value(); };
  return richardson_derivatives(f, x, h);
}

namespace detail {

/// int_from^inf f(u) du for f integrable with at most a log singularity at 0.
template <class F>
double integrate_half_line(const F& f, double from, double scale) {
  boost::math::quadrature::tanh_sinh<double> ts(15);
  boost::math::quadrature::exp_sinh<double> es(9);
  constexpr double tol = 1e-10;
  double acc = 0.0;
  double start = from;
  if (from < scale) {
    acc += ts.integrate(f, from, scale, tol);
    start = scale;
  }
  acc += es.integrate(f, start, std::numeric_limits<double>::infinity(), tol);
  return acc;
}

inline double product_scale(const ProductNormalParams& p) {
  const double rx = p.r_x();
  const double ry = p.r_y();
  const double rho = p.rho();
  return p.s() * std::sqrt(rx * rx + ry * ry + 2.0 * rho * rx * ry + rho * rho + 1.0);
}

}  // namespace detail

/// P(Z <= x) by quadrature of pdf_product over the shorter tail, split at
/// zero where the density has its logarithmic singularity.
inline double cdf_product(const ProductNormalParams& p, double x, const SeriesControl& ctl = {}) {
  ctl.check();
  if (std::isnan(x)) throw Error(ErrorCode::InvalidArgument, "cdf argument is NaN");
  if (std::isinf(x)) return x < 0.0 ? 0.0 : 1.0;
  auto density = [&](double u) {
    if (u == 0.0) return 0.0;  // measure zero; quadrature nodes never land here in practice
    return require_converged(pdf_product(p, u, ctl)).value();
  };
  auto mirrored = [&](double u) { return density(-u); };
  const double scale = detail::product_scale(p);
  double result;
  if (x <= 0.0) {
    result = detail::integrate_half_line(mirrored, -x, scale);
  } else {
    result = 1.0 - detail::integrate_half_line(density, x, scale);
  }
  return std::clamp(result, 0.0, 1.0);
}

}  // namespace pnstein
