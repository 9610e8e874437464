#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <vector>

#include "pnstein/error.hpp"
#include "pnstein/params.hpp"

namespace pnstein {

using ComplexValue = std::complex<double>;

namespace detail {

// Pieces of the unit-variance characteristic function, valid for complex t
// inside the strip where both factors of D stay off the negative axis.
struct CfPieces {
  double n, rho, a, b;  // a = mx^2 + my^2 - 2 rho mx my, b = mx my

  template <class T>
  T log_phi(T t) const {
    const T i(0.0, 1.0);
    const T f1 = 1.0 - (1.0 + rho) * i * t / n;
    const T f2 = 1.0 + (1.0 - rho) * i * t / n;
    const T e = -a * t * t / n + 2.0 * b * i * t;
    // Log(f1) + Log(f2) equals the continuous log D along the real line since
    // both factors have positive real part there.
    return -0.5 * n * (std::log(f1) + std::log(f2)) + e / (2.0 * f1 * f2);
  }

  template <class T>
  T dlog_phi(T t) const {
    const T i(0.0, 1.0);
    const T f1 = 1.0 - (1.0 + rho) * i * t / n;
    const T f2 = 1.0 + (1.0 - rho) * i * t / n;
    const T d1 = -(1.0 + rho) * i / n;
    const T d2 = (1.0 - rho) * i / n;
    const T d = f1 * f2;
    const T dd = d1 * f2 + f1 * d2;
    const T e = -a * t * t / n + 2.0 * b * i * t;
    const T de = -2.0 * a * t / n + 2.0 * b * i;
    return -0.5 * n * (d1 / f1 + d2 / f2) + (de * d - e * dd) / (2.0 * d * d);
  }
};

inline CfPieces cf_pieces(const MeanParams& mp) {
  const auto& p = mp.base();
  const double mx = p.r_x();
  const double my = p.r_y();
  return {static_cast<double>(mp.n()), p.rho(), mx * mx + my * my - 2.0 * p.rho() * mx * my, mx * my};
}

}  // namespace detail

/// E[exp(i t W)] for W the mean of n products. General variances enter by
/// rescaling t by sigma_x sigma_y and replacing the means by mu/sigma.
inline ComplexValue cf_mean(const MeanParams& mp, double t) {
  if (t == 0.0) return {1.0, 0.0};
  const double u = mp.base().s() * t;
  return std::exp(detail::cf_pieces(mp).log_phi(ComplexValue(u, 0.0)));
}

/// Analytic d/dt of cf_mean.
inline ComplexValue cf_derivative(const MeanParams& mp, double t) {
  const double s = mp.base().s();
  const auto pieces = detail::cf_pieces(mp);
  const ComplexValue u(s * t, 0.0);
  return s * pieces.dlog_phi(u) * std::exp(pieces.log_phi(u));
}

/// Left-hand side of the first-order ODE satisfied by the characteristic
/// function (unit variances only), divided by the largest magnitude among
/// its individual terms so that 0 means exact and 1 means no cancellation.
inline double cf_ode_residual(const MeanParams& mp, double t, ComplexValue phi, ComplexValue dphi) {
  const auto& p = mp.base();
  if (p.sigma_x() != 1.0 || p.sigma_y() != 1.0) {
    throw Error(ErrorCode::CaseMismatch, "characteristic-function ODE needs sigma_x = sigma_y = 1");
  }
  const double n = mp.n();
  const double rho = p.rho();
  const double c = 1.0 - rho * rho;
  const double mx = p.mu_x();
  const double my = p.mu_y();
  const ComplexValue i(0.0, 1.0);
  const double t2 = t * t, t3 = t2 * t, t4 = t3 * t;
  const double n2 = n * n, n3 = n2 * n, n4 = n3 * n;

  const ComplexValue terms[] = {
      -i * c * c * t4 * dphi,
      -4.0 * n * c * rho * t3 * dphi,
      i * n2 * (6.0 * rho * rho - 2.0) * t2 * dphi,
      -4.0 * rho * t * n3 * dphi,
      -i * n4 * dphi,
      -i * n * c * c * t3 * phi,
      -n2 * (rho * (mx * mx + my * my) - (1.0 + rho * rho) * mx * my + 3.0 * rho * c) * t2 * phi,
      i * n3 * (2.0 * rho * mx * my - mx * mx - my * my + 3.0 * rho * rho - 1.0) * t * phi,
      -n4 * (mx * my + rho) * phi,
  };
  ComplexValue sum(0.0, 0.0);
  double scale = 0.0;
  for (const auto& v : terms) {
    sum += v;
    scale = std::max(scale, std::abs(v));
  }
  return scale == 0.0 ? 0.0 : std::abs(sum) / scale;
}

inline double cf_ode_residual(const MeanParams& mp, double t) {
  return cf_ode_residual(mp, t, cf_mean(mp, t), cf_derivative(mp, t));
}

struct CfGridPoint {
  double t;
  ComplexValue value;
  double modulus;
  double unwrapped_arg;  // argument continued along the grid, 0 at t = 0
};

/// Evaluates the characteristic function on an ordered grid, carrying the
/// argument continuously from point to point.
inline std::vector<CfGridPoint> cf_grid(const MeanParams& mp, const std::vector<double>& ts) {
  std::vector<CfGridPoint> out;
  out.reserve(ts.size());
  double prev_arg = 0.0;
  bool first = true;
  for (double t : ts) {
    const ComplexValue v = cf_mean(mp, t);
    double a = std::arg(v);
    if (!first) {
      const double two_pi = 2.0 * std::numbers::pi;
      a += two_pi * std::round((prev_arg - a) / two_pi);
    }
    out.push_back({t, v, std::abs(v), a});
    prev_arg = a;
    first = false;
  }
  return out;
}

/// E[W^k], k = 0..kmax, recovered from the characteristic function by the
/// Cauchy integral on a circle in the complex t-plane.
///
/// Each order gets its own radius: the one maximising r^k / |phi| on the
/// circle for a normal law with the same mean and variance, capped at a
/// quarter of the distance to the nearest pole. This keeps |phi| on the
/// contour moderate when the means are large, so roundoff stays small, while
/// the trapezoid rule on `points` nodes remains accurate far beyond double
/// precision.
inline std::vector<double> cf_moments(const MeanParams& mp, int kmax, int points = 128) {
  if (kmax < 0) throw Error(ErrorCode::InvalidArgument, "kmax must be nonnegative");
  if (points <= 2 * kmax) throw Error(ErrorCode::InvalidArgument, "too few contour points");
  const auto pieces = detail::cf_pieces(mp);
  const double rho = pieces.rho;
  const double n = pieces.n;
  const double pole = std::min(n / (1.0 + rho), n / (1.0 - rho));
  // mean and variance of W / s
  const double m = std::abs(pieces.b + rho);
  const double v = (pieces.a + 4.0 * rho * pieces.b + 1.0 + rho * rho) / n;
  const double s = mp.base().s();
  std::vector<double> out(kmax + 1);
  double fact = 1.0;
  ComplexValue minus_i_pow(1.0, 0.0);
  for (int k = 1; k <= kmax; ++k) {
    fact *= k;
    minus_i_pow *= ComplexValue(0.0, -1.0);
    // maximiser of k log r - m r - v r^2 / 2
    const double best = 2.0 * k / (m + std::sqrt(m * m + 4.0 * v * k));
    const double r = std::min(0.25 * pole, best);
    ComplexValue acc(0.0, 0.0);
    for (int j = 0; j < points; ++j) {
      const double theta = 2.0 * std::numbers::pi * j / points;
      acc += std::exp(pieces.log_phi(r * std::polar(1.0, theta))) * std::polar(1.0, -theta * k);
    }
    const ComplexValue deriv = acc * fact / (points * std::pow(r, k));
    out[k] = (minus_i_pow * deriv).real() * std::pow(s, k);
  }
  out[0] = 1.0;
  return out;
}

}  // namespace pnstein
