#pragma once

#include <cmath>
#include <cstdlib>
#include <limits>
#include <numbers>
#include <utility>
#include <vector>

#include "pnstein/error.hpp"

namespace pnstein {

/// Order of K_nu stored as 2*nu so integer and half-integer orders are exact.
/// K_{-nu} = K_nu, so the stored value is always nonnegative.
class BesselOrder {
 public:
  constexpr explicit BesselOrder(int twice_nu) noexcept : twice_nu_(twice_nu < 0 ? -twice_nu : twice_nu) {}

  static constexpr BesselOrder integer(int nu) noexcept { return BesselOrder(2 * nu); }
  static constexpr BesselOrder half(int twice_nu) noexcept { return BesselOrder(twice_nu); }

  constexpr int twice_nu() const noexcept { return twice_nu_; }
  constexpr bool is_integer() const noexcept { return twice_nu_ % 2 == 0; }
  constexpr double value() const noexcept { return 0.5 * twice_nu_; }

  friend constexpr bool operator==(BesselOrder, BesselOrder) = default;

 private:
  int twice_nu_;
};

namespace detail {

inline constexpr double kNearZero = 1e-8;

/// e^x K_0(x) and e^x K_1(x) for x > 0.
///
/// x <= 2: Temme's series specialised to nu = 0. x > 2: Steed's continued
/// fraction (CF2). Below kNearZero the leading small-argument terms are used.
inline std::pair<double, double> scaled_k0_k1(double x) {
  constexpr double eps = std::numeric_limits<double>::epsilon();
  if (x < kNearZero) {
    const double k0 = -std::log(0.5 * x) - std::numbers::egamma;
    const double k1 = 1.0 / x;
    return {k0 * std::exp(x), k1 * std::exp(x)};
  }
  if (x <= 2.0) {
    // With nu = 0: gam1 = -gamma, gam2 = 1, 1/Gamma(1 +- nu) = 1.
    const double half_x = 0.5 * x;
    const double d = -std::log(half_x);
    double ff = -std::numbers::egamma + d;
    double sum = ff;
    double p = 0.5;
    double q = 0.5;
    double c = 1.0;
    const double dd = half_x * half_x;
    double sum1 = p;
    for (int i = 1; i < 500; ++i) {
      const double di = i;
      ff = (di * ff + p + q) / (di * di);
      c *= dd / di;
      p /= di;
      q /= di;
      const double del = c * ff;
      sum += del;
      sum1 += c * (p - di * ff);
      if (std::abs(del) < std::abs(sum) * eps) break;
    }
    const double ex = std::exp(x);
    return {sum * ex, sum1 * (2.0 / x) * ex};
  }
  double b = 2.0 * (1.0 + x);
  double d = 1.0 / b;
  double h = d;
  double delh = d;
  double q1 = 0.0;
  double q2 = 1.0;
  const double a1 = 0.25;
  double q = a1;
  double c = a1;
  double a = -a1;
  double s = 1.0 + q * delh;
  for (int i = 2; i < 100000; ++i) {
    a -= 2.0 * (i - 1);
    c = -a * c / i;
    const double qnew = (q1 - b * q2) / a;
    q1 = q2;
    q2 = qnew;
    q += c * qnew;
    b += 2.0;
    d = 1.0 / (b + a * d);
    delh = (b * d - 1.0) * delh;
    h += delh;
    const double dels = q * delh;
    s += dels;
    if (std::abs(dels / s) < eps) break;
  }
  h = a1 * h;
  const double k0 = std::sqrt(std::numbers::pi / (2.0 * x)) / s;
  const double k1 = k0 * (x + 0.5 - h) / x;
  return {k0, k1};
}

/// e^x K_{1/2}(x) and e^x K_{3/2}(x).
inline std::pair<double, double> scaled_khalf(double x) {
  const double k = std::sqrt(std::numbers::pi / (2.0 * x));
  return {k, k * (1.0 + 1.0 / x)};
}

inline void require_positive(double x) {
  if (!(x > 0.0)) {
    throw Error(ErrorCode::NonPositiveArgument, "Bessel K requires a positive argument");
  }
}

}  // namespace detail

/// Returns K_nu(x) for nu = nu0, nu0 + 1, ..., max_order, where nu0 is 0 for
/// integer orders and 1/2 for half-integer orders.
///
/// Uses the forward recurrence K_{nu+1} = K_{nu-1} + (2 nu / x) K_nu, which is
/// stable because K grows with nu. In scaled mode each entry is e^x K_nu(x).
/// Throws Overflow if an entry is not representable.
inline std::vector<double> bessel_k_sequence(BesselOrder max_order, double x, bool scaled) {
  detail::require_positive(x);
  const bool integral = max_order.is_integer();
  const int count = max_order.twice_nu() / 2 + 1;
  auto [k_lo, k_hi] = integral ? detail::scaled_k0_k1(x) : detail::scaled_khalf(x);
  double nu = integral ? 0.0 : 0.5;

  std::vector<double> out;
  out.reserve(count);
  out.push_back(k_lo);
  if (count > 1) out.push_back(k_hi);
  for (int i = 2; i < count; ++i) {
    nu += 1.0;
    const double next = k_lo + (2.0 * nu / x) * k_hi;
    k_lo = k_hi;
    k_hi = next;
    out.push_back(next);
  }
  if (!scaled) {
    const double damp = std::exp(-x);
    for (double& v : out) v *= damp;
  }
  for (double v : out) {
    if (!std::isfinite(v)) {
      throw Error(ErrorCode::Overflow, "Bessel K value exceeds the representable range");
    }
  }
  return out;
}

/// K_nu(x), or e^x K_nu(x) when `scaled` is set.
inline double bessel_k(BesselOrder order, double x, bool scaled = false) {
  return bessel_k_sequence(order, x, scaled).back();
}

/// log K_nu(x) for nu = nu0, nu0 + 1, ..., max_order (nu0 as in bessel_k_sequence).
///
/// Works with the ratios K_{nu+1}/K_nu, so it never overflows; use it when
/// the values themselves may leave the double range.
inline std::vector<double> log_bessel_k_sequence(BesselOrder max_order, double x) {
  detail::require_positive(x);
  const bool integral = max_order.is_integer();
  const int count = max_order.twice_nu() / 2 + 1;
  std::vector<double> out;
  out.reserve(count);

  if (integral && x < detail::kNearZero) {
    // Leading small-argument behaviour: K_0 ~ -log(x/2) - gamma,
    // K_nu ~ Gamma(nu)/2 (2/x)^nu. Half-integer orders keep the exact
    // closed-form start below.
    double nu = 0.0;
    for (int i = 0; i < count; ++i, nu += 1.0) {
      if (nu == 0.0) {
        out.push_back(std::log(-std::log(0.5 * x) - std::numbers::egamma));
      } else {
        out.push_back(std::lgamma(nu) - std::log(2.0) + nu * std::log(2.0 / x));
      }
    }
    return out;
  }

  auto [k_lo, k_hi] = integral ? detail::scaled_k0_k1(x) : detail::scaled_khalf(x);
  double log_k = std::log(k_lo) - x;
  out.push_back(log_k);
  if (count == 1) return out;
  double ratio = k_hi / k_lo;
  double nu = integral ? 1.0 : 1.5;
  log_k += std::log(ratio);
  out.push_back(log_k);
  for (int i = 2; i < count; ++i) {
    ratio = 1.0 / ratio + 2.0 * nu / x;
    log_k += std::log(ratio);
    out.push_back(log_k);
    nu += 1.0;
  }
  return out;
}

inline double log_bessel_k(BesselOrder order, double x) {
  return log_bessel_k_sequence(order, x).back();
}

}  // namespace pnstein
