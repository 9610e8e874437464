#pragma once

#include <array>
#include <cmath>
#include <optional>
#include <string_view>
#include <vector>

#include <boost/multiprecision/cpp_bin_float.hpp>

#include "pnstein/error.hpp"
#include "pnstein/params.hpp"

namespace pnstein {

enum class MomentKind { Raw, Central };
enum class MomentProvenance { Recursion, ClosedForm, MonteCarlo };

constexpr std::string_view to_string(MomentProvenance p) noexcept {
  switch (p) {
    case MomentProvenance::Recursion: return "recursion";
    case MomentProvenance::ClosedForm: return "closed_form";
    case MomentProvenance::MonteCarlo: return "monte_carlo";
  }
  return "?";
}

/// Moments E[W^k] (raw) or E[(W - EW)^k] (central) for k = 0..kmax.
template <class Real = double>
struct MomentTable {
  MomentKind kind = MomentKind::Raw;
  std::vector<Real> values;
  MomentProvenance provenance = MomentProvenance::Recursion;
  std::optional<std::vector<double>> stderr_values;  // Monte Carlo only

  int kmax() const { return static_cast<int>(values.size()) - 1; }
  const Real& operator[](int k) const { return values.at(k); }
};

/// Precision used for recursions beyond this order.
inline constexpr int kExtendedPrecisionThreshold = 20;
using ExtendedFloat = boost::multiprecision::cpp_bin_float_50;

namespace recursion {

/// E[W^k], k = 0..kmax, for W the mean of n copies, from the four-term
/// recursion obtained by feeding f(x) = x^k to the fourth-order operator:
///
///   m'_{k+1} = (mu_x mu_y + s rho (4k + n)) m'_k
///     - s^2 k (n(2 rho rx ry - rx^2 - ry^2 + 3 rho^2 - 1) + (k-1)(6 rho^2 - 2)) m'_{k-1}
///     - s^3 k(k-1) (n(rho ry^2 - rho^2 rx ry - rx ry + rho rx^2 + 3 rho c) + 4(k-2) rho c) m'_{k-2}
///     - s^4 k(k-1)(k-2) c^2 (n + k - 3) m'_{k-3}
///
/// with s = s_n and c = 1 - rho^2. Terms with negative index carry a falling
/// factorial that vanishes, so they are skipped.
template <class Real>
std::vector<Real> raw(const BasicMeanParams<Real>& mp, int kmax) {
  const auto& p = mp.base();
  const Real s = mp.s_n();
  const Real n(mp.n());
  const Real rho = p.rho();
  const Real rx = p.r_x();
  const Real ry = p.r_y();
  const Real c = Real(1) - rho * rho;
  const Real mm = p.mu_x() * p.mu_y();
  const Real q1 = Real(2) * rho * rx * ry - rx * rx - ry * ry + Real(3) * rho * rho - Real(1);
  const Real q2 = rho * ry * ry - rho * rho * rx * ry - rx * ry + rho * rx * rx + Real(3) * rho * c;
  const Real s2 = s * s;
  const Real s3 = s2 * s;
  const Real s4 = s3 * s;

  std::vector<Real> m(kmax + 1);
  m[0] = Real(1);
  for (int k = 0; k + 1 <= kmax; ++k) {
    const Real kk(k);
    Real next = (mm + s * rho * (Real(4) * kk + n)) * m[k];
    if (k >= 1) {
      next -= s2 * kk * (n * q1 + (kk - Real(1)) * (Real(6) * rho * rho - Real(2))) * m[k - 1];
    }
    if (k >= 2) {
      next -= s3 * kk * (kk - Real(1)) * (n * q2 + Real(4) * (kk - Real(2)) * rho * c) * m[k - 2];
    }
    if (k >= 3) {
      next -= s4 * kk * (kk - Real(1)) * (kk - Real(2)) * c * c * (n + kk - Real(3)) * m[k - 3];
    }
    m[k + 1] = next;
  }
  return m;
}

/// E[(W - EW)^k], k = 0..kmax, from the five-term recursion for the central
/// moments, started from mu_0 = 1, mu_1 = 0.
template <class Real>
std::vector<Real> central(const BasicMeanParams<Real>& mp, int kmax) {
  const auto& p = mp.base();
  const Real s = mp.s_n();
  const Real n(mp.n());
  const Real rho = p.rho();
  const Real rx = p.r_x();
  const Real ry = p.r_y();
  const Real c = Real(1) - rho * rho;
  const Real mean = p.mu_x() * p.mu_y() + n * s * rho;
  const Real q1 = Real(2) * rho * rx * ry - rx * rx - ry * ry + Real(3) * rho * rho - Real(1);
  const Real q2 = rho * ry * ry - rho * rho * rx * ry - rx * ry + rho * rx * rx + Real(3) * rho * c;
  const Real six = Real(6) * rho * rho - Real(2);
  const Real s2 = s * s;
  const Real s3 = s2 * s;
  const Real s4 = s3 * s;

  std::vector<Real> m(kmax + 1);
  m[0] = Real(1);
  if (kmax >= 1) m[1] = Real(0);
  for (int k = 1; k + 1 <= kmax; ++k) {
    const Real kk(k);
    Real next = Real(4) * rho * s * kk * m[k];
    next -= s * kk * (s * six * (kk - Real(1)) + n * s * q1 - Real(4) * rho * mean) * m[k - 1];
    if (k >= 2) {
      next -= s2 * kk * (kk - Real(1)) *
              (six * mean + n * s * q2 + Real(4) * s * rho * c * (kk - Real(2))) * m[k - 2];
    }
    if (k >= 3) {
      next -= s3 * c * kk * (kk - Real(1)) * (kk - Real(2)) *
              (Real(4) * rho * mean + s * c * (n + kk - Real(3))) * m[k - 3];
    }
    if (k >= 4) {
      next -= s4 * c * c * kk * (kk - Real(1)) * (kk - Real(2)) * (kk - Real(3)) * mean * m[k - 4];
    }
    m[k + 1] = next;
  }
  return m;
}

/// Three-term raw-moment recursion from the third-order operator; valid only
/// when rx = ry (callers check).
template <class Real>
std::vector<Real> raw_equal_ratio(const BasicMeanParams<Real>& mp, int kmax) {
  const auto& p = mp.base();
  const Real s = mp.s_n();
  const Real n(mp.n());
  const Real rho = p.rho();
  const Real c = Real(1) - rho * rho;
  const Real mm = p.mu_x() * p.mu_y();
  std::vector<Real> m(kmax + 1);
  m[0] = Real(1);
  for (int k = 0; k + 1 <= kmax; ++k) {
    const Real kk(k);
    Real next = (mm + s * (rho * n + (Real(3) * rho + Real(1)) * kk)) * m[k];
    if (k >= 1) {
      next -= s * kk *
              (mm * (rho - Real(1)) +
               s * (n * (Real(2) * rho * rho + rho - Real(1)) +
                    (Real(1) + rho) * (Real(3) * rho - Real(1)) * (kk - Real(1)))) *
              m[k - 1];
    }
    if (k >= 2) {
      next -= s * s * s * (Real(1) + rho) * c * kk * (kk - Real(1)) * (kk - Real(2) + n) * m[k - 2];
    }
    m[k + 1] = next;
  }
  return m;
}

/// Central-moment counterpart of raw_equal_ratio.
template <class Real>
std::vector<Real> central_equal_ratio(const BasicMeanParams<Real>& mp, int kmax) {
  const auto& p = mp.base();
  const Real s = mp.s_n();
  const Real n(mp.n());
  const Real rho = p.rho();
  const Real c = Real(1) - rho * rho;
  const Real mm = p.mu_x() * p.mu_y();
  const Real mean = mm + n * s * rho;
  std::vector<Real> m(kmax + 1);
  m[0] = Real(1);
  if (kmax >= 1) m[1] = Real(0);
  for (int k = 1; k + 1 <= kmax; ++k) {
    const Real kk(k);
    Real next = kk * s * (Real(3) * rho + Real(1)) * m[k];
    next -= kk * s *
            ((Real(1) + rho) * (Real(3) * rho - Real(1)) * (kk - Real(1)) * s + mm * (rho - Real(1)) +
             n * s * (Real(2) * rho * rho + rho - Real(1)) - (Real(3) * rho + Real(1)) * mean) *
            m[k - 1];
    if (k >= 2) {
      next -= s * s * (Real(1) + rho) * kk * (kk - Real(1)) *
              (mean * (Real(3) * rho - Real(1)) + n * c * s + c * s * (kk - Real(2))) * m[k - 2];
    }
    if (k >= 3) {
      next -= s * s * s * kk * (kk - Real(1)) * (kk - Real(2)) * c * (Real(1) + rho) * mean * m[k - 3];
    }
    m[k + 1] = next;
  }
  return m;
}

}  // namespace recursion

namespace detail {

template <class Fn>
std::vector<double> run_recursion(const MeanParams& mp, int kmax, Fn&& fn) {
  if (kmax < 0) throw Error(ErrorCode::InvalidArgument, "kmax must be nonnegative");
  if (kmax <= kExtendedPrecisionThreshold) return fn(mp);
  const auto wide = fn(mp.cast<ExtendedFloat>());
  std::vector<double> out;
  out.reserve(wide.size());
  for (const auto& v : wide) out.push_back(static_cast<double>(v));
  return out;
}

inline void require_equal_ratio_case(const MeanParams& mp) {
  const auto c = classify(mp.base());
  if (c != DistributionCase::EqualRatio && c != DistributionCase::ZeroMeans) {
    throw Error(ErrorCode::CaseMismatch, "equal-ratio recursions need mu_x/sigma_x = mu_y/sigma_y");
  }
}

}  // namespace detail

/// Raw moments from the general recursion, evaluated with 50 significant
/// digits internally when kmax > 20.
inline MomentTable<double> raw_moments(const MeanParams& mp, int kmax) {
  return {MomentKind::Raw,
          detail::run_recursion(mp, kmax, [&](const auto& q) { return recursion::raw(q, kmax); }),
          MomentProvenance::Recursion, std::nullopt};
}

inline MomentTable<double> central_moments(const MeanParams& mp, int kmax) {
  return {MomentKind::Central,
          detail::run_recursion(mp, kmax, [&](const auto& q) { return recursion::central(q, kmax); }),
          MomentProvenance::Recursion, std::nullopt};
}

inline MomentTable<double> raw_moments_equal_ratio(const MeanParams& mp, int kmax) {
  detail::require_equal_ratio_case(mp);
  return {MomentKind::Raw,
          detail::run_recursion(mp, kmax, [&](const auto& q) { return recursion::raw_equal_ratio(q, kmax); }),
          MomentProvenance::Recursion, std::nullopt};
}

inline MomentTable<double> central_moments_equal_ratio(const MeanParams& mp, int kmax) {
  detail::require_equal_ratio_case(mp);
  return {MomentKind::Central,
          detail::run_recursion(mp, kmax,
                                [&](const auto& q) { return recursion::central_equal_ratio(q, kmax); }),
          MomentProvenance::Recursion, std::nullopt};
}

/// Closed-form first four raw and central moments with the derived shape
/// measures.
struct FourMoments {
  std::array<double, 4> raw{};      // E W, E W^2, E W^3, E W^4
  std::array<double, 4> central{};  // mu_1 (= 0), mu_2, mu_3, mu_4
  double variance = 0.0;
  double skewness = 0.0;  // mu_3 / mu_2^{3/2}
  double kurtosis = 0.0;  // mu_4 / mu_2^2
};

inline FourMoments closed_form_four(const MeanParams& mp) {
  const auto& p = mp.base();
  const double n = mp.n();
  const double rho = p.rho();
  const double x = p.r_x();
  const double y = p.r_y();
  const double s = p.s();
  const double x2 = x * x, y2 = y * y, xy = x * y;
  const double sum2 = x2 + y2;
  const double r2 = rho * rho;

  FourMoments out;
  out.raw[0] = p.mu_x() * p.mu_y() + rho * s;
  out.raw[1] = s * s / n * (n * x2 * y2 + sum2 + 2.0 * rho * (n + 1.0) * xy + r2 * (n + 1.0) + 1.0);
  out.raw[2] = s * s * s / (n * n) *
               (n * n * x2 * xy * y2 + 3.0 * n * xy * sum2 + 3.0 * rho * n * (n + 2.0) * x2 * y2 +
                3.0 * rho * (n + 2.0) * sum2 + 3.0 * (n + 2.0) * (r2 * (n + 1.0) + 1.0) * xy +
                rho * (n + 2.0) * (r2 * (n + 1.0) + 3.0));
  out.raw[3] = s * s * s * s / (n * n * n) *
               (n * n * n * x2 * x2 * y2 * y2 + 4.0 * rho * n * n * (n + 3.0) * x2 * xy * y2 +
                6.0 * n * n * x2 * y2 * sum2 + 3.0 * n * (x2 * x2 + y2 * y2) +
                12.0 * rho * n * (n + 3.0) * xy * sum2 +
                6.0 * n * (r2 * (n + 2.0) * (n + 3.0) + (n + 5.0)) * x2 * y2 +
                6.0 * (n + 2.0) * (r2 * (n + 3.0) + 1.0) * sum2 +
                4.0 * rho * (n + 2.0) * (n + 3.0) * (r2 * (n + 1.0) + 3.0) * xy +
                r2 * r2 * (n + 1.0) * (n + 2.0) * (n + 3.0) + 6.0 * r2 * (n + 2.0) * (n + 3.0) +
                3.0 * (n + 2.0));

  out.central[0] = 0.0;
  out.central[1] = s * s / n * (sum2 + 2.0 * rho * xy + r2 + 1.0);
  out.central[2] = 2.0 * s * s * s / (n * n) * (3.0 * rho * sum2 + 3.0 * (r2 + 1.0) * xy + rho * (r2 + 3.0));
  out.central[3] = 3.0 * s * s * s * s / (n * n * n) *
                   (n * (x2 * x2 + y2 * y2) + 4.0 * rho * n * xy * sum2 + 2.0 * n * (2.0 * r2 + 1.0) * x2 * y2 +
                    2.0 * (r2 * (n + 6.0) + (n + 2.0)) * sum2 + 4.0 * rho * (r2 * (n + 2.0) + (n + 6.0)) * xy +
                    r2 * r2 * (n + 2.0) + 2.0 * r2 * (n + 6.0) + (n + 2.0));

  out.variance = out.central[1];
  if (!(out.variance > 0.0)) {
    throw Error(ErrorCode::DegenerateVariance, "variance must be positive");
  }
  out.skewness = out.central[2] / std::pow(out.variance, 1.5);
  out.kurtosis = out.central[3] / (out.variance * out.variance);
  return out;
}

/// Kurtosis of the single product Z (n = 1) written directly in terms of
/// the ratios; agrees with closed_form_four(...).kurtosis at n = 1.
inline double product_kurtosis(const ProductNormalParams& p) {
  const double rho = p.rho();
  const double x = p.r_x();
  const double y = p.r_y();
  const double x2 = x * x, y2 = y * y, xy = x * y;
  const double r2 = rho * rho;
  const double denom = x2 + y2 + 2.0 * rho * xy + r2 + 1.0;
  const double d2 = denom * denom;
  const double first = 3.0 * (x2 * x2 + y2 * y2 + 4.0 * rho * xy * (x2 + y2) + 2.0 * (2.0 * r2 + 1.0) * x2 * y2);
  const double second = 3.0 * (2.0 * (7.0 * r2 + 3.0) * (x2 + y2) + 4.0 * rho * (3.0 * r2 + 7.0) * xy +
                               3.0 * r2 * r2 + 14.0 * r2 + 3.0);
  return first / d2 + second / d2;
}

}  // namespace pnstein
