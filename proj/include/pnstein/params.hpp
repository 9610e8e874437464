#pragma once

#include <cmath>
#include <string_view>
#include <type_traits>
#include <utility>

#include "pnstein/error.hpp"

namespace pnstein {

/// Parameters of PN(mu_x, mu_y; sigma_x^2, sigma_y^2; rho), the law of the
/// product of the components of a bivariate normal vector.
///
/// Instances can only be obtained through validate(), so a value of this type
/// always satisfies sigma > 0 and -1 < rho < 1. The scalar type is a template
/// parameter so the same object can be used with double, extended precision
/// floats and exact rationals.
template <class Real>
class BasicProductNormalParams {
 public:
  using value_type = Real;

  static BasicProductNormalParams validate(Real mu_x, Real mu_y, Real sigma_x, Real sigma_y,
                                           Real rho) {
    // Written as negated comparisons so that NaN is rejected too.
    if (!(sigma_x > Real(0)) || !(sigma_y > Real(0))) {
      throw Error(ErrorCode::NonPositiveSigma, "standard deviations must be positive");
    }
    if (!(rho > Real(-1)) || !(rho < Real(1))) {
      throw Error(ErrorCode::CorrelationOutOfRange, "correlation must lie strictly inside (-1, 1)");
    }
    if constexpr (std::is_floating_point_v<Real>) {
      if (!std::isfinite(mu_x) || !std::isfinite(mu_y) || !std::isfinite(sigma_x) ||
          !std::isfinite(sigma_y)) {
        throw Error(ErrorCode::InvalidArgument, "parameters must be finite");
      }
    }
    return BasicProductNormalParams(mu_x, mu_y, sigma_x, sigma_y, rho);
  }

  const Real& mu_x() const noexcept { return mu_x_; }
  const Real& mu_y() const noexcept { return mu_y_; }
  const Real& sigma_x() const noexcept { return sigma_x_; }
  const Real& sigma_y() const noexcept { return sigma_y_; }
  const Real& rho() const noexcept { return rho_; }

  Real r_x() const { return mu_x_ / sigma_x_; }
  Real r_y() const { return mu_y_ / sigma_y_; }
  Real s() const { return sigma_x_ * sigma_y_; }

  /// Converts every field to another scalar type (e.g. double -> 50 digit float).
  template <class Other>
  BasicProductNormalParams<Other> cast() const {
    return BasicProductNormalParams<Other>::validate(Other(mu_x_), Other(mu_y_), Other(sigma_x_),
                                                     Other(sigma_y_), Other(rho_));
  }

  friend bool operator==(const BasicProductNormalParams&, const BasicProductNormalParams&) = default;

 private:
  BasicProductNormalParams(Real mu_x, Real mu_y, Real sigma_x, Real sigma_y, Real rho)
      : mu_x_(mu_x), mu_y_(mu_y), sigma_x_(sigma_x), sigma_y_(sigma_y), rho_(rho) {}

  Real mu_x_;
  Real mu_y_;
  Real sigma_x_;
  Real sigma_y_;
  Real rho_;
};

/// Parameters of the mean of n independent copies of a product-normal variable.
template <class Real>
class BasicMeanParams {
 public:
  using value_type = Real;

  BasicMeanParams(BasicProductNormalParams<Real> base, int n) : base_(std::move(base)), n_(n) {
    if (n < 1) {
      throw Error(ErrorCode::InvalidCopyCount, "number of copies must be at least 1");
    }
  }

  static BasicMeanParams validate(Real mu_x, Real mu_y, Real sigma_x, Real sigma_y, Real rho,
                                  int n) {
    return BasicMeanParams(
        BasicProductNormalParams<Real>::validate(mu_x, mu_y, sigma_x, sigma_y, rho), n);
  }

  const BasicProductNormalParams<Real>& base() const noexcept { return base_; }
  int n() const noexcept { return n_; }

  /// s_n = sigma_x sigma_y / n
  Real s_n() const { return base_.s() / Real(n_); }

  template <class Other>
  BasicMeanParams<Other> cast() const {
    return BasicMeanParams<Other>(base_.template cast<Other>(), n_);
  }

  friend bool operator==(const BasicMeanParams&, const BasicMeanParams&) = default;

 private:
  BasicProductNormalParams<Real> base_;
  int n_;
};

using ProductNormalParams = BasicProductNormalParams<double>;
using MeanParams = BasicMeanParams<double>;

enum class DistributionCase { General, EqualRatio, ZeroMeans, OneZeroMeanUncorrelated };

constexpr std::string_view to_string(DistributionCase c) noexcept {
  switch (c) {
    case DistributionCase::General: return "General";
    case DistributionCase::EqualRatio: return "EqualRatio";
    case DistributionCase::ZeroMeans: return "ZeroMeans";
    case DistributionCase::OneZeroMeanUncorrelated: return "OneZeroMeanUncorrelated";
  }
  return "Unknown";
}

inline constexpr double kDefaultRatioTolerance = 1e-12;

/// True when mu_x/sigma_x == mu_y/sigma_y up to `ratio_tol` relative to the
/// larger ratio. Pass ratio_tol = 0 for exact scalar types.
template <class Real>
bool has_equal_ratios(const BasicProductNormalParams<Real>& p, double ratio_tol = kDefaultRatioTolerance) {
  using std::abs;
  const Real rx = p.r_x();
  const Real ry = p.r_y();
  const Real diff = abs(rx - ry);
  if (diff == Real(0)) return true;
  const Real scale = abs(rx) > abs(ry) ? abs(rx) : abs(ry);
  return diff <= Real(ratio_tol) * scale;
}

/// Picks the case that determines the minimal Stein operator order. Zero
/// means take precedence over equal ratios; the one-zero-mean case requires an
/// exactly zero correlation.
template <class Real>
DistributionCase classify(const BasicProductNormalParams<Real>& p,
                          double ratio_tol = kDefaultRatioTolerance) {
  const bool zx = p.mu_x() == Real(0);
  const bool zy = p.mu_y() == Real(0);
  if (zx && zy) return DistributionCase::ZeroMeans;
  if (has_equal_ratios(p, ratio_tol)) return DistributionCase::EqualRatio;
  if ((zx != zy) && p.rho() == Real(0)) return DistributionCase::OneZeroMeanUncorrelated;
  return DistributionCase::General;
}

/// Order of the lowest-order linear-coefficient Stein operator for the case.
constexpr int minimal_operator_order(DistributionCase c) noexcept {
  switch (c) {
    case DistributionCase::ZeroMeans: return 2;
    case DistributionCase::EqualRatio: return 3;
    case DistributionCase::General:
    case DistributionCase::OneZeroMeanUncorrelated: return 4;
  }
  return 4;
}

}  // namespace pnstein
