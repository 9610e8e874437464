#pragma once

#include <array>
#include <cmath>
#include <functional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "pnstein/error.hpp"
#include "pnstein/numdiff.hpp"
#include "pnstein/params.hpp"

namespace pnstein {

/// Coefficient pair of f^{(j)}: the operator multiplies f^{(j)}(x) by a0 + a1 x.
template <class Real>
struct LinearCoefficient {
  Real a0{};
  Real a1{};

  friend bool operator==(const LinearCoefficient&, const LinearCoefficient&) = default;
};

enum class OperatorKind { A1, A2, A3, A4, A5, A6, A7 };

constexpr std::string_view to_string(OperatorKind k) noexcept {
  switch (k) {
    case OperatorKind::A1: return "a1";
    case OperatorKind::A2: return "a2";
    case OperatorKind::A3: return "a3";
    case OperatorKind::A4: return "a4";
    case OperatorKind::A5: return "a5";
    case OperatorKind::A6: return "a6";
    case OperatorKind::A7: return "a7";
  }
  return "?";
}

inline OperatorKind parse_operator_kind(std::string_view s) {
  constexpr std::array kinds{OperatorKind::A1, OperatorKind::A2, OperatorKind::A3, OperatorKind::A4,
                             OperatorKind::A5, OperatorKind::A6, OperatorKind::A7};
  for (OperatorKind k : kinds) {
    if (to_string(k) == s) return k;
  }
  throw Error(ErrorCode::InvalidArgument, "unknown operator '" + std::string(s) + "'");
}

/// A differential operator sum_j (a0_j + a1_j x) f^{(j)}(x), stored as an
/// explicit coefficient table indexed by derivative order j = 0..order.
template <class Real>
class SteinOperatorSpec {
 public:
  SteinOperatorSpec(std::string name, std::vector<LinearCoefficient<Real>> coeffs)
      : name_(std::move(name)), coeffs_(std::move(coeffs)) {
    if (coeffs_.size() < 2) {
      throw Error(ErrorCode::InvalidArgument, "an operator needs at least order 1");
    }
    const auto& top = coeffs_.back();
    if (top.a0 == Real(0) && top.a1 == Real(0)) {
      throw Error(ErrorCode::InvalidArgument, "highest-order coefficient must not vanish");
    }
  }

  int order() const noexcept { return static_cast<int>(coeffs_.size()) - 1; }
  const std::string& name() const noexcept { return name_; }
  const std::vector<LinearCoefficient<Real>>& coeffs() const noexcept { return coeffs_; }
  const LinearCoefficient<Real>& operator[](int j) const { return coeffs_.at(j); }

 private:
  std::string name_;
  std::vector<LinearCoefficient<Real>> coeffs_;
};

namespace detail {

template <class Real>
void require_zero_means(const BasicMeanParams<Real>& mp, std::string_view what) {
  if (mp.base().mu_x() != Real(0) || mp.base().mu_y() != Real(0)) {
    throw Error(ErrorCode::CaseMismatch, std::string(what) + " requires mu_x = mu_y = 0");
  }
}

template <class Real>
void require_unit_single_uncorrelated(const BasicMeanParams<Real>& mp, std::string_view what) {
  const auto& p = mp.base();
  if (p.sigma_x() != Real(1) || p.sigma_y() != Real(1) || mp.n() != 1 || p.rho() != Real(0)) {
    throw Error(ErrorCode::CaseMismatch,
                std::string(what) + " requires sigma_x = sigma_y = 1, n = 1 and rho = 0");
  }
}

}  // namespace detail

/// Fourth-order operator characterising the mean of n copies for any
/// parameters (with s = s_n, c = 1 - rho^2):
///   s^4 c^2 x f'''' + s^3 c (n s c + 4 rho x) f'''
///   + s^2 (n s (rho(rx^2+ry^2) - (1+rho^2) rx ry + 3 rho c) + (6 rho^2 - 2) x) f''
///   + s (n s (2 rho rx ry - rx^2 - ry^2 + 3 rho^2 - 1) - 4 rho x) f'
///   + (x - mu_x mu_y - n s rho) f
template <class Real>
SteinOperatorSpec<Real> operator_a1(const BasicMeanParams<Real>& mp) {
  const auto& p = mp.base();
  const Real s = mp.s_n();
  const Real n(mp.n());
  const Real rho = p.rho();
  const Real rx = p.r_x();
  const Real ry = p.r_y();
  const Real c = Real(1) - rho * rho;
  const Real s2 = s * s;
  const Real s3 = s2 * s;
  std::vector<LinearCoefficient<Real>> k(5);
  k[4] = {Real(0), s3 * s * c * c};
  k[3] = {s3 * c * (n * s * c), s3 * c * (Real(4) * rho)};
  k[2] = {s2 * (n * s * (rho * (rx * rx + ry * ry) - (Real(1) + rho * rho) * rx * ry + Real(3) * rho * c)),
          s2 * (Real(6) * rho * rho - Real(2))};
  k[1] = {s * (n * s * (Real(2) * rho * rx * ry - rx * rx - ry * ry + Real(3) * rho * rho - Real(1))),
          s * (-Real(4) * rho)};
  k[0] = {-(p.mu_x() * p.mu_y()) - n * s * rho, Real(1)};
  return SteinOperatorSpec<Real>("a1", std::move(k));
}

/// Third-order operator for equal mean-to-deviation ratios:
///   s^3 c (1+rho) x f''' + s^2 (1+rho)(n s c + (3 rho - 1) x) f''
///   + s (n s (2 rho^2 + rho - 1 - (1-rho) rx ry) - (3 rho + 1) x) f'
///   + (x - n s rho - mu_x mu_y) f
/// `ratio_tol` is the relative tolerance for rx == ry (use 0 for exact types).
template <class Real>
SteinOperatorSpec<Real> operator_a2(const BasicMeanParams<Real>& mp,
                                    double ratio_tol = kDefaultRatioTolerance) {
  const auto& p = mp.base();
  if (!has_equal_ratios(p, ratio_tol)) {
    throw Error(ErrorCode::CaseMismatch, "operator a2 requires mu_x/sigma_x = mu_y/sigma_y");
  }
  const Real s = mp.s_n();
  const Real n(mp.n());
  const Real rho = p.rho();
  const Real c = Real(1) - rho * rho;
  const Real rr = p.r_x() * p.r_y();
  const Real s2 = s * s;
  std::vector<LinearCoefficient<Real>> k(4);
  k[3] = {Real(0), s2 * s * c * (Real(1) + rho)};
  k[2] = {s2 * (Real(1) + rho) * (n * s * c), s2 * (Real(1) + rho) * (Real(3) * rho - Real(1))};
  k[1] = {s * (n * s * (Real(2) * rho * rho + rho - Real(1) - (Real(1) - rho) * rr)),
          -s * (Real(3) * rho + Real(1))};
  k[0] = {-n * s * rho - p.mu_x() * p.mu_y(), Real(1)};
  return SteinOperatorSpec<Real>("a2", std::move(k));
}

/// The named special-case operator. Preconditions: a3/a4 zero means; a5 zero
/// means, n = 1, rho = 0; a6 unit variances, n = 1, rho = 0; a7 as a6 plus
/// mu_x = mu_y. a1/a2 are forwarded to their builders.
template <class Real>
SteinOperatorSpec<Real> operator_special(OperatorKind which, const BasicMeanParams<Real>& mp) {
  const auto& p = mp.base();
  const Real s = mp.s_n();
  const Real n(mp.n());
  const Real rho = p.rho();
  const Real c = Real(1) - rho * rho;
  const Real s2 = s * s;
  switch (which) {
    case OperatorKind::A1: return operator_a1(mp);
    case OperatorKind::A2: return operator_a2(mp);
    case OperatorKind::A3: {
      detail::require_zero_means(mp, "a3");
      const Real s3 = s2 * s;
      std::vector<LinearCoefficient<Real>> k(5);
      k[4] = {Real(0), s3 * s * c * c};
      k[3] = {s3 * c * (n * s * c), s3 * c * (Real(4) * rho)};
      k[2] = {s2 * (n * s * (Real(3) * rho * c)), s2 * (Real(6) * rho * rho - Real(2))};
      k[1] = {s * (n * s * (Real(3) * rho * rho - Real(1))), s * (-Real(4) * rho)};
      k[0] = {-n * s * rho, Real(1)};
      return SteinOperatorSpec<Real>("a3", std::move(k));
    }
    case OperatorKind::A4: {
      detail::require_zero_means(mp, "a4");
      std::vector<LinearCoefficient<Real>> k(3);
      k[2] = {Real(0), s2 * c};
      k[1] = {s * (n * s * c), s * (Real(2) * rho)};
      k[0] = {n * s * rho, -Real(1)};
      return SteinOperatorSpec<Real>("a4", std::move(k));
    }
    case OperatorKind::A5: {
      detail::require_zero_means(mp, "a5");
      if (mp.n() != 1 || rho != Real(0)) {
        throw Error(ErrorCode::CaseMismatch, "a5 requires n = 1 and rho = 0");
      }
      const Real s1 = p.s();
      std::vector<LinearCoefficient<Real>> k(3);
      k[2] = {Real(0), s1 * s1};
      k[1] = {s1 * s1, Real(0)};
      k[0] = {Real(0), -Real(1)};
      return SteinOperatorSpec<Real>("a5", std::move(k));
    }
    case OperatorKind::A6: {
      detail::require_unit_single_uncorrelated(mp, "a6");
      const Real mm = p.mu_x() * p.mu_y();
      std::vector<LinearCoefficient<Real>> k(5);
      k[4] = {Real(0), Real(1)};
      k[3] = {Real(1), Real(0)};
      k[2] = {-mm, -Real(2)};
      k[1] = {-(p.mu_x() * p.mu_x() + p.mu_y() * p.mu_y() + Real(1)), Real(0)};
      k[0] = {-mm, Real(1)};
      return SteinOperatorSpec<Real>("a6", std::move(k));
    }
    case OperatorKind::A7: {
      detail::require_unit_single_uncorrelated(mp, "a7");
      if (p.mu_x() != p.mu_y()) {
        throw Error(ErrorCode::CaseMismatch, "a7 requires mu_x = mu_y");
      }
      const Real mu2 = p.mu_x() * p.mu_x();
      std::vector<LinearCoefficient<Real>> k(4);
      k[3] = {Real(0), Real(1)};
      k[2] = {Real(1), -Real(1)};
      k[1] = {-(Real(1) + mu2), -Real(1)};
      k[0] = {-mu2, Real(1)};
      return SteinOperatorSpec<Real>("a7", std::move(k));
    }
  }
  throw Error(ErrorCode::InvalidArgument, "unknown operator");
}

/// A test function for Stein operators: values of f and its first four
/// derivatives at a point.
///
/// Membership of f in the class for which a characterising identity holds
/// (finite moments of f^{(m)}(W) and W f^{(m)}(W)) is the caller's
/// obligation; none of the constructors below check it.
class TestFunction {
 public:
  using Eval = std::function<Derivatives(double)>;

  TestFunction(std::string label, Eval eval, std::string integrability_note = {})
      : label_(std::move(label)), eval_(std::move(eval)), note_(std::move(integrability_note)) {}

  Derivatives operator()(double x) const { return eval_(x); }
  const std::string& label() const noexcept { return label_; }
  const std::string& integrability_note() const noexcept { return note_; }

  /// x^k, k = 0..8
  static TestFunction monomial(int k) {
    if (k < 0 || k > 8) throw Error(ErrorCode::InvalidArgument, "monomial degree must be in [0, 8]");
    return TestFunction("x^" + std::to_string(k), [k](double x) {
      Derivatives d{};
      double falling = 1.0;
      for (int j = 0; j < 5 && j <= k; ++j) {
        d[j] = falling * std::pow(x, k - j);
        falling *= (k - j);
      }
      return d;
    }, "all moments of product-normal laws are finite");
  }

  /// sum_i c_i x^i with exact derivatives.
  static TestFunction polynomial(std::vector<double> coeffs) {
    return TestFunction("poly", [c = std::move(coeffs)](double x) {
      Derivatives d{};
      for (int j = 0; j < 5; ++j) {
        double acc = 0.0;
        for (int i = static_cast<int>(c.size()) - 1; i >= j; --i) {
          double falling = 1.0;
          for (int t = 0; t < j; ++t) falling *= (i - t);
          acc = acc * x + c[i] * falling;
        }
        d[j] = acc;
      }
      return d;
    });
  }

  /// exp(a x). Integrable against these laws only for |a| small enough that
  /// the moment generating function exists.
  static TestFunction exponential(double a) {
    return TestFunction("exp(" + std::to_string(a) + "x)", [a](double x) {
      const double e = std::exp(a * x);
      return Derivatives{e, a * e, a * a * e, a * a * a * e, a * a * a * a * e};
    }, "needs E exp(a W) finite");
  }

  static TestFunction sine(double t) {
    return TestFunction("sin(" + std::to_string(t) + "x)", [t](double x) {
      const double sn = std::sin(t * x);
      const double cs = std::cos(t * x);
      return Derivatives{sn, t * cs, -t * t * sn, -t * t * t * cs, t * t * t * t * sn};
    }, "bounded with bounded derivatives");
  }

  static TestFunction cosine(double t) {
    return TestFunction("cos(" + std::to_string(t) + "x)", [t](double x) {
      const double sn = std::sin(t * x);
      const double cs = std::cos(t * x);
      return Derivatives{cs, -t * sn, -t * t * cs, t * t * t * sn, t * t * t * t * cs};
    }, "bounded with bounded derivatives");
  }

  /// exp(-x^2 / (2 v)) times a polynomial, via the product rule.
  static TestFunction gaussian_times_poly(double variance, std::vector<double> coeffs) {
    const TestFunction poly = polynomial(std::move(coeffs));
    return TestFunction("gauss*poly", [variance, poly](double x) {
      // g = exp(-x^2/(2v)); g' = -x/v g; g'' = (x^2/v^2 - 1/v) g;
      // g''' = (3x/v^2 - x^3/v^3) g; g'''' = (x^4/v^4 - 6x^2/v^3 + 3/v^2) g
      const double v = variance;
      const double g = std::exp(-x * x / (2.0 * v));
      const Derivatives gd{g, -x / v * g, (x * x / (v * v) - 1.0 / v) * g,
                           (3.0 * x / (v * v) - x * x * x / (v * v * v)) * g,
                           (x * x * x * x / (v * v * v * v) - 6.0 * x * x / (v * v * v) + 3.0 / (v * v)) * g};
      const Derivatives pd = poly(x);
      Derivatives out{};
      for (int k = 0; k < 5; ++k) {
        double binom = 1.0;
        for (int j = 0; j <= k; ++j) {
          out[k] += binom * pd[j] * gd[k - j];
          binom = binom * (k - j) / (j + 1);
        }
      }
      return out;
    }, "bounded with bounded derivatives");
  }

  /// Wraps an arbitrary smooth function; derivatives come from Richardson
  /// extrapolated central differences with step h.
  static TestFunction finite_difference(std::string label, std::function<double(double)> f,
                                        double h = 1e-2) {
    return TestFunction(std::move(label), [f = std::move(f), h](double x) {
      return richardson_derivatives(f, x, h);
    }, "caller must ensure the required moments are finite");
  }

  /// Parses "poly:K" (x^K), "exp:A", "sin:T", "cos:T" or "gauss" (exp(-x^2/4)).
  static TestFunction parse(std::string_view spec) {
    const auto colon = spec.find(':');
    const std::string_view head = spec.substr(0, colon);
    const std::string arg = colon == std::string_view::npos ? std::string() : std::string(spec.substr(colon + 1));
    try {
      if (head == "poly" || head == "x") return monomial(std::stoi(arg));
      if (head == "exp") return exponential(std::stod(arg));
      if (head == "sin") return sine(std::stod(arg));
      if (head == "cos") return cosine(std::stod(arg));
      if (head == "gauss") return gaussian_times_poly(2.0, {1.0});
    } catch (const std::logic_error&) {
      // fall through to the error below
    }
    throw Error(ErrorCode::InvalidArgument, "unrecognised test function '" + std::string(spec) + "'");
  }

 private:
  std::string label_;
  Eval eval_;
  std::string note_;
};

/// sum_j (a0_j + a1_j x) f^{(j)}(x) given f and its derivatives at x.
template <class Real, class Derivs>
Real apply(const SteinOperatorSpec<Real>& spec, const Derivs& d, const Real& x) {
  Real acc(0);
  for (int j = 0; j <= spec.order(); ++j) {
    const auto& k = spec[j];
    acc += (k.a0 + k.a1 * x) * Real(d[j]);
  }
  return acc;
}

inline double apply(const SteinOperatorSpec<double>& spec, const TestFunction& f, double x) {
  if (spec.order() > 4) throw Error(ErrorCode::InvalidArgument, "test functions supply four derivatives");
  return apply(spec, f(x), x);
}

/// Residuals of the two substitution identities linking the operators.
/// Both identities hold for every smooth f, so a correct implementation
/// returns rounding noise only.
struct SubstitutionResidual {
  double lhs;
  double rhs;
  double abs_diff;
  double scale;  // largest magnitude entering either side

  double relative() const { return scale == 0.0 ? abs_diff : abs_diff / scale; }
};

/// Equal ratios: A1 f(x) == A2 g(x) with g = (1 - rho) s_n f' + f.
/// Zero means:   A3 f(x) == A4 g(x) with g = (1 - rho^2) s_n^2 f'' + 2 rho s_n f' - f.
enum class SubstitutionIdentity { A1ToA2, A3ToA4 };

inline SubstitutionResidual substitution_identity_check(SubstitutionIdentity which, const MeanParams& mp,
                                                        const Derivatives& f, double x) {
  const double s = mp.s_n();
  const double rho = mp.base().rho();
  SteinOperatorSpec<double> lhs_op = which == SubstitutionIdentity::A1ToA2
                                         ? operator_a1(mp)
                                         : operator_special(OperatorKind::A3, mp);
  SteinOperatorSpec<double> rhs_op = which == SubstitutionIdentity::A1ToA2
                                         ? operator_a2(mp)
                                         : operator_special(OperatorKind::A4, mp);
  std::array<double, 4> g{};
  if (which == SubstitutionIdentity::A1ToA2) {
    for (int j = 0; j < 4; ++j) g[j] = (1.0 - rho) * s * f[j + 1] + f[j];
  } else {
    const double c = (1.0 - rho) * (1.0 + rho);
    for (int j = 0; j < 3; ++j) g[j] = c * s * s * f[j + 2] + 2.0 * rho * s * f[j + 1] - f[j];
  }
  SubstitutionResidual r{};
  r.lhs = apply(lhs_op, f, x);
  r.rhs = apply(rhs_op, g, x);
  r.abs_diff = std::abs(r.lhs - r.rhs);
  for (int j = 0; j <= lhs_op.order(); ++j) {
    r.scale = std::max(r.scale, std::abs((lhs_op[j].a0 + lhs_op[j].a1 * x) * f[j]));
  }
  for (int j = 0; j <= rhs_op.order(); ++j) {
    r.scale = std::max(r.scale, std::abs((rhs_op[j].a0 + rhs_op[j].a1 * x) * g[j]));
  }
  return r;
}

inline SubstitutionResidual substitution_identity_check(SubstitutionIdentity which, const MeanParams& mp,
                                                        const TestFunction& f, double x) {
  return substitution_identity_check(which, mp, f(x), x);
}

}  // namespace pnstein
