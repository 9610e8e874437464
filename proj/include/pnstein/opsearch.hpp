#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <regex>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <boost/multiprecision/cpp_int.hpp>

#include "pnstein/error.hpp"
#include "pnstein/moments.hpp"
#include "pnstein/params.hpp"
#include "pnstein/stein.hpp"

namespace pnstein {

using Rational = boost::multiprecision::cpp_rational;
using BigInt = boost::multiprecision::cpp_int;
using ExactMeanParams = BasicMeanParams<Rational>;
using ExactMatrix = std::vector<std::vector<Rational>>;
using ExactVector = std::vector<Rational>;

/// Parses "3", "-0.25", "1.5e-3" or "7/4" into an exact rational. Anything
/// else (including "nan", "inf" or "sqrt(2)") is rejected.
inline Rational parse_rational(std::string_view text) {
  static const std::regex fraction(R"(\s*([+-]?)0*(\d+)\s*/\s*0*(\d+)\s*)");
  static const std::regex decimal(R"(\s*([+-]?)(\d*)(?:\.(\d*))?(?:[eE]([+-]?\d+))?\s*)");
  const std::string s(text);
  std::smatch m;
  if (std::regex_match(s, m, fraction)) {
    const BigInt den(m[3].str());
    if (den == 0) throw Error(ErrorCode::ParameterNotRational, "zero denominator in '" + s + "'");
    const BigInt num(m[2].str());
    return Rational(m[1].str() == "-" ? BigInt(-num) : num, den);
  }
  if (std::regex_match(s, m, decimal) && (m[2].length() + m[3].length()) > 0) {
    std::string digits = m[2].str() + m[3].str();
    // a leading zero would make the BigInt parser read octal
    digits.erase(0, std::min(digits.find_first_not_of('0'), digits.size() - 1));
    Rational value{BigInt(digits)};
    long long exp10 = -static_cast<long long>(m[3].length());
    if (m[4].matched) {
      const std::string e = m[4].str();
      if (e.size() > 6) throw Error(ErrorCode::ParameterNotRational, "exponent too large in '" + s + "'");
      exp10 += std::stoll(e);
    }
    const BigInt scale = boost::multiprecision::pow(BigInt(10), static_cast<unsigned>(std::llabs(exp10)));
    if (exp10 >= 0) {
      value *= scale;
    } else {
      value /= scale;
    }
    return m[1].str() == "-" ? -value : value;
  }
  throw Error(ErrorCode::ParameterNotRational, "'" + s + "' is not a decimal or fraction literal");
}

/// The exact binary value of a finite double.
inline Rational to_rational(double x) {
  if (!std::isfinite(x)) throw Error(ErrorCode::ParameterNotRational, "non-finite value");
  int exp = 0;
  const double mant = std::frexp(x, &exp);
  const auto scaled = static_cast<std::int64_t>(std::ldexp(mant, 53));
  Rational r{BigInt(scaled)};
  const int shift = exp - 53;
  const BigInt two_pow = BigInt(1) << std::abs(shift);
  if (shift >= 0) return Rational(r * two_pow);
  return Rational(r / two_pow);
}

inline ExactMeanParams to_exact(const MeanParams& mp) {
  const auto& p = mp.base();
  return ExactMeanParams::validate(to_rational(p.mu_x()), to_rational(p.mu_y()), to_rational(p.sigma_x()),
                                   to_rational(p.sigma_y()), to_rational(p.rho()), mp.n());
}

/// Exact E[W^k], k = 0..kmax.
inline ExactVector exact_raw_moments(const ExactMeanParams& mp, int kmax) {
  if (kmax < 0) throw Error(ErrorCode::InvalidArgument, "kmax must be nonnegative");
  return recursion::raw(mp, kmax);
}

/// Unknowns a_{i,j} of sum_j (a_{0,j} + a_{1,j} x) f^{(j)}(x), ordered
/// a00, a10, a01, a11, ..., a0m, a1m.
struct OperatorAnsatz {
  int order;

  explicit OperatorAnsatz(int m) : order(m) {
    if (m < 0) throw Error(ErrorCode::InvalidArgument, "ansatz order must be nonnegative");
  }
  int unknowns() const { return 2 * (order + 1); }
  static int column(int i, int j) { return 2 * j + i; }
};

/// Row k holds the coefficients of E[A x^k] = 0 in the ansatz unknowns:
/// a_{0,j} -> k!/(k-j)! m_{k-j}, a_{1,j} -> k!/(k-j)! m_{k-j+1}.
inline ExactMatrix moment_system(const ExactVector& moments, const OperatorAnsatz& ansatz, int rows) {
  if (rows < 1) throw Error(ErrorCode::InvalidArgument, "need at least one equation");
  if (static_cast<int>(moments.size()) < rows + 1) {
    throw Error(ErrorCode::InvalidArgument, "not enough moments for the requested rows");
  }
  ExactMatrix m(rows, ExactVector(ansatz.unknowns(), Rational(0)));
  for (int k = 0; k < rows; ++k) {
    BigInt falling = 1;  // k!/(k-j)!
    for (int j = 0; j <= ansatz.order && j <= k; ++j) {
      if (j > 0) falling *= (k - j + 1);
      m[k][OperatorAnsatz::column(0, j)] = Rational(falling) * moments[k - j];
      m[k][OperatorAnsatz::column(1, j)] = Rational(falling) * moments[k - j + 1];
    }
  }
  return m;
}

inline ExactMatrix moment_system(const ExactMeanParams& mp, const OperatorAnsatz& ansatz, int rows) {
  return moment_system(exact_raw_moments(mp, rows), ansatz, rows);
}

/// Determinant by Bareiss elimination on the integer matrix obtained by
/// clearing each row's denominators.
inline Rational determinant_exact(const ExactMatrix& a) {
  const std::size_t n = a.size();
  for (const auto& row : a) {
    if (row.size() != n) throw Error(ErrorCode::NotSquare, "determinant needs a square matrix");
  }
  if (n == 0) return Rational(1);

  std::vector<std::vector<BigInt>> m(n, std::vector<BigInt>(n));
  BigInt row_scale = 1;
  for (std::size_t i = 0; i < n; ++i) {
    BigInt l = 1;
    for (const auto& v : a[i]) l = boost::multiprecision::lcm(l, boost::multiprecision::denominator(v));
    row_scale *= l;
    for (std::size_t j = 0; j < n; ++j) {
      m[i][j] = boost::multiprecision::numerator(a[i][j]) * (l / boost::multiprecision::denominator(a[i][j]));
    }
  }

  int sign = 1;
  BigInt prev = 1;
  for (std::size_t k = 0; k + 1 < n; ++k) {
    if (m[k][k] == 0) {
      std::size_t p = k + 1;
      while (p < n && m[p][k] == 0) ++p;
      if (p == n) return Rational(0);
      std::swap(m[k], m[p]);
      sign = -sign;
    }
    for (std::size_t i = k + 1; i < n; ++i) {
      for (std::size_t j = k + 1; j < n; ++j) {
        m[i][j] = (m[i][j] * m[k][k] - m[i][k] * m[k][j]) / prev;
      }
      m[i][k] = 0;
    }
    prev = m[k][k];
  }
  return Rational(sign * m[n - 1][n - 1], row_scale);
}

/// Reduced row echelon form; returns the pivot columns.
inline std::vector<std::size_t> rref(ExactMatrix& m) {
  std::vector<std::size_t> pivots;
  if (m.empty()) return pivots;
  const std::size_t rows = m.size();
  const std::size_t cols = m[0].size();
  std::size_t r = 0;
  for (std::size_t c = 0; c < cols && r < rows; ++c) {
    std::size_t p = r;
    while (p < rows && m[p][c] == 0) ++p;
    if (p == rows) continue;
    std::swap(m[r], m[p]);
    const Rational inv = 1 / m[r][c];
    for (auto& v : m[r]) v *= inv;
    for (std::size_t i = 0; i < rows; ++i) {
      if (i == r || m[i][c] == 0) continue;
      const Rational f = m[i][c];
      for (std::size_t j = c; j < cols; ++j) m[i][j] -= f * m[r][j];
    }
    pivots.push_back(c);
    ++r;
  }
  return pivots;
}

inline std::size_t rank(ExactMatrix m) { return rref(m).size(); }

/// Basis of {v : m v = 0}, one vector per free column.
inline std::vector<ExactVector> nullspace(ExactMatrix m) {
  const std::size_t cols = m.empty() ? 0 : m[0].size();
  const auto pivots = rref(m);
  std::vector<bool> is_pivot(cols, false);
  for (auto c : pivots) is_pivot[c] = true;
  std::vector<ExactVector> basis;
  for (std::size_t free = 0; free < cols; ++free) {
    if (is_pivot[free]) continue;
    ExactVector v(cols, Rational(0));
    v[free] = 1;
    for (std::size_t r = 0; r < pivots.size(); ++r) v[pivots[r]] = -m[r][free];
    basis.push_back(std::move(v));
  }
  return basis;
}

inline ExactVector multiply(const ExactMatrix& m, const ExactVector& v) {
  ExactVector out(m.size(), Rational(0));
  for (std::size_t i = 0; i < m.size(); ++i) {
    if (m[i].size() != v.size()) throw Error(ErrorCode::InvalidArgument, "dimension mismatch");
    for (std::size_t j = 0; j < v.size(); ++j) out[i] += m[i][j] * v[j];
  }
  return out;
}

/// True when v is a linear combination of the basis vectors.
inline bool in_span(const std::vector<ExactVector>& basis, const ExactVector& v) {
  if (basis.empty()) {
    for (const auto& x : v) {
      if (x != 0) return false;
    }
    return true;
  }
  ExactMatrix with(basis.begin(), basis.end());
  const std::size_t before = rank(with);
  with.push_back(v);
  return rank(std::move(with)) == before;
}

/// Coefficients of an operator laid out like the ansatz columns, padded with
/// zeros up to `order`.
inline ExactVector coefficient_vector(const SteinOperatorSpec<Rational>& spec, int order) {
  if (spec.order() > order) throw Error(ErrorCode::InvalidArgument, "operator order exceeds ansatz order");
  ExactVector v(2 * (order + 1), Rational(0));
  for (int j = 0; j <= spec.order(); ++j) {
    v[OperatorAnsatz::column(0, j)] = spec[j].a0;
    v[OperatorAnsatz::column(1, j)] = spec[j].a1;
  }
  return v;
}

inline int default_rows(int order) { return 2 * (order + 1) + 4; }

struct OperatorSearchResult {
  int order = 0;
  int rows = 0;
  ExactMatrix system;
  std::size_t rank = 0;
  bool exists = false;
  std::vector<ExactVector> nullspace_basis;
};

/// Looks for a nonzero linear-coefficient operator of the given order whose
/// expectation vanishes on x^0..x^{rows-1}. A nontrivial nullspace is a
/// necessary condition only.
inline OperatorSearchResult operator_exists(const ExactMeanParams& mp, int order,
                                            std::optional<int> rows = std::nullopt) {
  const OperatorAnsatz ansatz(order);
  const int r = rows.value_or(default_rows(order));
  if (r < ansatz.unknowns()) {
    throw Error(ErrorCode::InvalidArgument, "need at least 2(order+1) equations");
  }
  OperatorSearchResult out;
  out.order = order;
  out.rows = r;
  out.system = moment_system(mp, ansatz, r);
  out.nullspace_basis = nullspace(out.system);
  out.rank = static_cast<std::size_t>(ansatz.unknowns()) - out.nullspace_basis.size();
  out.exists = !out.nullspace_basis.empty();
  return out;
}

}  // namespace pnstein
