#pragma once

#include <array>
#include <cmath>

namespace pnstein {

/// f, f', f'', f''', f'''' at a point.
using Derivatives = std::array<double, 5>;

namespace detail {

template <class F>
Derivatives seven_point_stencil(const F& f, double x, double h) {
  std::array<double, 7> v{};
  for (int i = 0; i < 7; ++i) v[i] = f(x + (i - 3) * h);
  const double h2 = h * h;
  Derivatives d{};
  d[0] = v[3];
  d[1] = (-v[0] + 9 * v[1] - 45 * v[2] + 45 * v[4] - 9 * v[5] + v[6]) / (60 * h);
  d[2] = (2 * v[0] - 27 * v[1] + 270 * v[2] - 490 * v[3] + 270 * v[4] - 27 * v[5] + 2 * v[6]) /
         (180 * h2);
  d[3] = (v[0] - 8 * v[1] + 13 * v[2] - 13 * v[4] + 8 * v[5] - v[6]) / (8 * h2 * h);
  d[4] = (-v[0] + 12 * v[1] - 39 * v[2] + 56 * v[3] - 39 * v[4] + 12 * v[5] - v[6]) / (6 * h2 * h2);
  return d;
}

}  // namespace detail

/// Derivatives up to order four from 7-point central stencils at steps h and
/// h/2, combined by one Richardson step per derivative.
///
/// The stencils are O(h^6) for f', f'' and O(h^4) for f''', f''''.
template <class F>
Derivatives richardson_derivatives(const F& f, double x, double h) {
  const Derivatives coarse = detail::seven_point_stencil(f, x, h);
  const Derivatives fine = detail::seven_point_stencil(f, x, 0.5 * h);
  Derivatives out{};
  out[0] = fine[0];
  constexpr std::array<double, 5> order{0, 6, 6, 4, 4};
  for (int k = 1; k < 5; ++k) {
    const double w = std::ldexp(1.0, static_cast<int>(order[k]));
    out[k] = (w * fine[k] - coarse[k]) / (w - 1.0);
  }
  return out;
}

}  // namespace pnstein
