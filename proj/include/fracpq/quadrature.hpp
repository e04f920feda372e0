#pragma once

#include <array>
#include <cstddef>
#include <vector>

#include <boost/math/quadrature/gauss.hpp>

namespace fracpq::quad {

/// Gauss-Legendre nodes/weights mapped to [0, 1].
struct Rule {
  std::vector<double> x;
  std::vector<double> w;
};

template <unsigned Points>
Rule unit_gauss() {
  using G = boost::math::quadrature::gauss<double, Points>;
  const auto& a = G::abscissa();
  const auto& wt = G::weights();
  Rule r;
  // Boost stores the non-negative half of a symmetric rule.
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i] == 0.0) {
      r.x.push_back(0.5);
      r.w.push_back(0.5 * wt[i]);
      continue;
    }
    r.x.push_back(0.5 * (1.0 - a[i]));
    r.w.push_back(0.5 * wt[i]);
    r.x.push_back(0.5 * (1.0 + a[i]));
    r.w.push_back(0.5 * wt[i]);
  }
  return r;
}

inline const Rule& gauss3() {
  static const Rule r = unit_gauss<3>();
  return r;
}
inline const Rule& gauss8() {
  static const Rule r = unit_gauss<8>();
  return r;
}
inline const Rule& gauss20() {
  static const Rule r = unit_gauss<20>();
  return r;
}
inline const Rule& gauss30() {
  static const Rule r = unit_gauss<30>();
  return r;
}

/// Composite rule on [a, b]: `panels` equal panels of the given unit rule.
inline Rule composite(const Rule& unit, double a, double b, std::size_t panels) {
  Rule r;
  r.x.reserve(panels * unit.x.size());
  r.w.reserve(panels * unit.x.size());
  const double width = (b - a) / static_cast<double>(panels);
  for (std::size_t k = 0; k < panels; ++k) {
    const double lo = a + width * static_cast<double>(k);
    for (std::size_t i = 0; i < unit.x.size(); ++i) {
      r.x.push_back(lo + width * unit.x[i]);
      r.w.push_back(width * unit.w[i]);
    }
  }
  return r;
}

/// Tensor Gauss integral of f over the axis-aligned box [lo, hi] in 1 or 2D.
template <class F>
double box_integral(int dim, const std::array<double, 2>& lo, const std::array<double, 2>& hi,
                    const Rule& rule, F&& f) {
  const double wx = hi[0] - lo[0];
  if (dim == 1) {
    double s = 0.0;
    for (std::size_t i = 0; i < rule.x.size(); ++i) {
      s += rule.w[i] * f(std::array<double, 2>{lo[0] + wx * rule.x[i], 0.0});
    }
    return s * wx;
  }
  const double wy = hi[1] - lo[1];
  double s = 0.0;
  for (std::size_t i = 0; i < rule.x.size(); ++i) {
    double row = 0.0;
    for (std::size_t j = 0; j < rule.x.size(); ++j) {
      row += rule.w[j] * f(std::array<double, 2>{lo[0] + wx * rule.x[i], lo[1] + wy * rule.x[j]});
    }
    s += rule.w[i] * row;
  }
  return s * wx * wy;
}

}  // namespace fracpq::quad
