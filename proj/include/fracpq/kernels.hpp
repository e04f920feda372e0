#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <utility>
#include <numbers>
#include <span>
#include <vector>

#include "fracpq/error.hpp"
#include "fracpq/grid.hpp"
#include "fracpq/numerics.hpp"
#include "fracpq/quadrature.hpp"

namespace fracpq {

/// Riesz kernel I_alpha(x) = gamma(N, alpha) / |x|^{N - alpha}, 0 < alpha < N.
struct RieszParams {
  int dimension = 2;
  double order = 0.5;

  void validate() const {
    if (dimension < 1) throw DomainError("Riesz kernel needs dimension >= 1");
    if (!(order > 0.0 && order < dimension)) throw DomainError("Riesz kernel needs 0 < alpha < N");
  }
};

/// Bessel kernel g_alpha evaluated through its delta-integral with
/// delta = e^t, |t| <= t_max, composite Gauss-Legendre with `nodes` points.
struct BesselParams {
  int dimension = 1;
  double order = 2.0;
  double t_max = 40.0;
  int nodes = 400;
  /// Allowed relative change when the node count is doubled.
  double tolerance = 1e-8;

  void validate() const {
    if (dimension < 1) throw DomainError("Bessel kernel needs dimension >= 1");
    if (!(order > 0.0)) throw DomainError("Bessel kernel needs alpha > 0");
    if (nodes < 8 || nodes % 8 != 0) throw DomainError("Bessel quadrature node count must be a multiple of 8");
  }
};

/// gamma(N, alpha) = Gamma((N - alpha)/2) / (pi^{N/2} 2^alpha Gamma(alpha/2)),
/// evaluated in log space.
inline double riesz_normalization(int N, double alpha) {
  RieszParams{N, alpha}.validate();
  const double log_value = std::lgamma(0.5 * (N - alpha)) - 0.5 * N * std::log(std::numbers::pi) -
                           alpha * std::numbers::ln2 - std::lgamma(0.5 * alpha);
  return std::exp(log_value);
}

inline double riesz_kernel_eval(const RieszParams& params, std::span<const double> x) {
  params.validate();
  if (x.size() != static_cast<std::size_t>(params.dimension)) throw DomainError("point dimension mismatch");
  double r2 = 0.0;
  for (double c : x) r2 += c * c;
  if (r2 == 0.0) throw SingularityError("Riesz kernel is singular at the origin");
  return riesz_normalization(params.dimension, params.order) *
         std::pow(r2, 0.5 * (params.order - params.dimension));
}

/// Integral of I_alpha over the cell [c - h/2, c + h/2]^N (N = 1, 2). The
/// origin cell uses the exact radial integral; other cells tensor Gauss.
inline double riesz_cell_integral(const RieszParams& params, const Point& c, double h) {
  params.validate();
  const int N = params.dimension;
  if (N > 2) throw DomainError("cell integrals are implemented for N <= 2");
  const double alpha = params.order;
  const double gam = riesz_normalization(N, alpha);
  const bool origin = std::abs(c[0]) < 0.25 * h && (N == 1 || std::abs(c[1]) < 0.25 * h);
  if (origin) {
    const double half = 0.5 * h;
    if (N == 1) return gam * 2.0 * std::pow(half, alpha) / alpha;
    // 8 triangles: theta in [0, pi/4], r up to (h/2)/cos(theta).
    const auto rule = quad::composite(quad::gauss20(), 0.0, std::numbers::pi / 4.0, 2);
    double ang = 0.0;
    for (std::size_t i = 0; i < rule.x.size(); ++i) ang += rule.w[i] * std::pow(std::cos(rule.x[i]), -alpha);
    return gam * 8.0 * std::pow(half, alpha) / alpha * ang;
  }
  const double dist = (N == 1 ? std::abs(c[0]) : std::max(std::abs(c[0]), std::abs(c[1]))) / h;
  const quad::Rule& rule = dist < 2.5 ? quad::gauss20() : (dist < 8.5 ? quad::gauss8() : quad::gauss3());
  const Point lo{c[0] - 0.5 * h, c[1] - 0.5 * h};
  const Point hi{c[0] + 0.5 * h, c[1] + 0.5 * h};
  const double expo = 0.5 * (alpha - N);
  return gam * quad::box_integral(N, lo, hi, rule, [&](const Point& x) {
           const double r2 = N == 1 ? x[0] * x[0] : x[0] * x[0] + x[1] * x[1];
           return std::pow(r2, expo);
         });
}

namespace detail {

inline double bessel_log_norm(double alpha) {
  return -0.5 * alpha * std::log(4.0 * std::numbers::pi) - std::lgamma(0.5 * alpha);
}

/// Integral of exp(-a x^2) over [lo, hi], computed without cancellation in
/// the tails.
inline double gaussian_interval(double a, double lo, double hi) {
  const double sa = std::sqrt(a);
  const double pref = 0.5 * std::sqrt(std::numbers::pi / a);
  if (lo >= 0.0) return pref * (std::erfc(sa * lo) - std::erfc(sa * hi));
  if (hi <= 0.0) return pref * (std::erfc(-sa * hi) - std::erfc(-sa * lo));
  return pref * (std::erf(sa * hi) - std::erf(sa * lo));
}

/// Part of [-t_max, t_max] where the log-integrand is within 60 of its
/// maximum. Away from the origin the integrand is a narrow bump, and spending
/// the nodes there keeps the rule accurate.
template <class LogF>
std::pair<double, double> bessel_window(double t_max, LogF&& logf) {
  constexpr int scan = 1600;
  const double step = 2.0 * t_max / scan;
  std::vector<double> vals(scan + 1);
  double peak = -std::numeric_limits<double>::infinity();
  for (int i = 0; i <= scan; ++i) {
    vals[i] = logf(-t_max + step * i);
    peak = std::max(peak, vals[i]);
  }
  if (!std::isfinite(peak)) return {-t_max, t_max};
  int lo = scan, hi = 0;
  for (int i = 0; i <= scan; ++i) {
    if (vals[i] > peak - 60.0) {
      lo = std::min(lo, i);
      hi = std::max(hi, i);
    }
  }
  return {-t_max + step * std::max(lo - 1, 0), -t_max + step * std::min(hi + 1, scan)};
}

template <class LogF>
double bessel_t_integral(std::pair<double, double> window, int nodes, LogF&& logf) {
  const auto rule = quad::composite(quad::gauss8(), window.first, window.second, static_cast<std::size_t>(nodes / 8));
  CompensatedSum s;
  for (std::size_t i = 0; i < rule.x.size(); ++i) {
    const double e = logf(rule.x[i]);
    if (e > -745.0) s.add(rule.w[i] * std::exp(e));
  }
  return s.value();
}

/// Integral over t of exp(logf(t)); throws when doubling the node count moves
/// the result by more than the relative tolerance.
template <class LogF>
double bessel_checked(const BesselParams& p, LogF&& logf) {
  p.validate();
  const auto window = bessel_window(p.t_max, logf);
  const double coarse = bessel_t_integral(window, p.nodes, logf);
  const double fine = bessel_t_integral(window, 2 * p.nodes, logf);
  const double scale = std::max(std::abs(fine), std::numeric_limits<double>::min());
  if (!std::isfinite(fine) || std::abs(fine - coarse) > p.tolerance * scale) {
    throw QuadratureError("Bessel kernel quadrature did not settle under node doubling");
  }
  return fine;
}

}  // namespace detail

/// g_alpha(x) via the delta-integral. Evaluation at x = 0 requires alpha > N.
inline double bessel_kernel_eval(const BesselParams& params, std::span<const double> x) {
  params.validate();
  if (x.size() != static_cast<std::size_t>(params.dimension)) throw DomainError("point dimension mismatch");
  double r2 = 0.0;
  for (double c : x) r2 += c * c;
  if (r2 == 0.0 && !(params.order > params.dimension)) {
    throw SingularityError("Bessel kernel is singular at the origin for alpha <= N");
  }
  const double half_excess = 0.5 * (params.order - params.dimension);
  const double lognorm = detail::bessel_log_norm(params.order);
  return detail::bessel_checked(params, [&](double t) {
    return -std::numbers::pi * r2 * std::exp(-t) - std::exp(t) / (4.0 * std::numbers::pi) + t * half_excess +
           lognorm;
  });
}

/// Average of g_alpha over the axis-aligned cell [c - h/2, c + h/2]^N. The
/// Gaussian factor integrates in closed form per axis, so this stays finite
/// on the cell containing the singularity.
inline double bessel_cell_average(const BesselParams& params, std::span<const double> c, double h) {
  params.validate();
  if (c.size() != static_cast<std::size_t>(params.dimension)) throw DomainError("point dimension mismatch");
  const int N = params.dimension;
  const double alpha = params.order;
  const double lognorm = detail::bessel_log_norm(alpha);
  const double integral = detail::bessel_checked(params, [&](double t) {
    const double a = std::numbers::pi * std::exp(-t);
    double log_inner = 0.0;
    for (int d = 0; d < N; ++d) log_inner += std::log(detail::gaussian_interval(a, c[d] - 0.5 * h, c[d] + 0.5 * h));
    return log_inner - std::exp(t) / (4.0 * std::numbers::pi) + t * 0.5 * (alpha - N) + lognorm;
  });
  return integral / std::pow(h, N);
}

/// || g_alpha * g_beta - g_{alpha+beta} ||_{L^1(grid)} by discrete
/// convolution of cell averages over every node of the grid's bounding box.
inline double semigroup_residual(double alpha, double beta, const Grid& grid, BesselParams base = {}) {
  if (!(alpha > 0.0 && beta > 0.0)) throw DomainError("semigroup residual needs alpha, beta > 0");
  if (!grid.isotropic()) throw DomainError("semigroup residual needs an isotropic grid");
  const int N = grid.dim();
  const int n = grid.resolution();
  const double h = grid.spacing();
  base.dimension = N;
  auto params_for = [&base](double order) {
    BesselParams p = base;
    p.order = order;
    return p;
  };
  const BesselParams pa = params_for(alpha), pb = params_for(beta), pab = params_for(alpha + beta);

  // Offsets in [-(n-1), n-1]^N for the left factor.
  const int span = 2 * n - 1;
  auto offset_index = [span, n, N](int di, int dj) {
    const auto i = static_cast<std::size_t>(di + n - 1);
    return N == 1 ? i : i + static_cast<std::size_t>(dj + n - 1) * static_cast<std::size_t>(span);
  };
  std::vector<double> a_cells(N == 1 ? span : static_cast<std::size_t>(span) * span);
  const int jmax = N == 1 ? 0 : n - 1;
  for (int dj = -jmax; dj <= jmax; ++dj) {
    for (int di = -(n - 1); di <= n - 1; ++di) {
      const std::array<double, 2> c{di * h, dj * h};
      a_cells[offset_index(di, dj)] = bessel_cell_average(pa, std::span<const double>(c.data(), N), h);
    }
  }
  const std::size_t nodes = grid.node_count();
  std::vector<double> b_cells(nodes), target(nodes);
  for (std::size_t k = 0; k < nodes; ++k) {
    const Point x = grid.coord(k);
    b_cells[k] = bessel_cell_average(pb, std::span<const double>(x.data(), N), h);
    target[k] = bessel_cell_average(pab, std::span<const double>(x.data(), N), h);
  }
  const double vol = grid.cell_volume();
  CompensatedSum residual;
  for (std::size_t m = 0; m < nodes; ++m) {
    const auto [mi, mj] = grid.index2(m);
    CompensatedSum conv;
    for (std::size_t j = 0; j < nodes; ++j) {
      const auto [ji, jj] = grid.index2(j);
      conv.add(a_cells[offset_index(mi - ji, mj - jj)] * b_cells[j]);
    }
    residual.add(std::abs(vol * conv.value() - target[m]));
  }
  return vol * residual.value();
}

}  // namespace fracpq
