#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "fracpq/error.hpp"
#include "fracpq/frozen.hpp"
#include "fracpq/reaction.hpp"

namespace fracpq {

struct SubsolutionCertificate {
  ScalarField u;
  double sigma = 0.0;
  double eta = 0.0;
  /// Exponent of d in the lower bound eta d^exponent <= u.
  double exponent = 0.0;
  double sup_norm = 0.0;
  double epsilon = 0.0;
  double delta = 0.0;
  int halvings = 0;
};

/// Relative accuracy of torsion solves, measured against the forcing size.
inline constexpr double kTorsionRelativeTolerance = 1e-9;

/// Minimizer of Phi_{s1,p} + Phi_{s2,q} - sigma * integral(u), started from
/// the best multiple of d^{s1}.
inline FrozenSolution solve_torsion_report(double sigma, const ProblemExponents& e,
                                           std::shared_ptr<const ProblemTables> tables, MinimizerOptions opts) {
  if (!(sigma > 0.0) || !std::isfinite(sigma)) throw DomainError("torsion forcing sigma must be positive");
  const Grid& g = tables->grid();
  const auto prob = make_torsion_problem(tables, sigma);
  const auto d = distance_field(g);
  std::vector<double> phi;
  for (std::size_t node : g.interior_nodes()) phi.push_back(std::pow(d[node], e.s1));

  // lambda solving p l^{p-1} E1 + q l^{q-1} E2 = sigma h^N sum(phi)
  const double e1 = energy(phi, tables->first), e2 = energy(phi, tables->second);
  const double rhs = sigma * g.cell_volume() * compensated_sum(phi);
  auto slope = [&](double l) { return e.p * std::pow(l, e.p - 1.0) * e1 + e.q * std::pow(l, e.q - 1.0) * e2 - rhs; };
  double lo = 1e-300, hi = 1.0;
  while (slope(hi) < 0.0 && hi < 1e300) hi *= 2.0;
  for (int k = 0; k < 200; ++k) {
    const double mid = std::sqrt(lo * hi);
    (slope(mid) < 0.0 ? lo : hi) = mid;
  }
  for (auto& v : phi) v *= hi;

  opts.tolerance = std::min(opts.tolerance, kTorsionRelativeTolerance * sigma * g.cell_volume());
  const auto start = ScalarField::from_interior(g, phi);
  return solve_frozen(prob, opts, &start);
}

inline ScalarField solve_torsion(double sigma, const ProblemExponents& e, std::shared_ptr<const ProblemTables> tables,
                                 const MinimizerOptions& opts = {}) {
  auto res = solve_torsion_report(sigma, e, std::move(tables), opts);
  if (!res.converged) {
    throw ConvergenceError("torsion solve did not converge (sigma=" + std::to_string(sigma) + "): " + res.message);
  }
  for (std::size_t node : res.u.grid().interior_nodes()) {
    if (!(res.u[node] > 0.0)) throw InvariantError("torsion solution is not positive in the domain");
  }
  return res.u;
}

/// Exponent of the Hopf-type bound: s1, or a value above s1 avoiding q' s2
/// and p' s1 when q' s2 = s1.
inline double hopf_exponent(const ProblemExponents& e) {
  const double qs2 = e.q_conj() * e.s2;
  if (std::abs(qs2 - e.s1) > 1e-12) return e.s1;
  double alpha = e.s1 + std::min(0.05, (1.0 - e.s1) / 2.0);
  auto collides = [&](double a) {
    return std::abs(a - qs2) < 1e-12 || std::abs(a - e.p_conj() * e.s1) < 1e-12;
  };
  while (collides(alpha)) alpha += 0.011;
  return alpha;
}

/// min over interior nodes of u / d^exponent.
inline double hopf_ratio(const ScalarField& u, const ScalarField& d, double exponent) {
  const Grid& g = u.grid();
  double eta = std::numeric_limits<double>::infinity();
  for (std::size_t node : g.interior_nodes()) {
    if (!(u[node] > 0.0)) throw InvariantError("Hopf ratio needs a positive field");
    eta = std::min(eta, u[node] / std::pow(d[node], exponent));
  }
  return eta;
}

/// Default epsilon: 1 when f blows up at 0, half the infimum of the weighted
/// limit otherwise.
inline double default_epsilon(const SingularReaction& f) {
  return f.family == ReactionFamily::singular ? 1.0 : 0.5 * f.c1 * f.weight.minimum();
}

/// Largest delta <= 1 with f(x, t) > epsilon for every x and t in (0, delta).
inline double threshold_delta(const SingularReaction& f, double epsilon) {
  const double L = f.c1 * f.weight.minimum();
  if (f.family == ReactionFamily::singular) return std::min(1.0, std::pow(L / epsilon, 1.0 / f.gamma));
  if (!(epsilon < L)) throw DomainError("epsilon must lie below the limit of f at zero");
  return std::min(1.0, std::pow(L / epsilon, 1.0 / f.gamma) - 1.0);
}

/// Halves sigma from epsilon/2 until the torsion solution stays below delta.
inline SubsolutionCertificate select_sigma(const SingularReaction& f, const ProblemExponents& e,
                                           std::shared_ptr<const ProblemTables> tables, double epsilon,
                                           const MinimizerOptions& opts = {}) {
  if (!(epsilon > 0.0)) throw DomainError("epsilon must be positive");
  const double delta = threshold_delta(f, epsilon);
  const Grid& g = tables->grid();
  double sigma = 0.5 * epsilon;
  for (int halvings = 0; halvings <= 60; ++halvings, sigma *= 0.5) {
    auto u = solve_torsion(sigma, e, tables, opts);
    const double sup = lp_norm(u, std::numeric_limits<double>::infinity());
    if (!(sup < delta)) continue;
    for (std::size_t node : g.interior_nodes()) {
      if (!(sigma < f_eval(f, g.coord(node), u[node]))) {
        throw InvariantError("sub-solution inequality sigma < f(x, u) fails at a node");
      }
    }
    const double exponent = hopf_exponent(e);
    const double eta = hopf_ratio(u, distance_field(g), exponent);
    return SubsolutionCertificate{.u = std::move(u),
                                  .sigma = sigma,
                                  .eta = eta,
                                  .exponent = exponent,
                                  .sup_norm = sup,
                                  .epsilon = epsilon,
                                  .delta = delta,
                                  .halvings = halvings};
  }
  throw ConvergenceError("no sigma below epsilon/2 gave a torsion solution under delta after 60 halvings");
}

}  // namespace fracpq
