#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "fracpq/error.hpp"
#include "fracpq/frozen.hpp"
#include "fracpq/riesz_gradient.hpp"
#include "fracpq/torsion.hpp"

namespace fracpq {

/// Everything the outer iteration needs: data, operator tables, the
/// convolution plan for D^s and the certified sub-solution.
struct Instance {
  Grid grid;
  ProblemExponents exponents;
  SingularReaction reaction;
  ConvectiveReaction convection;
  std::shared_ptr<const ProblemTables> tables;
  std::shared_ptr<const ConvolutionPlan> plan;
  std::shared_ptr<const SubsolutionCertificate> certificate;
  MinimizerOptions minimizer;

  const ScalarField& subsolution() const { return certificate->u; }
  TruncatedReaction truncation() const { return TruncatedReaction(reaction, certificate->u); }
};

struct InstanceOptions {
  AssemblyOptions assembly;
  MinimizerOptions minimizer;
  /// Threshold for the sub-solution search; default_epsilon when unset.
  std::optional<double> epsilon;
  int padding_factor = 2;
};

inline Instance make_instance(const Domain& domain, int resolution, const ProblemExponents& e,
                              const SingularReaction& f, const ConvectiveReaction& g, const InstanceOptions& opts = {}) {
  f.weight.validate();
  Instance inst;
  inst.grid = build_grid(domain, resolution);
  inst.exponents = e;
  inst.reaction = f;
  inst.convection = g;
  inst.minimizer = opts.minimizer;
  inst.tables = build_tables(inst.grid, e, opts.assembly);
  inst.plan = std::make_shared<const ConvolutionPlan>(inst.grid, e.s, opts.padding_factor);
  inst.certificate = std::make_shared<const SubsolutionCertificate>(
      select_sigma(f, e, inst.tables, opts.epsilon.value_or(default_epsilon(f)), opts.minimizer));
  return inst;
}

/// Frozen problem (P_v) of an instance.
inline FrozenProblem frozen_problem(const ScalarField& v, const Instance& inst) {
  return make_frozen_problem(inst.tables, inst.truncation(), inst.convection, riesz_gradient(v, *inst.plan));
}

/// T(v) = u_v. The frozen solve starts from `start` (u̲ when null).
inline FrozenSolution apply_T_report(const ScalarField& v, const Instance& inst, const ScalarField* start = nullptr) {
  return solve_frozen(frozen_problem(v, inst), inst.minimizer, start);
}

inline ScalarField apply_T(const ScalarField& v, const Instance& inst) {
  auto res = apply_T_report(v, inst);
  if (!res.converged) throw ConvergenceError("frozen solve failed inside T: " + res.message);
  return std::move(res.u);
}

/// (1 - theta) v + theta Tv
inline ScalarField relaxed_update(const ScalarField& v, const ScalarField& tv, double theta) {
  return combine(1.0 - theta, v, theta, tv);
}

/// Scaled residual of the full weak form, convection evaluated at D^s u.
/// The reaction is read through its truncation at u̲, which coincides with f
/// wherever u >= u̲.
inline double verify_solution(const ScalarField& u, const Instance& inst) {
  return weak_residual(u, frozen_problem(u, inst));
}

inline double s1p_seminorm(const ScalarField& u, const Instance& inst) { return seminorm(u, inst.tables->first); }

// ---------------------------------------------------------------------------
// Invariant-ball monitor

struct BallFit {
  double constant = 0.0;  // empirical C with [Tv]^p <= C (1 + [v]^{zeta p'})
  double radius = 0.0;    // first rho with C (1 + rho^{zeta p'}) <= rho^p
  int samples = 0;
};

/// Smallest rho > 0 with C (1 + rho^a) <= rho^p, for a < p.
inline double ball_radius(double constant, double a, double p) {
  if (!(constant > 0.0) || !(a < p)) throw DomainError("ball radius needs C > 0 and zeta p' < p");
  auto gap = [&](double rho) { return std::pow(rho, p) - constant * (1.0 + std::pow(rho, a)); };
  double lo = 0.0, hi = 1.0;
  while (gap(hi) < 0.0) {
    lo = hi;
    hi *= 2.0;
    if (hi > 1e300) throw InvariantError("ball radius search overflowed");
  }
  for (int k = 0; k < 200 && hi - lo > 1e-14 * hi; ++k) {
    const double mid = 0.5 * (lo + hi);
    (gap(mid) < 0.0 ? lo : hi) = mid;
  }
  return hi;
}

/// Fits the growth constant of T over u̲ and `samples` random positive fields
/// a d^{s1} (1 + noise) with amplitudes spread over two decades.
inline BallFit fit_ball(const Instance& inst, int samples, std::uint64_t seed) {
  const auto& e = inst.exponents;
  const double a = inst.convection.zeta * e.p_conj();
  const auto d = distance_field(inst.grid);
  double scale = lp_norm(inst.subsolution(), std::numeric_limits<double>::infinity());
  Rng rng(seed);
  BallFit fit;
  auto sample = [&](const ScalarField& v) {
    const auto tv = apply_T(v, inst);
    const double ratio = std::pow(s1p_seminorm(tv, inst), e.p) / (1.0 + std::pow(s1p_seminorm(v, inst), a));
    fit.constant = std::max(fit.constant, ratio);
    ++fit.samples;
  };
  sample(inst.subsolution());
  for (int k = 0; k < samples; ++k) {
    const double amp = scale * std::pow(10.0, rng.uniform(-1.0, 1.0));
    std::vector<double> v(inst.grid.node_count(), 0.0);
    for (std::size_t node : inst.grid.interior_nodes()) {
      v[node] = amp * std::pow(d[node], e.s1) * (1.0 + 0.5 * rng.uniform());
    }
    sample(ScalarField(inst.grid, std::move(v)));
  }
  fit.radius = ball_radius(fit.constant, a, e.p);
  return fit;
}

// ---------------------------------------------------------------------------

struct OuterOptions {
  double theta = 0.5;
  double min_theta = 1.0 / 16.0;
  /// Consecutive step increases that trigger halving theta.
  int patience = 3;
  double tolerance = 1e-8;
  int max_iterations = 200;
  bool ball_monitor = true;
  int ball_samples = 20;
  std::uint64_t seed = 1;
  /// The convection-free problem makes T constant; iterate undamped.
  bool undamped_when_decoupled = true;

  void validate() const {
    if (!(theta > 0.0 && theta <= 1.0)) throw DomainError("relaxation theta must lie in (0, 1]");
    if (!(min_theta > 0.0 && min_theta <= theta)) throw DomainError("min_theta must lie in (0, theta]");
    if (!(tolerance > 0.0)) throw DomainError("outer tolerance must be positive");
    if (max_iterations < 1) throw DomainError("max outer iterations must be positive");
    if (patience < 1) throw DomainError("patience must be positive");
  }
};

struct IterationRecord {
  int k = 0;
  double step_seminorm = 0.0;
  double frozen_residual = 0.0;
  double full_residual = 0.0;
  double v_norm = 0.0;
  double theta = 0.0;
  int inner_iterations = 0;
};

struct SolveReport {
  ScalarField u;
  bool converged = false;
  int outer_iterations = 0;
  std::vector<IterationRecord> history;
  double full_residual = 0.0;
  /// min over interior nodes of u / d^exponent, exponent from the certificate.
  double hopf_ratio = 0.0;
  double min_excess = 0.0;  // min(u - u̲)
  double min_value = 0.0;
  double sigma = 0.0;
  double eta = 0.0;
  double exponent = 0.0;
  std::optional<BallFit> ball;
  double final_theta = 0.0;
  std::vector<std::string> log;
  std::string message;
};

using OuterCallback = std::function<void(const IterationRecord&)>;

/// Relaxed Picard iteration v_{k+1} = (1 - theta) v_k + theta T(v_k), v_0 = u̲.
inline SolveReport solve_problem(const Instance& inst, const OuterOptions& opts, const OuterCallback& on_iter = {}) {
  opts.validate();
  SolveReport rep{.u = inst.subsolution()};
  const auto& cert = *inst.certificate;
  rep.sigma = cert.sigma;
  rep.eta = cert.eta;
  rep.exponent = cert.exponent;
  auto note = [&rep](const std::string& line) { rep.log.push_back(line); };
  auto num = [](double v) {
    std::ostringstream os;
    os.precision(6);
    os << v;
    return os.str();
  };

  double theta = opts.theta;
  if (inst.convection.c3 == 0.0 && opts.undamped_when_decoupled && theta != 1.0) {
    theta = 1.0;
    note("c3 = 0: T is constant, theta set to 1");
  }
  if (opts.ball_monitor) {
    rep.ball = fit_ball(inst, opts.ball_samples, opts.seed);
    note("ball monitor: C=" + num(rep.ball->constant) + " rho=" + num(rep.ball->radius));
  }

  ScalarField v = inst.subsolution();
  ScalarField tv = v;
  double prev_step = std::numeric_limits<double>::infinity();
  int increases = 0;
  for (int k = 1; k <= opts.max_iterations; ++k) {
    // warm start from the previous image
    auto frozen = apply_T_report(v, inst, k == 1 ? nullptr : &tv);
    if (!frozen.converged) {
      rep.message = "frozen solve failed at outer iteration " + std::to_string(k) + ": " + frozen.message;
      break;
    }
    tv = std::move(frozen.u);
    ScalarField next = relaxed_update(v, tv, theta);
    IterationRecord rec;
    rec.k = k;
    rec.theta = theta;
    rec.step_seminorm = s1p_seminorm(combine(1.0, next, -1.0, v), inst);
    rec.frozen_residual = frozen.residual;
    rec.full_residual = verify_solution(next, inst);
    rec.v_norm = s1p_seminorm(next, inst);
    rec.inner_iterations = frozen.iterations;
    if (!std::isfinite(rec.step_seminorm) || !std::isfinite(rec.full_residual)) {
      throw InvariantError("non-finite value in the outer iteration");
    }
    rep.history.push_back(rec);
    rep.outer_iterations = k;
    v = std::move(next);
    if (on_iter) on_iter(rec);

    if (rep.ball && rec.v_norm > rep.ball->radius) {
      throw InvariantError("ball monitor: [v_" + std::to_string(k) + "]=" + num(rec.v_norm) +
                           " left the invariant ball rho=" + num(rep.ball->radius));
    }
    if (rec.step_seminorm < opts.tolerance) {
      rep.converged = true;
      break;
    }
    increases = rec.step_seminorm > prev_step ? increases + 1 : 0;
    prev_step = rec.step_seminorm;
    if (increases >= opts.patience && theta > opts.min_theta) {
      theta = std::max(opts.min_theta, 0.5 * theta);
      increases = 0;
      note("outer iteration " + std::to_string(k) + ": step grew " + std::to_string(opts.patience) +
           " times, theta -> " + num(theta));
    }
  }
  if (!rep.converged && rep.message.empty()) rep.message = "outer iteration limit reached";

  rep.final_theta = theta;
  rep.u = v;
  rep.full_residual = verify_solution(v, inst);
  const auto d = distance_field(inst.grid);
  rep.min_excess = std::numeric_limits<double>::infinity();
  rep.min_value = std::numeric_limits<double>::infinity();
  rep.hopf_ratio = std::numeric_limits<double>::infinity();
  for (std::size_t node : inst.grid.interior_nodes()) {
    rep.min_excess = std::min(rep.min_excess, v[node] - cert.u[node]);
    rep.min_value = std::min(rep.min_value, v[node]);
    rep.hopf_ratio = std::min(rep.hopf_ratio, v[node] / std::pow(d[node], cert.exponent));
  }
  return rep;
}

}  // namespace fracpq
