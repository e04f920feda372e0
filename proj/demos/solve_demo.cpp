// Full problem on an interval: relaxed fixed-point iteration with the
// convergence trace printed per outer step.

#include <cstdio>

#include "fracpq/fracpq.hpp"

int main() {
  using namespace fracpq;
  const ProblemExponents e{.s = 0.5, .s1 = 0.6, .s2 = 0.4, .p = 3.0, .q = 2.5, .N = 2};
  SingularReaction f;
  f.c2 = 1.0;
  const ConvectiveReaction g{0.3, 1.5};
  InstanceOptions io;
  io.minimizer.tolerance = 1e-10;
  const auto inst = make_instance(Interval{0.0, 1.0}, 33, e, f, g, io);

  OuterOptions opts;
  opts.tolerance = 1e-9;
  const auto rep = solve_problem(inst, opts, [](const IterationRecord& r) {
    std::printf("k=%3d  step=%.3e  residual=%.3e  [v]=%.6f\n", r.k, r.step_seminorm, r.full_residual, r.v_norm);
  });
  std::printf("%s after %d iterations, residual %.3e, min(u - sub) = %.3e\n",
              rep.converged ? "converged" : "not converged", rep.outer_iterations, rep.full_residual, rep.min_excess);
  return rep.converged ? 0 : 1;
}
