// Builds the torsion sub-solution on the unit disk and prints its profile
// along the x axis next to the Hopf lower bound eta d^alpha.

#include <cmath>
#include <cstdio>
#include <limits>

#include "fracpq/fracpq.hpp"

int main() {
  using namespace fracpq;
  const ProblemExponents e{.s = 0.5, .s1 = 0.6, .s2 = 0.4, .p = 3.0, .q = 2.5, .N = 2};
  const SingularReaction f;  // c1 t^-gamma + c2 t^r
  const auto grid = build_grid(Disk{{0.0, 0.0}, 1.0}, 21);
  const auto tables = build_tables(grid, e);
  const auto cert = select_sigma(f, e, tables, default_epsilon(f));

  std::printf("sigma=%g  sup=%g  delta=%g  eta=%g  alpha=%g\n", cert.sigma, cert.sup_norm, cert.delta, cert.eta,
              cert.exponent);
  const auto d = distance_field(grid);
  const int mid = grid.resolution() / 2;
  std::printf("%8s %14s %14s\n", "x", "u", "eta*d^alpha");
  for (int i = 0; i < grid.resolution(); ++i) {
    const auto node = grid.node_at(i, mid);
    if (!grid.is_interior(node)) continue;
    std::printf("%8.3f %14.6e %14.6e\n", grid.coord(node)[0], cert.u[node],
                cert.eta * std::pow(d[node], cert.exponent));
  }
  return 0;
}
