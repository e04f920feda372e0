#include <catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>
#include <numbers>
#include <vector>

#include "fracpq/gagliardo.hpp"
#include "support/generators.hpp"
#include "support/oracles.hpp"

using namespace fracpq;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

// Linearized cell-pair energy in physical coordinates: the kernel times
// (|x - y| / |c_i - c_j|)^p over C_i x C_j, plus half the self-cell term for
// axis neighbours. The double integral is reduced to the difference variable
// z = y - x, whose density is the overlap h - |z - d|.
double pair_weight_oracle_1d(double d, double h, double s, double p, bool neighbour) {
  const double a = p - 1.0 - s * p;
  auto kern = [&](double z) { return z == 0.0 ? 0.0 : std::pow(std::abs(z), a) / std::pow(d, p); };
  auto piece = [&](double lo, double hi, double centre) {
    return oracle::endpoint_singular([&](double z) { return kern(z) * (h - std::abs(z - centre)); }, lo, hi);
  };
  const double cross = piece(d - h, d, d) + piece(d, d + h, d);
  if (!neighbour) return cross;
  const double self = 2.0 * piece(0.0, h, 0.0);
  return cross + 0.5 * self;
}

std::vector<double> smooth_profile(const Grid& g) {
  std::vector<double> u;
  for (std::size_t node : g.interior_nodes()) {
    const auto x = g.coord(node);
    u.push_back(g.dim() == 1 ? std::sin(std::numbers::pi * x[0]) : std::cos(0.5 * std::numbers::pi * std::hypot(x[0], x[1])));
  }
  return u;
}

}  // namespace

TEST_CASE("two-node weight matches adaptive quadrature") {
  for (auto [s, p] : {std::pair{0.5, 2.0}, {0.3, 2.5}, {0.7, 2.5}, {0.9, 3.0}}) {
    const auto g = build_grid(Interval{0.0, 1.0}, 4);
    const auto t = assemble_weights(g, {s, p});
    REQUIRE(t.size() == 2);
    const double h = g.spacing();
    const double ref = pair_weight_oracle_1d(h, h, s, p, true);
    CHECK_THAT(t.weight(0, 1), WithinRel(ref, 1e-6));
  }
  // far pair, no self term
  const auto g = build_grid(Interval{0.0, 1.0}, 9);
  const auto t = assemble_weights(g, {0.6, 3.0});
  const double h = g.spacing();
  CHECK_THAT(t.weight(0, 4), WithinRel(pair_weight_oracle_1d(4 * h, h, 0.6, 3.0, false), 1e-6));
}

TEST_CASE("2D unit weights match nested quadrature") {
  for (auto [s, p] : {std::pair{0.5, 2.0}, {0.9, 3.0}}) {
    const double sp = s * p;
    for (auto k : {std::array<int, 2>{1, 0}, {1, 1}, {2, 1}, {3, 0}}) {
      const double kk = k[0] * k[0] + k[1] * k[1];
      auto f = [&](double z1, double z2) {
        const double x = k[0] + z1, y = k[1] + z2;
        const double r2 = x * x + y * y;
        if (r2 < 1e-100) return 0.0;
        const double proj = std::abs(x * k[0] + y * k[1]) / kk;
        return std::pow(proj, p) * std::pow(r2, -(2.0 + sp) / 2) * (1 - std::abs(z1)) * (1 - std::abs(z2));
      };
      double ref = 0.0;
      for (double a : {-1.0, 0.0}) {
        for (double b : {-1.0, 0.0}) {
          ref += oracle::endpoint_singular(
              [&](double z1) { return oracle::endpoint_singular([&](double z2) { return f(z1, z2); }, b, b + 1); }, a,
              a + 1);
        }
      }
      CHECK_THAT(detail::unit_weight_2d(k[0], k[1], p, sp), WithinRel(ref, 1e-7));
    }
    const double self_ref =
        oracle::endpoint_singular(
            [&](double x) {
              return oracle::endpoint_singular(
                  [&](double y) {
                    const double r2 = x * x + y * y;
                    return r2 < 1e-100 ? 0.0 : std::pow(r2, (p - 2 - sp) / 2) * (1 - x) * (1 - y);
                  },
                  0, 1);
            },
            0, 1);
    CHECK_THAT(detail::self_correction_2d(p, sp), WithinRel(self_ref, 1e-7));
  }
}

TEST_CASE("1D unit weights: series branch continues the direct branch") {
  for (double sp : {0.4, 1.0, 1.7, 2.7}) {
    const double p = 3.0;
    // direct second difference at k = 20 in long double
    const long double a = p - 1.0 - sp, m = a + 2;
    const long double k = 20;
    const long double direct = (std::pow(k + 1, m) - 2 * std::pow(k, m) + std::pow(k - 1, m)) / ((a + 1) * (a + 2)) / std::pow(k, (long double)p);
    CHECK_THAT(detail::unit_weight_1d(20, p, sp), WithinRel(static_cast<double>(direct), 1e-12));
    CHECK_THAT(detail::unit_weight_1d(5000, p, sp), WithinRel(std::pow(5000.0, -1.0 - sp), 1e-6));
  }
}

TEST_CASE("weights are symmetric, positive and deterministic") {
  for (const Domain& d : {Domain{Interval{0, 1}}, Domain{Disk{{0, 0}, 1}}, Domain{Rectangle{0, 1, 0, 1}}}) {
    const auto g = build_grid(d, dimension(d) == 1 ? 33 : 13);
    const auto t = assemble_weights(g, {0.6, 2.5});
    const auto t2 = assemble_weights(g, {0.6, 2.5});
    for (std::size_t a = 0; a < t.size(); ++a) {
      REQUIRE(t.tail(a) > 0.0);
      REQUIRE(t.tail(a) == t2.tail(a));
      for (std::size_t b = 0; b < t.size(); ++b) {
        if (a == b) continue;
        REQUIRE(t.weight(a, b) > 0.0);
        REQUIRE(t.weight(a, b) == t.weight(b, a));
      }
    }
  }
}

TEST_CASE("node cap") {
  const auto g = build_grid(Interval{0, 1}, 40);
  AssemblyOptions opts;
  opts.node_cap = 10;
  CHECK_THROWS_AS(assemble_weights(g, {0.5, 2.0}, opts), MemoryBudgetError);
  CHECK_THROWS_AS(assemble_weights(g, {1.0, 2.0}), DomainError);
  CHECK_THROWS_AS(assemble_weights(g, {0.5, 1.0}), DomainError);
}

TEST_CASE("weight cache round trip") {
  const auto dir = std::filesystem::temp_directory_path() / "fracpq_cache_test";
  std::filesystem::remove_all(dir);
  AssemblyOptions opts;
  opts.cache_dir = dir.string();
  const auto g = build_grid(Disk{{0, 0}, 1}, 11);
  const auto built = assemble_weights(g, {0.7, 2.5}, opts);
  REQUIRE(std::filesystem::exists(weight_cache_path(opts.cache_dir, g, {0.7, 2.5})));
  const auto loaded = assemble_weights(g, {0.7, 2.5}, opts);
  CHECK(loaded.lattice_total() == built.lattice_total());
  for (std::size_t a = 0; a < built.size(); ++a) {
    CHECK(loaded.tail(a) == built.tail(a));
    for (std::size_t b = 0; b < built.size(); ++b) CHECK(loaded.weight(a, b) == built.weight(a, b));
  }
  // another key misses the cache
  CHECK(weight_cache_path(opts.cache_dir, g, {0.7, 2.6}) != weight_cache_path(opts.cache_dir, g, {0.7, 2.5}));
  std::filesystem::remove_all(dir);
}

TEST_CASE("seminorm refinement") {
  for (auto [s, p] : {std::pair{0.5, 2.0}, {0.7, 2.5}, {0.9, 3.0}}) {
    const auto coarse = build_grid(Interval{0, 1}, 65), fine = build_grid(Interval{0, 1}, 129);
    const double a = seminorm(smooth_profile(coarse), assemble_weights(coarse, {s, p}));
    const double b = seminorm(smooth_profile(fine), assemble_weights(fine, {s, p}));
    CHECK(std::abs(a / b - 1.0) < 0.05);
  }
  const auto coarse = build_grid(Disk{{0, 0}, 1}, 17), fine = build_grid(Disk{{0, 0}, 1}, 33);
  const double a = seminorm(smooth_profile(coarse), assemble_weights(coarse, {0.6, 2.5}));
  const double b = seminorm(smooth_profile(fine), assemble_weights(fine, {0.6, 2.5}));
  CHECK(std::abs(a / b - 1.0) < 0.05);
}

TEST_CASE("three-node seminorm by hand") {
  const double s = 0.5, p = 2.5, sp = s * p, a = p - 1 - sp;
  const auto g = build_grid(Interval{0, 1}, 5);
  const auto t = assemble_weights(g, {s, p});
  const double h = g.spacing();
  auto G = [&](double x) { return std::pow(std::abs(x), a + 2) / ((a + 1) * (a + 2)); };
  auto w = [&](int k) { return (G(k + 1) - 2 * G(k) + G(k - 1)) / std::pow(k, p); };
  const double scale = std::pow(h, 1 - sp);
  const double w1 = scale * (w(1) + G(1));
  const double w2 = scale * w(2);
  CHECK_THAT(t.weight(0, 1), WithinRel(w1, 1e-12));
  CHECK_THAT(t.weight(0, 2), WithinRel(w2, 1e-12));
  const std::vector<double> u{0.0, 1.0, 0.0};
  // pairs (1,2), (2,3) jump by 1; node 2 also pays its exterior tail
  const double expected = 2.0 * (w1 + w1) + 2.0 * t.tail(1);
  CHECK_THAT(seminorm_pow(u, t), WithinRel(expected, 1e-12));
  CHECK_THAT(seminorm(u, t), WithinRel(std::pow(expected, 1 / p), 1e-12));
}

TEST_CASE("algebraic identities") {
  const auto g = build_grid(Interval{0, 1}, 33);
  Rng rng(21);
  for (auto [s, p] : {std::pair{0.5, 2.0}, {0.7, 2.5}, {0.9, 3.0}}) {
    const auto t = assemble_weights(g, {s, p});
    const std::vector<double> zero(t.size(), 0.0);
    CHECK(seminorm(zero, t) == 0.0);
    CHECK(energy(zero, t) == 0.0);
    for (int trial = 0; trial < 20; ++trial) {
      const auto u = gen::uniform_vector(rng, t.size(), -1, 1);
      const auto phi = gen::uniform_vector(rng, t.size(), -1, 1);
      const double lambda = rng.uniform(0.1, 5.0);
      std::vector<double> lu(u);
      for (auto& x : lu) x *= lambda;
      CHECK_THAT(seminorm(lu, t), WithinRel(lambda * seminorm(u, t), 1e-12));
      CHECK_THAT(energy(lu, t), WithinRel(std::pow(lambda, p) * energy(u, t), 1e-12));
      CHECK_THAT(p * energy(u, t), WithinRel(std::pow(seminorm(u, t), p), 1e-12));
      CHECK_THAT(apply_form(u, u, t), WithinRel(p * energy(u, t), 1e-12));
      CHECK(apply_form(zero, phi, t) == 0.0);
      const auto G = operator_gradient(u, t);
      const auto lG = operator_gradient(lu, t);
      double dot = 0.0;
      for (std::size_t i = 0; i < G.size(); ++i) {
        dot += G[i] * phi[i];
        REQUIRE_THAT(lG[i], WithinRel(std::pow(lambda, p - 1) * G[i], 1e-11));
      }
      CHECK_THAT(dot, WithinRel(apply_form(u, phi, t), 1e-11));
    }
  }
}

TEST_CASE("monotonicity, bounded growth and convexity on random pairs") {
  const auto g = build_grid(Interval{0, 1}, 33);
  Rng rng(33);
  for (auto [s, p] : {std::pair{0.5, 2.0}, {0.7, 2.5}, {0.9, 3.0}}) {
    const auto t = assemble_weights(g, {s, p});
    for (int trial = 0; trial < 100; ++trial) {
      const auto u = gen::uniform_vector(rng, t.size(), -1, 1);
      const auto w = gen::uniform_vector(rng, t.size(), -1, 1);
      std::vector<double> diff(u.size());
      for (std::size_t i = 0; i < u.size(); ++i) diff[i] = u[i] - w[i];
      REQUIRE(apply_form(u, diff, t) - apply_form(w, diff, t) >= -1e-10);
      REQUIRE(std::abs(apply_form(u, w, t)) <= std::pow(seminorm(u, t), p - 1) * seminorm(w, t) + 1e-8);
      const double tt = rng.uniform();
      std::vector<double> mid(u.size());
      for (std::size_t i = 0; i < u.size(); ++i) mid[i] = (1 - tt) * u[i] + tt * w[i];
      REQUIRE(energy(mid, t) <= (1 - tt) * energy(u, t) + tt * energy(w, t) + 1e-10);
    }
  }
}

TEST_CASE("gradient matches central differences") {
  Rng rng(44);
  for (double p : {2.0, 2.5, 3.0}) {
    for (const Domain& d : {Domain{Interval{0, 1}}, Domain{Disk{{0, 0}, 1}}}) {
      const auto g = build_grid(d, dimension(d) == 1 ? 17 : 9);
      const auto t = assemble_weights(g, {0.6, p});
      for (int trial = 0; trial < 20; ++trial) {
        auto u = gen::uniform_vector(rng, t.size(), -1, 1);
        const auto G = operator_gradient(u, t);
        const double eps = 1e-6;
        std::vector<double> fd(u.size());
        for (std::size_t i = 0; i < u.size(); ++i) {
          const double keep = u[i];
          u[i] = keep + eps;
          const double up = energy(u, t);
          u[i] = keep - eps;
          const double down = energy(u, t);
          u[i] = keep;
          fd[i] = (up - down) / (2 * eps);
        }
        double err = 0.0;
        for (std::size_t i = 0; i < u.size(); ++i) err = std::max(err, std::abs(fd[i] - G[i]));
        REQUIRE(err / max_abs(G) < 1e-5);
      }
    }
  }
}

TEST_CASE("hessian matches differences of the gradient") {
  const auto g = build_grid(Interval{0, 1}, 17);
  Rng rng(45);
  for (double p : {2.0, 2.5, 3.0}) {
    const auto t = assemble_weights(g, {0.6, p});
    auto u = gen::uniform_vector(rng, t.size(), -1, 1);
    const auto H = operator_hessian(u, t);
    const double eps = 1e-6;
    double err = 0.0;
    for (std::size_t j = 0; j < u.size(); ++j) {
      const double keep = u[j];
      u[j] = keep + eps;
      const auto up = operator_gradient(u, t);
      u[j] = keep - eps;
      const auto down = operator_gradient(u, t);
      u[j] = keep;
      for (std::size_t i = 0; i < u.size(); ++i) {
        err = std::max(err, std::abs((up[i] - down[i]) / (2 * eps) - H(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j))));
      }
    }
    CHECK(err / H.cwiseAbs().maxCoeff() < 1e-5);
  }
}

TEST_CASE("hidden convexity") {
  const auto g = build_grid(Interval{0, 1}, 17);
  Rng rng(55);
  for (double q : {2.5, 3.0}) {
    for (double p : {3.0, 3.4}) {
      if (q > p) continue;
      const auto t = assemble_weights(g, {0.6, p});
      for (int trial = 0; trial < 100; ++trial) {
        const auto u1 = gen::nonnegative_vector(rng, t.size(), 3.0);
        const auto u2 = gen::nonnegative_vector(rng, t.size(), 3.0);
        const double tt = rng.uniform(0.01, 0.99);
        REQUIRE(hidden_convexity_violation(u1, u2, tt, q, p) <= 1e-12);
        std::vector<double> mid(u1.size());
        for (std::size_t i = 0; i < mid.size(); ++i) mid[i] = (1 - tt) * u1[i] + tt * u2[i];
        REQUIRE(hat_energy(mid, t, q) <= (1 - tt) * hat_energy(u1, t, q) + tt * hat_energy(u2, t, q) + 1e-12);
      }
    }
  }
  const std::vector<double> neg{-1.0, 1.0};
  CHECK(std::isinf(hat_energy(neg, assemble_weights(build_grid(Interval{0, 1}, 4), {0.5, 3.0}), 2.5)));
}
