// Acceptance run: one PASS/FAIL line per criterion.
//
//   acceptance <source-dir> [fracsolve-binary]

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <limits>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <sys/wait.h>
#include <vector>

#include "fracpq/fracpq.hpp"
#include "support/generators.hpp"
#include "support/problem_oracles.hpp"

using namespace fracpq;
namespace fs = std::filesystem;

namespace {

fs::path g_source;
fs::path g_fracsolve;

struct Check {
  bool ok = true;
  std::vector<std::string> notes;

  void expect(bool cond, const std::string& what) {
    if (!cond) {
      ok = false;
      notes.push_back("FAILED " + what);
    }
  }
  void note(const std::string& s) { notes.push_back(s); }
};

std::string sci(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

double rel(double a, double b) { return std::abs(a - b) / std::abs(b); }

fs::path config(const std::string& name) { return g_source / "configs" / name; }

const std::vector<std::string>& shipped_configs() {
  static const std::vector<std::string> names = {"example_1d.json", "example_2d.json", "c3_zero_1d.json",
                                                 "bounded_1d.json", "superlinear_1d.json"};
  return names;
}

Instance instance_from(const RunConfig& cfg) {
  return make_instance(cfg.domain, cfg.resolution, cfg.exponents, cfg.reaction, cfg.convection,
                       cfg.instance_options());
}

// ---------------------------------------------------------------------------

void ac1(Check& c) {
  // log-Gamma oracle
  auto lg = [](int N, double a) {
    return std::exp(std::lgamma(0.5 * (N - a)) - std::lgamma(0.5 * a) - 0.5 * N * std::log(std::numbers::pi) -
                    a * std::log(2.0));
  };
  const double g1 = riesz_normalization(1, 0.5), g2 = riesz_normalization(2, 1.0);
  c.expect(rel(g1, 1.0 / std::sqrt(2.0 * std::numbers::pi)) < 1e-12, "gamma(1,0.5) = 1/sqrt(2 pi)");
  c.expect(rel(g2, 1.0 / (2.0 * std::numbers::pi)) < 1e-12, "gamma(2,1) = 1/(2 pi)");
  c.expect(rel(g1, lg(1, 0.5)) < 1e-12 && rel(g2, lg(2, 1.0)) < 1e-12, "agreement with log-Gamma");
  c.note("gamma(1,0.5) relerr=" + sci(rel(g1, lg(1, 0.5))));

  const auto line = build_grid(Interval{-40.0, 40.0}, 801);
  for (double alpha : {0.5, 1.0, 2.0}) {
    double mass = 0.0;
    for (std::size_t k = 0; k < line.node_count(); ++k) {
      const std::vector<double> x{line.coord(k)[0]};
      mass += bessel_cell_average({1, alpha}, x, line.spacing()) * line.spacing();
    }
    c.expect(mass >= 0.99 && mass <= 1.01, "||g_" + sci(alpha) + "||_1 in [0.99,1.01] (got " + sci(mass) + ")");
  }
  const auto plane = build_grid(Rectangle{-20, 20, -20, 20}, 81);
  double mass = 0.0;
  for (std::size_t k = 0; k < plane.node_count(); ++k) {
    const auto x = plane.coord(k);
    const std::vector<double> xv{x[0], x[1]};
    mass += bessel_cell_average({2, 1.5}, xv, plane.spacing()) * plane.cell_volume();
  }
  c.expect(mass >= 0.99 && mass <= 1.01, "2D ||g_1.5||_1 in [0.99,1.01] (got " + sci(mass) + ")");

  const double sg = semigroup_residual(1.0, 1.0, build_grid(Interval{-12.0, 12.0}, 257));
  c.expect(sg < 1e-3, "semigroup residual < 1e-3 (got " + sci(sg) + ")");
  c.note("semigroup=" + sci(sg));
}

void ac2(Check& c) {
  const auto g = build_grid(Interval{0, 1}, 129);
  Rng rng(2024);
  double worst_mono = 0.0, worst_grad = 0.0, worst_form = 0.0;
  for (auto [s, p] : {std::pair{0.5, 2.0}, {0.7, 2.5}, {0.9, 3.0}}) {
    const auto t = assemble_weights(g, {s, p});
    for (int k = 0; k < 100; ++k) {
      const auto u = gen::uniform_vector(rng, t.size(), -1, 1);
      const auto w = gen::uniform_vector(rng, t.size(), -1, 1);
      std::vector<double> d(u.size());
      for (std::size_t i = 0; i < u.size(); ++i) d[i] = u[i] - w[i];
      worst_mono = std::min(worst_mono, apply_form(u, d, t) - apply_form(w, d, t));
      worst_form = std::max(worst_form, rel(apply_form(u, u, t), p * energy(u, t)));
    }
    for (int k = 0; k < 20; ++k) {
      auto u = gen::uniform_vector(rng, t.size(), -1, 1);
      const auto G = operator_gradient(u, t);
      double err = 0.0;
      for (std::size_t i = 0; i < u.size(); ++i) {
        const double keep = u[i], eps = 1e-6;
        u[i] = keep + eps;
        const double up = energy(u, t);
        u[i] = keep - eps;
        const double dn = energy(u, t);
        u[i] = keep;
        err = std::max(err, std::abs((up - dn) / (2 * eps) - G[i]));
      }
      worst_grad = std::max(worst_grad, err / max_abs(G));
    }
  }
  c.expect(worst_mono >= -1e-10, "monotonicity >= -1e-10 (min " + sci(worst_mono) + ")");
  c.expect(worst_grad < 1e-5, "gradient vs central differences < 1e-5 (max " + sci(worst_grad) + ")");
  c.expect(worst_form <= 1e-12, "apply_form(u,u) = p energy(u) to 1e-12 (max " + sci(worst_form) + ")");
  c.note("mono=" + sci(worst_mono) + " grad=" + sci(worst_grad) + " form=" + sci(worst_form));
}

void ac3(Check& c) {
  const auto g = build_grid(Interval{0, 1}, 17);
  Rng rng(303);
  double worst = -std::numeric_limits<double>::infinity(), worst_hat = worst;
  int triples = 0;
  for (double q : {2.5, 3.0}) {
    for (double p : {3.0, 3.4}) {
      const auto t = assemble_weights(g, {0.6, p});
      for (int k = 0; k < 1000; ++k, ++triples) {
        const auto u1 = gen::nonnegative_vector(rng, t.size(), 3.0);
        const auto u2 = gen::nonnegative_vector(rng, t.size(), 3.0);
        const double tt = rng.uniform(0.01, 0.99);
        worst = std::max(worst, hidden_convexity_violation(u1, u2, tt, q, p));
        std::vector<double> mid(u1.size());
        for (std::size_t i = 0; i < mid.size(); ++i) mid[i] = (1 - tt) * u1[i] + tt * u2[i];
        worst_hat = std::max(worst_hat, hat_energy(mid, t, q) - (1 - tt) * hat_energy(u1, t, q) -
                                            tt * hat_energy(u2, t, q));
      }
    }
  }
  c.expect(worst <= 1e-12, "pointwise hidden convexity margin <= 1e-12 (max " + sci(worst) + ")");
  c.expect(worst_hat <= 1e-12, "hat-energy convexity (max " + sci(worst_hat) + ")");
  c.note(std::to_string(triples) + " triples, pointwise=" + sci(worst) + " hat=" + sci(worst_hat));
}

void ac4(Check& c) {
  const auto g = build_grid(Rectangle{-2, 2, -2, 2}, 129);
  auto bump = [](const Point& x) { return std::exp(-8.0 * (x[0] * x[0] + x[1] * x[1])); };
  const auto u = ScalarField::from_function(g, bump);
  std::vector<double> errs;
  std::string trace;
  for (double s : {0.6, 0.8, 0.9, 0.95, 0.99}) {
    const auto D = riesz_gradient(u, ConvolutionPlan(g, s));
    double num = 0.0, den = 0.0;
    for (std::size_t node : g.interior_nodes()) {
      const auto x = g.coord(node);
      const double gx = -16.0 * x[0] * bump(x), gy = -16.0 * x[1] * bump(x);
      num += std::pow(D.at(node, 0) - gx, 2) + std::pow(D.at(node, 1) - gy, 2);
      den += gx * gx + gy * gy;
    }
    errs.push_back(std::sqrt(num / den));
    trace += " " + sci(errs.back());
  }
  for (std::size_t k = 1; k < errs.size(); ++k) c.expect(errs[k] < errs[k - 1], "error decreasing in s");
  c.expect(errs.back() < 0.05, "relative L2 error < 5% at s=0.99");
  c.note("errors:" + trace);
}

void ac5(Check& c) {
  for (const char* name : {"example_1d.json", "example_2d.json"}) {
    const auto cfg = load_config(config(name));
    const auto inst = instance_from(cfg);
    const auto& cert = *inst.certificate;
    const auto& g = inst.grid;
    c.expect(cert.sup_norm < cert.delta, std::string(name) + ": sup < delta");
    c.expect(f_base(cfg.reaction, cert.sup_norm) > cert.sigma, std::string(name) + ": f(sup) > sigma");

    // sigma sweep
    double prev = 0.0;
    bool monotone = true;
    for (double sigma : {1e-3, 1e-2, 1e-1, 0.5, 1.0}) {
      const double sup = lp_norm(solve_torsion(sigma, cfg.exponents, inst.tables, cfg.minimizer),
                                 std::numeric_limits<double>::infinity());
      monotone = monotone && sup > prev;
      prev = sup;
    }
    c.expect(monotone, std::string(name) + ": sup norm monotone in sigma");

    // sub-solution inequality against every nodal basis function
    const auto uv = cert.u.interior_values();
    const auto& nodes = g.interior_nodes();
    double worst = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < uv.size(); ++i) {
      std::vector<double> ei(uv.size(), 0.0);
      ei[i] = 1.0;
      const double lhs = apply_form(uv, ei, inst.tables->first) + apply_form(uv, ei, inst.tables->second);
      worst = std::max(worst, lhs - g.cell_volume() * f_eval(cfg.reaction, g.coord(nodes[i]), uv[i]));
    }
    c.expect(worst <= 1e-8, std::string(name) + ": sub-solution inequality (max " + sci(worst) + ")");

    // Hopf ratio across one refinement
    auto fine = cfg;
    fine.resolution = 2 * cfg.resolution - 1;
    const auto fine_tables = build_tables(build_grid(fine.domain, fine.resolution), fine.exponents);
    const auto fine_cert = select_sigma(fine.reaction, fine.exponents, fine_tables,
                                        fine.epsilon.value_or(default_epsilon(fine.reaction)), fine.minimizer);
    const double ratio = fine_cert.eta / cert.eta;
    c.expect(ratio >= 0.5 && ratio <= 2.0, std::string(name) + ": eta stable within factor 2 (ratio " + sci(ratio) + ")");
    c.note(std::string(name) + " sigma=" + sci(cert.sigma) + " eta=" + sci(cert.eta) + "->" + sci(fine_cert.eta));
  }
}

void ac6(Check& c) {
  {
    const ProblemExponents e{.s = 0.5, .s1 = 0.5, .s2 = 0.5, .p = 2.0, .q = 2.0, .N = 2};
    const auto g = build_grid(Interval{0, 1}, 17);
    const auto tables = build_tables(g, e);
    const auto ref = oracle::linear_torsion(*tables, 0.7);
    const auto u = solve_torsion(0.7, e, tables).interior_values();
    double worst = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) worst = std::max(worst, rel(u[i], ref[i]));
    c.expect(worst < 1e-8, "p=q=2 dense oracle (max rel " + sci(worst) + ")");
    c.note("dense=" + sci(worst));
  }
  {
    auto cfg = load_config(config("example_1d.json"));
    cfg.resolution = 5;
    const auto inst = instance_from(cfg);
    const auto prob = frozen_problem(inst.subsolution(), inst);
    const auto sol = solve_frozen(prob, cfg.minimizer);
    const auto lat = oracle::lattice_minimum(prob, 1.0);
    const auto u = sol.u.interior_values();
    double dist = 0.0;
    for (int i = 0; i < 3; ++i) dist = std::max(dist, std::abs(u[i] - lat.argmin[i]));
    c.expect(sol.converged && dist <= lat.spacing, "3-node lattice oracle within spacing (" + sci(dist) + ")");
  }
  for (const auto& name : shipped_configs()) {
    const auto cfg = load_config(config(name));
    const auto inst = instance_from(cfg);
    const auto sol = apply_T_report(inst.subsolution(), inst);
    double worst = std::numeric_limits<double>::infinity();
    for (std::size_t node : inst.grid.interior_nodes()) worst = std::min(worst, sol.u[node] - inst.subsolution()[node]);
    c.expect(sol.converged && worst >= -1e-8, name + ": u_v >= sub-solution - 1e-8 (min " + sci(worst) + ")");
  }
  {
    const auto cfg = load_config(config("example_1d.json"));
    const auto inst = instance_from(cfg);
    c.expect(hf2_holds(cfg.reaction, cfg.exponents.q), "example_1d satisfies the strict-decrease hypothesis");
    const auto probe = uniqueness_probe(frozen_problem(inst.subsolution(), inst), cfg.minimizer, true);
    c.expect(probe.conclusive && probe.discrepancy < 1e-6, "uniqueness probe < 1e-6 (" + sci(probe.discrepancy) + ")");
    c.note("uniqueness=" + sci(probe.discrepancy));
  }
}

void ac7(Check& c) {
  {
    const auto cfg = load_config(config("c3_zero_1d.json"));
    const auto rep = solve_problem(instance_from(cfg), cfg.outer);
    c.expect(rep.converged && rep.outer_iterations <= 2,
             "c3=0 converges in <= 2 outer iterations (" + std::to_string(rep.outer_iterations) + ")");
  }
  {
    const auto cfg = load_config(config("example_1d.json"));
    const auto inst = instance_from(cfg);
    c.expect(inst.grid.resolution() == 17, "shipped 1D instance has 17 nodes");
    const auto rep = solve_problem(inst, cfg.outer);
    const auto ref = oracle::coupled_solve(inst);
    const auto u = rep.u.interior_values();
    double worst = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) worst = std::max(worst, std::abs(u[i] - ref.u[i]));
    c.expect(ref.residual < 1e-9, "coupled oracle converged (" + sci(ref.residual) + ")");
    c.expect(worst < 1e-5, "fixed point vs coupled oracle < 1e-5 (" + sci(worst) + ")");
    c.note("coupled=" + sci(worst));
  }
  for (const auto& name : shipped_configs()) {
    const auto cfg = load_config(config(name));
    const auto inst = instance_from(cfg);
    std::optional<SolveReport> run;
    try {
      run = solve_problem(inst, cfg.outer);
    } catch (const InvariantError& e) {
      c.expect(false, name + ": " + e.what());
      continue;
    }
    const auto& rep = *run;
    bool inside = rep.ball.has_value();
    for (const auto& r : rep.history) inside = inside && r.v_norm <= rep.ball->radius;
    c.expect(inside, name + ": ball monitor quiet");
    c.expect(rep.converged, name + ": converged");
    c.expect(rep.full_residual < 1e-5, name + ": full residual < 1e-5 (" + sci(rep.full_residual) + ")");
    const auto d = distance_field(inst.grid);
    bool positive = true, hopf = true;
    for (std::size_t node : inst.grid.interior_nodes()) {
      positive = positive && rep.u[node] > 0.0;
      hopf = hopf && rep.u[node] >= rep.eta * std::pow(d[node], cfg.exponents.s1);
    }
    c.expect(positive, name + ": u > 0");
    c.expect(hopf, name + ": u >= eta d^s1");
    c.note(name + " k=" + std::to_string(rep.outer_iterations) + " res=" + sci(rep.full_residual));
  }
}

void ac8(Check& c) {
  const std::vector<std::pair<std::string, std::string>> cases = {
      {"q_ge_p", "2<q<p<N/s1"},  {"s1p_le_1", "s1*p>1"},         {"gamma_ge_1", "0<gamma<1"},
      {"r_ge_pm1", "1<r<p-1"},   {"zeta_ge_pm1", "1<zeta<p-1"}, {"s1_ge_bound", "s1<1/(p'*gamma)"}};
  const auto tmp = fs::temp_directory_path() / ("fracpq-acceptance-" + std::to_string(::getpid()));
  fs::create_directories(tmp);
  int rejected = 0;
  for (const auto& [stem, name] : cases) {
    for (const std::string cmd : {"check-hypotheses", "solve"}) {
      const auto err = tmp / (stem + "." + cmd + ".err");
      std::string line = "'" + g_fracsolve.string() + "' " + cmd + " --config '" +
                         (g_source / "configs" / "negative" / (stem + ".json")).string() + "'";
      if (cmd == "solve") line += " --out '" + (tmp / stem).string() + "'";
      line += " > /dev/null 2> '" + err.string() + "'";
      const int status = std::system(line.c_str());
      const int code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
      std::ifstream in(err);
      std::string text, last;
      while (std::getline(in, text)) {
        if (!text.empty() && text.front() == '{') last = text;
      }
      std::string got;
      try {
        got = nlohmann::json::parse(last).value("inequality", "");
      } catch (const std::exception&) {
      }
      const bool ok = code == 2 && got == name;
      c.expect(ok, stem + " " + cmd + ": exit " + std::to_string(code) + ", named \"" + got + "\"");
      rejected += ok;
    }
  }
  fs::remove_all(tmp);
  c.note(std::to_string(rejected) + "/12 rejections named correctly");
}

}  // namespace

int main(int argc, char** argv) {
  g_source = argc > 1 ? fs::path(argv[1]) : fs::current_path();
  g_fracsolve = argc > 2 ? fs::path(argv[2]) : fs::absolute(fs::path(argv[0])).parent_path() / "fracsolve";

  struct Criterion {
    const char* id;
    const char* title;
    std::function<void(Check&)> run;
    double budget;  // seconds
  };
  const std::vector<Criterion> criteria = {
      {"AC1", "kernel identities", ac1, 5.0},        {"AC2", "Gagliardo operator", ac2, 30.0},
      {"AC3", "hidden convexity", ac3, 60.0},        {"AC4", "Riesz gradient s->1", ac4, 60.0},
      {"AC5", "torsion sub-solution", ac5, 120.0},   {"AC6", "frozen solver", ac6, 120.0},
      {"AC7", "fixed point", ac7, 300.0},            {"AC8", "hypothesis gate", ac8, 60.0},
  };
  int failed = 0;
  for (const auto& cr : criteria) {
    Check c;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      cr.run(c);
    } catch (const std::exception& e) {
      c.expect(false, std::string("exception: ") + e.what());
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    c.expect(secs < cr.budget, "runtime budget " + sci(cr.budget) + " s");
    std::string detail;
    for (const auto& n : c.notes) detail += (detail.empty() ? "" : "; ") + n;
    std::printf("%s %s  %-22s %7.2f s  %s\n", cr.id, c.ok ? "PASS" : "FAIL", cr.title, secs, detail.c_str());
    std::fflush(stdout);
    failed += !c.ok;
  }
  return failed == 0 ? 0 : 1;
}
