#pragma once

#include <chrono>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <functional>
#include <iostream>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "fracpq/config.hpp"
#include "fracpq/field_io.hpp"
#include "fracpq/fixed_point.hpp"
#include "fracpq/kernels.hpp"

namespace fracpq::app {

enum ExitCode : int { kOk = 0, kRuntimeFailure = 1, kConfigFailure = 2 };

struct Streams {
  std::ostream& out;
  std::ostream& err;
};

inline std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

inline void emit_error(std::ostream& err, const std::string& kind, const std::string& message,
                       const nlohmann::json& extra = nlohmann::json::object()) {
  nlohmann::json j = {{"error", kind}, {"message", message}};
  for (const auto& [k, v] : extra.items()) j[k] = v;
  err << j.dump() << '\n';
}

inline nlohmann::json hypotheses_json(const HypothesisReport& rep) {
  nlohmann::json checks = nlohmann::json::array();
  for (const auto& c : rep.checks) {
    checks.push_back({{"name", c.name},
                      {"passed", c.passed},
                      {"severity", c.severity == Severity::error ? "error" : "warning"},
                      {"detail", c.detail}});
  }
  return {{"ok", rep.ok()}, {"checks", checks}};
}

inline nlohmann::json certificate_json(const SubsolutionCertificate& c) {
  return {{"sigma", c.sigma},       {"eta", c.eta},           {"exponent", c.exponent}, {"sup_norm", c.sup_norm},
          {"epsilon", c.epsilon},   {"delta", c.delta},       {"halvings", c.halvings}};
}

inline nlohmann::json report_json(const SolveReport& rep, const Instance& inst, const RunConfig& cfg,
                                  const std::optional<UniquenessProbe>& probe) {
  nlohmann::json hist = {{"k", nlohmann::json::array()},
                         {"step_seminorm", nlohmann::json::array()},
                         {"frozen_residual", nlohmann::json::array()},
                         {"full_residual", nlohmann::json::array()},
                         {"v_norm", nlohmann::json::array()},
                         {"theta", nlohmann::json::array()},
                         {"inner_iterations", nlohmann::json::array()}};
  for (const auto& r : rep.history) {
    hist["k"].push_back(r.k);
    hist["step_seminorm"].push_back(r.step_seminorm);
    hist["frozen_residual"].push_back(r.frozen_residual);
    hist["full_residual"].push_back(r.full_residual);
    hist["v_norm"].push_back(r.v_norm);
    hist["theta"].push_back(r.theta);
    hist["inner_iterations"].push_back(r.inner_iterations);
  }
  nlohmann::json j;
  j["converged"] = rep.converged;
  j["message"] = rep.message;
  j["outer_iterations"] = rep.outer_iterations;
  j["full_residual"] = rep.full_residual;
  j["hopf_ratio"] = rep.hopf_ratio;
  j["min_excess"] = rep.min_excess;
  j["min_value"] = rep.min_value;
  j["final_theta"] = rep.final_theta;
  j["certificate"] = certificate_json(*inst.certificate);
  j["ball"] = rep.ball ? nlohmann::json{{"constant", rep.ball->constant},
                                        {"radius", rep.ball->radius},
                                        {"samples", rep.ball->samples}}
                       : nlohmann::json(nullptr);
  j["history"] = hist;
  j["log"] = rep.log;
  if (probe) {
    j["uniqueness"] = {{"skipped", probe->skipped},
                       {"conclusive", probe->conclusive},
                       {"discrepancy", probe->discrepancy},
                       {"note", probe->note}};
  } else {
    j["uniqueness"] = nullptr;
  }
  j["hypotheses"] = hypotheses_json(config_hypotheses(cfg));
  j["grid"] = grid_metadata(inst.grid);
  j["config"] = config_to_json(cfg);
  j["timestamp"] = utc_timestamp();
  return j;
}

inline void write_convergence_csv(const std::filesystem::path& path, const SolveReport& rep) {
  auto out = detail::open_out(path);
  out << "k,step_seminorm,frozen_residual,full_residual,v_norm\n";
  for (const auto& r : rep.history) {
    out << r.k << ',' << format_double(r.step_seminorm) << ',' << format_double(r.frozen_residual) << ','
        << format_double(r.full_residual) << ',' << format_double(r.v_norm) << '\n';
  }
}

inline void write_json(const std::filesystem::path& path, const nlohmann::json& j) {
  auto out = detail::open_out(path);
  out << j.dump(2) << '\n';
}

// ---------------------------------------------------------------------------

struct Common {
  std::string config;
  std::string cache;
  unsigned threads = 0;
  bool verbose = false;
};

/// Loads the config and applies cache precedence: --cache, then
/// FRACSOLVE_CACHE, then the config file.
inline RunConfig prepare(const Common& c, std::ostream& err) {
  auto cfg = load_config(c.config);
  if (!c.cache.empty()) {
    cfg.cache_dir = c.cache;
  } else if (const char* env = std::getenv("FRACSOLVE_CACHE"); env && *env) {
    cfg.cache_dir = env;
  }
  if (!cfg.cache_dir.empty()) std::filesystem::create_directories(cfg.cache_dir);
  for (const auto& d : cfg.defaults) err << "[config] default " << d << '\n';
  return cfg;
}

inline Instance build_instance(const RunConfig& cfg, const Common& c, std::ostream& err) {
  const auto t0 = std::chrono::steady_clock::now();
  auto inst = make_instance(cfg.domain, cfg.resolution, cfg.exponents, cfg.reaction, cfg.convection,
                            cfg.instance_options());
  if (c.verbose) {
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    err << "[setup] " << inst.grid.interior_count() << " unknowns, sigma=" << inst.certificate->sigma
        << ", eta=" << inst.certificate->eta << " (" << secs << " s)\n";
  }
  return inst;
}

inline int cmd_solve(const Common& c, const std::string& out_dir, Streams io) {
  const auto cfg = prepare(c, io.err);
  gate_hypotheses(cfg);
  for (const auto& chk : config_hypotheses(cfg).checks) {
    if (!chk.passed) io.err << "[hypotheses] warning: " << chk.name << " (" << chk.detail << ")\n";
  }
  const auto inst = build_instance(cfg, c, io.err);
  OuterCallback cb;
  if (c.verbose) {
    cb = [&io](const IterationRecord& r) {
      io.err << "[outer " << r.k << "] step=" << r.step_seminorm << " residual=" << r.full_residual
             << " theta=" << r.theta << '\n';
    };
  }
  const auto rep = solve_problem(inst, cfg.outer, cb);
  if (c.verbose) {
    for (const auto& line : rep.log) io.err << "[outer] " << line << '\n';
  }

  std::optional<UniquenessProbe> probe;
  if (cfg.uniqueness_probe) {
    probe = uniqueness_probe(frozen_problem(rep.u, inst), cfg.minimizer, hf2_holds(cfg.reaction, cfg.exponents.q));
    if (probe->skipped) io.err << "[uniqueness] skipped: " << probe->note << '\n';
  }

  const std::filesystem::path dir(out_dir);
  write_field_csv(dir / "solution.csv", rep.u);
  write_json(dir / "report.json", report_json(rep, inst, cfg, probe));
  write_convergence_csv(dir / "convergence.csv", rep);

  io.out << "converged=" << (rep.converged ? "true" : "false") << " outer_iterations=" << rep.outer_iterations
         << " full_residual=" << format_double(rep.full_residual) << " out=" << dir.string() << '\n';
  if (!rep.converged) {
    emit_error(io.err, "non_convergence", rep.message, {{"outer_iterations", rep.outer_iterations}});
    return kRuntimeFailure;
  }
  if (!(rep.min_value > 0.0) || rep.min_excess < -cfg.minimizer.tolerance) {
    emit_error(io.err, "invariant_violation", "solution is not above the sub-solution",
               {{"min_value", rep.min_value}, {"min_excess", rep.min_excess}});
    return kRuntimeFailure;
  }
  return kOk;
}

inline int cmd_torsion(const Common& c, std::optional<double> sigma, const std::string& out_dir, Streams io) {
  const auto cfg = prepare(c, io.err);
  const auto grid = build_grid(cfg.domain, cfg.resolution);
  const auto tables = build_tables(grid, cfg.exponents, cfg.instance_options().assembly);
  nlohmann::json cert;
  ScalarField u(grid);
  if (sigma) {
    u = solve_torsion(*sigma, cfg.exponents, tables, cfg.minimizer);
    const double exponent = hopf_exponent(cfg.exponents);
    cert = {{"sigma", *sigma},
            {"eta", hopf_ratio(u, distance_field(grid), exponent)},
            {"exponent", exponent},
            {"sup_norm", lp_norm(u, std::numeric_limits<double>::infinity())}};
  } else {
    auto c2 = select_sigma(cfg.reaction, cfg.exponents, tables, cfg.epsilon.value_or(default_epsilon(cfg.reaction)),
                           cfg.minimizer);
    cert = certificate_json(c2);
    u = std::move(c2.u);
  }
  const std::filesystem::path dir(out_dir);
  write_field_csv(dir / "torsion.csv", u);
  write_json(dir / "certificate.json", cert);
  io.out << cert.dump() << '\n';
  return kOk;
}

inline int cmd_gradient(const Common& c, std::optional<double> s, const std::string& field,
                        const std::string& out_file, Streams io) {
  const auto cfg = prepare(c, io.err);
  const double order = s.value_or(cfg.exponents.s);
  if (!(order > 0.0 && order < 1.0)) throw ConfigError("s", "must lie in (0, 1)");
  std::optional<ScalarField> u;
  if (!field.empty()) {
    u = read_field_csv(field);
  } else {
    u = build_instance(cfg, c, io.err).subsolution();
  }
  const ConvolutionPlan plan(u->grid(), order, cfg.padding);
  const auto g = riesz_gradient(*u, plan);
  if (out_file.empty()) {
    write_vector_csv(io.out, g);
  } else {
    auto out = detail::open_out(out_file);
    write_vector_csv(out, g);
  }
  return kOk;
}

inline int cmd_kernel_table(int dim, double alpha, const std::vector<double>& radii, Streams io) {
  if (dim < 1 || dim > 2) throw ConfigError("dim", "must be 1 or 2");
  if (!(alpha > 0.0)) throw ConfigError("alpha", "must be positive");
  const bool riesz_ok = alpha < dim;
  io.out << "radius,I_alpha,g_alpha\n";
  for (double r : radii) {
    if (!(r > 0.0) || !std::isfinite(r)) throw ConfigError("radii", "every radius must be positive");
    const double x[2] = {r, 0.0};
    const std::span<const double> pt(x, static_cast<std::size_t>(dim));
    const double ia = riesz_ok ? riesz_kernel_eval({dim, alpha}, pt) : std::numeric_limits<double>::quiet_NaN();
    const double ga = bessel_kernel_eval({.dimension = dim, .order = alpha}, pt);
    io.out << format_double(r) << ',' << format_double(ia) << ',' << format_double(ga) << '\n';
  }
  if (!riesz_ok) io.err << "[kernel-table] I_alpha needs alpha < N; column left as nan\n";
  return kOk;
}

inline int cmd_check(const Common& c, Streams io) {
  const auto cfg = prepare(c, io.err);
  const auto rep = config_hypotheses(cfg);
  io.out << hypotheses_json(rep).dump(2) << '\n';
  if (const auto* bad = rep.first_failure()) {
    emit_error(io.err, "hypothesis_violation", bad->detail, {{"field", bad->name}, {"inequality", bad->name}});
    return kConfigFailure;
  }
  return kOk;
}

// ---------------------------------------------------------------------------
// selftest: invariants on small built-in instances

inline int cmd_selftest(Streams io) {
  int failures = 0;
  auto check = [&](const std::string& name, const std::function<bool()>& body) {
    bool ok = false;
    std::string why;
    try {
      ok = body();
    } catch (const std::exception& e) {
      why = e.what();
    }
    io.out << (ok ? "PASS " : "FAIL ") << name << (why.empty() ? "" : " (" + why + ")") << '\n';
    if (!ok) ++failures;
  };
  const ProblemExponents e{.s = 0.5, .s1 = 0.6, .s2 = 0.4, .p = 3.0, .q = 2.5, .N = 2};
  const SingularReaction f;
  Rng rng(7);

  check("riesz normalization", [] {
    return std::abs(riesz_normalization(1, 0.5) * std::sqrt(2.0 * std::numbers::pi) - 1.0) < 1e-12;
  });
  const auto g1 = build_grid(Interval{0, 1}, 33);
  const auto table = assemble_weights(g1, {0.7, 2.5});
  std::vector<double> u(g1.interior_count());
  for (auto& v : u) v = rng.uniform(-1.0, 1.0);
  check("form identity", [&] {
    return std::abs(apply_form(u, u, table) - 2.5 * energy(u, table)) <= 1e-12 * std::abs(apply_form(u, u, table));
  });
  check("operator gradient", [&] {
    const auto grad = operator_gradient(u, table);
    for (std::size_t i = 0; i < u.size(); i += 5) {
      auto up = u, dn = u;
      up[i] += 1e-6;
      dn[i] -= 1e-6;
      const double fd = (energy(up, table) - energy(dn, table)) / 2e-6;
      if (std::abs(fd - grad[i]) > 1e-5 * std::max(1.0, std::abs(fd))) return false;
    }
    return true;
  });
  check("hidden convexity", [&] {
    for (int k = 0; k < 50; ++k) {
      std::vector<double> a(u.size()), b(u.size());
      for (std::size_t i = 0; i < u.size(); ++i) {
        a[i] = rng.uniform(0.0, 2.0);
        b[i] = rng.uniform(0.0, 2.0);
      }
      if (hidden_convexity_violation(a, b, rng.uniform(), 2.5, 2.5) > 1e-12) return false;
    }
    return true;
  });
  check("fractional gradient near s = 1", [] {
    const auto g = build_grid(Interval{-4, 4}, 257);
    const auto bump = ScalarField::from_function(g, [](const Point& x) { return std::exp(-x[0] * x[0]); });
    const auto d = riesz_gradient(bump, ConvolutionPlan(g, 0.99));
    double num = 0.0, den = 0.0;
    for (std::size_t node : g.interior_nodes()) {
      const double x = g.coord(node)[0];
      const double exact = -2.0 * x * std::exp(-x * x);
      num += (d.at(node, 0) - exact) * (d.at(node, 0) - exact);
      den += exact * exact;
    }
    return std::sqrt(num / den) < 0.05;
  });
  const auto inst = make_instance(Interval{0, 1}, 17, e, f, {0.0, 1.5});
  check("sub-solution certificate", [&] {
    const auto& c = *inst.certificate;
    return c.sup_norm < c.delta && c.eta > 0.0 && f_base(f, c.sup_norm) > c.sigma;
  });
  check("frozen solution above sub-solution", [&] {
    const auto tv = apply_T(inst.subsolution(), inst);
    for (std::size_t node : inst.grid.interior_nodes()) {
      if (tv[node] < inst.subsolution()[node] - 1e-8) return false;
    }
    return true;
  });
  check("decoupled fixed point", [&] {
    OuterOptions o;
    o.ball_monitor = false;
    const auto rep = solve_problem(inst, o);
    return rep.converged && rep.outer_iterations <= 2;
  });
  check("field round trip", [&] {
    const auto dir = std::filesystem::temp_directory_path() / ("fracsolve-selftest-" + std::to_string(::getpid()));
    const auto path = dir / "u.csv";
    write_field_csv(path, inst.subsolution());
    const auto back = read_field_csv(path);
    std::filesystem::remove_all(dir);
    for (std::size_t k = 0; k < back.size(); ++k) {
      if (back[k] != inst.subsolution()[k]) return false;
    }
    return true;
  });
  return failures == 0 ? kOk : kRuntimeFailure;
}

// ---------------------------------------------------------------------------

inline int run(int argc, char** argv, Streams io) {
  CLI::App app{"Fractional (p,q)-Laplacian solver with singular reaction and fractional convection", "fracsolve"};
  app.require_subcommand(1);
  app.fallthrough();
  Common common;
  app.add_option("--threads", common.threads, "Cap on worker threads (0 = hardware)");
  app.add_option("--cache", common.cache, "Weight-table cache directory (overrides FRACSOLVE_CACHE)");
  app.add_flag("-v,--verbose", common.verbose, "Progress on stderr");

  std::string out_dir = ".";
  std::string field, out_file;
  std::optional<double> sigma, s_order;
  int dim = 1;
  double alpha = 0.5;
  std::vector<double> radii;

  auto* solve = app.add_subcommand("solve", "Solve the full problem by relaxed fixed-point iteration");
  solve->add_option("--config", common.config, "Config JSON")->required();
  solve->add_option("--out", out_dir, "Output directory");
  auto* torsion = app.add_subcommand("torsion", "Torsion solve and sub-solution certificate");
  torsion->add_option("--config", common.config, "Config JSON")->required();
  torsion->add_option("--sigma", sigma, "Forcing; selected automatically when omitted");
  torsion->add_option("--out", out_dir, "Output directory");
  auto* gradient = app.add_subcommand("gradient", "Riesz fractional gradient of a field as CSV");
  gradient->add_option("--config", common.config, "Config JSON")->required();
  gradient->add_option("--s", s_order, "Order (default: exponents.s)");
  gradient->add_option("--field", field, "Field CSV (default: the sub-solution)");
  gradient->add_option("--out", out_file, "Output CSV (default: stdout)");
  auto* kernel = app.add_subcommand("kernel-table", "Riesz and Bessel kernel values at given radii");
  kernel->add_option("--dim", dim, "Dimension N")->required();
  kernel->add_option("--alpha", alpha, "Order alpha")->required();
  kernel->add_option("--radii", radii, "Comma-separated radii")->required()->delimiter(',');
  auto* check = app.add_subcommand("check-hypotheses", "Print the hypothesis report of a config");
  check->add_option("--config", common.config, "Config JSON")->required();
  auto* selftest = app.add_subcommand("selftest", "Invariant checks on built-in instances");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    io.out << app.help();
    return kOk;
  } catch (const CLI::ParseError& e) {
    emit_error(io.err, "usage", e.what());
    return kConfigFailure;
  }

  try {
    if (common.threads > 0) set_thread_count(common.threads);
    if (*solve) return cmd_solve(common, out_dir, io);
    if (*torsion) return cmd_torsion(common, sigma, out_dir, io);
    if (*gradient) return cmd_gradient(common, s_order, field, out_file, io);
    if (*kernel) return cmd_kernel_table(dim, alpha, radii, io);
    if (*check) return cmd_check(common, io);
    if (*selftest) return cmd_selftest(io);
  } catch (const HypothesisError& e) {
    emit_error(io.err, e.kind(), e.what(), {{"field", e.field()}, {"inequality", e.field()}});
    return kConfigFailure;
  } catch (const ConfigError& e) {
    emit_error(io.err, e.kind(), e.what(), {{"field", e.field()}});
    return kConfigFailure;
  } catch (const Error& e) {
    emit_error(io.err, e.kind(), e.what());
    return kRuntimeFailure;
  } catch (const std::exception& e) {
    emit_error(io.err, "internal", e.what());
    return kRuntimeFailure;
  }
  return kConfigFailure;
}

}  // namespace fracpq::app
