#pragma once

#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "fracpq/error.hpp"
#include "fracpq/field_io.hpp"
#include "fracpq/fixed_point.hpp"
#include "fracpq/reaction.hpp"

namespace fracpq {

/// A failed hypothesis; field() holds the name of the violated inequality.
class HypothesisError : public ConfigError {
 public:
  HypothesisError(const std::string& check, const std::string& detail) : ConfigError(check, detail) {}
  const char* kind() const noexcept override { return "hypothesis_violation"; }
};

struct RunConfig {
  Domain domain = Interval{};
  int resolution = 33;
  ProblemExponents exponents;
  SingularReaction reaction;
  ConvectiveReaction convection;
  MinimizerOptions minimizer;
  OuterOptions outer;
  std::optional<double> epsilon;
  int padding = 2;
  std::size_t node_cap = 4096;
  bool require_hf2 = false;
  bool uniqueness_probe = true;
  std::uint64_t seed = 1;
  std::string cache_dir;
  /// One line per field that fell back to its default.
  std::vector<std::string> defaults;

  InstanceOptions instance_options() const {
    InstanceOptions o;
    o.assembly.node_cap = node_cap;
    o.assembly.cache_dir = cache_dir;
    o.minimizer = minimizer;
    o.epsilon = epsilon;
    o.padding_factor = padding;
    return o;
  }
  HypothesisOptions hypothesis_options() const {
    HypothesisOptions h;
    h.require_hf2 = require_hf2;
    return h;
  }
};

namespace detail {

// Reads one JSON object, remembering which keys were consumed and which
// fields fell back to defaults.
class ObjectReader {
 public:
  ObjectReader(const nlohmann::json* obj, std::string path, std::vector<std::string>& defaults)
      : obj_(obj), path_(std::move(path)), defaults_(defaults) {
    if (obj_ && !obj_->is_object()) throw ConfigError(path_, "expected an object");
  }

  bool has(const std::string& key) const { return obj_ && obj_->contains(key); }
  const nlohmann::json& raw(const std::string& key) {
    used_.insert(key);
    return obj_->at(key);
  }
  std::string field(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  double number(const std::string& key, std::optional<double> fallback = std::nullopt) {
    if (!has(key)) return missing(key, fallback);
    const auto& v = raw(key);
    if (!v.is_number()) throw ConfigError(field(key), "expected a number");
    const double x = v.get<double>();
    if (!std::isfinite(x)) throw ConfigError(field(key), "must be finite");
    return x;
  }
  long long integer(const std::string& key, std::optional<long long> fallback = std::nullopt) {
    if (!has(key)) {
      if (!fallback) throw ConfigError(field(key), "required field is missing");
      note(key, std::to_string(*fallback));
      return *fallback;
    }
    const auto& v = raw(key);
    if (!v.is_number_integer()) throw ConfigError(field(key), "expected an integer");
    return v.get<long long>();
  }
  bool boolean(const std::string& key, bool fallback) {
    if (!has(key)) {
      note(key, fallback ? "true" : "false");
      return fallback;
    }
    const auto& v = raw(key);
    if (!v.is_boolean()) throw ConfigError(field(key), "expected true or false");
    return v.get<bool>();
  }
  std::string text(const std::string& key, const std::string& fallback) {
    if (!has(key)) {
      note(key, "\"" + fallback + "\"");
      return fallback;
    }
    const auto& v = raw(key);
    if (!v.is_string()) throw ConfigError(field(key), "expected a string");
    return v.get<std::string>();
  }
  ObjectReader child(const std::string& key) {
    if (!has(key)) return ObjectReader(nullptr, field(key), defaults_);
    return ObjectReader(&raw(key), field(key), defaults_);
  }
  /// Rejects keys that were never read.
  void finish() const {
    if (!obj_) return;
    for (const auto& [k, v] : obj_->items()) {
      if (!used_.count(k)) throw ConfigError(field(k), "unknown key");
    }
  }
  void note(const std::string& key, const std::string& value) { defaults_.push_back(field(key) + " = " + value); }

 private:
  double missing(const std::string& key, std::optional<double> fallback) {
    if (!fallback) throw ConfigError(field(key), "required field is missing");
    note(key, format_double(*fallback));
    return *fallback;
  }

  const nlohmann::json* obj_;
  std::string path_;
  std::vector<std::string>& defaults_;
  std::set<std::string> used_;
};

inline MinimizerMethod parse_method(const std::string& name, const std::string& field) {
  if (name == "auto") return MinimizerMethod::automatic;
  if (name == "newton") return MinimizerMethod::newton;
  if (name == "lbfgs") return MinimizerMethod::lbfgs;
  if (name == "gradient_descent") return MinimizerMethod::gradient_descent;
  throw ConfigError(field, "unknown method \"" + name + "\" (auto, newton, lbfgs, gradient_descent)");
}

}  // namespace detail

/// Builds a validated config from parsed JSON. The hypothesis gate is
/// separate (gate_hypotheses) so that reports can still be printed.
inline RunConfig parse_config(const nlohmann::json& root) {
  RunConfig cfg;
  detail::ObjectReader top(&root, "", cfg.defaults);

  if (!top.has("domain")) throw ConfigError("domain", "required field is missing");
  cfg.domain = domain_from_json(top.raw("domain"));
  const int dim = dimension(cfg.domain);
  cfg.resolution = static_cast<int>(top.integer("resolution", dim == 1 ? 33 : 25));
  if (cfg.resolution < 3 || cfg.resolution > 100000) throw ConfigError("resolution", "must lie in [3, 100000]");

  {
    if (!top.has("exponents")) throw ConfigError("exponents", "required field is missing");
    auto ex = top.child("exponents");
    auto& e = cfg.exponents;
    e.s = ex.number("s");
    e.s1 = ex.number("s1");
    e.s2 = ex.number("s2");
    e.p = ex.number("p");
    e.q = ex.number("q");
    // the hypotheses are stated for N >= 2; 1D grids are checked against N = 2
    e.N = static_cast<int>(ex.integer("N", 2));
    ex.finish();
    if (!(e.s > 0.0 && e.s < 1.0)) throw ConfigError("exponents.s", "must lie in (0, 1)");
    if (!(e.s1 > 0.0 && e.s1 < 1.0)) throw ConfigError("exponents.s1", "must lie in (0, 1)");
    if (!(e.s2 > 0.0 && e.s2 < 1.0)) throw ConfigError("exponents.s2", "must lie in (0, 1)");
    if (!(e.p > 1.0)) throw ConfigError("exponents.p", "must exceed 1");
    if (!(e.q > 1.0)) throw ConfigError("exponents.q", "must exceed 1");
    if (e.N < 1) throw ConfigError("exponents.N", "must be positive");
  }
  {
    auto fr = top.child("f");
    auto& f = cfg.reaction;
    f.gamma = fr.number("gamma", 0.5);
    f.c1 = fr.number("c1", 1.0);
    f.c2 = fr.number("c2", 0.5);
    f.r = fr.number("r", 1.2);
    const std::string family = fr.text("family", "singular");
    if (family == "singular") {
      f.family = ReactionFamily::singular;
    } else if (family == "bounded") {
      f.family = ReactionFamily::bounded;
    } else {
      throw ConfigError("f.family", "expected \"singular\" or \"bounded\"");
    }
    auto w = fr.child("weight");
    f.weight.a0 = w.number("a0", 1.0);
    f.weight.a1 = w.number("a1", 0.0);
    w.finish();
    try {
      f.weight.validate();
    } catch (const DomainError& err) {
      throw ConfigError("f.weight", err.what());
    }
    cfg.require_hf2 = fr.boolean("require_hf2", false);
    fr.finish();
  }
  {
    auto gr = top.child("g");
    cfg.convection.c3 = gr.number("c3", 0.1);
    cfg.convection.zeta = gr.number("zeta", 1.5);
    gr.finish();
    if (cfg.convection.c3 < 0.0) throw ConfigError("g.c3", "must be nonnegative");
  }
  {
    auto so = top.child("solver");
    auto& m = cfg.minimizer;
    m.method = detail::parse_method(so.text("method", "auto"), "solver.method");
    m.tolerance = so.number("tolerance", dim == 1 ? 1e-6 : 1e-5);
    m.max_iterations = static_cast<int>(so.integer("max_iterations", 5000));
    m.shrink = so.number("shrink", 0.5);
    m.sufficient_decrease = so.number("sufficient_decrease", 1e-4);
    m.lbfgs_memory = static_cast<int>(so.integer("lbfgs_memory", 10));
    auto& o = cfg.outer;
    o.theta = so.number("theta", 0.5);
    o.min_theta = so.number("min_theta", 1.0 / 16.0);
    o.tolerance = so.number("outer_tolerance", 1e-8);
    o.max_iterations = static_cast<int>(so.integer("max_outer_iterations", 200));
    o.ball_monitor = so.boolean("ball_monitor", true);
    o.ball_samples = static_cast<int>(so.integer("ball_samples", 20));
    if (so.has("epsilon")) cfg.epsilon = so.number("epsilon");
    cfg.padding = static_cast<int>(so.integer("padding", 2));
    const long long cap = so.integer("node_cap", 4096);
    if (cap < 1) throw ConfigError("solver.node_cap", "must be positive");
    cfg.node_cap = static_cast<std::size_t>(cap);
    cfg.uniqueness_probe = so.boolean("uniqueness_probe", true);
    so.finish();
    try {
      m.validate();
      o.validate();
    } catch (const DomainError& err) {
      throw ConfigError("solver", err.what());
    }
    if (cfg.padding < 2) throw ConfigError("solver.padding", "must be at least 2");
    if (cfg.epsilon && !(*cfg.epsilon > 0.0)) throw ConfigError("solver.epsilon", "must be positive");
    if (o.ball_samples < 0) throw ConfigError("solver.ball_samples", "must be nonnegative");
  }
  const long long seed = top.integer("seed", 1);
  if (seed < 0) throw ConfigError("seed", "must be nonnegative");
  cfg.seed = static_cast<std::uint64_t>(seed);
  cfg.outer.seed = cfg.seed;
  cfg.cache_dir = top.text("cache", "");
  top.finish();

  const auto g = build_grid(cfg.domain, cfg.resolution);
  if (g.interior_count() > cfg.node_cap) {
    throw ConfigError("resolution", std::to_string(g.interior_count()) + " interior nodes exceed the pair-table cap " +
                                        std::to_string(cfg.node_cap));
  }
  return cfg;
}

inline RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config", "cannot read " + path.string());
  nlohmann::json root;
  try {
    in >> root;
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("config", std::string("invalid JSON: ") + e.what());
  }
  return parse_config(root);
}

inline HypothesisReport config_hypotheses(const RunConfig& cfg) {
  return check_hypotheses(cfg.exponents, cfg.reaction, cfg.convection, cfg.hypothesis_options());
}

/// Throws HypothesisError naming the first violated inequality.
inline void gate_hypotheses(const RunConfig& cfg) {
  const auto rep = config_hypotheses(cfg);
  if (const auto* bad = rep.first_failure()) throw HypothesisError(bad->name, bad->detail);
}

/// Canonical echo of a config (defaults filled in).
inline nlohmann::json config_to_json(const RunConfig& cfg) {
  const auto& e = cfg.exponents;
  const auto& f = cfg.reaction;
  nlohmann::json j;
  j["domain"] = domain_to_json(cfg.domain);
  j["resolution"] = cfg.resolution;
  j["exponents"] = {{"s", e.s}, {"s1", e.s1}, {"s2", e.s2}, {"p", e.p}, {"q", e.q}, {"N", e.N}};
  j["f"] = {{"gamma", f.gamma},
            {"c1", f.c1},
            {"c2", f.c2},
            {"r", f.r},
            {"family", family_name(f.family)},
            {"weight", {{"a0", f.weight.a0}, {"a1", f.weight.a1}}},
            {"require_hf2", cfg.require_hf2}};
  j["g"] = {{"c3", cfg.convection.c3}, {"zeta", cfg.convection.zeta}};
  nlohmann::json so = {{"method", method_name(cfg.minimizer.method)},
                       {"tolerance", cfg.minimizer.tolerance},
                       {"max_iterations", cfg.minimizer.max_iterations},
                       {"shrink", cfg.minimizer.shrink},
                       {"sufficient_decrease", cfg.minimizer.sufficient_decrease},
                       {"lbfgs_memory", cfg.minimizer.lbfgs_memory},
                       {"theta", cfg.outer.theta},
                       {"min_theta", cfg.outer.min_theta},
                       {"outer_tolerance", cfg.outer.tolerance},
                       {"max_outer_iterations", cfg.outer.max_iterations},
                       {"ball_monitor", cfg.outer.ball_monitor},
                       {"ball_samples", cfg.outer.ball_samples},
                       {"padding", cfg.padding},
                       {"node_cap", cfg.node_cap},
                       {"uniqueness_probe", cfg.uniqueness_probe}};
  if (cfg.epsilon) so["epsilon"] = *cfg.epsilon;
  j["solver"] = so;
  j["seed"] = cfg.seed;
  j["cache"] = cfg.cache_dir;
  return j;
}

}  // namespace fracpq
