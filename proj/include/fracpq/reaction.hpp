#pragma once

#include <cmath>
#include <limits>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "fracpq/error.hpp"
#include "fracpq/grid.hpp"

namespace fracpq {

/// Orders and exponents of one problem instance. N is the space dimension
/// the hypotheses are checked against.
struct ProblemExponents {
  double s = 0.5;
  double s1 = 0.6;
  double s2 = 0.4;
  double p = 3.0;
  double q = 2.5;
  int N = 2;

  double p_conj() const { return p / (p - 1.0); }
  double q_conj() const { return q / (q - 1.0); }
};

enum class ReactionFamily {
  singular,  // c1 t^{-gamma} + c2 t^r
  bounded,   // c1 (1 + t)^{-gamma} + c2 t^r
};

inline const char* family_name(ReactionFamily f) { return f == ReactionFamily::singular ? "singular" : "bounded"; }

/// Multiplicative weight a(x) = a0 + a1 |x|^2 on the reaction.
struct ReactionWeight {
  double a0 = 1.0;
  double a1 = 0.0;

  double operator()(const Point& x) const { return a0 + a1 * (x[0] * x[0] + x[1] * x[1]); }
  bool constant() const { return a1 == 0.0; }
  /// Lower bound over any domain (a1 >= 0).
  double minimum() const { return a0; }
  void validate() const {
    if (!(a0 > 0.0) || !(a1 >= 0.0) || !std::isfinite(a0) || !std::isfinite(a1)) {
      throw DomainError("reaction weight needs a0 > 0 and a1 >= 0");
    }
  }
};

struct SingularReaction {
  double gamma = 0.5;
  double c1 = 1.0;
  double c2 = 0.5;
  double r = 1.2;
  ReactionFamily family = ReactionFamily::singular;
  ReactionWeight weight;

  /// lim inf_{t -> 0+} of the unweighted f.
  double limit_at_zero() const {
    return family == ReactionFamily::singular ? std::numeric_limits<double>::infinity() : c1;
  }
};

struct ConvectiveReaction {
  double c3 = 0.1;
  double zeta = 1.5;
};

/// Unweighted reaction and its t-derivative.
inline double f_base(const SingularReaction& f, double t) {
  if (f.family == ReactionFamily::singular) {
    if (!(t > 0.0)) throw DomainError("singular reaction needs t > 0");
    return f.c1 * std::pow(t, -f.gamma) + f.c2 * std::pow(t, f.r);
  }
  if (!(t >= 0.0)) throw DomainError("bounded reaction needs t >= 0");
  return f.c1 * std::pow(1.0 + t, -f.gamma) + f.c2 * std::pow(t, f.r);
}

inline double f_base_prime(const SingularReaction& f, double t) {
  if (!(t > 0.0)) throw DomainError("reaction derivative needs t > 0");
  const double power = f.c2 * f.r * std::pow(t, f.r - 1.0);
  if (f.family == ReactionFamily::singular) return -f.gamma * f.c1 * std::pow(t, -f.gamma - 1.0) + power;
  return -f.gamma * f.c1 * std::pow(1.0 + t, -f.gamma - 1.0) + power;
}

/// Antiderivative of the unweighted f between a and b (0 < a <= b).
inline double f_base_integral(const SingularReaction& f, double a, double b) {
  const double g1 = 1.0 - f.gamma;
  const double power = f.c2 * (std::pow(b, f.r + 1.0) - std::pow(a, f.r + 1.0)) / (f.r + 1.0);
  if (f.family == ReactionFamily::singular) return f.c1 * (std::pow(b, g1) - std::pow(a, g1)) / g1 + power;
  return f.c1 * (std::pow(1.0 + b, g1) - std::pow(1.0 + a, g1)) / g1 + power;
}

inline double f_eval(const SingularReaction& f, const Point& x, double t) { return f.weight(x) * f_base(f, t); }

inline double g_eval(const ConvectiveReaction& g, std::span<const double> xi) {
  double n2 = 0.0;
  for (double c : xi) n2 += c * c;
  return g.c3 * (1.0 + std::pow(std::sqrt(n2), g.zeta));
}

/// f(x, max{floor(x), t}) at the interior nodes of a grid.
class TruncatedReaction {
 public:
  TruncatedReaction(SingularReaction base, const ScalarField& floor) : base_(base), grid_(floor.grid()) {
    for (std::size_t node : grid_.interior_nodes()) {
      const double v = floor[node];
      if (!(v > 0.0) || !std::isfinite(v)) throw InvariantError("truncation level must be positive at interior nodes");
      floor_.push_back(v);
      const double a = base_.weight(grid_.coord(node));
      weight_.push_back(a);
      at_floor_.push_back(a * f_base(base_, v));
    }
  }

  const SingularReaction& base() const { return base_; }
  const Grid& grid() const { return grid_; }
  std::size_t size() const { return floor_.size(); }
  double floor(std::size_t i) const { return floor_[i]; }
  std::span<const double> floor_values() const { return floor_; }

  double value(std::size_t i, double t) const {
    return t <= floor_[i] ? at_floor_[i] : weight_[i] * f_base(base_, t);
  }
  /// Right derivative in t.
  double derivative(std::size_t i, double t) const {
    return t < floor_[i] ? 0.0 : weight_[i] * f_base_prime(base_, t);
  }
  /// Integral of value(i, .) from 0 to tau.
  double primitive(std::size_t i, double tau) const {
    if (tau <= floor_[i]) return at_floor_[i] * tau;
    return at_floor_[i] * floor_[i] + weight_[i] * f_base_integral(base_, floor_[i], tau);
  }

 private:
  SingularReaction base_;
  Grid grid_;
  std::vector<double> floor_, weight_, at_floor_;
};

inline double f_truncated(const TruncatedReaction& tr, std::size_t interior_index, double t) {
  return tr.value(interior_index, t);
}
inline double F_truncated(const TruncatedReaction& tr, std::size_t interior_index, double tau) {
  return tr.primitive(interior_index, tau);
}

// ---------------------------------------------------------------------------

enum class Severity { error, warning };

struct HypothesisCheck {
  std::string name;        // e.g. "2<q<p<N/s1"
  bool passed = true;
  Severity severity = Severity::error;
  std::string detail;
};

struct HypothesisReport {
  std::vector<HypothesisCheck> checks;

  bool ok() const {
    for (const auto& c : checks) {
      if (!c.passed && c.severity == Severity::error) return false;
    }
    return true;
  }
  /// First failing error-level check, or nullptr.
  const HypothesisCheck* first_failure() const {
    for (const auto& c : checks) {
      if (!c.passed && c.severity == Severity::error) return &c;
    }
    return nullptr;
  }
  const HypothesisCheck* find(const std::string& name) const {
    for (const auto& c : checks) {
      if (c.name == name) return &c;
    }
    return nullptr;
  }
};

struct HypothesisOptions {
  /// Also demand the existence-theorem conditions q' s2 != s1 and s1 < 1/(p' gamma).
  bool main_theorem = true;
  /// Treat strict decrease of f(t)/t^{q-1} as an error instead of a warning.
  bool require_hf2 = false;
  /// A zero convection constant is accepted (with a warning) as the decoupled limit.
  bool allow_zero_c3 = true;
};

/// Samples t -> f(t)/t^{q-1} on 200 log-spaced points in [1e-6, 1e6]. Each
/// step must drop by a relative 1e-9, so a ratio that flattens to a constant
/// (r = q - 1) counts as a failure.
inline bool hf2_holds(const SingularReaction& f, double q) {
  double prev = std::numeric_limits<double>::infinity();
  for (int k = 0; k < 200; ++k) {
    const double t = std::pow(10.0, -6.0 + 12.0 * k / 199.0);
    const double ratio = f_base(f, t) / std::pow(t, q - 1.0);
    if (!(ratio < prev * (1.0 - 1e-9))) return false;
    prev = ratio;
  }
  return true;
}

inline HypothesisReport check_hypotheses(const ProblemExponents& e, const SingularReaction& f,
                                         const ConvectiveReaction& g, const HypothesisOptions& opts = {}) {
  HypothesisReport rep;
  auto add = [&rep](std::string name, bool ok, std::string detail, Severity sev = Severity::error) {
    rep.checks.push_back({std::move(name), ok, sev, std::move(detail)});
  };
  auto num = [](double v) {
    std::ostringstream os;
    os.precision(6);
    os << v;
    return os.str();
  };
  add("0<s2<=s<=s1<=1", e.s2 > 0.0 && e.s2 <= e.s && e.s <= e.s1 && e.s1 <= 1.0,
      "s2=" + num(e.s2) + " s=" + num(e.s) + " s1=" + num(e.s1));
  add("2<q<p<N/s1", 2.0 < e.q && e.q < e.p && e.s1 > 0.0 && e.p < e.N / e.s1,
      "q=" + num(e.q) + " p=" + num(e.p) + " N/s1=" + num(e.N / e.s1));
  add("s1*p>1", e.s1 * e.p > 1.0, "s1*p=" + num(e.s1 * e.p));
  add("0<gamma<1", f.gamma > 0.0 && f.gamma < 1.0, "gamma=" + num(f.gamma));
  add("c1>0,c2>0", f.c1 > 0.0 && f.c2 > 0.0, "c1=" + num(f.c1) + " c2=" + num(f.c2));
  add("1<r<p-1", f.r > 1.0 && f.r < e.p - 1.0, "r=" + num(f.r) + " p-1=" + num(e.p - 1.0));
  if (g.c3 == 0.0 && opts.allow_zero_c3) {
    add("c3>0", false, "c3=0: convection switched off", Severity::warning);
  } else {
    add("c3>0", g.c3 > 0.0, "c3=" + num(g.c3));
  }
  add("1<zeta<p-1", g.zeta > 1.0 && g.zeta < e.p - 1.0, "zeta=" + num(g.zeta) + " p-1=" + num(e.p - 1.0));
  if (opts.main_theorem) {
    const double qs2 = e.q_conj() * e.s2;
    add("q'*s2!=s1", std::abs(qs2 - e.s1) > 1e-12, "q'*s2=" + num(qs2) + " s1=" + num(e.s1));
    const double bound = 1.0 / (e.p_conj() * f.gamma);
    add("s1<1/(p'*gamma)", e.s1 < bound, "s1=" + num(e.s1) + " 1/(p'*gamma)=" + num(bound));
  }
  bool hf2 = false;
  if (f.c1 > 0.0 && f.gamma > 0.0 && e.q > 1.0) {
    try {
      hf2 = hf2_holds(f, e.q);
    } catch (const Error&) {
      hf2 = false;
    }
  }
  add("f/t^(q-1) strictly decreasing", hf2, hf2 ? "sampled on 200 log-spaced points" : "not strictly decreasing",
      opts.require_hf2 ? Severity::error : Severity::warning);
  return rep;
}

}  // namespace fracpq
