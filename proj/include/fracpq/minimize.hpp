#pragma once

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "fracpq/error.hpp"
#include "fracpq/numerics.hpp"

namespace fracpq {

enum class MinimizerMethod { automatic, newton, lbfgs, gradient_descent };

inline const char* method_name(MinimizerMethod m) {
  switch (m) {
    case MinimizerMethod::automatic: return "auto";
    case MinimizerMethod::newton: return "newton";
    case MinimizerMethod::lbfgs: return "lbfgs";
    case MinimizerMethod::gradient_descent: return "gradient_descent";
  }
  return "auto";
}

struct MinimizerOptions {
  MinimizerMethod method = MinimizerMethod::automatic;
  int max_iterations = 5000;
  /// Stop when ||grad||_2 / sqrt(n) falls below this.
  double tolerance = 1e-6;
  double shrink = 0.5;
  double sufficient_decrease = 1e-4;
  double initial_step = 1.0;
  int lbfgs_memory = 10;
  /// automatic picks Newton up to this many unknowns, L-BFGS above.
  std::size_t dense_limit = 1500;

  void validate() const {
    if (!(tolerance > 0.0)) throw DomainError("minimizer tolerance must be positive");
    if (!(shrink > 0.0 && shrink < 1.0)) throw DomainError("backtracking shrink must lie in (0, 1)");
    if (!(sufficient_decrease > 0.0 && sufficient_decrease < 0.5)) {
      throw DomainError("sufficient-decrease constant must lie in (0, 0.5)");
    }
    if (max_iterations < 1) throw DomainError("max_iterations must be positive");
    if (!(initial_step > 0.0)) throw DomainError("initial step must be positive");
  }
};

struct MinimizeResult {
  std::vector<double> x;
  bool converged = false;
  int iterations = 0;
  double residual = std::numeric_limits<double>::infinity();
  std::vector<double> energy_history;
  std::string message;
};

namespace detail {

inline void require_finite(double v, const char* what) {
  if (!std::isfinite(v)) throw InvariantError(std::string("non-finite ") + what + " entered the optimizer");
}
inline void require_finite(const std::vector<double>& v, const char* what) {
  for (double x : v) require_finite(x, what);
}

inline double dot(const std::vector<double>& a, const std::vector<double>& b) {
  CompensatedSum s;
  for (std::size_t i = 0; i < a.size(); ++i) s.add(a[i] * b[i]);
  return s.value();
}

/// Solves H d = -g; shifts H by a multiple of the identity until Cholesky works.
inline std::vector<double> newton_direction(Eigen::MatrixXd H, const std::vector<double>& g) {
  const auto n = static_cast<Eigen::Index>(g.size());
  Eigen::VectorXd rhs(n);
  for (Eigen::Index i = 0; i < n; ++i) rhs(i) = -g[static_cast<std::size_t>(i)];
  // A vanishing Hessian (degenerate p, q > 2 at a constant state) gives no
  // usable curvature; the caller falls back to steepest descent.
  const double scale = H.diagonal().cwiseAbs().maxCoeff();
  if (!(scale > 0.0)) return {};
  double shift = 0.0;
  for (int attempt = 0; attempt < 40; ++attempt) {
    Eigen::MatrixXd A = H;
    if (shift > 0.0) A.diagonal().array() += shift;
    Eigen::LLT<Eigen::MatrixXd> llt(A);
    if (llt.info() == Eigen::Success) {
      Eigen::VectorXd d = llt.solve(rhs);
      if (d.allFinite()) return std::vector<double>(d.data(), d.data() + n);
    }
    shift = shift == 0.0 ? 1e-12 * scale : shift * 10.0;
  }
  return {};
}

}  // namespace detail

/// Rounding level of an energy value; increases below it are not resolvable.
inline double energy_noise(double f) { return 64.0 * std::numeric_limits<double>::epsilon() * std::max(1.0, std::abs(f)); }

/// Minimizes a smooth functional with a backtracking (Armijo) line search.
///
/// Problem must provide value(x), gradient(x) and, for Newton, hessian(x)
/// returning an Eigen::MatrixXd. Accepted steps never increase the value by more
/// than energy_noise.
template <class Problem>
MinimizeResult minimize(const Problem& problem, std::vector<double> x, const MinimizerOptions& opts) {
  opts.validate();
  MinimizerMethod method = opts.method;
  if (method == MinimizerMethod::automatic) {
    method = x.size() <= opts.dense_limit ? MinimizerMethod::newton : MinimizerMethod::lbfgs;
  }
  MinimizeResult res;
  double fx = problem.value(x);
  detail::require_finite(fx, "energy");
  std::vector<double> g = problem.gradient(x);
  detail::require_finite(g, "gradient");
  res.energy_history.push_back(fx);
  res.residual = scaled_norm(g);

  std::deque<std::pair<std::vector<double>, std::vector<double>>> memory;  // (s, y) pairs
  double last_step = opts.initial_step;
  std::vector<double> trial(x.size());

  for (int it = 0; it < opts.max_iterations; ++it) {
    if (res.residual < opts.tolerance) {
      res.converged = true;
      break;
    }
    std::vector<double> d;
    if (method == MinimizerMethod::newton) {
      d = detail::newton_direction(problem.hessian(x), g);
    } else if (method == MinimizerMethod::lbfgs && !memory.empty()) {
      d = g;
      std::vector<double> alpha(memory.size());
      for (std::size_t k = memory.size(); k-- > 0;) {
        const auto& [s, y] = memory[k];
        alpha[k] = detail::dot(s, d) / detail::dot(y, s);
        for (std::size_t i = 0; i < d.size(); ++i) d[i] -= alpha[k] * y[i];
      }
      const auto& [s_last, y_last] = memory.back();
      const double gamma = detail::dot(s_last, y_last) / detail::dot(y_last, y_last);
      for (auto& v : d) v *= gamma;
      for (std::size_t k = 0; k < memory.size(); ++k) {
        const auto& [s, y] = memory[k];
        const double beta = detail::dot(y, d) / detail::dot(y, s);
        for (std::size_t i = 0; i < d.size(); ++i) d[i] += (alpha[k] - beta) * s[i];
      }
      for (auto& v : d) v = -v;
    }
    double slope = d.empty() ? 0.0 : detail::dot(g, d);
    if (d.empty() || !(slope < 0.0)) {
      d = g;
      for (auto& v : d) v = -v;
      slope = detail::dot(g, d);
      memory.clear();
    }

    double step = method == MinimizerMethod::gradient_descent ? std::min(2.0 * last_step, 1e12) : opts.initial_step;
    if (method == MinimizerMethod::gradient_descent && it == 0) step = opts.initial_step;
    double f_new = fx;
    bool accepted = false;
    for (int bt = 0; bt < 80; ++bt) {
      // a predicted decrease below rounding level cannot be verified
      if (-step * slope < energy_noise(fx)) break;
      for (std::size_t i = 0; i < x.size(); ++i) trial[i] = x[i] + step * d[i];
      f_new = problem.value(trial);
      if (std::isfinite(f_new) && f_new <= fx + opts.sufficient_decrease * step * slope) {
        accepted = true;
        break;
      }
      step *= opts.shrink;
    }
    std::vector<double> g_new;
    if (!accepted) {
      // Near the minimum the energy difference drowns in rounding; accept a
      // step that lowers the gradient without raising the energy beyond
      // rounding level.
      step = opts.initial_step;
      for (int bt = 0; bt < 10 && !accepted; ++bt) {
        for (std::size_t i = 0; i < x.size(); ++i) trial[i] = x[i] + step * d[i];
        f_new = problem.value(trial);
        if (std::isfinite(f_new) && f_new <= fx + energy_noise(fx)) {
          g_new = problem.gradient(trial);
          if (scaled_norm(g_new) < res.residual) accepted = true;
        }
        step *= opts.shrink;
      }
      if (!accepted) {
        res.message = "line search failed";
        break;
      }
      step /= opts.shrink;
    } else {
      g_new = problem.gradient(trial);
    }
    detail::require_finite(f_new, "energy");
    detail::require_finite(g_new, "gradient");
    if (f_new > fx + energy_noise(fx)) throw InvariantError("accepted step increased the energy");

    if (method == MinimizerMethod::lbfgs) {
      std::vector<double> s(x.size()), y(x.size());
      for (std::size_t i = 0; i < x.size(); ++i) {
        s[i] = trial[i] - x[i];
        y[i] = g_new[i] - g[i];
      }
      if (detail::dot(s, y) > 1e-300) {
        memory.emplace_back(std::move(s), std::move(y));
        if (memory.size() > static_cast<std::size_t>(opts.lbfgs_memory)) memory.pop_front();
      }
    }
    last_step = step;
    x.swap(trial);
    g.swap(g_new);
    fx = f_new;
    res.energy_history.push_back(fx);
    res.residual = scaled_norm(g);
    res.iterations = it + 1;
  }
  if (!res.converged && res.residual < opts.tolerance) res.converged = true;
  if (!res.converged && res.message.empty()) res.message = "iteration limit reached";
  res.x = std::move(x);
  return res;
}

}  // namespace fracpq
