#pragma once

#include <cmath>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "fracpq/error.hpp"
#include "fracpq/gagliardo.hpp"
#include "fracpq/grid.hpp"
#include "fracpq/minimize.hpp"
#include "fracpq/reaction.hpp"

namespace fracpq {

/// Weight tables for the (s1, p) and (s2, q) operators on one grid.
struct ProblemTables {
  PairWeightTable first;
  PairWeightTable second;

  const Grid& grid() const { return first.grid(); }
  std::size_t size() const { return first.size(); }
};

inline std::shared_ptr<const ProblemTables> build_tables(const Grid& grid, const ProblemExponents& e,
                                                         const AssemblyOptions& opts = {}) {
  return std::make_shared<const ProblemTables>(
      ProblemTables{assemble_weights(grid, {e.s1, e.p}, opts), assemble_weights(grid, {e.s2, e.q}, opts)});
}

/// Discrete functional
///   J(u) = Phi_{s1,p}(u) + Phi_{s2,q}(u) - h^N sum_i [F(x_i, u_i) + b_i u_i]
/// where F is the truncated primitive (absent for torsion data) and b_i the
/// frozen convection g(x_i, xi_i) (or sigma for torsion data).
class FrozenProblem {
 public:
  FrozenProblem(std::shared_ptr<const ProblemTables> tables, std::optional<TruncatedReaction> trunc,
                std::vector<double> linear)
      : tables_(std::move(tables)), trunc_(std::move(trunc)), linear_(std::move(linear)) {
    if (!tables_) throw DomainError("frozen problem needs weight tables");
    if (linear_.size() != tables_->size()) throw DomainError("linear forcing does not match the grid");
    if (trunc_ && !trunc_->grid().same_as(tables_->grid())) throw DomainError("truncation lives on another grid");
    for (double b : linear_) {
      if (!std::isfinite(b)) throw InvariantError("non-finite forcing");
    }
    vol_ = tables_->grid().cell_volume();
  }

  const ProblemTables& tables() const { return *tables_; }
  std::shared_ptr<const ProblemTables> tables_ptr() const { return tables_; }
  const Grid& grid() const { return tables_->grid(); }
  std::size_t size() const { return tables_->size(); }
  const std::optional<TruncatedReaction>& truncation() const { return trunc_; }
  std::span<const double> linear() const { return linear_; }

  double value(std::span<const double> u) const {
    CompensatedSum reaction;
    for (std::size_t i = 0; i < u.size(); ++i) {
      if (trunc_) reaction.add(trunc_->primitive(i, u[i]));
      reaction.add(linear_[i] * u[i]);
    }
    return energy(u, tables_->first) + energy(u, tables_->second) - vol_ * reaction.value();
  }

  /// Nodal gradient; entry i is the weak-form residual against e_i.
  std::vector<double> gradient(std::span<const double> u) const {
    auto g = operator_gradient(u, tables_->first);
    const auto g2 = operator_gradient(u, tables_->second);
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double f = trunc_ ? trunc_->value(i, u[i]) : 0.0;
      g[i] += g2[i] - vol_ * (f + linear_[i]);
    }
    return g;
  }

  Eigen::MatrixXd hessian(std::span<const double> u) const {
    Eigen::MatrixXd H = operator_hessian(u, tables_->first) + operator_hessian(u, tables_->second);
    if (trunc_) {
      for (std::size_t i = 0; i < u.size(); ++i) {
        const auto k = static_cast<Eigen::Index>(i);
        H(k, k) -= vol_ * trunc_->derivative(i, u[i]);
      }
    }
    return H;
  }

 private:
  std::shared_ptr<const ProblemTables> tables_;
  std::optional<TruncatedReaction> trunc_;
  std::vector<double> linear_;
  double vol_ = 1.0;
};

/// Frozen problem (P_v): truncation at u̲ and convection g(., xi) with xi = D^s v.
inline FrozenProblem make_frozen_problem(std::shared_ptr<const ProblemTables> tables, TruncatedReaction trunc,
                                         const ConvectiveReaction& conv, const VectorField& xi) {
  const Grid& g = tables->grid();
  if (!xi.grid().same_as(g)) throw DomainError("convection field lives on another grid");
  std::vector<double> b;
  b.reserve(g.interior_count());
  for (std::size_t node : g.interior_nodes()) {
    const double comp[2] = {xi.at(node, 0), xi.dim() == 2 ? xi.at(node, 1) : 0.0};
    b.push_back(g_eval(conv, std::span<const double>(comp, static_cast<std::size_t>(xi.dim()))));
  }
  return FrozenProblem(std::move(tables), std::move(trunc), std::move(b));
}

/// Torsion data: constant forcing sigma, no reaction.
inline FrozenProblem make_torsion_problem(std::shared_ptr<const ProblemTables> tables, double sigma) {
  const std::size_t n = tables->size();
  return FrozenProblem(std::move(tables), std::nullopt, std::vector<double>(n, sigma));
}

inline double frozen_energy(const ScalarField& u, const FrozenProblem& prob) {
  return prob.value(u.interior_values());
}

/// Residual vector r_i of the weak form against the nodal basis.
inline std::vector<double> weak_residual_vector(const ScalarField& u, const FrozenProblem& prob) {
  return prob.gradient(u.interior_values());
}

/// ||r||_2 / sqrt(number of interior nodes)
inline double weak_residual(const ScalarField& u, const FrozenProblem& prob) {
  return scaled_norm(weak_residual_vector(u, prob));
}

struct FrozenSolution {
  ScalarField u;
  bool converged = false;
  int iterations = 0;
  double residual = 0.0;
  std::vector<double> energy_history;
  std::string message;
};

/// Minimizes J starting from `start` (the truncation level when omitted).
inline FrozenSolution solve_frozen(const FrozenProblem& prob, const MinimizerOptions& opts,
                                   const ScalarField* start = nullptr) {
  std::vector<double> x0;
  if (start) {
    x0 = start->interior_values();
  } else if (prob.truncation()) {
    const auto fl = prob.truncation()->floor_values();
    x0.assign(fl.begin(), fl.end());
  } else {
    x0.assign(prob.size(), 0.0);
  }
  auto res = minimize(prob, std::move(x0), opts);
  FrozenSolution out{ScalarField::from_interior(prob.grid(), res.x), res.converged, res.iterations, res.residual,
                     std::move(res.energy_history), std::move(res.message)};
  return out;
}

struct UniquenessProbe {
  bool skipped = false;
  bool conclusive = false;
  double discrepancy = 0.0;
  std::string note;
};

/// Solves from u̲ and from 10 u̲ + bump and compares the results in max norm.
inline UniquenessProbe uniqueness_probe(const FrozenProblem& prob, const MinimizerOptions& opts, bool hf2_certified) {
  UniquenessProbe out;
  if (!hf2_certified) {
    out.skipped = true;
    out.note = "f/t^(q-1) is not strictly decreasing; uniqueness is not expected";
    return out;
  }
  if (!prob.truncation()) throw DomainError("uniqueness probe needs a truncated reaction");
  const Grid& g = prob.grid();
  const auto fl = prob.truncation()->floor_values();
  const auto d = distance_field(g);
  double dmax = 0.0;
  for (std::size_t node : g.interior_nodes()) dmax = std::max(dmax, d[node]);
  std::vector<double> second(fl.size());
  const auto& nodes = g.interior_nodes();
  for (std::size_t i = 0; i < fl.size(); ++i) second[i] = 10.0 * fl[i] + d[nodes[i]] / dmax;
  const auto start2 = ScalarField::from_interior(g, second);
  const auto a = solve_frozen(prob, opts);
  const auto b = solve_frozen(prob, opts, &start2);
  out.conclusive = a.converged && b.converged;
  if (!out.conclusive) out.note = "a frozen solve did not converge";
  for (std::size_t node : nodes) out.discrepancy = std::max(out.discrepancy, std::abs(a.u[node] - b.u[node]));
  return out;
}

}  // namespace fracpq
