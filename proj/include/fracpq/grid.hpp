#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <memory>
#include <span>
#include <sstream>
#include <string>
#include <type_traits>
#include <variant>
#include <vector>

#include "fracpq/error.hpp"
#include "fracpq/numerics.hpp"

namespace fracpq {

using Point = std::array<double, 2>;

struct Interval {
  double a = 0.0;
  double b = 1.0;
};

struct Rectangle {
  double a1 = 0.0, b1 = 1.0;
  double a2 = 0.0, b2 = 1.0;
};

struct Disk {
  Point center{0.0, 0.0};
  double radius = 1.0;
};

/// Bounded domain in 1 or 2 dimensions.
using Domain = std::variant<Interval, Rectangle, Disk>;

inline int dimension(const Domain& d) { return std::holds_alternative<Interval>(d) ? 1 : 2; }

inline void validate(const Domain& d) {
  std::visit(
      [](const auto& s) {
        using T = std::decay_t<decltype(s)>;
        auto finite = [](double v) { return std::isfinite(v); };
        if constexpr (std::is_same_v<T, Interval>) {
          if (!finite(s.a) || !finite(s.b) || !(s.a < s.b)) throw DomainError("interval needs a < b");
        } else if constexpr (std::is_same_v<T, Rectangle>) {
          if (!finite(s.a1) || !finite(s.b1) || !finite(s.a2) || !finite(s.b2) || !(s.a1 < s.b1) ||
              !(s.a2 < s.b2)) {
            throw DomainError("rectangle needs a1 < b1 and a2 < b2");
          }
        } else {
          if (!finite(s.center[0]) || !finite(s.center[1]) || !finite(s.radius) || !(s.radius > 0.0)) {
            throw DomainError("disk needs a positive radius");
          }
        }
      },
      d);
}

/// Canonical text form, stable across runs (used in cache keys and reports).
inline std::string describe(const Domain& d) {
  std::ostringstream os;
  os.precision(17);
  std::visit(
      [&os](const auto& s) {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, Interval>) {
          os << "interval(" << s.a << "," << s.b << ")";
        } else if constexpr (std::is_same_v<T, Rectangle>) {
          os << "rectangle(" << s.a1 << "," << s.b1 << "," << s.a2 << "," << s.b2 << ")";
        } else {
          os << "disk(" << s.center[0] << "," << s.center[1] << "," << s.radius << ")";
        }
      },
      d);
  return os.str();
}

/// Uniform Cartesian grid over the bounding box of a domain. Copies share the
/// same immutable node data.
class Grid {
 public:
  static constexpr int kExterior = -1;

  int dim() const { return s_->dim; }
  int resolution() const { return s_->n; }
  std::size_t node_count() const { return s_->mask.size(); }
  std::size_t interior_count() const { return s_->interior.size(); }
  double spacing(int axis = 0) const { return s_->h[static_cast<std::size_t>(axis)]; }
  bool isotropic() const { return s_->dim == 1 || s_->h[0] == s_->h[1]; }
  double cell_volume() const { return s_->dim == 1 ? s_->h[0] : s_->h[0] * s_->h[1]; }
  const Domain& domain() const { return s_->domain; }
  Point lower() const { return s_->lo; }

  /// Node coordinate, lexicographic ordering with x fastest.
  Point coord(std::size_t node) const {
    const auto [i, j] = index2(node);
    return {s_->lo[0] + s_->h[0] * i, s_->dim == 2 ? s_->lo[1] + s_->h[1] * j : 0.0};
  }
  std::array<int, 2> index2(std::size_t node) const {
    const int n = s_->n;
    return {static_cast<int>(node % static_cast<std::size_t>(n)),
            static_cast<int>(node / static_cast<std::size_t>(n))};
  }
  std::size_t node_at(int i, int j = 0) const {
    return static_cast<std::size_t>(i) + static_cast<std::size_t>(j) * static_cast<std::size_t>(s_->n);
  }

  bool is_interior(std::size_t node) const { return s_->mask[node] != 0; }
  /// Position of a node in the interior list, or kExterior.
  int interior_index(std::size_t node) const { return s_->interior_index[node]; }
  const std::vector<std::size_t>& interior_nodes() const { return s_->interior; }

  /// True when the boundary is not C^{1,1} (rectangle corners).
  bool has_corners() const { return std::holds_alternative<Rectangle>(s_->domain); }

  bool same_as(const Grid& o) const {
    return s_ == o.s_ || (s_->n == o.s_->n && describe(s_->domain) == describe(o.s_->domain));
  }

  friend Grid build_grid(const Domain& domain, int resolution);

 private:
  struct State {
    Domain domain;
    int dim = 1;
    int n = 0;
    Point lo{0.0, 0.0};
    Point h{0.0, 0.0};
    std::vector<std::uint8_t> mask;
    std::vector<std::size_t> interior;
    std::vector<int> interior_index;
  };
  std::shared_ptr<const State> s_;
};

/// Builds the grid of `resolution` nodes per axis on the bounding box of the
/// domain. Interior nodes lie strictly inside the domain.
inline Grid build_grid(const Domain& domain, int resolution) {
  validate(domain);
  if (resolution < 3) throw DomainError("resolution must be at least 3");
  auto st = std::make_shared<Grid::State>();
  st->domain = domain;
  st->dim = dimension(domain);
  st->n = resolution;
  const double steps = resolution - 1;
  std::visit(
      [&](const auto& s) {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, Interval>) {
          st->lo = {s.a, 0.0};
          st->h = {(s.b - s.a) / steps, 0.0};
        } else if constexpr (std::is_same_v<T, Rectangle>) {
          st->lo = {s.a1, s.a2};
          st->h = {(s.b1 - s.a1) / steps, (s.b2 - s.a2) / steps};
        } else {
          st->lo = {s.center[0] - s.radius, s.center[1] - s.radius};
          st->h = {2.0 * s.radius / steps, 2.0 * s.radius / steps};
        }
      },
      domain);
  const std::size_t count =
      st->dim == 1 ? static_cast<std::size_t>(resolution)
                   : static_cast<std::size_t>(resolution) * static_cast<std::size_t>(resolution);
  st->mask.assign(count, 0);
  st->interior_index.assign(count, Grid::kExterior);
  const int n = resolution;
  for (std::size_t node = 0; node < count; ++node) {
    const int i = static_cast<int>(node % static_cast<std::size_t>(n));
    const int j = static_cast<int>(node / static_cast<std::size_t>(n));
    bool inside = false;
    if (const auto* disk = std::get_if<Disk>(&domain)) {
      const double x = st->lo[0] + st->h[0] * i - disk->center[0];
      const double y = st->lo[1] + st->h[1] * j - disk->center[1];
      inside = std::hypot(x, y) < disk->radius * (1.0 - 1e-12);
    } else if (st->dim == 1) {
      inside = i > 0 && i < n - 1;
    } else {
      inside = i > 0 && i < n - 1 && j > 0 && j < n - 1;
    }
    if (inside) {
      st->mask[node] = 1;
      st->interior_index[node] = static_cast<int>(st->interior.size());
      st->interior.push_back(node);
    }
  }
  if (st->interior.empty()) throw DomainError("grid has no interior nodes");
  Grid g;
  g.s_ = std::move(st);
  return g;
}

/// Nodal values on a grid; identically zero outside the domain.
class ScalarField {
 public:
  explicit ScalarField(Grid grid) : grid_(std::move(grid)), v_(grid_.node_count(), 0.0) {}

  /// Takes values for every grid node; exterior entries are zeroed.
  ScalarField(Grid grid, std::vector<double> values) : grid_(std::move(grid)), v_(std::move(values)) {
    if (v_.size() != grid_.node_count()) throw DomainError("field size does not match grid");
    for (std::size_t k = 0; k < v_.size(); ++k) {
      if (!grid_.is_interior(k)) v_[k] = 0.0;
    }
  }

  static ScalarField from_interior(const Grid& grid, std::span<const double> interior) {
    if (interior.size() != grid.interior_count()) throw DomainError("interior vector size mismatch");
    ScalarField f(grid);
    const auto& nodes = grid.interior_nodes();
    for (std::size_t k = 0; k < nodes.size(); ++k) f.v_[nodes[k]] = interior[k];
    return f;
  }

  template <class F>
  static ScalarField from_function(const Grid& grid, F&& fn) {
    ScalarField f(grid);
    for (std::size_t node : grid.interior_nodes()) f.v_[node] = fn(grid.coord(node));
    return f;
  }

  const Grid& grid() const { return grid_; }
  std::size_t size() const { return v_.size(); }
  double operator[](std::size_t node) const { return v_[node]; }

  /// Writes a nodal value; nonzero writes to exterior nodes are rejected.
  void set(std::size_t node, double value) {
    if (!grid_.is_interior(node) && value != 0.0) {
      throw InvariantError("nonzero write to a node outside the domain");
    }
    v_[node] = value;
  }

  std::span<const double> values() const { return v_; }

  std::vector<double> interior_values() const {
    std::vector<double> out;
    out.reserve(grid_.interior_count());
    for (std::size_t node : grid_.interior_nodes()) out.push_back(v_[node]);
    return out;
  }

 private:
  Grid grid_;
  std::vector<double> v_;
};

/// a*u + b*w on the same grid.
inline ScalarField combine(double a, const ScalarField& u, double b, const ScalarField& w) {
  if (!u.grid().same_as(w.grid())) throw DomainError("fields live on different grids");
  std::vector<double> out(u.size());
  for (std::size_t k = 0; k < out.size(); ++k) out[k] = a * u[k] + b * w[k];
  return ScalarField(u.grid(), std::move(out));
}

/// dim() reals per grid node.
class VectorField {
 public:
  explicit VectorField(Grid grid)
      : grid_(std::move(grid)), v_(grid_.node_count() * static_cast<std::size_t>(grid_.dim()), 0.0) {}

  const Grid& grid() const { return grid_; }
  int dim() const { return grid_.dim(); }
  double at(std::size_t node, int comp) const { return v_[node * static_cast<std::size_t>(dim()) + comp]; }
  void set(std::size_t node, int comp, double value) {
    if (!std::isfinite(value)) throw InvariantError("non-finite vector field entry");
    v_[node * static_cast<std::size_t>(dim()) + comp] = value;
  }
  double norm_at(std::size_t node) const {
    return dim() == 1 ? std::abs(at(node, 0)) : std::hypot(at(node, 0), at(node, 1));
  }
  std::span<const double> values() const { return v_; }

 private:
  Grid grid_;
  std::vector<double> v_;
};

/// Euclidean distance to the boundary at interior nodes, 0 elsewhere.
inline ScalarField distance_field(const Grid& grid) {
  return ScalarField::from_function(grid, [&grid](const Point& x) {
    return std::visit(
        [&x](const auto& s) -> double {
          using T = std::decay_t<decltype(s)>;
          if constexpr (std::is_same_v<T, Interval>) {
            return std::min(x[0] - s.a, s.b - x[0]);
          } else if constexpr (std::is_same_v<T, Rectangle>) {
            return std::min(std::min(x[0] - s.a1, s.b1 - x[0]), std::min(x[1] - s.a2, s.b2 - x[1]));
          } else {
            return s.radius - std::hypot(x[0] - s.center[0], x[1] - s.center[1]);
          }
        },
        grid.domain());
  });
}

/// Cell-volume weighted sum over interior values.
inline double integrate_interior(const Grid& grid, std::span<const double> interior) {
  return grid.cell_volume() * compensated_sum(interior);
}

inline double integrate(const ScalarField& field) {
  const auto& g = field.grid();
  CompensatedSum s;
  for (std::size_t node : g.interior_nodes()) s.add(field[node]);
  return g.cell_volume() * s.value();
}

/// Discrete L^p norm over the domain; p = infinity gives the max norm.
inline double lp_norm(const ScalarField& field, double p) {
  if (!(p >= 1.0)) throw DomainError("lp_norm needs p >= 1");
  const auto& g = field.grid();
  if (std::isinf(p)) {
    double m = 0.0;
    for (std::size_t node : g.interior_nodes()) m = std::max(m, std::abs(field[node]));
    return m;
  }
  CompensatedSum s;
  for (std::size_t node : g.interior_nodes()) s.add(std::pow(std::abs(field[node]), p));
  return std::pow(g.cell_volume() * s.value(), 1.0 / p);
}

}  // namespace fracpq
