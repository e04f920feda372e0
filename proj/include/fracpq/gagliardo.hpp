#pragma once

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "fracpq/error.hpp"
#include "fracpq/grid.hpp"
#include "fracpq/numerics.hpp"
#include "fracpq/quadrature.hpp"

namespace fracpq {

/// Order s and integrability exponent p of one (-Delta)^s_p term.
struct OperatorParams {
  double s = 0.5;
  double p = 2.0;

  void validate() const {
    if (!(s > 0.0 && s < 1.0)) throw DomainError("operator needs 0 < s < 1");
    if (!(p > 1.0)) throw DomainError("operator needs p > 1");
  }
  double sp() const { return s * p; }
};

struct AssemblyOptions {
  /// Largest admissible number of interior nodes.
  std::size_t node_cap = 4096;
  /// Directory for the binary weight cache; empty disables caching.
  std::string cache_dir;
};

namespace detail {

// ---- unit-spacing offset weights ------------------------------------------
//
// For an integer offset k != 0 the weight of the pair (i, i + k) on a grid of
// unit spacing is
//
//   w(k) = int_{C_0} int_{C_k} (|(y - x).k| / |k|^2)^p |x - y|^{-(N + sp)},
//
// i.e. the exact cell-pair energy of a field that varies linearly along k
// with unit jump. On spacing h the weight scales by h^{N - sp}. The
// direction-averaged self-cell energy of a linear field is added to the 2N
// axis neighbours.

/// 1D: w(k) = [G(k+1) - 2G(k) + G(k-1)] / k^p, G(t) = t^m/((a+1)(a+2)).
inline double unit_weight_1d(int k, double p, double sp) {
  const double a = p - 1.0 - sp;
  const double m = a + 2.0;
  const double denom = (a + 1.0) * (a + 2.0);
  const double kk = static_cast<double>(std::abs(k));
  double second_diff;
  if (kk < 20.0) {
    second_diff = std::pow(kk + 1.0, m) - 2.0 * std::pow(kk, m) + std::pow(kk - 1.0, m);
  } else {
    // (1 + 1/k)^m - 2 + (1 - 1/k)^m = 2 sum_{j even} binom(m, j) k^{-j}
    double binom = 1.0, series = 0.0, inv = 1.0;
    for (int j = 1; j <= 12; ++j) {
      binom *= (m - (j - 1)) / j;
      inv /= kk;
      if (j % 2 == 0) series += 2.0 * binom * inv;
    }
    second_diff = std::pow(kk, m) * series;
  }
  return second_diff / denom / std::pow(kk, p);
}

inline double self_correction_1d(double p, double sp) {
  const double a = p - 1.0 - sp;
  return 1.0 / ((a + 1.0) * (a + 2.0));
}

/// Integral over one tent quadrant box whose corner sits at the kernel
/// singularity z' = k + z = 0. With z' = u (sx ex, sy ey), (ex, ey) = (1, v)
/// or (v, 1), the radial factor is u^c and the tent is quadratic in u, so the
/// u-integral is exact; v uses Gauss-Legendre.
inline double singular_box_2d(std::array<int, 2> k, std::array<int, 2> sigma, double p, double sp,
                              bool project) {
  const double c = p - 1.0 - sp;  // radial power incl. Jacobian
  const double k2 = static_cast<double>(k[0] * k[0] + k[1] * k[1]);
  // sign of z_d inside the box: z_d = sigma_d * X_d - k_d with X_d in (0, 1)
  const double s1 = (0.5 * sigma[0] - k[0]) > 0 ? 1.0 : -1.0;
  const double s2 = (0.5 * sigma[1] - k[1]) > 0 ? 1.0 : -1.0;
  // 1 - |z_d| = (1 + s_d k_d) - s_d sigma_d X_d
  const double a0 = 1.0 + s1 * k[0], a1 = s1 * sigma[0];
  const double b0 = 1.0 + s2 * k[1], b1 = s2 * sigma[1];
  const double expo = project ? -(2.0 + sp) / 2.0 : (p - 2.0 - sp) / 2.0;
  const auto& rule = quad::gauss30();
  double total = 0.0;
  for (int tri = 0; tri < 2; ++tri) {
    double acc = 0.0;
    for (std::size_t i = 0; i < rule.x.size(); ++i) {
      const double v = rule.x[i];
      const double ex = tri == 0 ? 1.0 : v;
      const double ey = tri == 0 ? v : 1.0;
      double ang = std::pow(ex * ex + ey * ey, expo);
      if (project) ang *= std::pow(std::abs(sigma[0] * ex * k[0] + sigma[1] * ey * k[1]), p) / std::pow(k2, p);
      // tent = a0 b0 - (a1 b0 ex + a0 b1 ey) u + a1 b1 ex ey u^2
      const double c0 = a0 * b0;
      const double c1 = -(a1 * b0 * ex + a0 * b1 * ey);
      const double c2 = a1 * b1 * ex * ey;
      acc += rule.w[i] * ang * (c0 / (c + 1.0) + c1 / (c + 2.0) + c2 / (c + 3.0));
    }
    total += acc;
  }
  return total;
}

inline double unit_weight_2d(int k1, int k2, double p, double sp) {
  k1 = std::abs(k1);
  k2 = std::abs(k2);
  if (k1 == 0 && k2 == 0) return 0.0;
  const double kk = static_cast<double>(k1 * k1 + k2 * k2);
  const int kinf = std::max(k1, k2);
  const quad::Rule& smooth = kinf <= 3 ? quad::gauss20() : quad::gauss8();
  double total = 0.0;
  for (int q1 = -1; q1 <= 0; ++q1) {
    for (int q2 = -1; q2 <= 0; ++q2) {
      const int c1 = q1 + k1, c2 = q2 + k2;  // lower corner of the box in z'
      const bool singular = (c1 == 0 || c1 == -1) && (c2 == 0 || c2 == -1);
      if (singular) {
        total += singular_box_2d({k1, k2}, {c1 == 0 ? 1 : -1, c2 == 0 ? 1 : -1}, p, sp, true);
        continue;
      }
      total += quad::box_integral(2, {double(q1), double(q2)}, {double(q1 + 1), double(q2 + 1)}, smooth,
                                  [&](const Point& z) {
                                    const double x = k1 + z[0], y = k2 + z[1];
                                    const double r2 = x * x + y * y;
                                    const double proj = std::abs(x * k1 + y * k2) / kk;
                                    const double tent = (1.0 - std::abs(z[0])) * (1.0 - std::abs(z[1]));
                                    return std::pow(proj, p) * std::pow(r2, -(2.0 + sp) / 2.0) * tent;
                                  });
    }
  }
  return total;
}

inline double self_correction_2d(double p, double sp) {
  double total = 0.0;
  for (int sx : {-1, 1}) {
    for (int sy : {-1, 1}) total += singular_box_2d({0, 0}, {sx, sy}, p, sp, false);
  }
  return total / 4.0;
}

/// Integral of |y|^{-(2+sp)} over the complement of the square [-L, L]^2.
inline double square_complement_integral(double L, double sp) {
  const auto rule = quad::composite(quad::gauss20(), 0.0, std::numbers::pi / 4.0, 2);
  double ang = 0.0;
  for (std::size_t i = 0; i < rule.x.size(); ++i) ang += rule.w[i] * std::pow(std::cos(rule.x[i]), sp);
  return 8.0 * std::pow(L, -sp) / sp * ang;
}

inline std::uint64_t fnv1a(const std::string& text) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 1099511628211ull;
  }
  return h;
}

}  // namespace detail

/// Quadrature weights of the Gagliardo double integral on a grid: W_ij for
/// interior pairs and the exterior tail W_i^ext (u = 0 outside the domain).
/// Weights depend only on the lattice offset, so they are held as an offset
/// table; accessors expose the dense pair view.
class PairWeightTable {
 public:
  PairWeightTable(Grid grid, OperatorParams params, std::vector<double> unit, std::vector<double> tails,
                  double lattice_total)
      : grid_(std::move(grid)),
        params_(params),
        unit_(std::move(unit)),
        tail_(std::move(tails)),
        lattice_total_(lattice_total) {
    n_ = grid_.resolution();
    scale_ = std::pow(grid_.spacing(), grid_.dim() - params_.sp());
    ij_.reserve(grid_.interior_count());
    for (std::size_t node : grid_.interior_nodes()) ij_.push_back(grid_.index2(node));
  }

  const Grid& grid() const { return grid_; }
  const OperatorParams& params() const { return params_; }
  std::size_t size() const { return ij_.size(); }
  /// h^{N - sp}
  double scale() const { return scale_; }

  /// Unit-spacing weight of lattice offset (di, dj).
  double unit_weight(int di, int dj) const {
    return unit_[static_cast<std::size_t>(std::abs(di)) +
                 static_cast<std::size_t>(std::abs(dj)) * static_cast<std::size_t>(n_)];
  }
  /// W_ab for interior indices a != b (0 when a == b).
  double weight(std::size_t a, std::size_t b) const {
    return scale_ * unit_weight(ij_[a][0] - ij_[b][0], ij_[a][1] - ij_[b][1]);
  }
  double tail(std::size_t a) const { return tail_[a]; }
  std::span<const double> tails() const { return tail_; }
  std::span<const double> unit_table() const { return unit_; }
  /// Sum of unit weights over every nonzero lattice offset.
  double lattice_total() const { return lattice_total_; }
  const std::array<int, 2>& lattice_index(std::size_t a) const { return ij_[a]; }

 private:
  Grid grid_;
  OperatorParams params_;
  std::vector<double> unit_;
  std::vector<double> tail_;
  double lattice_total_ = 0.0;
  int n_ = 0;
  double scale_ = 1.0;
  std::vector<std::array<int, 2>> ij_;
};

namespace detail {

inline std::string table_key(const Grid& grid, const OperatorParams& params) {
  nlohmann::json k;
  k["domain"] = describe(grid.domain());
  k["resolution"] = grid.resolution();
  k["s"] = params.s;
  k["p"] = params.p;
  return k.dump();
}

inline std::vector<double> compute_tails(const Grid& grid, const OperatorParams& params,
                                         const std::vector<double>& unit, double lattice_total) {
  const std::size_t n_int = grid.interior_count();
  const int n = grid.resolution();
  const double scale = std::pow(grid.spacing(), grid.dim() - params.sp());
  std::vector<std::array<int, 2>> ij;
  ij.reserve(n_int);
  for (std::size_t node : grid.interior_nodes()) ij.push_back(grid.index2(node));
  std::vector<double> tails(n_int);
  parallel_for(n_int, [&](std::size_t a) {
    CompensatedSum inside;
    for (std::size_t b = 0; b < n_int; ++b) {
      if (a == b) continue;
      inside.add(unit[static_cast<std::size_t>(std::abs(ij[a][0] - ij[b][0])) +
                      static_cast<std::size_t>(std::abs(ij[a][1] - ij[b][1])) * static_cast<std::size_t>(n)]);
    }
    tails[a] = scale * (lattice_total - inside.value());
  });
  return tails;
}

inline void write_table_cache(const std::filesystem::path& path, const std::string& key,
                              const PairWeightTable& table) {
  static_assert(std::endian::native == std::endian::little, "cache format is little-endian");
  nlohmann::json header;
  header["format"] = "fracpq-weights";
  header["version"] = 1;
  header["key"] = key;
  header["unit_count"] = table.unit_table().size();
  header["tail_count"] = table.tails().size();
  header["lattice_total"] = table.lattice_total();
  std::filesystem::create_directories(path.parent_path());
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    const std::string line = header.dump() + "\n";
    out.write(line.data(), static_cast<std::streamsize>(line.size()));
    auto dump = [&out](std::span<const double> xs) {
      out.write(reinterpret_cast<const char*>(xs.data()), static_cast<std::streamsize>(xs.size_bytes()));
    };
    dump(table.unit_table());
    dump(table.tails());
    if (!out) return;  // cache is best effort
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
}

inline bool read_table_cache(const std::filesystem::path& path, const std::string& key, std::vector<double>& unit,
                             std::vector<double>& tails, double& lattice_total) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return false;
  std::string line;
  if (!std::getline(in, line)) return false;
  const auto header = nlohmann::json::parse(line, nullptr, false);
  if (header.is_discarded() || header.value("format", "") != "fracpq-weights" || header.value("key", "") != key) {
    return false;
  }
  unit.resize(header.at("unit_count").get<std::size_t>());
  tails.resize(header.at("tail_count").get<std::size_t>());
  lattice_total = header.at("lattice_total").get<double>();
  in.read(reinterpret_cast<char*>(unit.data()), static_cast<std::streamsize>(unit.size() * sizeof(double)));
  in.read(reinterpret_cast<char*>(tails.data()), static_cast<std::streamsize>(tails.size() * sizeof(double)));
  return static_cast<bool>(in);
}

}  // namespace detail

/// Path of the cache file for a (domain, resolution, s, p) key.
inline std::filesystem::path weight_cache_path(const std::string& dir, const Grid& grid, const OperatorParams& params) {
  char name[48];
  std::snprintf(name, sizeof name, "weights-%016llx.bin",
                static_cast<unsigned long long>(detail::fnv1a(detail::table_key(grid, params))));
  return std::filesystem::path(dir) / name;
}

/// Assembles the pair-weight table. Deterministic for fixed inputs.
inline PairWeightTable assemble_weights(const Grid& grid, const OperatorParams& params,
                                        const AssemblyOptions& options = {}) {
  params.validate();
  if (!grid.isotropic()) throw DomainError("pair weights need equal spacing on both axes");
  if (grid.interior_count() > options.node_cap) {
    throw MemoryBudgetError("interior node count " + std::to_string(grid.interior_count()) +
                            " exceeds the pair-table cap " + std::to_string(options.node_cap));
  }
  const std::string key = detail::table_key(grid, params);
  std::filesystem::path cache_file;
  if (!options.cache_dir.empty()) {
    cache_file = weight_cache_path(options.cache_dir, grid, params);
    std::vector<double> unit, tails;
    double total = 0.0;
    if (detail::read_table_cache(cache_file, key, unit, tails, total) &&
        tails.size() == grid.interior_count()) {
      return PairWeightTable(grid, params, std::move(unit), std::move(tails), total);
    }
  }

  const int n = grid.resolution();
  const double p = params.p, sp = params.sp();
  std::vector<double> unit;
  double total = 0.0;
  if (grid.dim() == 1) {
    unit.assign(static_cast<std::size_t>(n), 0.0);
    for (int k = 1; k < n; ++k) unit[static_cast<std::size_t>(k)] = detail::unit_weight_1d(k, p, sp);
    unit[1] += detail::self_correction_1d(p, sp);
    const int K = std::max(n, 4096);
    CompensatedSum s;
    for (int k = K; k >= 1; --k) s.add(2.0 * detail::unit_weight_1d(k, p, sp));
    s.add(2.0 * detail::self_correction_1d(p, sp));
    s.add(2.0 * std::pow(K + 0.5, -sp) / sp);
    total = s.value();
  } else {
    const int M = std::max(n - 1, 64);
    const std::size_t side = static_cast<std::size_t>(M) + 1;
    std::vector<double> full(side * side, 0.0);
    std::vector<std::pair<int, int>> jobs;
    for (int a = 0; a <= M; ++a) {
      for (int b = 0; b <= a; ++b) {
        if (a + b > 0) jobs.emplace_back(a, b);
      }
    }
    parallel_for(jobs.size(), [&](std::size_t t) {
      const auto [a, b] = jobs[t];
      const double w = detail::unit_weight_2d(a, b, p, sp);
      full[static_cast<std::size_t>(a) + static_cast<std::size_t>(b) * side] = w;
      full[static_cast<std::size_t>(b) + static_cast<std::size_t>(a) * side] = w;
    });
    const double self = detail::self_correction_2d(p, sp);
    full[1] += self;
    full[side] += self;
    CompensatedSum s;
    for (int b = -M; b <= M; ++b) {
      for (int a = -M; a <= M; ++a) {
        s.add(full[static_cast<std::size_t>(std::abs(a)) + static_cast<std::size_t>(std::abs(b)) * side]);
      }
    }
    s.add(detail::square_complement_integral(M + 0.5, sp));
    total = s.value();
    unit.assign(static_cast<std::size_t>(n) * static_cast<std::size_t>(n), 0.0);
    for (int b = 0; b < n; ++b) {
      for (int a = 0; a < n; ++a) {
        unit[static_cast<std::size_t>(a) + static_cast<std::size_t>(b) * static_cast<std::size_t>(n)] =
            full[static_cast<std::size_t>(a) + static_cast<std::size_t>(b) * side];
      }
    }
  }
  auto tails = detail::compute_tails(grid, params, unit, total);
  PairWeightTable table(grid, params, std::move(unit), std::move(tails), total);
  if (!cache_file.empty()) detail::write_table_cache(cache_file, key, table);
  return table;
}

// ---------------------------------------------------------------------------
// Discrete forms. All take interior-node vectors; ScalarField overloads below.

namespace detail {

inline void check_size(const PairWeightTable& t, std::span<const double> u) {
  if (u.size() != t.size()) throw DomainError("field does not match the weight table");
}

}  // namespace detail

/// [u]^p = 2 sum_{i<j} W_ij |u_i - u_j|^p + 2 sum_i W_i^ext |u_i|^p
inline double seminorm_pow(std::span<const double> u, const PairWeightTable& t) {
  detail::check_size(t, u);
  const double p = t.params().p;
  const std::size_t n = t.size();
  std::vector<double> rows(n);
  parallel_for(n, [&](std::size_t a) {
    CompensatedSum row;
    for (std::size_t b = a + 1; b < n; ++b) {
      const double d = u[a] - u[b];
      if (d != 0.0) row.add(t.weight(a, b) * std::pow(std::abs(d), p));
    }
    if (u[a] != 0.0) row.add(t.tail(a) * std::pow(std::abs(u[a]), p));
    rows[a] = row.value();
  });
  return 2.0 * compensated_sum(rows);
}

inline double seminorm(std::span<const double> u, const PairWeightTable& t) {
  return std::pow(seminorm_pow(u, t), 1.0 / t.params().p);
}

/// (1/p) [u]^p
inline double energy(std::span<const double> u, const PairWeightTable& t) {
  return seminorm_pow(u, t) / t.params().p;
}

/// Discrete <(-Delta)^s_p u, phi>.
inline double apply_form(std::span<const double> u, std::span<const double> phi, const PairWeightTable& t) {
  detail::check_size(t, u);
  detail::check_size(t, phi);
  const double p = t.params().p;
  const std::size_t n = t.size();
  std::vector<double> rows(n);
  parallel_for(n, [&](std::size_t a) {
    CompensatedSum row;
    for (std::size_t b = a + 1; b < n; ++b) {
      const double d = u[a] - u[b];
      if (d != 0.0) row.add(t.weight(a, b) * signed_pow(d, p) * (phi[a] - phi[b]));
    }
    row.add(t.tail(a) * signed_pow(u[a], p) * phi[a]);
    rows[a] = row.value();
  });
  return 2.0 * compensated_sum(rows);
}

/// G_i = apply_form(u, e_i) for every interior node.
inline std::vector<double> operator_gradient(std::span<const double> u, const PairWeightTable& t) {
  detail::check_size(t, u);
  const double p = t.params().p;
  const std::size_t n = t.size();
  std::vector<double> g(n);
  if (thread_count() <= 1) {
    std::vector<CompensatedSum> acc(n);
    for (std::size_t a = 0; a < n; ++a) {
      for (std::size_t b = a + 1; b < n; ++b) {
        const double d = u[a] - u[b];
        if (d == 0.0) continue;
        const double c = t.weight(a, b) * signed_pow(d, p);
        acc[a].add(c);
        acc[b].add(-c);
      }
      acc[a].add(t.tail(a) * signed_pow(u[a], p));
    }
    for (std::size_t a = 0; a < n; ++a) g[a] = 2.0 * acc[a].value();
    return g;
  }
  parallel_for(n, [&](std::size_t a) {
    CompensatedSum row;
    for (std::size_t b = 0; b < n; ++b) {
      if (b == a) continue;
      const double d = u[a] - u[b];
      if (d != 0.0) row.add(t.weight(a, b) * signed_pow(d, p));
    }
    row.add(t.tail(a) * signed_pow(u[a], p));
    g[a] = 2.0 * row.value();
  });
  return g;
}

/// Hessian of energy(u); exact for p >= 2, with |t|^{p-2} floored for p < 2.
inline Eigen::MatrixXd operator_hessian(std::span<const double> u, const PairWeightTable& t) {
  detail::check_size(t, u);
  const double p = t.params().p;
  const std::size_t n = t.size();
  Eigen::MatrixXd H = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  auto curv = [p](double d) {
    const double a = std::abs(d);
    if (p == 2.0) return 1.0;
    return std::pow(std::max(a, p < 2.0 ? 1e-12 : 0.0), p - 2.0);
  };
  const double c = 2.0 * (p - 1.0);
  for (std::size_t a = 0; a < n; ++a) {
    const auto ia = static_cast<Eigen::Index>(a);
    for (std::size_t b = a + 1; b < n; ++b) {
      const auto ib = static_cast<Eigen::Index>(b);
      const double k = c * t.weight(a, b) * curv(u[a] - u[b]);
      H(ia, ia) += k;
      H(ib, ib) += k;
      H(ia, ib) -= k;
      H(ib, ia) -= k;
    }
    H(ia, ia) += c * t.tail(a) * curv(u[a]);
  }
  return H;
}

inline double seminorm(const ScalarField& u, const PairWeightTable& t) { return seminorm(u.interior_values(), t); }
inline double energy(const ScalarField& u, const PairWeightTable& t) { return energy(u.interior_values(), t); }
inline double apply_form(const ScalarField& u, const ScalarField& phi, const PairWeightTable& t) {
  return apply_form(u.interior_values(), phi.interior_values(), t);
}
inline ScalarField operator_gradient(const ScalarField& u, const PairWeightTable& t) {
  return ScalarField::from_interior(u.grid(), operator_gradient(u.interior_values(), t));
}

// ---------------------------------------------------------------------------
// Hidden convexity of w -> Phi(w^{1/q}).

/// Largest value of |v3(x)-v3(y)|^p - (1-t)|v1(x)-v1(y)|^p - t|v2(x)-v2(y)|^p
/// over all node pairs (including pairs with the zero exterior), where
/// v_i = u_i^{1/q} and v3 = ((1-t)u1 + t u2)^{1/q}. Nonpositive when the
/// pointwise inequality holds.
inline double hidden_convexity_violation(std::span<const double> u1, std::span<const double> u2, double t,
                                         double q, double p) {
  if (u1.size() != u2.size()) throw DomainError("size mismatch");
  const std::size_t n = u1.size();
  std::vector<double> v1(n + 1, 0.0), v2(n + 1, 0.0), v3(n + 1, 0.0);  // slot n = exterior
  for (std::size_t i = 0; i < n; ++i) {
    if (u1[i] < 0.0 || u2[i] < 0.0) throw DomainError("hidden convexity needs nonnegative fields");
    v1[i] = std::pow(u1[i], 1.0 / q);
    v2[i] = std::pow(u2[i], 1.0 / q);
    v3[i] = std::pow((1.0 - t) * u1[i] + t * u2[i], 1.0 / q);
  }
  double worst = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j <= n; ++j) {
      const double lhs = std::pow(std::abs(v3[i] - v3[j]), p);
      const double rhs = (1.0 - t) * std::pow(std::abs(v1[i] - v1[j]), p) + t * std::pow(std::abs(v2[i] - v2[j]), p);
      worst = std::max(worst, lhs - rhs);
    }
  }
  return worst;
}

/// Phi(w^{1/q}) = energy(w^{1/q}); +infinity when w has a negative entry.
inline double hat_energy(std::span<const double> w, const PairWeightTable& t, double q) {
  std::vector<double> root(w.size());
  for (std::size_t i = 0; i < w.size(); ++i) {
    if (w[i] < 0.0) return std::numeric_limits<double>::infinity();
    root[i] = std::pow(w[i], 1.0 / q);
  }
  return energy(root, t);
}

}  // namespace fracpq
