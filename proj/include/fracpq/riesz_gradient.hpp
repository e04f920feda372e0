#pragma once

#include <cmath>
#include <complex>
#include <memory>
#include <mutex>
#include <vector>

#include <fftw3.h>

#include "fracpq/error.hpp"
#include "fracpq/grid.hpp"
#include "fracpq/kernels.hpp"

namespace fracpq {

namespace detail {

// The FFTW planner is not reentrant.
inline std::mutex& fftw_planner_mutex() {
  static std::mutex m;
  return m;
}

struct FftwBuffer {
  explicit FftwBuffer(std::size_t bytes) : ptr(fftw_malloc(bytes)) {
    if (!ptr) throw std::bad_alloc();
  }
  ~FftwBuffer() { fftw_free(ptr); }
  FftwBuffer(const FftwBuffer&) = delete;
  FftwBuffer& operator=(const FftwBuffer&) = delete;
  double* real() { return static_cast<double*>(ptr); }
  fftw_complex* cplx() { return static_cast<fftw_complex*>(ptr); }
  void* ptr;
};

}  // namespace detail

/// Values of a convolution on the whole periodic transform box. Index (i, j)
/// refers to grid indices; the grid occupies [0, n) on each axis.
struct BoxField {
  int length = 0;
  int dim = 1;
  std::vector<double> values;

  double at(int i, int j = 0) const {
    return values[static_cast<std::size_t>(i) + static_cast<std::size_t>(dim == 2 ? j : 0) * static_cast<std::size_t>(length)];
  }
};

/// Cyclic convolution with cell integrals of I_{1-s}, sized so that the
/// result at every grid node equals the free-space (linear) convolution.
class ConvolutionPlan {
 public:
  ConvolutionPlan(const Grid& grid, double s, int padding_factor = 2) : impl_(std::make_shared<Impl>()) {
    if (!(s > 0.0 && s < 1.0)) throw DomainError("Riesz gradient needs 0 < s < 1");
    if (padding_factor < 2) throw DomainError("padding factor must be at least 2");
    if (!grid.isotropic()) throw DomainError("Riesz gradient needs equal spacing on both axes");
    auto& m = *impl_;
    m.grid = grid;
    m.s = s;
    m.dim = grid.dim();
    m.length = padding_factor * grid.resolution();
    m.padding = padding_factor;
    const int L = m.length;
    m.real_count = m.dim == 1 ? static_cast<std::size_t>(L) : static_cast<std::size_t>(L) * L;
    m.complex_count = m.dim == 1 ? static_cast<std::size_t>(L / 2 + 1) : static_cast<std::size_t>(L) * (L / 2 + 1);

    detail::FftwBuffer in(sizeof(double) * m.real_count), out(sizeof(fftw_complex) * m.complex_count);
    {
      std::lock_guard lock(detail::fftw_planner_mutex());
      if (m.dim == 1) {
        m.forward = fftw_plan_dft_r2c_1d(L, in.real(), out.cplx(), FFTW_ESTIMATE);
        m.backward = fftw_plan_dft_c2r_1d(L, out.cplx(), in.real(), FFTW_ESTIMATE);
      } else {
        m.forward = fftw_plan_dft_r2c_2d(L, L, in.real(), out.cplx(), FFTW_ESTIMATE);
        m.backward = fftw_plan_dft_c2r_2d(L, L, out.cplx(), in.real(), FFTW_ESTIMATE);
      }
    }
    if (!m.forward || !m.backward) throw QuadratureError("FFTW planning failed");

    // Kernel samples on the minimal-image offsets of the periodic box.
    const RieszParams riesz{m.dim, 1.0 - s};
    const double h = grid.spacing();
    auto wrap = [L](int idx) { return idx <= L / 2 ? idx : idx - L; };
    const int rows = m.dim == 1 ? 1 : L;
    std::vector<double> kernel(m.real_count);
    parallel_for(static_cast<std::size_t>(rows), [&](std::size_t row) {
      const int oj = m.dim == 1 ? 0 : wrap(static_cast<int>(row));
      for (int i = 0; i < L; ++i) {
        kernel[static_cast<std::size_t>(i) + row * static_cast<std::size_t>(L)] =
            riesz_cell_integral(riesz, {wrap(i) * h, oj * h}, h);
      }
    });
    m.kernel_cells = kernel;
    std::copy(kernel.begin(), kernel.end(), in.real());
    fftw_execute_dft_r2c(m.forward, in.real(), out.cplx());
    m.kernel_hat.resize(m.complex_count);
    for (std::size_t k = 0; k < m.complex_count; ++k) m.kernel_hat[k] = {out.cplx()[k][0], out.cplx()[k][1]};
  }

  const Grid& grid() const { return impl_->grid; }
  double s() const { return impl_->s; }
  int box_length() const { return impl_->length; }
  int padding_factor() const { return impl_->padding; }
  /// Cell integral of I_{1-s} at box offset (i, j), minimal image.
  double kernel_cell(int i, int j = 0) const {
    const int L = impl_->length;
    auto idx = [L](int v) { return ((v % L) + L) % L; };
    return impl_->kernel_cells[static_cast<std::size_t>(idx(i)) +
                               static_cast<std::size_t>(impl_->dim == 2 ? idx(j) : 0) * static_cast<std::size_t>(L)];
  }

  /// Cyclic convolution of nodal values (grid-indexed, zero padded).
  BoxField convolve(const ScalarField& u) const {
    const auto& m = *impl_;
    if (!u.grid().same_as(m.grid)) throw DomainError("field does not live on the plan's grid");
    const int L = m.length;
    detail::FftwBuffer in(sizeof(double) * m.real_count), out(sizeof(fftw_complex) * m.complex_count);
    std::fill(in.real(), in.real() + m.real_count, 0.0);
    for (std::size_t node : m.grid.interior_nodes()) {
      const auto [i, j] = m.grid.index2(node);
      in.real()[static_cast<std::size_t>(i) + static_cast<std::size_t>(j) * static_cast<std::size_t>(L)] = u[node];
    }
    fftw_execute_dft_r2c(m.forward, in.real(), out.cplx());
    for (std::size_t k = 0; k < m.complex_count; ++k) {
      const std::complex<double> v{out.cplx()[k][0], out.cplx()[k][1]};
      const auto w = v * m.kernel_hat[k];
      out.cplx()[k][0] = w.real();
      out.cplx()[k][1] = w.imag();
    }
    fftw_execute_dft_c2r(m.backward, out.cplx(), in.real());
    BoxField box;
    box.length = L;
    box.dim = m.dim;
    box.values.assign(in.real(), in.real() + m.real_count);
    const double norm = 1.0 / static_cast<double>(m.real_count);
    for (auto& v : box.values) v *= norm;
    return box;
  }

 private:
  struct Impl {
    Grid grid;
    double s = 0.5;
    int dim = 1;
    int length = 0;
    int padding = 2;
    std::size_t real_count = 0;
    std::size_t complex_count = 0;
    fftw_plan forward = nullptr;
    fftw_plan backward = nullptr;
    std::vector<double> kernel_cells;
    std::vector<std::complex<double>> kernel_hat;
    ~Impl() {
      std::lock_guard lock(detail::fftw_planner_mutex());
      if (forward) fftw_destroy_plan(forward);
      if (backward) fftw_destroy_plan(backward);
    }
  };
  std::shared_ptr<Impl> impl_;
};

/// I_{1-s} * u on the padded box.
inline BoxField riesz_potential(const ScalarField& u, const ConvolutionPlan& plan) { return plan.convolve(u); }

inline BoxField riesz_potential(const ScalarField& u, double s, const ConvolutionPlan& plan) {
  if (s != plan.s()) throw DomainError("plan was built for a different s");
  return plan.convolve(u);
}

/// D^s u at interior nodes: central differences of the Riesz potential.
inline VectorField riesz_gradient(const ScalarField& u, const ConvolutionPlan& plan) {
  const auto box = plan.convolve(u);
  const Grid& g = plan.grid();
  const double h = g.spacing();
  VectorField out(g);
  for (std::size_t node : g.interior_nodes()) {
    const auto [i, j] = g.index2(node);
    out.set(node, 0, (box.at(i + 1, j) - box.at(i - 1, j)) / (2.0 * h));
    if (g.dim() == 2) out.set(node, 1, (box.at(i, j + 1) - box.at(i, j - 1)) / (2.0 * h));
  }
  return out;
}

inline VectorField riesz_gradient(const ScalarField& u, double s, const ConvolutionPlan& plan) {
  if (s != plan.s()) throw DomainError("plan was built for a different s");
  return riesz_gradient(u, plan);
}

}  // namespace fracpq
