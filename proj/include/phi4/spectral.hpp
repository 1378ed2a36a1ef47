#pragma once

#include "phi4/grid.hpp"

#include <unsupported/Eigen/FFT>

#include <complex>
#include <stdexcept>
#include <vector>

namespace phi4 {

/// Fourier coefficients f_hat(k) = eps^3 sum_x f(x) e^{-2 pi i k.x},
/// indexed like the field by integer wavevectors k in [0, M)^3.
struct SpectralField {
  Grid grid;
  Eigen::ArrayXcd coeffs;

  SpectralField() = default;
  explicit SpectralField(const Grid& g)
      : grid(g), coeffs(Eigen::ArrayXcd::Zero(g.site_count())) {}
};

/// Fourier multiplier of the nearest-neighbour Laplacian,
/// a(k) = -4 eps^-2 sum_i sin^2(pi eps k_i). Folding-invariant in k mod M.
inline double laplacian_symbol_value(const Grid& g, int kx, int ky, int kz) {
  const double s = std::sin(M_PI * kx / g.points);
  const double t = std::sin(M_PI * ky / g.points);
  const double u = std::sin(M_PI * kz / g.points);
  return -4.0 / (g.mesh * g.mesh) * (s * s + t * t + u * u);
}

inline double laplacian_symbol(const Grid& g, int kx, int ky, int kz,
                               bool check_range = true) {
  if (check_range) {
    const int m = g.points;
    if (kx < 0 || kx >= m || ky < 0 || ky >= m || kz < 0 || kz >= m)
      throw std::out_of_range("laplacian_symbol: wavevector outside [0, M)^3");
  }
  return laplacian_symbol_value(g, kx, ky, kz);
}

/// Full symbol table a(k) over all k, in field index order.
inline Eigen::ArrayXd laplacian_symbols(const Grid& g) {
  const int m = g.points;
  Eigen::ArrayXd a(g.site_count());
  Eigen::ArrayXd s2(m);
  for (int k = 0; k < m; ++k) {
    const double s = std::sin(M_PI * k / g.points);
    s2[k] = s * s;
  }
  const double c = -4.0 / (g.mesh * g.mesh);
  std::int64_t i = 0;
  for (int kx = 0; kx < m; ++kx)
    for (int ky = 0; ky < m; ++ky)
      for (int kz = 0; kz < m; ++kz, ++i) a[i] = c * (s2[kx] + s2[ky] + s2[kz]);
  return a;
}

namespace detail {

// 1D passes along each axis; single-threaded, deterministic.
class Fft3Workspace {
 public:
  void lines(Eigen::ArrayXcd& w, int m, bool inverse) {
    in_.resize(m);
    out_.resize(m);
    const std::int64_t m2 = static_cast<std::int64_t>(m) * m;
    run_axis(w, m, /*stride=*/1, /*base1=*/m2, /*base2=*/m, inverse);   // z
    run_axis(w, m, /*stride=*/m, /*base1=*/m2, /*base2=*/1, inverse);   // y
    run_axis(w, m, /*stride=*/m2, /*base1=*/m, /*base2=*/1, inverse);   // x
  }

 private:
  void run_axis(Eigen::ArrayXcd& w, int m, std::int64_t stride,
                std::int64_t base1, std::int64_t base2, bool inverse) {
    for (int o1 = 0; o1 < m; ++o1) {
      for (int o2 = 0; o2 < m; ++o2) {
        const std::int64_t base = o1 * base1 + o2 * base2;
        for (int t = 0; t < m; ++t) in_[t] = w[base + stride * t];
        if (inverse)
          fft_.inv(out_.data(), in_.data(), m);
        else
          fft_.fwd(out_.data(), in_.data(), m);
        for (int t = 0; t < m; ++t) w[base + stride * t] = out_[t];
      }
    }
  }

  Eigen::FFT<double> fft_;
  std::vector<std::complex<double>> in_, out_;
};

inline Fft3Workspace& fft3_workspace() {
  thread_local Fft3Workspace ws;
  return ws;
}

}  // namespace detail

inline SpectralField forward_transform(const GridField& f) {
  SpectralField s(f.grid);
  s.coeffs = f.values.cast<std::complex<double>>();
  detail::fft3_workspace().lines(s.coeffs, f.grid.points, /*inverse=*/false);
  s.coeffs *= f.grid.cell_volume();
  return s;
}

inline GridField inverse_transform(const SpectralField& s) {
  Eigen::ArrayXcd w = s.coeffs;
  detail::fft3_workspace().lines(w, s.grid.points, /*inverse=*/true);
  // Eigen's inv scales by 1/M per axis; f(x) = sum_k c_k e^{+2 pi i k.x} needs M^3.
  w *= static_cast<double>(s.grid.site_count());
  GridField f(s.grid);
  f.values = w.real();
  return f;
}

}  // namespace phi4
