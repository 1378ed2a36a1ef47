#pragma once

#include <Eigen/Core>

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace phi4 {

/// Dyadic torus grid: mesh eps = 2^-N, M = 2^N points per dimension, d = 3.
struct Grid {
  int level = 0;    // N
  int points = 0;   // M = 2^N
  double mesh = 0;  // eps = 2^-N

  static constexpr int dim = 3;

  std::int64_t site_count() const {
    return static_cast<std::int64_t>(points) * points * points;
  }
  double cell_volume() const { return mesh * mesh * mesh; }

  friend bool operator==(const Grid& a, const Grid& b) {
    return a.level == b.level;
  }
  friend bool operator!=(const Grid& a, const Grid& b) { return !(a == b); }
};

inline Grid make_grid(int level) {
  if (level < 1 || level > 12)
    throw std::invalid_argument("make_grid: level must be in [1, 12], got " +
                                std::to_string(level));
  Grid g;
  g.level = level;
  g.points = 1 << level;
  g.mesh = 1.0 / g.points;
  return g;
}

inline int wrap(int i, int m) {
  int r = i % m;
  return r < 0 ? r + m : r;
}

/// Signed minimum-image difference a - b on the unit torus, in [-1/2, 1/2).
inline double torus_delta(double a, double b) {
  double d = a - b - std::floor(a - b);
  if (d >= 0.5) d -= 1.0;
  return d;
}

/// Parabolic space-time norm ||(t,x)||_s = max(|t|^{1/2}, |x|_inf) for s = (2,1,1,1).
inline double parabolic_norm(double t, const Eigen::Vector3d& x) {
  return std::max(std::sqrt(std::abs(t)), x.cwiseAbs().maxCoeff());
}

inline std::int64_t site_index(const Grid& g, int ix, int iy, int iz) {
  const int m = g.points;
  return (static_cast<std::int64_t>(wrap(ix, m)) * m + wrap(iy, m)) * m +
         wrap(iz, m);
}

inline void site_coords(const Grid& g, std::int64_t idx, int& ix, int& iy,
                        int& iz) {
  const int m = g.points;
  iz = static_cast<int>(idx % m);
  iy = static_cast<int>((idx / m) % m);
  ix = static_cast<int>(idx / (static_cast<std::int64_t>(m) * m));
}

/// Periodic real field on the grid, row-major by integer coordinates.
template <typename Scalar>
struct GridFieldT {
  using Array = Eigen::Array<Scalar, Eigen::Dynamic, 1>;

  Grid grid;
  Array values;

  GridFieldT() = default;
  explicit GridFieldT(const Grid& g) : grid(g), values(Array::Zero(g.site_count())) {}
  GridFieldT(const Grid& g, Array v) : grid(g), values(std::move(v)) {
    if (values.size() != g.site_count())
      throw std::invalid_argument("GridField: value count does not match grid");
  }

  Scalar operator()(int ix, int iy, int iz) const {
    return values[site_index(grid, ix, iy, iz)];
  }
  Scalar& operator()(int ix, int iy, int iz) {
    return values[site_index(grid, ix, iy, iz)];
  }
};

using GridField = GridFieldT<double>;

template <typename Scalar>
GridFieldT<Scalar> constant_field(const Grid& g, Scalar c) {
  GridFieldT<Scalar> f(g);
  f.values.setConstant(c);
  return f;
}

/// Nearest-neighbour Laplacian, (Delta f)(x) = eps^-2 sum_{|e|=1} (f(x+eps e) - f(x)).
template <typename Scalar>
GridFieldT<Scalar> apply_discrete_laplacian(const GridFieldT<Scalar>& f) {
  const Grid& g = f.grid;
  const int m = g.points;
  const Scalar inv_eps2 = Scalar(1) / Scalar(g.mesh * g.mesh);
  GridFieldT<Scalar> out(g);
  for (int ix = 0; ix < m; ++ix) {
    const int xp = wrap(ix + 1, m), xm = wrap(ix - 1, m);
    for (int iy = 0; iy < m; ++iy) {
      const int yp = wrap(iy + 1, m), ym = wrap(iy - 1, m);
      for (int iz = 0; iz < m; ++iz) {
        const int zp = wrap(iz + 1, m), zm = wrap(iz - 1, m);
        const std::int64_t i = (static_cast<std::int64_t>(ix) * m + iy) * m + iz;
        const Scalar c = f.values[i];
        Scalar acc = f.values[(static_cast<std::int64_t>(xp) * m + iy) * m + iz] +
                     f.values[(static_cast<std::int64_t>(xm) * m + iy) * m + iz] +
                     f.values[(static_cast<std::int64_t>(ix) * m + yp) * m + iz] +
                     f.values[(static_cast<std::int64_t>(ix) * m + ym) * m + iz] +
                     f.values[(static_cast<std::int64_t>(ix) * m + iy) * m + zp] +
                     f.values[(static_cast<std::int64_t>(ix) * m + iy) * m + zm] -
                     Scalar(6) * c;
        out.values[i] = inv_eps2 * acc;
      }
    }
  }
  return out;
}

/// eps^3-weighted sum (the discrete integral over the torus).
template <typename Scalar>
Scalar grid_integral(const GridFieldT<Scalar>& f) {
  return Scalar(f.grid.cell_volume()) * f.values.sum();
}

/// Discrete inner product <f, g>_eps = eps^3 sum f g.
template <typename Scalar>
Scalar grid_inner(const GridFieldT<Scalar>& f, const GridFieldT<Scalar>& g) {
  if (f.grid != g.grid)
    throw std::invalid_argument("grid_inner: fields live on different grids");
  return Scalar(f.grid.cell_volume()) * (f.values * g.values).sum();
}

}  // namespace phi4
