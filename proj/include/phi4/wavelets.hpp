#pragma once

#include "phi4/grid.hpp"
#include "phi4/rng.hpp"
#include "phi4/trajectory.hpp"

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <complex>
#include <stdexcept>
#include <vector>

namespace phi4 {

/// Daubechies filter pair: scaling coefficients a_k (indexed by half-integers
/// k = m/2, stored as h[m]) and the alternating-flip wavelet coefficients.
struct WaveletBasis {
  int order = 1;          // vanishing moments p
  Eigen::ArrayXd h;       // scaling filter, sum = sqrt(2)
  Eigen::ArrayXd g;       // wavelet filter, sum = 0
  double regularity = 0;  // Hoelder regularity proxy of the scaling function
};

namespace detail {

using Poly = std::vector<std::complex<double>>;  // coefficients, low order first

inline Poly poly_mul(const Poly& a, const Poly& b) {
  Poly r(a.size() + b.size() - 1, 0.0);
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < b.size(); ++j) r[i + j] += a[i] * b[j];
  return r;
}

inline std::vector<std::complex<double>> poly_roots(const Eigen::VectorXd& coeffs) {
  // companion matrix of a monic polynomial; coeffs low order first
  const Eigen::Index deg = coeffs.size() - 1;
  Eigen::MatrixXd companion = Eigen::MatrixXd::Zero(deg, deg);
  for (Eigen::Index i = 0; i < deg; ++i) companion(i, deg - 1) = -coeffs[i] / coeffs[deg];
  for (Eigen::Index i = 1; i < deg; ++i) companion(i, i - 1) = 1.0;
  const Eigen::EigenSolver<Eigen::MatrixXd> es(companion);
  std::vector<std::complex<double>> roots;
  for (Eigen::Index i = 0; i < deg; ++i) roots.push_back(es.eigenvalues()[i]);
  return roots;
}

inline double binomial(int n, int k) {
  double r = 1;
  for (int i = 1; i <= k; ++i) r = r * (n - k + i) / i;
  return r;
}

}  // namespace detail

/// Daubechies-p scaling coefficients by spectral factorization of
/// |m0|^2 = cos^{2p}(w/2) P(sin^2(w/2)); p = 1 is Haar.
inline WaveletBasis daubechies_coefficients(int p) {
  if (p < 1 || p > 4)
    throw std::invalid_argument("daubechies_coefficients: supported orders are 1..4");
  WaveletBasis basis;
  basis.order = p;
  const int len = 2 * p;
  Eigen::ArrayXd h(len);
  if (p == 1) {
    h[0] = h[1] = 1.0 / std::sqrt(2.0);
  } else {
    // Q(z) = z^{p-1} P((2 - z - 1/z)/4), P(y) = sum_k C(p-1+k, k) y^k
    std::vector<double> q(2 * (p - 1) + 1, 0.0);
    for (int k = 0; k <= p - 1; ++k) {
      // (-1)^k C(p-1+k,k)/4^k (z-1)^{2k} z^{p-1-k}
      const double c = detail::binomial(p - 1 + k, k) * std::pow(-0.25, k);
      for (int j = 0; j <= 2 * k; ++j) {
        const double term = c * detail::binomial(2 * k, j) * std::pow(-1.0, 2 * k - j);
        q[static_cast<std::size_t>(j + p - 1 - k)] += term;
      }
    }
    Eigen::VectorXd qv(static_cast<Eigen::Index>(q.size()));
    for (std::size_t i = 0; i < q.size(); ++i) qv[static_cast<Eigen::Index>(i)] = q[i];
    const auto roots = detail::poly_roots(qv);

    detail::Poly m0 = {1.0};
    const detail::Poly half = {0.5, 0.5};  // (1+z)/2
    for (int i = 0; i < p; ++i) m0 = detail::poly_mul(m0, half);
    for (const auto& z : roots)
      if (std::abs(z) < 1.0) m0 = detail::poly_mul(m0, detail::Poly{-z, 1.0});

    std::complex<double> at_one = 0.0;
    for (const auto& c : m0) at_one += c;
    const std::complex<double> scale = std::sqrt(2.0) / at_one;
    if (static_cast<int>(m0.size()) != len)
      throw std::runtime_error("daubechies_coefficients: unexpected factor degree");
    for (int m = 0; m < len; ++m) {
      const std::complex<double> v = m0[static_cast<std::size_t>(m)] * scale;
      if (std::abs(v.imag()) > 1e-10)
        throw std::runtime_error("daubechies_coefficients: factorization not real");
      h[m] = v.real();
    }
    // canonical orientation: energy front-loaded
    if (h[0] * h[0] + h[1] * h[1] < h[len - 1] * h[len - 1] + h[len - 2] * h[len - 2])
      h = h.reverse().eval();
  }
  basis.h = h;
  basis.g = Eigen::ArrayXd(len);
  for (int m = 0; m < len; ++m) basis.g[m] = (m % 2 ? -1.0 : 1.0) * h[len - 1 - m];
  // regularity proxies from the literature; p = 2 is already C^{0.55}
  const double reg[5] = {0.0, 0.5, 0.55, 1.09, 1.62};
  basis.regularity = reg[p];
  return basis;
}

/// Grid multiresolution analysis: Kronecker seed at level N refined downward,
/// stencils stored per level as periodized 1D profiles (the 3D functions are
/// tensor products).
struct GridMRA {
  Grid grid;
  WaveletBasis basis;
  int n_min = 0;
  std::vector<Eigen::ArrayXd> scaling_1d;  // level n = n_min + index, on the N-grid
  std::vector<Eigen::ArrayXd> wavelet_1d;  // level n in [n_min, N)
};

inline GridMRA build_grid_mra(const Grid& grid, const WaveletBasis& basis, int n_min) {
  if (n_min < 0 || n_min > grid.level)
    throw std::invalid_argument("build_grid_mra: n_min must lie in [0, N]");
  GridMRA mra;
  mra.grid = grid;
  mra.basis = basis;
  mra.n_min = n_min;

  const int m = grid.points;
  const int levels = grid.level - n_min;
  mra.scaling_1d.assign(static_cast<std::size_t>(levels + 1), Eigen::ArrayXd());
  mra.wavelet_1d.assign(static_cast<std::size_t>(levels), Eigen::ArrayXd());

  Eigen::ArrayXd phi = Eigen::ArrayXd::Zero(m);
  phi[0] = std::pow(2.0, 0.5 * grid.level);  // phi^{N,N}_0 = 2^{N/2} delta
  mra.scaling_1d[static_cast<std::size_t>(levels)] = phi;
  const int filter_len = static_cast<int>(basis.h.size());
  for (int n = grid.level - 1; n >= n_min; --n) {
    const int shift_unit = 1 << (grid.level - n - 1);  // 2^{N-n-1} grid points
    Eigen::ArrayXd next = Eigen::ArrayXd::Zero(m);
    Eigen::ArrayXd wave = Eigen::ArrayXd::Zero(m);
    const Eigen::ArrayXd& fine = mra.scaling_1d[static_cast<std::size_t>(n - n_min + 1)];
    for (int y = 0; y < m; ++y) {
      double sv = 0, wv = 0;
      for (int f = 0; f < filter_len; ++f) {
        const double v = fine[wrap(y - f * shift_unit, m)];
        sv += basis.h[f] * v;
        wv += basis.g[f] * v;
      }
      next[y] = sv;
      wave[y] = wv;
    }
    mra.scaling_1d[static_cast<std::size_t>(n - n_min)] = next;
    mra.wavelet_1d[static_cast<std::size_t>(n - n_min)] = wave;
  }
  return mra;
}

/// Coefficients of the orthonormal grid basis: scaling block at n_min and,
/// per level, the 7 tensor wavelet types indexed by the axis bitmask.
struct WaveletCoeffs {
  int n_min = 0;
  int top_level = 0;
  Eigen::ArrayXd scaling;                               // (2^{n_min})^3 values
  std::vector<std::array<Eigen::ArrayXd, 7>> details;   // level n_min + l

  double sum_squares() const {
    double s = scaling.square().sum();
    for (const auto& lvl : details)
      for (const auto& d : lvl) s += d.square().sum();
    return s;
  }
};

namespace detail {

// One analysis split along `axis` of a block with extents dims[3] (the axis
// extent halves): out[i] = sum_m filter[m] in[2i+m] with periodic wrap.
inline void analyze_axis(const Eigen::ArrayXd& in, const int dims[3], int axis,
                         const Eigen::ArrayXd& lo_f, const Eigen::ArrayXd& hi_f,
                         Eigen::ArrayXd& lo, Eigen::ArrayXd& hi) {
  const int len = dims[axis];
  const int flen = static_cast<int>(lo_f.size());
  int od[3] = {dims[0], dims[1], dims[2]};
  od[axis] = len / 2;
  const std::int64_t n_out = static_cast<std::int64_t>(od[0]) * od[1] * od[2];
  lo.resize(n_out);
  hi.resize(n_out);
  const std::int64_t in_stride[3] = {static_cast<std::int64_t>(dims[1]) * dims[2], dims[2], 1};
  const std::int64_t out_stride[3] = {static_cast<std::int64_t>(od[1]) * od[2], od[2], 1};
  for (int i0 = 0; i0 < od[0]; ++i0)
    for (int i1 = 0; i1 < od[1]; ++i1)
      for (int i2 = 0; i2 < od[2]; ++i2) {
        const int idx[3] = {i0, i1, i2};
        std::int64_t base = 0;
        for (int a = 0; a < 3; ++a)
          if (a != axis) base += static_cast<std::int64_t>(idx[a]) * in_stride[a];
        double sv = 0, wv = 0;
        for (int f = 0; f < flen; ++f) {
          const int pos = wrap(2 * idx[axis] + f, len);
          const double v = in[base + static_cast<std::int64_t>(pos) * in_stride[axis]];
          sv += lo_f[f] * v;
          wv += hi_f[f] * v;
        }
        const std::int64_t o = i0 * out_stride[0] + i1 * out_stride[1] + i2;
        lo[o] = sv;
        hi[o] = wv;
      }
}

// Transpose of analyze_axis; dims[3] are the extents of the OUTPUT block.
inline void synthesize_axis(const Eigen::ArrayXd& lo, const Eigen::ArrayXd& hi,
                            const int dims[3], int axis, const Eigen::ArrayXd& lo_f,
                            const Eigen::ArrayXd& hi_f, Eigen::ArrayXd& out) {
  const int len = dims[axis];
  const int flen = static_cast<int>(lo_f.size());
  int id[3] = {dims[0], dims[1], dims[2]};
  id[axis] = len / 2;
  out = Eigen::ArrayXd::Zero(static_cast<std::int64_t>(dims[0]) * dims[1] * dims[2]);
  const std::int64_t out_stride[3] = {static_cast<std::int64_t>(dims[1]) * dims[2], dims[2], 1};
  const std::int64_t in_stride[3] = {static_cast<std::int64_t>(id[1]) * id[2], id[2], 1};
  for (int i0 = 0; i0 < id[0]; ++i0)
    for (int i1 = 0; i1 < id[1]; ++i1)
      for (int i2 = 0; i2 < id[2]; ++i2) {
        const int idx[3] = {i0, i1, i2};
        std::int64_t base = 0;
        for (int a = 0; a < 3; ++a)
          if (a != axis) base += static_cast<std::int64_t>(idx[a]) * out_stride[a];
        const std::int64_t in_off = i0 * in_stride[0] + i1 * in_stride[1] + i2;
        const double lv = lo[in_off], hv = hi[in_off];
        for (int f = 0; f < flen; ++f) {
          const int pos = wrap(2 * idx[axis] + f, len);
          out[base + static_cast<std::int64_t>(pos) * out_stride[axis]] +=
              lo_f[f] * lv + hi_f[f] * hv;
        }
      }
}

}  // namespace detail

inline WaveletCoeffs wavelet_transform(const GridField& f, const GridMRA& mra) {
  if (f.grid != mra.grid)
    throw std::invalid_argument("wavelet_transform: field and MRA grids differ");
  WaveletCoeffs coeffs;
  coeffs.n_min = mra.n_min;
  coeffs.top_level = mra.grid.level;
  const int levels = mra.grid.level - mra.n_min;
  coeffs.details.resize(static_cast<std::size_t>(levels));

  // <f, phi^{N,N}_x>_eps = 2^{-3N/2} f(x)
  Eigen::ArrayXd c = std::pow(2.0, -1.5 * mra.grid.level) * f.values;
  for (int l = levels - 1; l >= 0; --l) {
    const int edge = 1 << (mra.n_min + l + 1);
    std::array<Eigen::ArrayXd, 8> blocks;
    blocks[0] = std::move(c);
    int count = 1;
    int dims[3] = {edge, edge, edge};
    for (int axis = 0; axis < 3; ++axis) {
      std::array<Eigen::ArrayXd, 8> split;
      for (int b = 0; b < count; ++b) {
        Eigen::ArrayXd lo, hi;
        detail::analyze_axis(blocks[static_cast<std::size_t>(b)], dims, axis, mra.basis.h,
                             mra.basis.g, lo, hi);
        split[static_cast<std::size_t>(2 * b)] = std::move(lo);
        split[static_cast<std::size_t>(2 * b + 1)] = std::move(hi);
      }
      blocks = std::move(split);
      count *= 2;
      dims[axis] = edge / 2;
    }
    // block index after the three passes: bit2 = axis0 high, bit1 = axis1, bit0 = axis2
    c = std::move(blocks[0]);
    for (int t = 1; t < 8; ++t)
      coeffs.details[static_cast<std::size_t>(l)][static_cast<std::size_t>(t - 1)] =
          std::move(blocks[static_cast<std::size_t>(t)]);
  }
  coeffs.scaling = std::move(c);
  return coeffs;
}

inline GridField inverse_wavelet_transform(const WaveletCoeffs& coeffs, const GridMRA& mra) {
  if (coeffs.n_min != mra.n_min || coeffs.top_level != mra.grid.level)
    throw std::invalid_argument("inverse_wavelet_transform: coefficient layout mismatch");
  const int levels = mra.grid.level - mra.n_min;
  Eigen::ArrayXd c = coeffs.scaling;
  for (int l = 0; l < levels; ++l) {
    const int edge = 1 << (mra.n_min + l + 1);
    std::array<Eigen::ArrayXd, 8> blocks;
    blocks[0] = std::move(c);
    for (int t = 1; t < 8; ++t)
      blocks[static_cast<std::size_t>(t)] =
          coeffs.details[static_cast<std::size_t>(l)][static_cast<std::size_t>(t - 1)];
    int count = 8;
    int dims[3] = {edge / 2, edge / 2, edge / 2};
    for (int axis = 2; axis >= 0; --axis) {
      std::array<Eigen::ArrayXd, 8> merged;
      count /= 2;
      dims[axis] = edge;
      for (int b = 0; b < count; ++b) {
        Eigen::ArrayXd out;
        detail::synthesize_axis(blocks[static_cast<std::size_t>(2 * b)],
                                blocks[static_cast<std::size_t>(2 * b + 1)], dims, axis,
                                mra.basis.h, mra.basis.g, out);
        merged[static_cast<std::size_t>(b)] = std::move(out);
      }
      blocks = std::move(merged);
    }
    c = std::move(blocks[0]);
  }
  GridField f(mra.grid);
  f.values = std::pow(2.0, 1.5 * mra.grid.level) * c;
  return f;
}

/// Equivalent negative-Hoelder norm from wavelet coefficients: each level-n
/// coefficient carries the weight 2^{n (alpha + d/2)} (L^2-normalized
/// functions at scale 2^{-n}); the scaling block enters at n_min.
/// Detail levels above `level_cap` are excluded (used by the coarse-fine
/// distance where scales below eps_coarse are not compared).
inline double holder_norm_coeffs(const WaveletCoeffs& coeffs, double alpha,
                                 int level_cap = 1 << 20) {
  if (alpha >= 0)
    throw std::invalid_argument("holder_norm: only distributional alpha < 0 is supported");
  const double base_weight = std::pow(2.0, coeffs.n_min * (alpha + 1.5));
  double value = coeffs.scaling.size() ? base_weight * coeffs.scaling.abs().maxCoeff() : 0.0;
  for (std::size_t l = 0; l < coeffs.details.size(); ++l) {
    const int n = coeffs.n_min + static_cast<int>(l);
    if (n > level_cap) break;
    const double w = std::pow(2.0, n * (alpha + 1.5));
    for (const auto& d : coeffs.details[l])
      if (d.size()) value = std::max(value, w * d.abs().maxCoeff());
  }
  return value;
}

inline double holder_norm(const GridField& f, double alpha, const GridMRA& mra,
                          int level_cap = 1 << 20) {
  return holder_norm_coeffs(wavelet_transform(f, mra), alpha, level_cap);
}

/// Piecewise-constant extension of a coarse field onto a finer grid.
inline GridField inject_piecewise_constant(const GridField& coarse, const Grid& fine) {
  if (fine.level < coarse.grid.level)
    throw std::invalid_argument("inject: target grid must be at least as fine");
  if (fine.level == coarse.grid.level) return coarse;
  const int shift = fine.level - coarse.grid.level;
  const int mf = fine.points;
  GridField out(fine);
  for (int ix = 0; ix < mf; ++ix)
    for (int iy = 0; iy < mf; ++iy)
      for (int iz = 0; iz < mf; ++iz)
        out(ix, iy, iz) = coarse(ix >> shift, iy >> shift, iz >> shift);
  return out;
}

/// Distance between a coarse field and a finer one: the coarse field is
/// extended piecewise constantly, the difference measured in the equivalent
/// C^alpha norm with scales restricted to [eps_coarse, 1].
inline double holder_distance(const GridField& coarse, const GridField& fine, double alpha,
                              const GridMRA& fine_mra) {
  if (fine.grid.level < coarse.grid.level)
    throw std::invalid_argument("holder_distance: first field must be the coarser one");
  if (fine_mra.grid != fine.grid)
    throw std::invalid_argument("holder_distance: MRA lives on the wrong grid");
  GridField diff = inject_piecewise_constant(coarse, fine.grid);
  diff.values -= fine.values;
  return holder_norm(diff, alpha, fine_mra, coarse.grid.level);
}

/// ||t||_eps = (|t|^{1/2} and 1) or eps.
inline double time_weight(double t, double eps) {
  return std::max(std::min(std::sqrt(std::abs(t)), 1.0), eps);
}

namespace detail {

inline std::vector<std::pair<std::size_t, std::size_t>> time_pairs(std::size_t n,
                                                                   std::size_t budget,
                                                                   std::uint64_t seed) {
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  if (n < 2) return pairs;
  const std::size_t all = n * (n - 1) / 2;
  if (n <= 64 || all <= budget) {
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j) pairs.emplace_back(i, j);
    return pairs;
  }
  const CounterRng rng = CounterRng::from_seed(seed).absorb(0x7a17);
  for (std::size_t k = 0; k < budget; ++k) {
    const std::size_t i = static_cast<std::size_t>(rng.bits(2 * k) % n);
    std::size_t j = static_cast<std::size_t>(rng.bits(2 * k + 1) % (n - 1));
    if (j >= i) ++j;
    pairs.emplace_back(std::min(i, j), std::max(i, j));
  }
  return pairs;
}

}  // namespace detail

struct SpacetimeNormParams {
  double alpha = -0.6;
  double delta = 0.0;   // two-time exponent; 0 disables the second term
  double eta = 0.0;     // time blow-up weight, <= 0
  std::size_t pair_budget = 4096;
  std::uint64_t pair_seed = 0x9a1e5;
};

/// sup_t ||t||^-eta ||f_t||_alpha plus, for delta > 0, the two-time term with
/// divisor (|t-s|^{1/2} or eps)^delta and norm at alpha - delta.
inline double spacetime_seminorm(const Trajectory& traj, const SpacetimeNormParams& p,
                                 const GridMRA& mra) {
  if (traj.empty()) throw std::invalid_argument("spacetime_seminorm: empty trajectory");
  if (p.eta > 0) throw std::invalid_argument("spacetime_seminorm: eta must be <= 0");
  const double eps = traj.grid.mesh;
  std::vector<WaveletCoeffs> coeffs;
  coeffs.reserve(traj.size());
  for (const auto& s : traj.slices) coeffs.push_back(wavelet_transform(s, mra));

  double value = 0;
  for (std::size_t i = 0; i < traj.size(); ++i) {
    const double w = std::pow(time_weight(traj.stamps[i], eps), -p.eta);
    value = std::max(value, w * holder_norm_coeffs(coeffs[i], p.alpha));
  }
  if (p.delta > 0) {
    for (const auto& [i, j] : detail::time_pairs(traj.size(), p.pair_budget, p.pair_seed)) {
      GridField diff(traj.grid);
      diff.values = traj.slices[j].values - traj.slices[i].values;
      const double wt = std::pow(
          std::min(time_weight(traj.stamps[i], eps), time_weight(traj.stamps[j], eps)), -p.eta);
      const double dt_eps =
          std::max(std::sqrt(std::abs(traj.stamps[j] - traj.stamps[i])), eps);
      value = std::max(value, wt * holder_norm(diff, p.alpha - p.delta, mra) /
                                  std::pow(dt_eps, p.delta));
    }
  }
  return value;
}

/// Space-time distance between a coarse trajectory and a finer one at matched
/// stamps, with the coarse mesh playing the role of eps.
inline double spacetime_distance(const Trajectory& coarse, const Trajectory& fine,
                                 const SpacetimeNormParams& p, const GridMRA& fine_mra) {
  if (coarse.size() != fine.size() || coarse.empty())
    throw std::invalid_argument("spacetime_distance: trajectories must match non-trivially");
  const double eps = coarse.grid.mesh;
  const int cap = coarse.grid.level;
  std::vector<GridField> diffs;
  diffs.reserve(coarse.size());
  for (std::size_t i = 0; i < coarse.size(); ++i) {
    if (std::abs(coarse.stamps[i] - fine.stamps[i]) > 1e-12)
      throw std::invalid_argument("spacetime_distance: stamps not matched");
    GridField d = inject_piecewise_constant(coarse.slices[i], fine.grid);
    d.values -= fine.slices[i].values;
    diffs.push_back(std::move(d));
  }
  double value = 0;
  for (std::size_t i = 0; i < diffs.size(); ++i) {
    const double w = std::pow(time_weight(coarse.stamps[i], eps), -p.eta);
    value = std::max(value, w * holder_norm(diffs[i], p.alpha, fine_mra, cap));
  }
  if (p.delta > 0) {
    for (const auto& [i, j] : detail::time_pairs(diffs.size(), p.pair_budget, p.pair_seed)) {
      GridField d(fine.grid);
      d.values = diffs[j].values - diffs[i].values;
      const double wt = std::pow(
          std::min(time_weight(coarse.stamps[i], eps), time_weight(coarse.stamps[j], eps)),
          -p.eta);
      const double dt_eps =
          std::max(std::sqrt(std::abs(coarse.stamps[j] - coarse.stamps[i])), eps);
      value = std::max(value, wt * holder_norm(d, p.alpha - p.delta, fine_mra, cap) /
                                  std::pow(dt_eps, p.delta));
    }
  }
  return value;
}

}  // namespace phi4
