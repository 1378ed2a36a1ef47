#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "phi4/kernels.hpp"
#include "phi4/rng.hpp"
#include "phi4/stats.hpp"
#include "phi4/wavelets.hpp"

#include <cmath>

using namespace phi4;

namespace {

GridField white_field(const Grid& g, std::uint64_t seed, double sd) {
  const CounterRng rng = CounterRng::from_seed(seed);
  GridField f(g);
  for (std::int64_t i = 0; i < g.site_count(); ++i)
    f.values[i] = sd * rng.gaussian(static_cast<std::uint64_t>(i));
  return f;
}

// 3D grid function phi^{N,n}_x (or a tensor wavelet) from the 1D stencils.
GridField tensor_function(const GridMRA& mra, int level, int type_mask, int cx, int cy, int cz) {
  const Grid& g = mra.grid;
  const int idx = level - mra.n_min;
  const auto& s = mra.scaling_1d;
  const auto& w = mra.wavelet_1d;
  const Eigen::ArrayXd& fx = (type_mask & 4) ? w[idx] : s[idx];
  const Eigen::ArrayXd& fy = (type_mask & 2) ? w[idx] : s[idx];
  const Eigen::ArrayXd& fz = (type_mask & 1) ? w[idx] : s[idx];
  const int shift = 1 << (g.level - level);
  GridField out(g);
  for (int ix = 0; ix < g.points; ++ix)
    for (int iy = 0; iy < g.points; ++iy)
      for (int iz = 0; iz < g.points; ++iz)
        out(ix, iy, iz) = fx[wrap(ix - cx * shift, g.points)] *
                          fy[wrap(iy - cy * shift, g.points)] *
                          fz[wrap(iz - cz * shift, g.points)];
  return out;
}

}  // namespace

TEST_CASE("daubechies filters satisfy the structure relations for p = 1..4") {
  for (int p = 1; p <= 4; ++p) {
    const WaveletBasis b = daubechies_coefficients(p);
    REQUIRE(b.h.size() == 2 * p);
    CHECK(b.h.sum() == doctest::Approx(std::sqrt(2.0)).epsilon(1e-12));
    for (int m = 0; m < 2 * p; ++m) {
      double acc = 0;
      for (int k = 0; k + 2 * m < 2 * p; ++k) acc += b.h[k] * b.h[k + 2 * m];
      CHECK(acc == doctest::Approx(m == 0 ? 1.0 : 0.0).epsilon(0).scale(1).epsilon(1e-12));
    }
    CHECK(std::abs(b.g.sum()) <= 1e-12);
    // vanishing discrete moments of the wavelet filter up to p-1
    for (int q = 0; q < p; ++q) {
      double acc = 0;
      for (int k = 0; k < 2 * p; ++k) acc += b.g[k] * std::pow(static_cast<double>(k), q);
      CHECK(std::abs(acc) <= 1e-10);
    }
  }
  CHECK_THROWS_AS(daubechies_coefficients(0), std::invalid_argument);
  CHECK_THROWS_AS(daubechies_coefficients(5), std::invalid_argument);
}

TEST_CASE("haar is forced and db2 matches its closed form") {
  const WaveletBasis haar = daubechies_coefficients(1);
  CHECK(haar.h[0] == doctest::Approx(1.0 / std::sqrt(2.0)).epsilon(1e-15));
  CHECK(haar.h[1] == doctest::Approx(1.0 / std::sqrt(2.0)).epsilon(1e-15));

  const WaveletBasis db2 = daubechies_coefficients(2);
  const double s3 = std::sqrt(3.0), d = 4.0 * std::sqrt(2.0);
  CHECK(db2.h[0] == doctest::Approx((1 + s3) / d).epsilon(1e-12));
  CHECK(db2.h[1] == doctest::Approx((3 + s3) / d).epsilon(1e-12));
  CHECK(db2.h[2] == doctest::Approx((3 - s3) / d).epsilon(1e-12));
  CHECK(db2.h[3] == doctest::Approx((1 - s3) / d).epsilon(1e-12));
}

TEST_CASE("grid MRA: Kronecker seed and the two-term Haar recursion by hand") {
  const Grid g = make_grid(2);
  const GridMRA mra = build_grid_mra(g, daubechies_coefficients(1), 1);
  // phi^{2,2}_0 in 1D is 2^{2/2} delta
  const Eigen::ArrayXd& top = mra.scaling_1d.back();
  CHECK(top[0] == doctest::Approx(2.0));
  CHECK(top[1] == 0.0);
  // phi^{2,1}_0 = sum_k a_k phi^{2,2}_{k/2}: value 2 / sqrt(2) on two sites
  const Eigen::ArrayXd& lvl1 = mra.scaling_1d.front();
  CHECK(lvl1[0] == doctest::Approx(std::sqrt(2.0)).epsilon(1e-14));
  CHECK(lvl1[1] == doctest::Approx(std::sqrt(2.0)).epsilon(1e-14));
  CHECK(lvl1[2] == 0.0);
  CHECK(lvl1[3] == 0.0);

  CHECK_THROWS_AS(build_grid_mra(g, daubechies_coefficients(1), 3), std::invalid_argument);
  CHECK_THROWS_AS(build_grid_mra(g, daubechies_coefficients(1), -1), std::invalid_argument);
}

TEST_CASE("n_min = N leaves only trivially orthonormal Kronecker functions") {
  const Grid g = make_grid(2);
  const GridMRA mra = build_grid_mra(g, daubechies_coefficients(2), g.level);
  const GridField f = white_field(g, 4, 1.0);
  const WaveletCoeffs c = wavelet_transform(f, mra);
  CHECK(c.details.empty());
  CHECK(c.scaling.size() == g.site_count());
  const double direct = grid_inner(f, f);
  CHECK(c.sum_squares() == doctest::Approx(direct).epsilon(1e-12));
}

TEST_CASE("eps-weighted Gram of the grid basis is the identity") {
  for (int p : {1, 2}) {
    for (int n_min : {0, 1}) {
      const Grid g = make_grid(3);
      const GridMRA mra = build_grid_mra(g, daubechies_coefficients(p), n_min);
      // 1D Gram per level: shifts on the level lattice
      const double eps1 = g.mesh;
      for (std::size_t li = 0; li < mra.scaling_1d.size(); ++li) {
        const int n = n_min + static_cast<int>(li);
        const int pts = 1 << n;
        const int shift_unit = 1 << (g.level - n);
        for (int sh = 0; sh < pts; ++sh) {
          double ss = 0, sw = 0, ww = 0;
          for (int y = 0; y < g.points; ++y) {
            const int ys = wrap(y - sh * shift_unit, g.points);
            ss += mra.scaling_1d[li][y] * mra.scaling_1d[li][ys];
            if (li < mra.wavelet_1d.size()) {
              sw += mra.scaling_1d[li][y] * mra.wavelet_1d[li][ys];
              ww += mra.wavelet_1d[li][y] * mra.wavelet_1d[li][ys];
            }
          }
          CHECK(std::abs(eps1 * ss - (sh == 0 ? 1.0 : 0.0)) <= 1e-12);
          if (li < mra.wavelet_1d.size()) {
            CHECK(std::abs(eps1 * sw) <= 1e-12);
            CHECK(std::abs(eps1 * ww - (sh == 0 ? 1.0 : 0.0)) <= 1e-12);
          }
        }
      }
    }
  }
}

TEST_CASE("transform recovers unit coefficients on basis functions") {
  const Grid g = make_grid(3);
  for (int p : {1, 2}) {
    const GridMRA mra = build_grid_mra(g, daubechies_coefficients(p), 1);
    // a scaling function at the base level
    const GridField phi = tensor_function(mra, 1, 0, 1, 0, 1);
    const WaveletCoeffs cp = wavelet_transform(phi, mra);
    const int base_pts = 1 << 1;
    CHECK(cp.scaling[site_index(make_grid(1), 1, 0, 1)] == doctest::Approx(1.0).epsilon(1e-8));
    CHECK(cp.sum_squares() == doctest::Approx(1.0).epsilon(1e-8));
    (void)base_pts;

    // a wavelet of mixed type at level 2
    const GridField psi = tensor_function(mra, 2, 5, 3, 2, 0);
    const WaveletCoeffs cw = wavelet_transform(psi, mra);
    const Eigen::ArrayXd& block =
        cw.details[static_cast<std::size_t>(2 - mra.n_min)][5 - 1];
    CHECK(block[site_index(make_grid(2), 3, 2, 0)] == doctest::Approx(1.0).epsilon(1e-8));
    CHECK(cw.sum_squares() == doctest::Approx(1.0).epsilon(1e-8));
  }
}

TEST_CASE("Parseval and roundtrip on random fields across configurations") {
  for (int p : {1, 2}) {
    for (int n_min : {0, 1}) {
      for (int n = 2; n <= 4; ++n) {
        const Grid g = make_grid(n);
        const GridMRA mra = build_grid_mra(g, daubechies_coefficients(p), n_min);
        const GridField f = white_field(g, 1000u * p + 10u * n_min + static_cast<unsigned>(n), 1.0);
        const WaveletCoeffs c = wavelet_transform(f, mra);
        const double direct = grid_inner(f, f);
        CHECK(std::abs(c.sum_squares() / direct - 1.0) <= 1e-8);
        const GridField back = inverse_wavelet_transform(c, mra);
        CHECK((back.values - f.values).abs().maxCoeff() <= 1e-8 * f.values.abs().maxCoeff());
      }
    }
  }
  // zero field maps to zero coefficients
  const Grid g = make_grid(3);
  const GridMRA mra = build_grid_mra(g, daubechies_coefficients(2), 0);
  const WaveletCoeffs zc = wavelet_transform(GridField(g), mra);
  CHECK(zc.sum_squares() == 0.0);
}

TEST_CASE("holder norm: zero and constant fields, exact closed forms") {
  const Grid g = make_grid(2);
  for (int n_min : {0, 1}) {
    const GridMRA mra = build_grid_mra(g, daubechies_coefficients(1), n_min);
    CHECK(holder_norm(GridField(g), -0.5, mra) == 0.0);

    const double alpha = -0.7;
    const GridField one = constant_field(g, 1.0);
    // details of a constant vanish; scaling coefficients are 2^{-3 n_min / 2}
    const double oracle = std::pow(2.0, n_min * (alpha + 1.5)) * std::pow(2.0, -1.5 * n_min);
    CHECK(holder_norm(one, alpha, mra) == doctest::Approx(oracle).epsilon(1e-12));
  }
  const GridMRA mra = build_grid_mra(g, daubechies_coefficients(1), 0);
  CHECK_THROWS_AS(holder_norm(constant_field(g, 1.0), 0.0, mra), std::invalid_argument);
}

TEST_CASE("holder norm is homogeneous, subadditive, and level-monotone") {
  const Grid g = make_grid(4);
  const GridMRA mra = build_grid_mra(g, daubechies_coefficients(2), 1);
  const GridField f = white_field(g, 21, 1.0);
  const GridField h = white_field(g, 22, 2.0);
  const double alpha = -1.1;

  GridField cf(g);
  cf.values = -3.5 * f.values;
  CHECK(holder_norm(cf, alpha, mra) == doctest::Approx(3.5 * holder_norm(f, alpha, mra)));

  GridField sum(g);
  sum.values = f.values + h.values;
  CHECK(holder_norm(sum, alpha, mra) <=
        holder_norm(f, alpha, mra) + holder_norm(h, alpha, mra) + 1e-10);

  // more levels can only increase the sup
  double prev = 0;
  for (int cap = 1; cap <= 4; ++cap) {
    const double v = holder_norm(f, alpha, mra, cap);
    CHECK(v >= prev - 1e-15);
    prev = v;
  }
}

TEST_CASE("white-noise norm separates alpha = -3/2 as the critical exponent") {
  // i.i.d. N(0, eps^-3) fields: bounded norms below -3/2, growth above
  const int seeds = 8;
  double lo_3 = 0, lo_5 = 0, hi_3 = 0, hi_5 = 0;
  for (int s = 0; s < seeds; ++s) {
    for (const int n : {3, 5}) {
      const Grid g = make_grid(n);
      const GridMRA mra = build_grid_mra(g, daubechies_coefficients(2), 1);
      const GridField f = white_field(g, 300 + 10 * s + static_cast<unsigned>(n),
                                      std::sqrt(1.0 / g.cell_volume()));
      const double lo = holder_norm(f, -1.5 - 0.1, mra);
      const double hi = holder_norm(f, -1.5 + 0.1, mra);
      (n == 3 ? lo_3 : lo_5) += lo / seeds;
      (n == 3 ? hi_3 : hi_5) += hi / seeds;
    }
  }
  const double growth_subcritical = lo_5 / lo_3;
  const double growth_supercritical = hi_5 / hi_3;
  CHECK(growth_supercritical > growth_subcritical + 0.1);
  CHECK(growth_supercritical > 1.2);
}

TEST_CASE("holder distance: identical fields, constant offsets, grid checks") {
  const Grid gc = make_grid(3);
  const Grid gf = make_grid(4);
  const GridMRA mra_f = build_grid_mra(gf, daubechies_coefficients(1), 0);
  const GridField f = white_field(gc, 5, 1.0);

  // inject to the same grid: distance of a field to its own extension is 0
  const GridField fe = inject_piecewise_constant(f, gf);
  CHECK(holder_distance(f, fe, -0.6, mra_f) == 0.0);

  GridField shifted = fe;
  shifted.values += 2.0;
  const GridField one = constant_field(gf, 1.0);
  const double unit = holder_norm(one, -0.6, mra_f, gc.level);
  CHECK(holder_distance(f, shifted, -0.6, mra_f) == doctest::Approx(2.0 * unit).epsilon(1e-10));

  CHECK_THROWS_AS(holder_distance(white_field(gf, 6, 1.0), f, -0.6, mra_f),
                  std::invalid_argument);
}

TEST_CASE("distance between coupled white noise levels decreases with N") {
  // block-averaged white noise vs the fine field it came from
  const double alpha = -1.8;
  std::vector<double> coarse_pair, fine_pair;
  for (int s = 0; s < 20; ++s) {
    for (const int n : {3, 4}) {
      const Grid gf = make_grid(n + 1);
      const GridField fine = white_field(gf, 700 + 10 * s + static_cast<unsigned>(n),
                                         std::sqrt(1.0 / gf.cell_volume()));
      // block average down one level
      const Grid gc = make_grid(n);
      GridField coarse(gc);
      for (int ix = 0; ix < gc.points; ++ix)
        for (int iy = 0; iy < gc.points; ++iy)
          for (int iz = 0; iz < gc.points; ++iz) {
            double acc = 0;
            for (int a = 0; a < 2; ++a)
              for (int b = 0; b < 2; ++b)
                for (int c = 0; c < 2; ++c) acc += fine(2 * ix + a, 2 * iy + b, 2 * iz + c);
            coarse(ix, iy, iz) = acc / 8.0;
          }
      const GridMRA mra = build_grid_mra(gf, daubechies_coefficients(1), 0);
      const double d = holder_distance(coarse, fine, alpha, mra);
      CHECK(d > 0.0);
      (n == 3 ? coarse_pair : fine_pair).push_back(d);
    }
  }
  CHECK(median(fine_pair) < median(coarse_pair));
}

TEST_CASE("spacetime seminorm: zero, constant-in-time, and OU stability") {
  const Grid g = make_grid(3);
  const GridMRA mra = build_grid_mra(g, daubechies_coefficients(1), 1);
  SpacetimeNormParams p;
  p.alpha = -0.8;
  p.delta = 0.25;
  p.eta = -0.2;

  Trajectory zero = make_trajectory(g);
  for (int j = 1; j <= 4; ++j) zero.push(0.1 * j, GridField(g));
  CHECK(spacetime_seminorm(zero, p, mra) == 0.0);
  CHECK_THROWS_AS(spacetime_seminorm(make_trajectory(g), p, mra), std::invalid_argument);

  const GridField f = white_field(g, 9, 1.0);
  Trajectory constant = make_trajectory(g);
  for (int j = 1; j <= 4; ++j) constant.push(0.1 * j, f);
  SpacetimeNormParams p0 = p;
  p0.delta = 0.0;
  // with a constant trajectory the two-time term vanishes
  CHECK(spacetime_seminorm(constant, p, mra) ==
        doctest::Approx(spacetime_seminorm(constant, p0, mra)));

  // OU-type trajectory: seminorm finite and seed-stable within a factor 2
  const KernelSet ks = make_kernel_set(g);
  auto ou_traj = [&](std::uint64_t seed) {
    Trajectory t = make_trajectory(g);
    GridField state = white_field(g, seed, 1.0);
    const double dt = 0.01;
    for (int j = 1; j <= 16; ++j) {
      state = heat_semigroup_apply(state, dt, ks);
      GridField kick = white_field(g, seed + 100 * static_cast<unsigned>(j), std::sqrt(dt));
      state.values += kick.values;
      t.push(j * dt, state);
    }
    return t;
  };
  const double s1 = spacetime_seminorm(ou_traj(41), p, mra);
  const double s2 = spacetime_seminorm(ou_traj(42), p, mra);
  CHECK(s1 > 0);
  CHECK(std::isfinite(s1));
  CHECK(s1 / s2 < 2.0);
  CHECK(s2 / s1 < 2.0);
}

TEST_CASE("spacetime distance is zero for identical levels and detects offsets") {
  const Grid gc = make_grid(2);
  const Grid gf = make_grid(3);
  const GridMRA mra = build_grid_mra(gf, daubechies_coefficients(1), 0);
  SpacetimeNormParams p;
  p.alpha = -0.6;
  p.delta = 0.1;

  Trajectory a = make_trajectory(gc);
  Trajectory b = make_trajectory(gf);
  for (int j = 1; j <= 3; ++j) {
    const GridField f = white_field(gc, 60 + static_cast<unsigned>(j), 1.0);
    a.push(0.05 * j, f);
    b.push(0.05 * j, inject_piecewise_constant(f, gf));
  }
  CHECK(spacetime_distance(a, b, p, mra) == 0.0);

  b.slices[2].values += 1.0;
  CHECK(spacetime_distance(a, b, p, mra) > 0.0);
}
