#pragma once

#include "phi4/grid.hpp"
#include "phi4/grid_io.hpp"
#include "phi4/rng.hpp"
#include "phi4/spectral.hpp"

#include <cmath>
#include <memory>
#include <stdexcept>
#include <vector>

namespace phi4 {

namespace detail {
constexpr std::uint64_t kNoisePurpose = 0x1707;
}

/// Time-integrated white noise increments W(j, x) ~ N(0, dt eps^-3) on the
/// grid. Fields are either regenerated on demand from the counter-based
/// stream (possibly block-averaged down from gen_level) or hold materialized
/// data (mollified noise).
struct NoiseField {
  Grid grid;                 // level of this field
  int gen_level = 0;         // level at which gaussians are drawn
  double dt = 0;
  int steps = 0;
  int first_slice = 0;       // absolute index of slice 0 in the stream
  std::uint64_t seed = 0;
  std::shared_ptr<const std::vector<Eigen::ArrayXd>> data;  // null -> regenerate

  bool materialized() const { return static_cast<bool>(data); }

  Eigen::ArrayXd slice(int j) const;
};

namespace detail {

inline Eigen::ArrayXd generate_slice(std::uint64_t seed, int gen_level, int abs_slice) {
  const Grid g = make_grid(gen_level);
  const CounterRng rng = CounterRng::from_seed(seed)
                             .absorb(kNoisePurpose)
                             .absorb(static_cast<std::uint64_t>(gen_level))
                             .absorb_signed(abs_slice);
  Eigen::ArrayXd w(g.site_count());
  for (std::int64_t i = 0; i < g.site_count(); ++i)
    w[i] = rng.gaussian(static_cast<std::uint64_t>(i));
  return w;
}

// Average 2^3 children blocks, one level at a time (fixed reduction order so
// that repeated coarse-graining is bit-exact).
inline Eigen::ArrayXd reduce_one_level(const Eigen::ArrayXd& fine, int fine_level) {
  const int mf = 1 << fine_level;
  const int mc = mf / 2;
  Eigen::ArrayXd coarse(static_cast<std::int64_t>(mc) * mc * mc);
  for (int ix = 0; ix < mc; ++ix)
    for (int iy = 0; iy < mc; ++iy)
      for (int iz = 0; iz < mc; ++iz) {
        double acc = 0;
        for (int a = 0; a < 2; ++a)
          for (int b = 0; b < 2; ++b)
            for (int c = 0; c < 2; ++c) {
              const std::int64_t fi =
                  (static_cast<std::int64_t>(2 * ix + a) * mf + (2 * iy + b)) * mf +
                  (2 * iz + c);
              acc += fine[fi];
            }
        coarse[(static_cast<std::int64_t>(ix) * mc + iy) * mc + iz] = acc / 8.0;
      }
  return coarse;
}

}  // namespace detail

inline Eigen::ArrayXd NoiseField::slice(int j) const {
  if (j < 0 || j >= steps) throw std::out_of_range("NoiseField::slice index out of range");
  if (data) return (*data)[static_cast<std::size_t>(j)];
  const Grid gen_grid = make_grid(gen_level);
  const double sigma = std::sqrt(dt / gen_grid.cell_volume());
  Eigen::ArrayXd w = sigma * detail::generate_slice(seed, gen_level, first_slice + j);
  for (int lvl = gen_level; lvl > grid.level; --lvl)
    w = detail::reduce_one_level(w, lvl);
  return w;
}

inline NoiseField sample_noise(const Grid& grid, double dt, int steps, std::uint64_t seed,
                               int first_slice = 0) {
  if (dt <= 0) throw std::invalid_argument("sample_noise: dt must be positive");
  if (steps < 1) throw std::invalid_argument("sample_noise: steps must be >= 1");
  NoiseField n;
  n.grid = grid;
  n.gen_level = grid.level;
  n.dt = dt;
  n.steps = steps;
  n.first_slice = first_slice;
  n.seed = seed;
  return n;
}

/// Block average down to a coarser level; parent = mean of its 2^{3(N-N')}
/// children exactly, reproducing the law of sample_noise at the target level.
inline NoiseField coarse_grain(const NoiseField& fine, int target_level) {
  if (target_level >= fine.grid.level)
    throw std::invalid_argument("coarse_grain: target level must be strictly coarser");
  if (target_level < 1) throw std::invalid_argument("coarse_grain: target level must be >= 1");
  NoiseField n = fine;
  n.grid = make_grid(target_level);
  if (fine.data) {
    auto reduced = std::make_shared<std::vector<Eigen::ArrayXd>>();
    reduced->reserve(static_cast<std::size_t>(fine.steps));
    for (int j = 0; j < fine.steps; ++j) {
      Eigen::ArrayXd w = (*fine.data)[static_cast<std::size_t>(j)];
      for (int lvl = fine.grid.level; lvl > target_level; --lvl)
        w = detail::reduce_one_level(w, lvl);
      reduced->push_back(std::move(w));
    }
    n.data = std::move(reduced);
  }
  return n;
}

/// Restrict to a sub-window of slices (used to align mollified and raw runs).
inline NoiseField restrict_noise(const NoiseField& n, int new_first_rel, int new_steps) {
  if (new_first_rel < 0 || new_first_rel + new_steps > n.steps)
    throw std::invalid_argument("restrict_noise: window outside available slices");
  NoiseField out = n;
  out.first_slice = n.first_slice + new_first_rel;
  out.steps = new_steps;
  if (n.data) {
    auto sub = std::make_shared<std::vector<Eigen::ArrayXd>>(
        n.data->begin() + new_first_rel, n.data->begin() + new_first_rel + new_steps);
    out.data = std::move(sub);
  }
  return out;
}

/// Space-time mollifier psi^{bar_eps, eps} sampled on the grid and the dt
/// lattice: slices m in [-half_bins, half_bins], discrete integral 1.
struct Mollifier {
  Grid grid;
  double dt = 0;
  double bar_eps = 0;
  double support_radius = 0;  // R such that support lies in B(0, R bar_eps)
  int half_bins = 0;
  std::vector<Eigen::ArrayXd> slices;  // size 2*half_bins + 1

  double discrete_integral() const {
    double s = 0;
    for (const auto& sl : slices) s += sl.sum();
    return s * dt * grid.cell_volume();
  }
};

/// (1-u^2)^5 bump in each of t (parabolic scale bar_eps^2) and x_i (scale bar_eps).
inline double mollifier_profile(double t, const Eigen::Vector3d& x) {
  auto q = [](double u) {
    const double v = 1.0 - u * u;
    return v > 0 ? v * v * v * v * v : 0.0;
  };
  return q(t) * q(x[0]) * q(x[1]) * q(x[2]);
}

inline Mollifier make_mollifier(const Grid& grid, double dt, double bar_eps) {
  if (bar_eps < grid.mesh || bar_eps > 1.0)
    throw std::invalid_argument("mollifier scale must lie in [eps, 1]");
  Mollifier m;
  m.grid = grid;
  m.dt = dt;
  m.bar_eps = bar_eps;
  m.support_radius = 1.0;
  const double t_support = bar_eps * bar_eps;
  m.half_bins = static_cast<int>(std::ceil(t_support / dt));
  const double scale = std::pow(bar_eps, -5.0);  // |s| = 5
  const int mp = grid.points;
  for (int bin = -m.half_bins; bin <= m.half_bins; ++bin) {
    Eigen::ArrayXd sl(grid.site_count());
    const double t = bin * dt / t_support;
    std::int64_t i = 0;
    for (int ix = 0; ix < mp; ++ix)
      for (int iy = 0; iy < mp; ++iy)
        for (int iz = 0; iz < mp; ++iz, ++i) {
          const Eigen::Vector3d x(torus_delta(ix * grid.mesh, 0.0) / bar_eps,
                                  torus_delta(iy * grid.mesh, 0.0) / bar_eps,
                                  torus_delta(iz * grid.mesh, 0.0) / bar_eps);
          sl[i] = scale * mollifier_profile(t, x);
        }
    m.slices.push_back(std::move(sl));
  }
  const double total = m.discrete_integral();
  if (total <= 0) throw std::invalid_argument("mollifier: empty discrete support");
  for (auto& sl : m.slices) sl /= total;
  return m;
}

/// Checks the mollifier conditions: unit discrete integral, support inside
/// B(0, R bar_eps) in the parabolic norm, and discrete-derivative bounds
/// |D^k psi| <= C bar_eps^{-5 - |k|_s} for |k|_s <= 2.
inline void validate_mollifier(const Mollifier& m, double bound_constant = 64.0) {
  if (std::abs(m.discrete_integral() - 1.0) > 1e-10)
    throw std::invalid_argument("mollifier: discrete space-time integral differs from 1");
  const double r = m.support_radius * m.bar_eps;
  const int mp = m.grid.points;
  double sup = 0, sup_dx = 0, sup_dt = 0;
  for (int b = 0; b < static_cast<int>(m.slices.size()); ++b) {
    const double t = (b - m.half_bins) * m.dt;
    const auto& sl = m.slices[static_cast<std::size_t>(b)];
    std::int64_t i = 0;
    for (int ix = 0; ix < mp; ++ix)
      for (int iy = 0; iy < mp; ++iy)
        for (int iz = 0; iz < mp; ++iz, ++i) {
          const double v = sl[i];
          if (v == 0) continue;
          const Eigen::Vector3d x(torus_delta(ix * m.grid.mesh, 0.0),
                                  torus_delta(iy * m.grid.mesh, 0.0),
                                  torus_delta(iz * m.grid.mesh, 0.0));
          if (parabolic_norm(t, x) > r + 1e-12)
            throw std::invalid_argument("mollifier: support exceeds R bar_eps ball");
          sup = std::max(sup, std::abs(v));
          const std::int64_t ip = (static_cast<std::int64_t>(ix) * mp + iy) * mp +
                                  wrap(iz + 1, mp);
          sup_dx = std::max(sup_dx, std::abs(sl[ip] - v) / m.grid.mesh);
          if (b + 1 < static_cast<int>(m.slices.size()))
            sup_dt = std::max(
                sup_dt, std::abs(m.slices[static_cast<std::size_t>(b + 1)][i] - v) / m.dt);
        }
  }
  const double s5 = std::pow(m.bar_eps, -5.0);
  if (sup > bound_constant * s5)
    throw std::invalid_argument("mollifier: sup bound violated");
  if (sup_dx > bound_constant * s5 / m.bar_eps)
    throw std::invalid_argument("mollifier: spatial derivative bound violated");
  if (sup_dt > bound_constant * s5 / (m.bar_eps * m.bar_eps))
    throw std::invalid_argument("mollifier: time derivative bound violated");
}

/// Space-time convolution psi *_eps xi on the increments: FFT in space,
/// direct sum in time. Output covers the sub-window where the convolution is
/// fully supported.
inline NoiseField mollify_noise(const NoiseField& fine, const Mollifier& moll) {
  if (moll.grid != fine.grid) throw std::invalid_argument("mollify_noise: grid mismatch");
  if (std::abs(moll.dt - fine.dt) > 1e-15 * std::max(moll.dt, fine.dt))
    throw std::invalid_argument("mollify_noise: time step mismatch");
  validate_mollifier(moll);
  const int p = moll.half_bins;
  const int out_steps = fine.steps - 2 * p;
  if (out_steps < 1)
    throw std::invalid_argument("mollify_noise: not enough slices for the mollifier support");

  // spectral mollifier slices
  std::vector<Eigen::ArrayXcd> psi_hat;
  psi_hat.reserve(moll.slices.size());
  for (const auto& sl : moll.slices) {
    GridField f(fine.grid);
    f.values = sl;
    psi_hat.push_back(forward_transform(f).coeffs);
  }
  // spectral input slices
  std::vector<Eigen::ArrayXcd> w_hat;
  w_hat.reserve(static_cast<std::size_t>(fine.steps));
  for (int j = 0; j < fine.steps; ++j) {
    GridField f(fine.grid);
    f.values = fine.slice(j);
    w_hat.push_back(forward_transform(f).coeffs);
  }

  auto out = std::make_shared<std::vector<Eigen::ArrayXd>>();
  out->reserve(static_cast<std::size_t>(out_steps));
  for (int j = 0; j < out_steps; ++j) {
    Eigen::ArrayXcd acc = Eigen::ArrayXcd::Zero(fine.grid.site_count());
    for (int bin = -p; bin <= p; ++bin)
      acc += psi_hat[static_cast<std::size_t>(bin + p)] * w_hat[static_cast<std::size_t>(j + p - bin)];
    acc *= fine.dt;
    SpectralField s(fine.grid);
    s.coeffs = std::move(acc);
    out->push_back(inverse_transform(s).values);
  }

  NoiseField n = fine;
  n.first_slice = fine.first_slice + p;
  n.steps = out_steps;
  n.data = std::move(out);
  return n;
}

// ---- checkpoint format: header (seed, levels, dt, steps) + increments ----

inline void save_noise(const NoiseField& n, const std::string& path) {
  std::string out = "PHI4NOIS";
  detail::put_u32_le(out, 1u);  // format version
  detail::put_u32_le(out, n.materialized() ? 1u : 0u);
  detail::put_u64_le(out, n.seed);
  detail::put_u32_le(out, static_cast<std::uint32_t>(n.gen_level));
  detail::put_u32_le(out, static_cast<std::uint32_t>(n.grid.level));
  detail::put_f64_le(out, n.dt);
  detail::put_u32_le(out, static_cast<std::uint32_t>(n.steps));
  detail::put_u32_le(out, static_cast<std::uint32_t>(n.first_slice));
  for (int j = 0; j < n.steps; ++j) {
    const Eigen::ArrayXd w = n.slice(j);
    for (Eigen::Index i = 0; i < w.size(); ++i) detail::put_f64_le(out, w[i]);
  }
  detail::write_file_bytes(path, out);
}

inline NoiseField load_noise(const std::string& path) {
  const std::string bytes = detail::read_file_bytes(path);
  if (bytes.size() < 48 || bytes.compare(0, 8, "PHI4NOIS") != 0)
    throw std::runtime_error("not a noise checkpoint: " + path);
  const auto* b = reinterpret_cast<const unsigned char*>(bytes.data());
  const std::uint32_t version = detail::get_u32_le(b + 8);
  if (version != 1) throw std::runtime_error("unsupported noise checkpoint version");
  const bool materialized = detail::get_u32_le(b + 12) != 0;
  NoiseField n;
  n.seed = detail::get_u64_le(b + 16);
  n.gen_level = static_cast<int>(detail::get_u32_le(b + 24));
  n.grid = make_grid(static_cast<int>(detail::get_u32_le(b + 28)));
  n.dt = detail::get_f64_le(b + 32);
  n.steps = static_cast<int>(detail::get_u32_le(b + 40));
  n.first_slice = static_cast<int>(static_cast<std::int32_t>(detail::get_u32_le(b + 44)));
  const std::size_t count = static_cast<std::size_t>(n.steps) *
                            static_cast<std::size_t>(n.grid.site_count());
  if (bytes.size() != 48 + 8 * count)
    throw std::runtime_error("noise checkpoint size mismatch");
  if (materialized) {
    auto data = std::make_shared<std::vector<Eigen::ArrayXd>>();
    data->reserve(static_cast<std::size_t>(n.steps));
    std::size_t off = 48;
    for (int j = 0; j < n.steps; ++j) {
      Eigen::ArrayXd w(n.grid.site_count());
      for (Eigen::Index i = 0; i < w.size(); ++i, off += 8)
        w[i] = detail::get_f64_le(b + off);
      data->push_back(std::move(w));
    }
    n.data = std::move(data);
  }
  // virtual noise regenerates from the header alone
  return n;
}

}  // namespace phi4
