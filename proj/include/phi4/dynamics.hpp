#pragma once

#include "phi4/kernels.hpp"
#include "phi4/models.hpp"
#include "phi4/noise.hpp"
#include "phi4/wavelets.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <stdexcept>
#include <vector>

namespace phi4 {

struct Phi4Params {
  double a = 1.0;               // mass
  double lambda = 0.1;          // coupling
  double c_eps = 0.0;           // renormalisation constant C^(eps)
  double dt = 0.0;
  double total_time = 0.0;      // T
  double blowup_threshold = 1e6;
};

inline void validate_phi4_params(const Phi4Params& p, const Grid& g) {
  if (p.lambda < 0) throw std::invalid_argument("phi4: lambda must be >= 0");
  if (p.dt <= 0) throw std::invalid_argument("phi4: dt must be positive");
  const double margin = g.mesh * g.mesh / 4.0;
  if (p.dt > margin * (1.0 + 1e-9))
    throw std::invalid_argument("phi4: dt exceeds the parabolic stability margin eps^2/4");
  if (p.total_time < 0) throw std::invalid_argument("phi4: T must be >= 0");
  if (p.blowup_threshold <= 0) throw std::invalid_argument("phi4: blow-up threshold must be positive");
}

namespace detail {

// spectral data reused across steps
struct StepPlan {
  Eigen::ArrayXcd decay;  // e^{dt a(k)}
  Eigen::ArrayXcd gain;   // exact stochastic-convolution rescaling of increments
};

inline StepPlan make_step_plan(const KernelSet& ks, double dt) {
  StepPlan plan;
  plan.decay = (dt * ks.symbol).exp().cast<std::complex<double>>();
  plan.gain = convolution_gain(ks.symbol, dt).cast<std::complex<double>>();
  return plan;
}

// one semi-implicit step: exact heat flow, explicit reaction at the evolved
// state, stochastic convolution of the increment applied post-linear-step
inline void step_inplace(GridField& state, const Eigen::ArrayXd& noise_slice,
                         const Phi4Params& p, const StepPlan& plan) {
  SpectralField s = forward_transform(state);
  s.coeffs *= plan.decay;
  state = inverse_transform(s);
  state.values +=
      p.dt * ((p.c_eps - p.a) * state.values - p.lambda * state.values.cube());
  GridField w(state.grid);
  w.values = noise_slice;
  SpectralField sw = forward_transform(w);
  sw.coeffs *= plan.gain;
  state.values += inverse_transform(sw).values;
}

}  // namespace detail

inline GridField step_phi4(const GridField& state, const Eigen::ArrayXd& noise_slice,
                           const Phi4Params& p, const KernelSet& ks) {
  validate_phi4_params(p, ks.grid);
  if (state.grid != ks.grid) throw std::invalid_argument("step_phi4: grid mismatch");
  GridField out = state;
  detail::step_inplace(out, noise_slice, p, detail::make_step_plan(ks, p.dt));
  return out;
}

struct RunResult {
  Trajectory trajectory;              // thinned, includes t = 0
  std::optional<double> stopped_at;   // set iff the sup norm crossed the threshold
  std::vector<double> sup_norms;      // per stored slice
};

/// Integrate the renormalised dynamics from `initial` over [0, T], storing
/// every `stride`-th slice. A blow-up stops the run and is reported as data.
inline RunResult run_simulation(const GridField& initial, const NoiseField& noise,
                                const Phi4Params& p, const KernelSet& ks, int stride = 1) {
  validate_phi4_params(p, ks.grid);
  if (initial.grid != ks.grid || noise.grid != ks.grid)
    throw std::invalid_argument("run_simulation: grid mismatch");
  if (std::abs(noise.dt - p.dt) > 1e-12 * p.dt)
    throw std::invalid_argument("run_simulation: noise and params disagree on dt");
  const auto steps = static_cast<int>(std::llround(p.total_time / p.dt));
  if (noise.steps < steps)
    throw std::invalid_argument("run_simulation: noise does not cover [0, T]");
  if (stride < 1) throw std::invalid_argument("run_simulation: stride must be >= 1");

  RunResult result;
  result.trajectory = make_trajectory(ks.grid);
  result.trajectory.push(0.0, initial);
  result.sup_norms.push_back(initial.values.abs().maxCoeff());

  GridField state = initial;
  const detail::StepPlan plan = detail::make_step_plan(ks, p.dt);
  for (int j = 0; j < steps; ++j) {
    detail::step_inplace(state, noise.slice(j), p, plan);
    const double sup = state.values.abs().maxCoeff();
    const bool finite = state.values.isFinite().all();
    if (!finite || sup > p.blowup_threshold) {
      result.stopped_at = (j + 1) * p.dt;
      break;
    }
    if ((j + 1) % stride == 0 || j + 1 == steps) {
      result.trajectory.push((j + 1) * p.dt, state);
      result.sup_norms.push_back(sup);
    }
  }
  return result;
}

struct ConvergenceParams {
  std::vector<int> levels;     // strictly increasing, at least three
  double lambda = 0.1;
  double a = 1.0;
  double total_time = 0.25;
  double alpha = -0.6;
  double delta = 0.1;
  double eta = -0.65;
  int store_slices = 32;
  bool renormalize = true;     // false: the c_eps = 0 ablation
  int wavelet_order = 2;
  std::uint64_t seed = 0;
};

struct PairDistance {
  int coarse_level = 0;
  int fine_level = 0;
  double dist_alpha = 0;       // sup over matched times of the C^alpha distance
  double dist_spacetime = 0;   // with the two-time term at alpha - delta
  // diagnostic: the same sup with scales capped at the coarsest level of the
  // experiment minus one, so every pair is compared over the same scale window
  double dist_matched = 0;
};

struct ConvergenceResult {
  std::vector<int> levels;
  std::vector<double> c_eps;
  std::vector<bool> stopped;
  std::vector<PairDistance> pairs;  // consecutive level pairs, empty if any run stopped
};

/// The coupled multi-level experiment: one noise realization at the finest
/// level drives every level through block averaging; each level runs with its
/// own renormalisation constant and the shared fine time step.
inline ConvergenceResult coupled_convergence(
    const ConvergenceParams& p, const std::map<int, RenormConstants>& constants) {
  if (p.levels.size() < 3)
    throw std::invalid_argument("coupled_convergence: need at least three levels");
  for (std::size_t i = 1; i < p.levels.size(); ++i)
    if (p.levels[i] <= p.levels[i - 1])
      throw std::invalid_argument("coupled_convergence: level list not strictly increasing");

  const int fine_level = p.levels.back();
  const Grid fine_grid = make_grid(fine_level);
  const double dt = fine_grid.mesh * fine_grid.mesh / 4.0;
  const auto steps = static_cast<int>(std::llround(p.total_time / dt));
  const int stride = std::max(1, steps / std::max(1, p.store_slices));
  const NoiseField fine_noise = sample_noise(fine_grid, dt, steps, p.seed);

  ConvergenceResult result;
  result.levels = p.levels;
  std::vector<Trajectory> trajectories;
  for (const int level : p.levels) {
    const Grid g = make_grid(level);
    const KernelSet ks = make_kernel_set(g);
    const NoiseField noise =
        level == fine_level ? fine_noise : coarse_grain(fine_noise, level);
    Phi4Params params;
    params.a = p.a;
    params.lambda = p.lambda;
    params.dt = dt;
    params.total_time = p.total_time;
    if (p.renormalize) {
      const auto it = constants.find(level);
      if (it == constants.end())
        throw std::invalid_argument("coupled_convergence: missing constants for a level");
      params.c_eps = it->second.c_total(p.lambda);
    }
    result.c_eps.push_back(params.c_eps);
    RunResult run = run_simulation(GridField(g), noise, params, ks, stride);
    result.stopped.push_back(run.stopped_at.has_value());
    trajectories.push_back(std::move(run.trajectory));
  }

  const bool any_stopped =
      std::any_of(result.stopped.begin(), result.stopped.end(), [](bool b) { return b; });
  if (!any_stopped) {
    const int n_match = p.levels.front() - 1;
    for (std::size_t i = 0; i + 1 < p.levels.size(); ++i) {
      const Grid gf = make_grid(p.levels[i + 1]);
      const GridMRA mra = build_grid_mra(gf, daubechies_coefficients(p.wavelet_order), 0);
      // drop the t = 0 slices: both runs start from the same zero field
      Trajectory coarse = trajectories[i];
      Trajectory fine = trajectories[i + 1];
      coarse.stamps.erase(coarse.stamps.begin());
      coarse.slices.erase(coarse.slices.begin());
      fine.stamps.erase(fine.stamps.begin());
      fine.slices.erase(fine.slices.begin());
      SpacetimeNormParams np;
      np.alpha = p.alpha;
      np.eta = p.eta;
      np.delta = 0.0;
      PairDistance pd;
      pd.coarse_level = p.levels[i];
      pd.fine_level = p.levels[i + 1];
      pd.dist_alpha = spacetime_distance(coarse, fine, np, mra);
      np.delta = p.delta;
      pd.dist_spacetime = spacetime_distance(coarse, fine, np, mra);
      // fixed-window diagnostic, level cap shared by every pair
      const double eps_c = coarse.grid.mesh;
      for (std::size_t j = 0; j < coarse.size(); ++j) {
        GridField d = inject_piecewise_constant(coarse.slices[j], gf);
        d.values -= fine.slices[j].values;
        const double w = std::pow(time_weight(coarse.stamps[j], eps_c), -p.eta);
        pd.dist_matched =
            std::max(pd.dist_matched, w * holder_norm(d, p.alpha, mra, n_match));
      }
      result.pairs.push_back(pd);
    }
  }
  return result;
}

/// Renormalisation constants of the mollified kernel K^{bar eps, eps} =
/// K *_eps psi^{bar eps, eps}, computed on the dt time lattice. c2 keeps the
/// outer kernel un-mollified, matching the defining expression.
struct MollifiedConstants {
  double c1 = 0;
  double c2 = 0;
  double c1_raw = 0;  // raw kernel on the same quadrature, for comparisons
};

inline MollifiedConstants mollified_renorm_constants(const KernelSet& ks,
                                                     const Mollifier& moll) {
  const Grid& g = ks.grid;
  if (moll.grid != g) throw std::invalid_argument("mollified constants: grid mismatch");
  const double dt = moll.dt;
  const auto j_max = static_cast<int>(std::llround(ks.time_cutoff / dt));
  const int p = moll.half_bins;
  const auto n = g.site_count();

  // spectral mollifier slices
  std::vector<Eigen::ArrayXcd> psi_hat;
  for (const auto& sl : moll.slices) {
    GridField f(g);
    f.values = sl;
    psi_hat.push_back(forward_transform(f).coeffs);
  }
  // raw kernel spectral profile on (0, T], zero mode excluded
  const auto k_hat = [&](int j) {
    Eigen::ArrayXcd v = Eigen::ArrayXcd::Zero(n);
    if (j >= 1 && j <= j_max)
      for (Eigen::Index i = 1; i < n; ++i) v[i] = std::exp(j * dt * ks.symbol[i]);
    return v;
  };

  // mollified kernel on j in [1 - p, j_max + p]
  const int lo = 1 - p, hi = j_max + p;
  std::vector<Eigen::ArrayXcd> km(static_cast<std::size_t>(hi - lo + 1));
  for (int j = lo; j <= hi; ++j) {
    Eigen::ArrayXcd acc = Eigen::ArrayXcd::Zero(n);
    for (int b = -p; b <= p; ++b) {
      const int src = j - b;
      if (src < 1 || src > j_max) continue;
      acc += psi_hat[static_cast<std::size_t>(b + p)] * k_hat(src);
    }
    km[static_cast<std::size_t>(j - lo)] = dt * acc;
  }

  MollifiedConstants out;
  for (const auto& slice : km) out.c1 += dt * slice.abs2().sum();
  for (int j = 1; j <= j_max; ++j) out.c1_raw += dt * k_hat(j).abs2().sum();

  // q = K_m *_eps K_m in time (per mode), then 2 int q^2 K dz
  for (int j = 1; j <= j_max; ++j) {
    Eigen::ArrayXcd q = Eigen::ArrayXcd::Zero(n);
    for (int m = lo; m <= hi; ++m) {
      const int other = j - m;
      if (other < lo || other > hi) continue;
      q += km[static_cast<std::size_t>(m - lo)] * km[static_cast<std::size_t>(other - lo)];
    }
    q *= dt;
    SpectralField sq(g), sk(g);
    sq.coeffs = q;
    sk.coeffs = k_hat(j);
    const GridField qf = inverse_transform(sq);
    const GridField kf = inverse_transform(sk);
    out.c2 += dt * 2.0 * g.cell_volume() * (qf.values.square() * kf.values).sum();
  }
  return out;
}

struct MollifiedComparisonParams {
  int level = 3;
  std::vector<double> bar_eps;  // each in [eps, 1]
  double lambda = 0.1;
  double a = 1.0;
  double total_time = 0.25;
  double alpha = -0.6;
  double eta = 0.0;
  int store_slices = 16;
  int wavelet_order = 1;
  std::uint64_t seed = 0;
};

struct MollifiedComparisonRow {
  double bar_eps = 0;
  double distance = 0;   // sup-in-time C^alpha distance to the raw run
  double c1 = 0;         // mollified-kernel constant
  double c2 = 0;
};

struct MollifiedComparisonResult {
  double c1_raw = 0;
  std::vector<MollifiedComparisonRow> rows;
};

/// Runs the dynamics with mollified noise and mollified-kernel constants and
/// reports the distance to the raw run as bar eps shrinks.
inline MollifiedComparisonResult mollified_comparison(const MollifiedComparisonParams& p) {
  const Grid g = make_grid(p.level);
  const KernelSet ks = make_kernel_set(g);
  const double dt = g.mesh * g.mesh / 4.0;
  const auto steps = static_cast<int>(std::llround(p.total_time / dt));
  const int stride = std::max(1, steps / std::max(1, p.store_slices));

  std::vector<Mollifier> mollifiers;
  int pad = 0;
  for (const double be : p.bar_eps) {
    mollifiers.push_back(make_mollifier(g, dt, be));
    pad = std::max(pad, mollifiers.back().half_bins);
  }
  const NoiseField full = sample_noise(g, dt, steps + 2 * pad, p.seed);
  const NoiseField base_noise = restrict_noise(full, pad, steps);

  Phi4Params params;
  params.a = p.a;
  params.lambda = p.lambda;
  params.dt = dt;
  params.total_time = p.total_time;
  const RenormConstants raw = compute_renorm_constants(ks);
  params.c_eps = raw.c_total(p.lambda);
  const RunResult base = run_simulation(GridField(g), base_noise, params, ks, stride);

  const GridMRA mra = build_grid_mra(g, daubechies_coefficients(p.wavelet_order), 0);
  SpacetimeNormParams np;
  np.alpha = p.alpha;
  np.eta = p.eta;
  np.delta = 0.0;

  MollifiedComparisonResult result;
  result.c1_raw = raw.c1;
  for (std::size_t i = 0; i < mollifiers.size(); ++i) {
    const Mollifier& moll = mollifiers[i];
    const NoiseField mollified_full = mollify_noise(full, moll);
    const NoiseField mollified =
        restrict_noise(mollified_full, pad - moll.half_bins, steps);
    const MollifiedConstants mc = mollified_renorm_constants(ks, moll);
    Phi4Params mp = params;
    mp.c_eps = 3.0 * p.lambda * mc.c1 - 9.0 * p.lambda * p.lambda * mc.c2;
    const RunResult run = run_simulation(GridField(g), mollified, mp, ks, stride);

    MollifiedComparisonRow row;
    row.bar_eps = p.bar_eps[i];
    row.c1 = mc.c1;
    row.c2 = mc.c2;
    Trajectory a_t = base.trajectory, b_t = run.trajectory;
    a_t.stamps.erase(a_t.stamps.begin());
    a_t.slices.erase(a_t.slices.begin());
    b_t.stamps.erase(b_t.stamps.begin());
    b_t.slices.erase(b_t.slices.begin());
    row.distance = spacetime_distance(a_t, b_t, np, mra);
    result.rows.push_back(row);
  }
  return result;
}

}  // namespace phi4
