#pragma once

#include "phi4/dynamics.hpp"
#include "phi4/stats.hpp"
#include "phi4/test_function.hpp"

#include <cmath>
#include <string>
#include <vector>

namespace phi4 {

struct ChainConfig {
  double dt = 0;             // 0: use eps^2 / 4
  double burn_in_time = 8.0;
  double thin_time = 1.0;
  int chains = 2;
};

struct LatticeMeasureParams {
  Grid grid;
  double lambda = 0.1;
  double a = 1.0;     // m0^2 > 0
  double c_eps = 0.0;
  ChainConfig chain;

  // operational smallness convention recorded in outputs: lambda <= 0.25 at a = 1
  bool lambda_small() const { return lambda <= 0.25; }
};

inline void validate_measure_params(const LatticeMeasureParams& p) {
  if (p.a <= 0) throw std::invalid_argument("measure: a = m0^2 must be positive");
  if (p.lambda < 0) throw std::invalid_argument("measure: lambda must be >= 0");
  if (p.chain.chains < 1) throw std::invalid_argument("measure: need at least one chain");
}

/// Lattice action with the gradient normalization fixed by the dynamics:
/// -grad S / eps^3 equals the drift Delta Phi + (c_eps - a) Phi - lambda Phi^3.
/// The kinetic sum runs over nearest-neighbour pairs counted twice.
inline double lattice_action(const GridField& f, const LatticeMeasureParams& p) {
  if (f.grid != p.grid) throw std::invalid_argument("lattice_action: grid mismatch");
  const Grid& g = f.grid;
  const int m = g.points;
  double kinetic = 0;
  for (int ix = 0; ix < m; ++ix)
    for (int iy = 0; iy < m; ++iy)
      for (int iz = 0; iz < m; ++iz) {
        const double v = f(ix, iy, iz);
        const double dx = f(ix + 1, iy, iz) - v;
        const double dy = f(ix, iy + 1, iz) - v;
        const double dz = f(ix, iy, iz + 1) - v;
        kinetic += dx * dx + dy * dy + dz * dz;
      }
  // (eps/4) * double-counted sum = (eps/2) * positive-direction sum
  const double eps3 = g.cell_volume();
  const double quad = f.values.square().sum();
  const double quart = f.values.square().square().sum();
  return 0.5 * g.mesh * kinetic - 0.5 * (p.c_eps - p.a) * eps3 * quad +
         0.25 * p.lambda * eps3 * quart;
}

/// The Langevin drift the sampler shares with the dynamics.
inline GridField action_drift(const GridField& f, const LatticeMeasureParams& p) {
  GridField out = apply_discrete_laplacian(f);
  out.values += (p.c_eps - p.a) * f.values - p.lambda * f.values.cube();
  return out;
}

struct MeasureSamples {
  std::vector<GridField> fields;
  double tau_int = 1.0;  // of the pairing observable, in thinned draws
  double r_hat = 1.0;
  bool converged = true;
  int blowups = 0;
};

namespace detail {
constexpr std::uint64_t kChainPurpose = 0xc4a1;
constexpr std::uint64_t kEvolvePurpose = 0xe701;
}  // namespace detail

/// Long-run Langevin sampling of the lattice measure, reusing the dynamics
/// integrator: burn-in, thinning, an autocorrelation estimate and a two-chain
/// R-hat diagnostic.
inline MeasureSamples sample_invariant_measure(const LatticeMeasureParams& p, int n_samples,
                                               std::uint64_t seed) {
  validate_measure_params(p);
  if (n_samples < 2) throw std::invalid_argument("sample_invariant_measure: n_samples < 2");
  const Grid& g = p.grid;
  const KernelSet ks = make_kernel_set(g);
  Phi4Params dyn;
  dyn.a = p.a;
  dyn.lambda = p.lambda;
  dyn.c_eps = p.c_eps;
  dyn.dt = p.chain.dt > 0 ? p.chain.dt : g.mesh * g.mesh / 4.0;
  dyn.total_time = 1.0;
  validate_phi4_params(dyn, g);

  const auto burn = static_cast<int>(std::llround(p.chain.burn_in_time / dyn.dt));
  const auto gap = std::max(1, static_cast<int>(std::llround(p.chain.thin_time / dyn.dt)));
  const int chains = p.chain.chains;
  const int per_chain = (n_samples + chains - 1) / chains;

  const TestFunctionSample obs =
      sample_test_function(g, Eigen::Vector3d::Zero(), 0.25);

  MeasureSamples out;
  std::vector<std::vector<double>> observable(static_cast<std::size_t>(chains));
  const detail::StepPlan plan = detail::make_step_plan(ks, dyn.dt);
  for (int c = 0; c < chains; ++c) {
    const int steps = burn + gap * per_chain;
    const NoiseField noise = sample_noise(
        g, dyn.dt, steps,
        CounterRng::from_seed(seed).absorb(detail::kChainPurpose).bits(static_cast<std::uint64_t>(c)));
    GridField state(g);
    for (int j = 0; j < steps; ++j) {
      detail::step_inplace(state, noise.slice(j), dyn, plan);
      if (!state.values.isFinite().all() ||
          state.values.abs().maxCoeff() > dyn.blowup_threshold) {
        ++out.blowups;
        state = GridField(g);
        continue;
      }
      if (j >= burn && (j - burn + 1) % gap == 0 &&
          static_cast<int>(observable[static_cast<std::size_t>(c)].size()) < per_chain) {
        if (static_cast<int>(out.fields.size()) < n_samples) out.fields.push_back(state);
        observable[static_cast<std::size_t>(c)].push_back(pairing(state, obs));
      }
    }
  }
  std::vector<double> pooled;
  for (const auto& ch : observable) pooled.insert(pooled.end(), ch.begin(), ch.end());
  out.tau_int = integrated_autocorr_time(pooled);
  if (chains >= 2) {
    out.r_hat = gelman_rubin(observable);
    out.converged = out.r_hat < 1.1 && out.blowups == 0;
  }
  return out;
}

struct InvarianceOptions {
  double evolve_time = 0.1;
  std::vector<double> profile_scales = {0.25, 0.5};
  std::vector<Eigen::Vector3d> profile_centers = {Eigen::Vector3d::Zero(),
                                                  Eigen::Vector3d(0.5, 0.5, 0.5)};
  double p_threshold = 0.001;
  double dt = 0;  // 0: eps^2 / 4
  std::uint64_t seed = 0;
};

struct InvarianceTestRow {
  std::string name;
  double statistic = 0;
  double p_value = 1;    // unadjusted
  double p_adjusted = 1; // Bonferroni
};

struct InvarianceReport {
  std::vector<InvarianceTestRow> rows;
  double min_p_adjusted = 1;
  bool passed = true;
  int blowups = 0;
};

/// Evolves measure samples for a fixed time and compares the before/after
/// distributions of test-function pairings: two-sample KS plus paired z-tests
/// on the first four moments, Bonferroni-corrected.
inline InvarianceReport invariance_check(const LatticeMeasureParams& p,
                                         const MeasureSamples& samples,
                                         const InvarianceOptions& opt) {
  validate_measure_params(p);
  if (samples.fields.empty()) throw std::invalid_argument("invariance_check: no samples");
  const Grid& g = p.grid;
  const KernelSet ks = make_kernel_set(g);
  Phi4Params dyn;
  dyn.a = p.a;
  dyn.lambda = p.lambda;
  dyn.c_eps = p.c_eps;
  dyn.dt = opt.dt > 0 ? opt.dt : g.mesh * g.mesh / 4.0;
  dyn.total_time = opt.evolve_time;
  validate_phi4_params(dyn, g);
  const auto steps = static_cast<int>(std::llround(opt.evolve_time / dyn.dt));

  InvarianceReport report;
  std::vector<GridField> evolved;
  evolved.reserve(samples.fields.size());
  const detail::StepPlan plan = detail::make_step_plan(ks, dyn.dt);
  for (std::size_t i = 0; i < samples.fields.size(); ++i) {
    GridField state = samples.fields[i];
    if (steps > 0) {
      const NoiseField noise =
          sample_noise(g, dyn.dt, steps,
                       CounterRng::from_seed(opt.seed)
                           .absorb(detail::kEvolvePurpose)
                           .bits(static_cast<std::uint64_t>(i)));
      for (int j = 0; j < steps; ++j) detail::step_inplace(state, noise.slice(j), dyn, plan);
      if (!state.values.isFinite().all() ||
          state.values.abs().maxCoeff() > dyn.blowup_threshold) {
        ++report.blowups;
        state = samples.fields[i];
      }
    }
    evolved.push_back(std::move(state));
  }

  std::vector<InvarianceTestRow> rows;
  for (const double scale : opt.profile_scales) {
    for (const auto& center : opt.profile_centers) {
      const TestFunctionSample t = sample_test_function(g, center, scale);
      std::vector<double> before, after;
      for (std::size_t i = 0; i < samples.fields.size(); ++i) {
        before.push_back(pairing(samples.fields[i], t));
        after.push_back(pairing(evolved[i], t));
      }
      const std::string tag =
          "l=" + std::to_string(scale) + ",x=" + std::to_string(center[0]);
      const KsResult ks_r = ks_two_sample(before, after);
      rows.push_back({"ks " + tag, ks_r.statistic, ks_r.p_value, 0});
      for (int q = 1; q <= 4; ++q) {
        std::vector<double> diff(before.size());
        for (std::size_t i = 0; i < before.size(); ++i)
          diff[i] = std::pow(after[i], q) - std::pow(before[i], q);
        const MeanVar mv = mean_var(diff);
        const double se = mv.stderr_mean();
        const double z = se > 0 ? mv.mean / se : 0.0;
        rows.push_back({"moment" + std::to_string(q) + " " + tag, z, z_pvalue(z), 0});
      }
    }
  }
  const double correction = static_cast<double>(rows.size());
  report.min_p_adjusted = 1;
  for (auto& r : rows) {
    r.p_adjusted = std::min(1.0, r.p_value * correction);
    report.min_p_adjusted = std::min(report.min_p_adjusted, r.p_adjusted);
  }
  report.rows = std::move(rows);
  report.passed = report.min_p_adjusted > opt.p_threshold && report.blowups == 0;
  return report;
}

struct MomentScanRow {
  int level = 0;
  double q = 0;
  double nu = 0;
  double moment = 0;
  double stderr_ = 0;
  double normalized = 0;  // moment / nu^{-(1+kappa) q / 2}
};

/// E |<Phi, phi^nu>|^q across levels and scales, normalized by the tightness
/// exponent nu^{-(1+kappa) q/2}.
inline std::vector<MomentScanRow> moment_scan(const std::vector<LatticeMeasureParams>& params,
                                              const std::vector<double>& q_list,
                                              const std::vector<double>& nu_list,
                                              int n_samples, std::uint64_t seed,
                                              double kappa = 0.01) {
  std::vector<MomentScanRow> rows;
  for (const auto& p : params) {
    const MeasureSamples samples = sample_invariant_measure(p, n_samples, seed);
    for (const double nu : nu_list) {
      const TestFunctionSample t =
          sample_test_function(p.grid, Eigen::Vector3d::Zero(), nu);
      std::vector<double> pairings;
      for (const auto& f : samples.fields) pairings.push_back(pairing(f, t));
      for (const double q : q_list) {
        std::vector<double> powered(pairings.size());
        for (std::size_t i = 0; i < pairings.size(); ++i)
          powered[i] = std::pow(std::abs(pairings[i]), q);
        const MeanVar mv = mean_var(powered);
        MomentScanRow row;
        row.level = p.grid.level;
        row.q = q;
        row.nu = nu;
        row.moment = mv.mean;
        row.stderr_ = mv.stderr_mean();
        row.normalized = mv.mean / std::pow(nu, -(1.0 + kappa) * q / 2.0);
        rows.push_back(row);
      }
    }
  }
  return rows;
}

/// Exact lambda = 0 oracle: E <Phi, phi>^2 = sum_k |phi_hat(k)|^2 / (2(|a_k| + a)).
inline double gaussian_pairing_variance(const Grid& g, double a,
                                        const TestFunctionSample& t) {
  const Eigen::ArrayXd symbol = laplacian_symbols(g);
  GridField p(g);
  p.values = t.profile;
  const SpectralField s = forward_transform(p);
  double acc = 0;
  for (Eigen::Index i = 0; i < s.coeffs.size(); ++i)
    acc += std::norm(s.coeffs[i]) / (2.0 * (std::abs(symbol[i]) + a));
  return acc;
}

}  // namespace phi4
