// Acceptance suite: one test case per criterion, each printing a PASS/FAIL
// line with the measured numbers. Heavier cases route through the experiment
// runner so the CLI-facing outputs are exercised end to end.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "phi4/dynamics.hpp"
#include "phi4/harness.hpp"
#include "phi4/measure.hpp"
#include "phi4/models.hpp"
#include "phi4/wavelets.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

using namespace phi4;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

fs::path work_dir() {
  const fs::path d = fs::temp_directory_path() / "phi4_acceptance";
  fs::create_directories(d);
  return d;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(in.good());
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

std::vector<std::map<std::string, std::string>> read_csv(const fs::path& p) {
  std::istringstream in(slurp(p));
  std::string line;
  REQUIRE(std::getline(in, line));
  std::vector<std::string> header;
  {
    std::istringstream h(line);
    std::string cell;
    while (std::getline(h, cell, ',')) header.push_back(cell);
  }
  std::vector<std::map<std::string, std::string>> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream r(line);
    std::string cell;
    std::map<std::string, std::string> row;
    for (std::size_t i = 0; i < header.size(); ++i) {
      std::getline(r, cell, ',');
      row[header[i]] = cell;
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

void report(int criterion, bool pass, const std::string& detail) {
  std::cout << "[criterion " << criterion << "] " << (pass ? "PASS" : "FAIL") << " - "
            << detail << std::endl;
}

GridField white_field(const Grid& g, std::uint64_t seed, double sd) {
  const CounterRng rng = CounterRng::from_seed(seed);
  GridField f(g);
  for (std::int64_t i = 0; i < g.site_count(); ++i)
    f.values[i] = sd * rng.gaussian(static_cast<std::uint64_t>(i));
  return f;
}

}  // namespace

TEST_CASE("criterion 1: renormalisation constant asymptotics") {
  json cfg;
  cfg["n_min"] = 2;
  cfg["n_max"] = 6;
  cfg["budget"] = std::int64_t(1) << 28;  // 8192 monte carlo draws at N=5
  const fs::path out = work_dir() / "renorm";
  fs::remove_all(out);
  const auto outcome = run_experiment("renorm-constants", cfg, 1, out.string());
  CHECK(outcome.exit_code == 0);

  const auto rows = read_csv(out / "constants.csv");
  REQUIRE(rows.size() == 5);
  std::map<int, double> eps_c1, c2_over_log;
  for (const auto& row : rows) {
    const int n = std::stoi(row.at("N"));
    eps_c1[n] = std::stod(row.at("c1_times_eps"));
    c2_over_log[n] = std::stod(row.at("c2_over_logN"));
  }
  const double c1_var = std::abs(eps_c1[6] / eps_c1[5] - 1.0);
  const double c2_var = std::abs(c2_over_log[5] / c2_over_log[4] - 1.0);
  const bool pass = c1_var < 0.10 && c2_var < 0.25;
  report(1, pass,
         "eps*c1 variation N5->N6 = " + std::to_string(100 * c1_var) +
             "%, c2/log variation N4->N5 = " + std::to_string(100 * c2_var) + "%");
  CHECK(c1_var < 0.10);
  CHECK(c2_var < 0.25);
}

TEST_CASE("criterion 2: grid multiresolution orthonormality and Parseval") {
  double worst_gram = 0, worst_parseval = 0, worst_roundtrip = 0;
  for (int p : {1, 2}) {
    for (int n_min : {0, 1}) {
      for (int n = 2; n <= 6; ++n) {
        const Grid g = make_grid(n);
        const GridMRA mra = build_grid_mra(g, daubechies_coefficients(p), n_min);

        // Gram rows: the transform of a basis function must be a unit vector
        const CounterRng rng = CounterRng::from_seed(777).absorb(p).absorb(n_min).absorb(n);
        const int levels = n - n_min;
        for (int rep = 0; rep < 8; ++rep) {
          const int lvl = n_min + static_cast<int>(rng.bits(4 * rep) % (levels + 1));
          const int pts = 1 << lvl;
          const int cx = static_cast<int>(rng.bits(4 * rep + 1) % pts);
          const int cy = static_cast<int>(rng.bits(4 * rep + 2) % pts);
          const int cz = static_cast<int>(rng.bits(4 * rep + 3) % pts);
          const bool is_wavelet = lvl < n && rep % 2 == 1;
          const int type = is_wavelet ? 1 + static_cast<int>(rng.bits(100 + rep) % 7) : 0;

          const int idx = lvl - n_min;
          const auto& s1 = mra.scaling_1d[static_cast<std::size_t>(idx)];
          const auto& w1 = is_wavelet ? mra.wavelet_1d[static_cast<std::size_t>(idx)] : s1;
          const int shift = 1 << (n - lvl);
          GridField f(g);
          for (int ix = 0; ix < g.points; ++ix)
            for (int iy = 0; iy < g.points; ++iy)
              for (int iz = 0; iz < g.points; ++iz)
                f(ix, iy, iz) = ((type & 4) ? w1 : s1)[wrap(ix - cx * shift, g.points)] *
                                ((type & 2) ? w1 : s1)[wrap(iy - cy * shift, g.points)] *
                                ((type & 1) ? w1 : s1)[wrap(iz - cz * shift, g.points)];
          WaveletCoeffs c = wavelet_transform(f, mra);
          // subtract the expected unit entry, then everything should vanish
          if (!is_wavelet && lvl == n_min) {
            c.scaling[site_index(make_grid(std::max(n_min, 1)), 0, 0, 0) * 0 +
                      ((static_cast<std::int64_t>(cx) * pts + cy) * pts + cz)] -= 1.0;
          } else if (!is_wavelet) {
            // scaling function above n_min is a combination; check Parseval only
            worst_parseval = std::max(worst_parseval, std::abs(c.sum_squares() - 1.0));
            continue;
          } else {
            c.details[static_cast<std::size_t>(lvl - n_min)][static_cast<std::size_t>(type - 1)]
                     [((static_cast<std::int64_t>(cx) * pts + cy) * pts + cz)] -= 1.0;
          }
          double max_dev = c.scaling.abs().maxCoeff();
          for (const auto& lev : c.details)
            for (const auto& d : lev) max_dev = std::max(max_dev, d.abs().maxCoeff());
          worst_gram = std::max(worst_gram, max_dev);
        }

        // Parseval and reconstruction on a random field
        const GridField f =
            white_field(g, 31000 + 100u * static_cast<unsigned>(p) + 10u * n_min +
                               static_cast<unsigned>(n), 1.0);
        const WaveletCoeffs c = wavelet_transform(f, mra);
        const double direct = grid_inner(f, f);
        worst_parseval = std::max(worst_parseval, std::abs(c.sum_squares() / direct - 1.0));
        const GridField back = inverse_wavelet_transform(c, mra);
        worst_roundtrip = std::max(worst_roundtrip,
                                   (back.values - f.values).abs().maxCoeff() /
                                       f.values.abs().maxCoeff());
      }
    }
  }
  const bool pass = worst_gram <= 1e-8 && worst_parseval <= 1e-8 && worst_roundtrip <= 1e-8;
  report(2, pass,
         "max gram-row deviation " + std::to_string(worst_gram) + ", parseval rel err " +
             std::to_string(worst_parseval) + ", roundtrip " + std::to_string(worst_roundtrip));
  CHECK(worst_gram <= 1e-8);
  CHECK(worst_parseval <= 1e-8);
  CHECK(worst_roundtrip <= 1e-8);
}

TEST_CASE("criterion 3: model homogeneity scaling at N=6") {
  const auto run_symbol = [&](const std::string& symbol) {
    json cfg;
    cfg["level"] = 6;
    cfg["symbol"] = symbol;
    cfg["replicas"] = 2000;
    cfg["lambdas"] = {0.5, 0.25, 0.125, 0.0625};
    const fs::path out = work_dir() / ("model_" + symbol);
    fs::remove_all(out);
    run_experiment("model-check", cfg, 3, out.string());
    return json::parse(slurp(out / "summary.json"));
  };
  const json psi = run_symbol("psi");
  const json psi2 = run_symbol("psi2");
  const double s1 = psi.at("slope").get<double>();
  const double s2 = psi2.at("slope").get<double>();
  const bool psi_ok = std::abs(s1 - (-1.02)) <= 0.3;
  const bool psi2_ok = std::abs(s2 - (-2.04)) <= 0.4;

  // divergence control: raw square at lambda = 1/4 grows with the level
  std::vector<double> level_at_quarter;
  for (int n : {4, 5, 6}) {
    json cfg;
    cfg["level"] = n;
    cfg["symbol"] = "psi2";
    cfg["renormalized"] = false;
    cfg["profile"] = "bump";
    cfg["replicas"] = 200;
    cfg["lambdas"] = {0.5, 0.25, 0.125};
    const fs::path out = work_dir() / ("control_" + std::to_string(n));
    fs::remove_all(out);
    run_experiment("model-check", cfg, 4, out.string());
    for (const auto& row : read_csv(out / "scaling.csv"))
      if (std::stod(row.at("lambda")) == 0.25)
        level_at_quarter.push_back(std::stod(row.at("mean_sq")));
  }
  REQUIRE(level_at_quarter.size() == 3);
  const bool control_ok =
      level_at_quarter[1] > level_at_quarter[0] && level_at_quarter[2] > level_at_quarter[1];

  const bool pass = psi_ok && psi2_ok && control_ok;
  report(3, pass,
         "psi slope " + std::to_string(s1) + " (target -1.02 +- 0.3), wick psi2 slope " +
             std::to_string(s2) + " (target -2.04 +- 0.4), raw-square level growth " +
             std::to_string(level_at_quarter[0]) + " -> " + std::to_string(level_at_quarter[1]) +
             " -> " + std::to_string(level_at_quarter[2]));
  CHECK(psi_ok);
  CHECK(psi2_ok);
  CHECK(control_ok);
}

TEST_CASE("criterion 4: coupled Cauchy convergence of the renormalised dynamics") {
  const auto converge = [&](double lambda, bool renormalize, const std::string& tag) {
    json cfg;
    cfg["levels"] = {3, 4, 5};
    cfg["lambda"] = lambda;
    cfg["a"] = 1.0;
    cfg["T"] = 0.25;
    cfg["alpha"] = -0.6;
    cfg["delta"] = 0.1;
    cfg["eta"] = -0.65;
    cfg["n_seeds"] = 20;
    cfg["renormalize"] = renormalize;
    const fs::path out = work_dir() / ("converge_" + tag);
    fs::remove_all(out);
    run_experiment("converge", cfg, 7, out.string());
    return json::parse(slurp(out / "summary.json"));
  };
  const json renorm = converge(0.1, true, "renorm");
  const json ablate = converge(0.5, false, "ablate");
  CHECK(renorm.at("stopped_runs").get<int>() == 0);

  const double d34 = renorm.at("median_distance").at("3-4").get<double>();
  const double d45 = renorm.at("median_distance").at("4-5").get<double>();
  const double m34 = renorm.at("median_distance_matched").at("3-4").get<double>();
  const double m45 = renorm.at("median_distance_matched").at("4-5").get<double>();
  const double a34 = ablate.at("median_distance").at("3-4").get<double>();
  const double a45 = ablate.at("median_distance").at("4-5").get<double>();

  const bool decrease = d45 < d34;
  const bool ablation_fails_monotonicity = !(a45 < a34);
  report(4, decrease && ablation_fails_monotonicity,
         "median distance (3,4) = " + std::to_string(d34) + ", (4,5) = " + std::to_string(d45) +
             " [strict decrease " + (decrease ? "holds" : "FAILS") +
             "]; ablation medians " + std::to_string(a34) + " -> " + std::to_string(a45) +
             " [monotonicity " + (ablation_fails_monotonicity ? "fails as required" : "holds") +
             "]");
  std::cout << "[criterion 4] note - full-window sup distances are dominated by the"
               " comparison's finest scale; at the shared scale window the coupled"
               " contraction is visible: matched medians (3,4) = "
            << m34 << ", (4,5) = " << m45 << (m45 < m34 ? " (decreasing)" : " (flat)")
            << std::endl;
  CHECK(decrease);
  CHECK(ablation_fails_monotonicity);
  CHECK(m45 < m34);
}

TEST_CASE("criterion 5: linear sector matches the exact gaussian laws") {
  const Grid g = make_grid(3);
  const KernelSet ks = make_kernel_set(g);

  // dynamics: thinned long-run per-mode variances against the OU law
  Phi4Params dyn;
  dyn.a = 1.0;
  dyn.lambda = 0.0;
  dyn.dt = g.mesh * g.mesh / 4.0;
  const int burn = static_cast<int>(std::llround(4.0 / dyn.dt));
  const int gap = static_cast<int>(std::llround(0.5 / dyn.dt));
  const int replicas = 8, per_replica = 160;  // 1280 samples
  const std::vector<std::array<int, 3>> probes = {{0, 0, 0}, {1, 0, 0}, {1, 1, 0}, {2, 1, 1}};
  std::vector<std::vector<double>> sq(probes.size());
  const detail::StepPlan plan = detail::make_step_plan(ks, dyn.dt);
  for (int r = 0; r < replicas; ++r) {
    const int steps = burn + gap * per_replica;
    const NoiseField noise = sample_noise(g, dyn.dt, steps, 52000 + static_cast<unsigned>(r));
    GridField state(g);
    for (int j = 0; j < steps; ++j) {
      detail::step_inplace(state, noise.slice(j), dyn, plan);
      if (j >= burn && (j - burn) % gap == 0) {
        const SpectralField s = forward_transform(state);
        for (std::size_t q = 0; q < probes.size(); ++q)
          sq[q].push_back(
              std::norm(s.coeffs[site_index(g, probes[q][0], probes[q][1], probes[q][2])]));
      }
    }
  }
  bool dyn_ok = true;
  double worst_dyn = 0;
  for (std::size_t q = 0; q < probes.size(); ++q) {
    const double a_k = std::abs(laplacian_symbol(g, probes[q][0], probes[q][1], probes[q][2]));
    const double oracle = 1.0 / (2.0 * (a_k + dyn.a));
    const MeanVar mv = mean_var(sq[q]);
    const double tau = integrated_autocorr_time(sq[q]);
    const double dev = std::abs(mv.mean - oracle) / std::sqrt(mv.var * tau / sq[q].size());
    worst_dyn = std::max(worst_dyn, dev);
    dyn_ok = dyn_ok && dev <= 3.0;
  }

  // measure sampling: pairing variances against the massive gaussian law
  LatticeMeasureParams mp;
  mp.grid = g;
  mp.lambda = 0.0;
  mp.a = 1.0;
  mp.c_eps = 0.0;
  mp.chain.burn_in_time = 6.0;
  const MeasureSamples samples = sample_invariant_measure(mp, 1024, 4242);
  bool meas_ok = samples.converged;
  double worst_meas = 0;
  for (const double scale : {0.5, 0.25}) {
    const TestFunctionSample t = sample_test_function(g, Eigen::Vector3d::Zero(), scale);
    std::vector<double> vals;
    for (const auto& f : samples.fields) {
      const double v = pairing(f, t);
      vals.push_back(v * v);
    }
    const MeanVar mv = mean_var(vals);
    const double tau = integrated_autocorr_time(vals);
    const double oracle = gaussian_pairing_variance(g, mp.a, t);
    const double dev = std::abs(mv.mean - oracle) / std::sqrt(mv.var * tau / vals.size());
    worst_meas = std::max(worst_meas, dev);
    meas_ok = meas_ok && dev <= 3.0;
  }
  const bool pass = dyn_ok && meas_ok;
  report(5, pass,
         "worst dynamics mode deviation " + std::to_string(worst_dyn) +
             " SE, worst measure pairing deviation " + std::to_string(worst_meas) + " SE");
  CHECK(dyn_ok);
  CHECK(meas_ok);
}

TEST_CASE("criterion 6: invariance of the lattice measure under the dynamics") {
  json cfg;
  cfg["level"] = 3;
  cfg["lambda"] = 0.1;
  cfg["a"] = 1.0;
  cfg["n_samples"] = 500;
  cfg["evolve_time"] = 0.1;
  cfg["dt_stability"] = true;
  const fs::path out = work_dir() / "measure";
  fs::remove_all(out);
  const auto outcome = run_experiment("measure-check", cfg, 11, out.string());
  const json summary = json::parse(slurp(out / "summary.json"));
  const bool passed = summary.at("passed").get<bool>();
  const double min_p = summary.at("min_p_adjusted").get<double>();
  double worst_z = 0;
  for (int q = 1; q <= 4; ++q)
    worst_z = std::max(worst_z, std::abs(summary.at("dt_stability")
                                             .at("moment" + std::to_string(q) + "_z")
                                             .get<double>()));
  report(6, passed && outcome.exit_code == 0,
         "min adjusted p = " + std::to_string(min_p) + " (threshold 0.001), blowups = " +
             std::to_string(summary.at("blowups").get<int>()) +
             ", worst dt-halving moment z = " + std::to_string(worst_z));
  CHECK(outcome.exit_code == 0);
  CHECK(passed);
  CHECK(min_p > 0.001);
  CHECK(worst_z <= 3.0);
}

TEST_CASE("criterion 7: structural invariants") {
  // wick identities and diagonal vanishing, exact
  const Grid g = make_grid(3);
  const KernelSet ks = make_kernel_set(g);
  RenormConstants rc;
  rc.c1 = renorm_c1(ks);
  const NoiseField noise = sample_noise(g, g.mesh * g.mesh / 4.0, 4, 3030);
  ModelBundleOptions opt;
  opt.with_psi_bar = true;
  const ModelBundle bundle = build_model_bundle(noise, ks, rc, opt);
  bool wick_exact = true;
  for (std::size_t j = 0; j < bundle.psi.size(); ++j) {
    const auto& p = bundle.psi.slices[j].values;
    wick_exact = wick_exact && (bundle.psi2_wick.slices[j].values == p.square() - rc.c1).all();
    wick_exact =
        wick_exact && (bundle.psi3_wick.slices[j].values == p.cube() - 3.0 * rc.c1 * p).all();
  }
  const RecenteredEvaluator ev = bundle.psi_bar_evaluator();
  bool diagonal_zero = true;
  for (std::int64_t x : {0L, 100L, 500L}) {
    diagonal_zero = diagonal_zero && ev.recentred(2, x, x) == 0.0;
    diagonal_zero = diagonal_zero && ev.sigma_unit_coefficient(2, 2, x) == 0.0;
  }

  // drift consistency by finite differences
  LatticeMeasureParams mp;
  mp.grid = make_grid(2);
  mp.lambda = 0.4;
  mp.a = 1.1;
  mp.c_eps = 0.6;
  double worst_drift = 0;
  const double h = 1e-5;
  for (int rep = 0; rep < 20; ++rep) {
    GridField f = white_field(mp.grid, 60000 + static_cast<unsigned>(rep), 1.0);
    const GridField drift = action_drift(f, mp);
    for (const std::int64_t site : {std::int64_t(0), mp.grid.site_count() / 3}) {
      const double keep = f.values[site];
      f.values[site] = keep + h;
      const double up = lattice_action(f, mp);
      f.values[site] = keep - h;
      const double down = lattice_action(f, mp);
      f.values[site] = keep;
      const double fd = -(up - down) / (2.0 * h) / mp.grid.cell_volume();
      worst_drift = std::max(worst_drift,
                             std::abs(fd - drift.values[site]) / std::abs(drift.values[site]));
    }
  }

  // coarse graining: parent equals the mean of its children exactly
  const NoiseField fine = sample_noise(make_grid(3), 0.01, 2, 808);
  const NoiseField coarse = coarse_grain(fine, 2);
  bool coarse_exact = true;
  for (int j = 0; j < 2; ++j) {
    const Eigen::ArrayXd wf = fine.slice(j);
    const Eigen::ArrayXd wc = coarse.slice(j);
    for (int ix = 0; ix < 4 && coarse_exact; ++ix)
      for (int iy = 0; iy < 4 && coarse_exact; ++iy)
        for (int iz = 0; iz < 4 && coarse_exact; ++iz) {
          double acc = 0;
          for (int a = 0; a < 2; ++a)
            for (int b = 0; b < 2; ++b)
              for (int c = 0; c < 2; ++c)
                acc +=
                    wf[site_index(make_grid(3), 2 * ix + a, 2 * iy + b, 2 * iz + c)];
          coarse_exact = wc[site_index(make_grid(2), ix, iy, iz)] == acc / 8.0;
        }
  }

  // determinism across thread budgets through the experiment runner
  json cfg;
  cfg["levels"] = {2, 3, 4};
  cfg["T"] = 0.0625;
  cfg["n_seeds"] = 2;
  cfg["store_slices"] = 4;
  const fs::path out1 = work_dir() / "thread1";
  const fs::path out2 = work_dir() / "thread2";
  fs::remove_all(out1);
  fs::remove_all(out2);
  setenv("PHI4_THREADS", "1", 1);
  run_experiment("converge", cfg, 21, out1.string());
  setenv("PHI4_THREADS", "4", 1);
  run_experiment("converge", cfg, 21, out2.string());
  setenv("PHI4_THREADS", "1", 1);
  const bool deterministic = slurp(out1 / "distances.csv") == slurp(out2 / "distances.csv");

  const bool pass =
      wick_exact && diagonal_zero && worst_drift <= 1e-6 && coarse_exact && deterministic;
  report(7, pass,
         std::string("wick exact: ") + (wick_exact ? "yes" : "no") +
             ", diagonal vanishing exact: " + (diagonal_zero ? "yes" : "no") +
             ", worst drift rel err " + std::to_string(worst_drift) +
             ", coarse-grain exact: " + (coarse_exact ? "yes" : "no") +
             ", thread-budget determinism: " + (deterministic ? "byte-identical" : "BROKEN"));
  CHECK(wick_exact);
  CHECK(diagonal_zero);
  CHECK(worst_drift <= 1e-6);
  CHECK(coarse_exact);
  CHECK(deterministic);
}

TEST_CASE("criterion 8: kernel decay bound uniform across levels") {
  double lo = 1e300, hi = 0;
  double s_lo = 1e300, s_hi = 0;
  for (int n = 2; n <= 5; ++n) {
    const Grid g = make_grid(n);
    const KernelSet ks = make_kernel_set(g);
    const KernelDecayReport rep = verify_kernel_decay(ks, default_decay_samples(g));
    CHECK(rep.n_samples >= 3);
    lo = std::min(lo, rep.max_scaled);
    hi = std::max(hi, rep.max_scaled);
    s_lo = std::min(s_lo, rep.schwartz_ratio);
    s_hi = std::max(s_hi, rep.schwartz_ratio);
  }
  const bool pass = hi / lo < 2.0 && s_hi / s_lo < 2.0;
  report(8, pass,
         "scaled kernel sup in [" + std::to_string(lo) + ", " + std::to_string(hi) +
             "], ratio " + std::to_string(hi / lo) + "; rescaled-slice decay ratio in [" +
             std::to_string(s_lo) + ", " + std::to_string(s_hi) + "] (< 2x spread required)");
  CHECK(hi / lo < 2.0);
  CHECK(s_hi / s_lo < 2.0);
}
