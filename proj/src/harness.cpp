#include "phi4/harness.hpp"

#include "phi4/dynamics.hpp"
#include "phi4/grid_io.hpp"
#include "phi4/measure.hpp"
#include "phi4/models.hpp"
#include "phi4/wavelets.hpp"

#include <array>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <future>
#include <map>
#include <set>
#include <sstream>
#include <vector>

namespace phi4 {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void write_text(const std::string& path, const std::string& body) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << body;
  if (!out) throw std::runtime_error("write failed: " + path);
}

void check_keys(const json& j, const std::set<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) throw std::invalid_argument("config section " + where + " must be an object");
  for (const auto& [key, value] : j.items()) {
    (void)value;
    if (!allowed.count(key))
      throw std::invalid_argument("unknown config key '" + key + "' in " + where);
  }
}

template <typename T>
T get_or(const json& j, const std::string& key, T def) {
  if (!j.contains(key)) return def;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw std::invalid_argument("config key '" + key + "' has the wrong type");
  }
}

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 1469598103934665603ull;
  for (const unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

// CRC-32 (IEEE), table based.
std::uint32_t crc32(const unsigned char* data, std::size_t len) {
  static const auto table = [] {
    std::array<std::uint32_t, 256> t{};
    for (std::uint32_t i = 0; i < 256; ++i) {
      std::uint32_t c = i;
      for (int k = 0; k < 8; ++k) c = (c & 1) ? 0xedb88320u ^ (c >> 1) : c >> 1;
      t[i] = c;
    }
    return t;
  }();
  std::uint32_t c = 0xffffffffu;
  for (std::size_t i = 0; i < len; ++i) c = table[(c ^ data[i]) & 0xffu] ^ (c >> 8);
  return c ^ 0xffffffffu;
}

// run tasks over indices [0, n) with at most `threads` in flight; results
// are collected by index, so the merge order never depends on scheduling
template <typename Fn>
auto parallel_map(int n, int threads, Fn&& fn) {
  using Result = decltype(fn(0));
  std::vector<Result> results(static_cast<std::size_t>(n));
  if (threads <= 1) {
    for (int i = 0; i < n; ++i) results[static_cast<std::size_t>(i)] = fn(i);
    return results;
  }
  int next = 0;
  while (next < n) {
    const int batch = std::min(threads, n - next);
    std::vector<std::future<Result>> futures;
    futures.reserve(static_cast<std::size_t>(batch));
    for (int b = 0; b < batch; ++b)
      futures.push_back(std::async(std::launch::async, fn, next + b));
    for (int b = 0; b < batch; ++b)
      results[static_cast<std::size_t>(next + b)] = futures[static_cast<std::size_t>(b)].get();
    next += batch;
  }
  return results;
}

struct OutputContext {
  fs::path dir;
  json resolved;
};

OutputContext prepare_output(const std::string& experiment, const json& config,
                             std::uint64_t seed) {
  OutputContext ctx;
  const std::string out = get_or<std::string>(config, "out", "phi4_out/" + experiment);
  ctx.dir = out;
  fs::create_directories(ctx.dir);
  ctx.resolved = config;
  ctx.resolved["experiment"] = experiment;
  ctx.resolved["seed"] = seed;
  write_text((ctx.dir / "resolved_config.json").string(), ctx.resolved.dump(2) + "\n");
  json manifest;
  manifest["version"] = kVersion;
  manifest["rng"] = kRngScheme;
  manifest["experiment"] = experiment;
  manifest["seed"] = seed;
  manifest["config_hash"] = fnv1a(ctx.resolved.dump());
  write_text((ctx.dir / "manifest.json").string(), manifest.dump(2) + "\n");
  return ctx;
}

// ---------------------------------------------------------------- renorm

ExperimentOutcome run_renorm_constants(const json& config, std::uint64_t seed) {
  check_keys(config, {"out", "seed", "n_min", "n_max", "method", "budget", "rel_tolerance",
                      "time_cutoff"},
             "renorm-constants");
  const int n_lo = get_or<int>(config, "n_min", 2);
  const int n_hi = get_or<int>(config, "n_max", 6);
  if (n_lo < 1 || n_hi < n_lo) throw std::invalid_argument("renorm-constants: bad N range");
  const std::string method = get_or<std::string>(config, "method", "auto");
  if (method != "auto" && method != "direct_sum" && method != "monte_carlo")
    throw std::invalid_argument("renorm-constants: method must be auto|direct_sum|monte_carlo");
  const double time_cutoff = get_or<double>(config, "time_cutoff", 1.0);
  C2Budget budget;
  budget.evaluations = get_or<std::int64_t>(config, "budget", std::int64_t(1) << 28);
  budget.rel_tolerance = get_or<double>(config, "rel_tolerance", 0.05);
  budget.seed = seed;

  OutputContext ctx = prepare_output("renorm-constants", config, seed);
  std::ostringstream csv;
  csv << "N,epsilon,c1,c1_times_eps,c2,c2_over_logN,stderr_c2\n";
  bool tolerance_ok = true;
  for (int n = n_lo; n <= n_hi; ++n) {
    const Grid g = make_grid(n);
    const KernelSet ks = make_kernel_set(g, time_cutoff);
    const double c1 = renorm_c1(ks);
    const C2Method m = method == "direct_sum"
                           ? C2Method::direct_sum
                           : method == "monte_carlo"
                                 ? C2Method::monte_carlo
                                 : (n <= 4 ? C2Method::direct_sum : C2Method::monte_carlo);
    const C2Result c2 = renorm_c2(ks, m, budget);
    tolerance_ok = tolerance_ok && c2.tolerance_met;
    csv << n << ',' << fmt(g.mesh) << ',' << fmt(c1) << ',' << fmt(g.mesh * c1) << ','
        << fmt(c2.value) << ',' << fmt(c2.value / std::log(std::pow(2.0, n))) << ','
        << fmt(c2.stderr_) << '\n';
  }
  write_text((ctx.dir / "constants.csv").string(), csv.str());
  return {tolerance_ok ? 0 : 1, ctx.dir.string()};
}

// -------------------------------------------------------------- simulate

struct SimulateSetup {
  int level = 3;
  Phi4Params params;
  int stride = 1;
  int checkpoint_every = 0;
  std::uint64_t seed = 0;
  std::uint64_t config_hash = 0;
};

SimulateSetup parse_simulate(const json& config, std::uint64_t seed) {
  SimulateSetup s;
  s.level = get_or<int>(config, "level", 3);
  const Grid g = make_grid(s.level);
  s.params.a = get_or<double>(config, "a", 1.0);
  s.params.lambda = get_or<double>(config, "lambda", 0.1);
  s.params.dt = get_or<double>(config, "dt", g.mesh * g.mesh / 4.0);
  s.params.total_time = get_or<double>(config, "T", 0.25);
  s.params.blowup_threshold = get_or<double>(config, "blowup_threshold", 1e6);
  if (config.contains("c_eps")) {
    s.params.c_eps = config.at("c_eps").get<double>();
  } else {
    const KernelSet ks = make_kernel_set(g);
    s.params.c_eps = compute_renorm_constants(ks).c_total(s.params.lambda);
  }
  s.stride = get_or<int>(config, "stride", 8);
  s.checkpoint_every = get_or<int>(config, "checkpoint_every", 0);
  s.seed = seed;
  validate_phi4_params(s.params, g);
  return s;
}

std::string encode_checkpoint(const SimulateSetup& s, int completed, const GridField& state,
                              const Trajectory& stored, const std::vector<double>& sups) {
  std::string out = "PHI4CKPT";
  detail::put_u32_le(out, 1u);
  std::string ver(kVersion);
  ver.resize(8, '\0');
  out += ver;
  detail::put_u64_le(out, s.config_hash);
  detail::put_u64_le(out, s.seed);
  detail::put_u32_le(out, static_cast<std::uint32_t>(s.level));
  detail::put_f64_le(out, s.params.dt);
  const auto total = static_cast<std::uint32_t>(std::llround(s.params.total_time / s.params.dt));
  detail::put_u32_le(out, total);
  detail::put_u32_le(out, static_cast<std::uint32_t>(completed));
  detail::put_u32_le(out, static_cast<std::uint32_t>(s.stride));
  detail::put_u32_le(out, static_cast<std::uint32_t>(stored.size()));
  for (Eigen::Index i = 0; i < state.values.size(); ++i)
    detail::put_f64_le(out, state.values[i]);
  for (std::size_t j = 0; j < stored.size(); ++j) {
    detail::put_f64_le(out, stored.stamps[j]);
    for (Eigen::Index i = 0; i < stored.slices[j].values.size(); ++i)
      detail::put_f64_le(out, stored.slices[j].values[i]);
    detail::put_f64_le(out, sups[j]);
  }
  const std::uint32_t crc = crc32(reinterpret_cast<const unsigned char*>(out.data()), out.size());
  detail::put_u32_le(out, crc);
  return out;
}

struct CheckpointData {
  int completed = 0;
  GridField state;
  Trajectory stored;
  std::vector<double> sups;
};

CheckpointData decode_checkpoint(const std::string& bytes, const SimulateSetup& s) {
  if (bytes.size() < 56 || bytes.compare(0, 8, "PHI4CKPT") != 0)
    throw std::runtime_error("not a simulate checkpoint");
  const auto* b = reinterpret_cast<const unsigned char*>(bytes.data());
  const std::uint32_t stored_crc = detail::get_u32_le(b + bytes.size() - 4);
  if (crc32(b, bytes.size() - 4) != stored_crc)
    throw std::runtime_error("checkpoint integrity error: checksum mismatch");
  const std::string ver(bytes.data() + 12, strnlen(bytes.data() + 12, 8));
  if (ver != kVersion)
    throw std::runtime_error("checkpoint version mismatch: written by " + ver +
                             ", this build is " + kVersion);
  const std::uint64_t cfg = detail::get_u64_le(b + 20);
  if (cfg != s.config_hash)
    throw std::runtime_error("checkpoint belongs to a different configuration");
  const std::uint64_t seed = detail::get_u64_le(b + 28);
  const int level = static_cast<int>(detail::get_u32_le(b + 36));
  if (seed != s.seed || level != s.level)
    throw std::runtime_error("checkpoint seed/level mismatch");
  CheckpointData data;
  const Grid g = make_grid(level);
  data.completed = static_cast<int>(detail::get_u32_le(b + 52));
  const int stored_count = static_cast<int>(detail::get_u32_le(b + 60));
  std::size_t off = 64;
  data.state = GridField(g);
  for (Eigen::Index i = 0; i < data.state.values.size(); ++i, off += 8)
    data.state.values[i] = detail::get_f64_le(b + off);
  data.stored = make_trajectory(g);
  for (int j = 0; j < stored_count; ++j) {
    const double stamp = detail::get_f64_le(b + off);
    off += 8;
    GridField f(g);
    for (Eigen::Index i = 0; i < f.values.size(); ++i, off += 8)
      f.values[i] = detail::get_f64_le(b + off);
    data.stored.stamps.push_back(stamp);
    data.stored.slices.push_back(std::move(f));
    data.sups.push_back(detail::get_f64_le(b + off));
    off += 8;
  }
  if (off + 4 != bytes.size()) throw std::runtime_error("checkpoint size mismatch");
  return data;
}

ExperimentOutcome run_simulate(const json& config, std::uint64_t seed,
                               const std::optional<std::string>& resume_path) {
  check_keys(config, {"out", "seed", "level", "a", "lambda", "c_eps", "dt", "T",
                      "blowup_threshold", "stride", "checkpoint_every", "halt_after_steps"},
             "simulate");
  SimulateSetup s = parse_simulate(config, seed);
  // walltime hook: stop cleanly after this many steps and leave a resumable
  // checkpoint behind (0 = run to completion)
  const int halt_after = get_or<int>(config, "halt_after_steps", 0);
  OutputContext ctx = prepare_output("simulate", config, seed);
  // the checkpoint binds to the physics configuration, not operational knobs
  json physics = ctx.resolved;
  physics.erase("out");
  physics.erase("halt_after_steps");
  physics.erase("checkpoint_every");
  s.config_hash = fnv1a(physics.dump());

  const Grid g = make_grid(s.level);
  const KernelSet ks = make_kernel_set(g);
  const auto total_steps = static_cast<int>(std::llround(s.params.total_time / s.params.dt));

  int start_step = 0;
  GridField state(g);
  Trajectory stored = make_trajectory(g);
  std::vector<double> sups;
  if (resume_path) {
    const CheckpointData data = decode_checkpoint(detail::read_file_bytes(*resume_path), s);
    if (data.completed >= total_steps) {
      // completed run: nothing to do
      return {0, ctx.dir.string()};
    }
    start_step = data.completed;
    state = data.state;
    stored = data.stored;
    sups = data.sups;
  } else {
    stored.push(0.0, state);
    sups.push_back(0.0);
  }

  const NoiseField noise = sample_noise(g, s.params.dt, total_steps, seed);
  const detail::StepPlan plan = detail::make_step_plan(ks, s.params.dt);
  std::optional<double> stopped_at;
  for (int j = start_step; j < total_steps; ++j) {
    detail::step_inplace(state, noise.slice(j), s.params, plan);
    const double sup = state.values.abs().maxCoeff();
    if (!state.values.isFinite().all() || sup > s.params.blowup_threshold) {
      stopped_at = (j + 1) * s.params.dt;
      break;
    }
    if ((j + 1) % s.stride == 0 || j + 1 == total_steps) {
      stored.push((j + 1) * s.params.dt, state);
      sups.push_back(sup);
    }
    if (s.checkpoint_every > 0 && (j + 1) % s.checkpoint_every == 0)
      detail::write_file_bytes((ctx.dir / "checkpoint.bin").string(),
                               encode_checkpoint(s, j + 1, state, stored, sups));
    if (halt_after > 0 && j + 1 - start_step >= halt_after && j + 1 < total_steps) {
      detail::write_file_bytes((ctx.dir / "checkpoint.bin").string(),
                               encode_checkpoint(s, j + 1, state, stored, sups));
      json halted;
      halted["halted_at_step"] = j + 1;
      write_text((ctx.dir / "summary.json").string(), halted.dump(2) + "\n");
      return {0, ctx.dir.string()};
    }
  }

  std::ostringstream csv;
  csv << "t,sup_norm\n";
  for (std::size_t j = 0; j < stored.size(); ++j)
    csv << fmt(stored.stamps[j]) << ',' << fmt(sups[j]) << '\n';
  write_text((ctx.dir / "trajectory.csv").string(), csv.str());
  save_field(stored.slices.back(), (ctx.dir / "final_field.bin").string());
  // a finished run (including a stopped one) checkpoints as complete
  detail::write_file_bytes((ctx.dir / "checkpoint.bin").string(),
                           encode_checkpoint(s, total_steps, state, stored, sups));

  json summary;
  summary["stopped_at"] = stopped_at ? json(*stopped_at) : json();
  summary["steps"] = total_steps;
  summary["c_eps"] = s.params.c_eps;
  write_text((ctx.dir / "summary.json").string(), summary.dump(2) + "\n");
  return {0, ctx.dir.string()};
}

// -------------------------------------------------------------- converge

ExperimentOutcome run_converge(const json& config, std::uint64_t seed) {
  check_keys(config, {"out", "seed", "levels", "n_seeds", "lambda", "a", "T", "alpha",
                      "delta", "eta", "store_slices", "renormalize", "wavelet_order",
                      "c2_budget"},
             "converge");
  ConvergenceParams base;
  base.levels = get_or<std::vector<int>>(config, "levels", {3, 4, 5});
  base.lambda = get_or<double>(config, "lambda", 0.1);
  base.a = get_or<double>(config, "a", 1.0);
  base.total_time = get_or<double>(config, "T", 0.25);
  base.alpha = get_or<double>(config, "alpha", -0.6);
  base.delta = get_or<double>(config, "delta", 0.1);
  base.eta = get_or<double>(config, "eta", -0.65);
  base.store_slices = get_or<int>(config, "store_slices", 32);
  base.renormalize = get_or<bool>(config, "renormalize", true);
  base.wavelet_order = get_or<int>(config, "wavelet_order", 2);
  const int n_seeds = get_or<int>(config, "n_seeds", 20);
  if (n_seeds < 1) throw std::invalid_argument("converge: n_seeds must be >= 1");

  OutputContext ctx = prepare_output("converge", config, seed);

  C2Budget budget;
  budget.evaluations = get_or<std::int64_t>(config, "c2_budget", std::int64_t(1) << 21);
  std::map<int, RenormConstants> constants;
  if (base.renormalize)
    for (const int level : base.levels)
      constants[level] = compute_renorm_constants(make_kernel_set(make_grid(level)), budget);

  const auto results = parallel_map(n_seeds, thread_budget(), [&](int i) {
    ConvergenceParams p = base;
    p.seed = CounterRng::from_seed(seed).absorb(0xc0071e).bits(static_cast<std::uint64_t>(i));
    return coupled_convergence(p, constants);
  });

  std::ostringstream csv;
  csv << "seed_index,level_pair,alpha,distance,distance_spacetime,distance_matched,stopped\n";
  std::map<std::string, std::vector<double>> by_pair, by_pair_matched;
  int stopped_runs = 0;
  for (int i = 0; i < n_seeds; ++i) {
    const ConvergenceResult& r = results[static_cast<std::size_t>(i)];
    const bool any_stopped =
        std::any_of(r.stopped.begin(), r.stopped.end(), [](bool b) { return b; });
    if (any_stopped) {
      ++stopped_runs;
      csv << i << ",,,,,,1\n";
      continue;
    }
    for (const auto& pd : r.pairs) {
      const std::string pair =
          std::to_string(pd.coarse_level) + "-" + std::to_string(pd.fine_level);
      csv << i << ',' << pair << ',' << fmt(base.alpha) << ',' << fmt(pd.dist_alpha) << ','
          << fmt(pd.dist_spacetime) << ',' << fmt(pd.dist_matched) << ",0\n";
      by_pair[pair].push_back(pd.dist_alpha);
      by_pair_matched[pair].push_back(pd.dist_matched);
    }
  }
  write_text((ctx.dir / "distances.csv").string(), csv.str());

  json summary;
  summary["stopped_runs"] = stopped_runs;
  summary["lambda_small_convention"] = base.lambda <= 0.25;
  json medians = json::object();
  for (const auto& [pair, dists] : by_pair) medians[pair] = median(dists);
  summary["median_distance"] = medians;
  json medians_matched = json::object();
  for (const auto& [pair, dists] : by_pair_matched) medians_matched[pair] = median(dists);
  summary["median_distance_matched"] = medians_matched;
  if (!constants.empty()) {
    json cj = json::object();
    for (const auto& [level, rc] : constants) {
      cj[std::to_string(level)] = {{"c1", rc.c1}, {"c2", rc.c2},
                                   {"c_total", rc.c_total(base.lambda)}};
    }
    summary["constants"] = cj;
  }
  write_text((ctx.dir / "summary.json").string(), summary.dump(2) + "\n");
  return {0, ctx.dir.string()};
}

// ------------------------------------------------------------ model-check

ExperimentOutcome run_model_check(const json& config, std::uint64_t seed) {
  check_keys(config, {"out", "seed", "symbol", "level", "lambdas", "replicas", "steps",
                      "renormalized", "profile", "alpha", "time_cutoff"},
             "model-check");
  const std::string symbol = get_or<std::string>(config, "symbol", "psi");
  ScalingTestParams p;
  if (symbol == "psi")
    p.symbol = SymbolName::Psi;
  else if (symbol == "psi2")
    p.symbol = SymbolName::Psi2;
  else if (symbol == "psi3")
    p.symbol = SymbolName::Psi3;
  else if (symbol == "psibar")
    p.symbol = SymbolName::PsiBar;
  else
    throw std::invalid_argument("model-check: symbol must be psi|psi2|psi3|psibar");
  const int level = get_or<int>(config, "level", 6);
  p.lambdas = get_or<std::vector<double>>(config, "lambdas", {0.5, 0.25, 0.125, 0.0625});
  p.replicas = get_or<int>(config, "replicas", 2000);
  p.steps = get_or<int>(config, "steps", 2);
  p.renormalized = get_or<bool>(config, "renormalized", true);
  p.alpha = get_or<double>(config, "alpha", -2.51);
  const std::string profile = get_or<std::string>(config, "profile", "zero_mean");
  if (profile == "zero_mean")
    p.profile = TestProfile::zero_mean;
  else if (profile == "bump")
    p.profile = TestProfile::bump;
  else
    throw std::invalid_argument("model-check: profile must be zero_mean|bump");
  p.seed = seed;

  OutputContext ctx = prepare_output("model-check", config, seed);
  const Grid g = make_grid(level);
  const KernelSet ks = make_kernel_set(g, get_or<double>(config, "time_cutoff", 1.0));
  const RenormConstants rc = compute_renorm_constants(ks);
  const ScalingTestResult r = scaling_exponent_test(ks, rc, p);

  std::ostringstream csv;
  csv << "lambda,mean_sq,stderr\n";
  for (std::size_t i = 0; i < r.lambda.size(); ++i)
    csv << fmt(r.lambda[i]) << ',' << fmt(r.mean_sq[i]) << ',' << fmt(r.stderr_[i]) << '\n';
  write_text((ctx.dir / "scaling.csv").string(), csv.str());

  json summary;
  summary["symbol"] = symbol;
  summary["slope"] = r.slope;
  summary["ci_low"] = r.ci_low;
  summary["ci_high"] = r.ci_high;
  summary["target_exponent"] = r.target_exponent;
  summary["renormalized"] = p.renormalized;
  write_text((ctx.dir / "summary.json").string(), summary.dump(2) + "\n");
  return {0, ctx.dir.string()};
}

// ----------------------------------------------------------- measure-check

ExperimentOutcome run_measure_check(const json& config, std::uint64_t seed) {
  check_keys(config, {"out", "seed", "level", "lambda", "a", "n_samples", "evolve_time",
                      "burn_in", "thin", "chains", "dt_stability", "moment_q", "moment_nu",
                      "p_threshold"},
             "measure-check");
  LatticeMeasureParams p;
  p.grid = make_grid(get_or<int>(config, "level", 3));
  p.lambda = get_or<double>(config, "lambda", 0.1);
  p.a = get_or<double>(config, "a", 1.0);
  p.chain.burn_in_time = get_or<double>(config, "burn_in", 8.0);
  p.chain.thin_time = get_or<double>(config, "thin", 1.0);
  p.chain.chains = get_or<int>(config, "chains", 2);
  const KernelSet ks = make_kernel_set(p.grid);
  p.c_eps = compute_renorm_constants(ks).c_total(p.lambda);
  const int n_samples = get_or<int>(config, "n_samples", 500);
  const bool dt_stability = get_or<bool>(config, "dt_stability", true);

  InvarianceOptions opt;
  opt.evolve_time = get_or<double>(config, "evolve_time", 0.1);
  opt.p_threshold = get_or<double>(config, "p_threshold", 0.001);
  opt.seed = seed;

  OutputContext ctx = prepare_output("measure-check", config, seed);

  const auto run_battery = [&](double dt) {
    LatticeMeasureParams pp = p;
    pp.chain.dt = dt;
    InvarianceOptions oo = opt;
    oo.dt = dt;
    const MeasureSamples samples = sample_invariant_measure(pp, n_samples, seed);
    const InvarianceReport rep = invariance_check(pp, samples, oo);
    return std::make_pair(samples, rep);
  };

  const double dt0 = p.grid.mesh * p.grid.mesh / 4.0;
  const auto [samples, report] = run_battery(dt0);

  std::ostringstream csv;
  csv << "test,statistic,p_value,p_adjusted\n";
  for (const auto& row : report.rows)
    csv << row.name << ',' << fmt(row.statistic) << ',' << fmt(row.p_value) << ','
        << fmt(row.p_adjusted) << '\n';
  write_text((ctx.dir / "invariance.csv").string(), csv.str());

  bool stable = true;
  json stability = json::object();
  if (dt_stability) {
    const auto [samples2, report2] = run_battery(dt0 / 2.0);
    // compare the first four moments of the basic observable across dt
    const TestFunctionSample t =
        sample_test_function(p.grid, Eigen::Vector3d::Zero(), 0.25);
    std::vector<double> v1, v2;
    for (const auto& f : samples.fields) v1.push_back(pairing(f, t));
    for (const auto& f : samples2.fields) v2.push_back(pairing(f, t));
    for (int q = 1; q <= 4; ++q) {
      std::vector<double> p1(v1.size()), p2(v2.size());
      for (std::size_t i = 0; i < v1.size(); ++i) p1[i] = std::pow(v1[i], q);
      for (std::size_t i = 0; i < v2.size(); ++i) p2[i] = std::pow(v2[i], q);
      const MeanVar a = mean_var(p1), b = mean_var(p2);
      const double tau1 = integrated_autocorr_time(p1), tau2 = integrated_autocorr_time(p2);
      const double se =
          std::sqrt(a.var * tau1 / p1.size() + b.var * tau2 / p2.size());
      const double z = se > 0 ? (a.mean - b.mean) / se : 0.0;
      stability["moment" + std::to_string(q) + "_z"] = z;
      stable = stable && std::abs(z) <= 3.0;
    }
    stability["passed_half_dt"] = report2.passed;
    stable = stable && report2.passed;
  }

  // moment scan across the requested scales
  const auto q_list = get_or<std::vector<double>>(config, "moment_q", {2.0, 4.0});
  const auto nu_list = get_or<std::vector<double>>(config, "moment_nu", {0.5, 0.25});
  const auto scan = moment_scan({p}, q_list, nu_list, n_samples, seed);
  std::ostringstream mcsv;
  mcsv << "N,q,nu,moment,stderr\n";
  for (const auto& row : scan)
    mcsv << row.level << ',' << fmt(row.q) << ',' << fmt(row.nu) << ',' << fmt(row.moment)
         << ',' << fmt(row.stderr_) << '\n';
  write_text((ctx.dir / "moments.csv").string(), mcsv.str());

  json summary;
  summary["passed"] = report.passed && stable;
  summary["min_p_adjusted"] = report.min_p_adjusted;
  summary["r_hat"] = samples.r_hat;
  summary["tau_int"] = samples.tau_int;
  summary["blowups"] = report.blowups;
  summary["lambda_small_convention"] = p.lambda_small();
  summary["dt_stability"] = stability;
  write_text((ctx.dir / "summary.json").string(), summary.dump(2) + "\n");
  return {report.passed && stable ? 0 : 1, ctx.dir.string()};
}

// ------------------------------------------------------------------ norm

ExperimentOutcome run_norm(const json& config, std::uint64_t seed) {
  check_keys(config, {"out", "seed", "fields", "stamp_step", "alpha", "delta", "eta",
                      "wavelet_order", "n_min"},
             "norm");
  const auto files = get_or<std::vector<std::string>>(config, "fields", {});
  if (files.empty()) throw std::invalid_argument("norm: 'fields' must list field files");
  const double alpha = get_or<double>(config, "alpha", -0.6);
  const double delta = get_or<double>(config, "delta", 0.0);
  const double eta = get_or<double>(config, "eta", 0.0);
  const int order = get_or<int>(config, "wavelet_order", 2);
  const int n_min = get_or<int>(config, "n_min", 0);
  if (delta > 0 && files.size() < 2)
    throw std::invalid_argument("norm: the two-time term needs at least two field files");

  OutputContext ctx = prepare_output("norm", config, seed);

  std::vector<GridField> fields;
  for (const auto& f : files) fields.push_back(load_field(f));
  const Grid g = fields.front().grid;
  for (const auto& f : fields)
    if (f.grid != g) throw std::invalid_argument("norm: field files live on different grids");
  const GridMRA mra = build_grid_mra(g, daubechies_coefficients(order), n_min);

  // per-level maxima of the weighted coefficients, for the first field
  const WaveletCoeffs coeffs = wavelet_transform(fields.front(), mra);
  std::ostringstream csv;
  csv << "level,kind,weighted_max\n";
  csv << n_min << ",scaling,"
      << fmt(std::pow(2.0, n_min * (alpha + 1.5)) * coeffs.scaling.abs().maxCoeff()) << '\n';
  for (std::size_t l = 0; l < coeffs.details.size(); ++l) {
    const int n = n_min + static_cast<int>(l);
    double mx = 0;
    for (const auto& d : coeffs.details[l]) mx = std::max(mx, d.abs().maxCoeff());
    csv << n << ",wavelet," << fmt(std::pow(2.0, n * (alpha + 1.5)) * mx) << '\n';
  }
  write_text((ctx.dir / "levels.csv").string(), csv.str());

  json summary;
  summary["alpha"] = alpha;
  if (fields.size() == 1) {
    summary["holder_norm"] = holder_norm(fields.front(), alpha, mra);
  } else {
    const double stamp_step = get_or<double>(config, "stamp_step", 1.0);
    Trajectory traj = make_trajectory(g);
    for (std::size_t i = 0; i < fields.size(); ++i)
      traj.push(stamp_step * static_cast<double>(i + 1), fields[i]);
    SpacetimeNormParams np;
    np.alpha = alpha;
    np.delta = delta;
    np.eta = eta;
    summary["spacetime_seminorm"] = spacetime_seminorm(traj, np, mra);
  }
  write_text((ctx.dir / "summary.json").string(), summary.dump(2) + "\n");
  return {0, ctx.dir.string()};
}

}  // namespace

json load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open config file: " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw std::invalid_argument("malformed config " + path + ": " + e.what());
  }
  if (!j.is_object()) throw std::invalid_argument("config root must be a JSON object");
  return j;
}

int thread_budget() {
  const char* env = std::getenv("PHI4_THREADS");
  if (!env) return 1;
  const int n = std::atoi(env);
  return n < 1 ? 1 : n;
}

ExperimentOutcome run_experiment(const std::string& experiment, json config,
                                 std::optional<std::uint64_t> seed_override,
                                 std::optional<std::string> out_override,
                                 std::optional<std::string> resume_checkpoint) {
  if (!config.is_object()) throw std::invalid_argument("config must be a JSON object");
  if (out_override) config["out"] = *out_override;
  const std::uint64_t seed =
      seed_override ? *seed_override : get_or<std::uint64_t>(config, "seed", 0);
  config["seed"] = seed;

  if (experiment == "renorm-constants") return run_renorm_constants(config, seed);
  if (experiment == "simulate") return run_simulate(config, seed, resume_checkpoint);
  if (experiment == "converge") return run_converge(config, seed);
  if (experiment == "model-check") return run_model_check(config, seed);
  if (experiment == "measure-check") return run_measure_check(config, seed);
  if (experiment == "norm") return run_norm(config, seed);
  throw std::invalid_argument("unknown experiment: " + experiment);
}

}  // namespace phi4
