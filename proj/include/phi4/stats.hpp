#pragma once

#include "phi4/rng.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

namespace phi4 {

struct MeanVar {
  double mean = 0;
  double var = 0;  // unbiased
  std::size_t n = 0;

  double stderr_mean() const { return n > 1 ? std::sqrt(var / n) : 0.0; }
};

inline MeanVar mean_var(const std::vector<double>& x) {
  MeanVar r;
  r.n = x.size();
  if (r.n == 0) return r;
  double s = 0;
  for (double v : x) s += v;
  r.mean = s / r.n;
  if (r.n > 1) {
    double q = 0;
    for (double v : x) q += (v - r.mean) * (v - r.mean);
    r.var = q / (r.n - 1);
  }
  return r;
}

inline double median(std::vector<double> x) {
  if (x.empty()) throw std::invalid_argument("median of empty sample");
  std::sort(x.begin(), x.end());
  const std::size_t n = x.size();
  return n % 2 ? x[n / 2] : 0.5 * (x[n / 2 - 1] + x[n / 2]);
}

inline double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

/// Two-sided p-value of a z statistic.
inline double z_pvalue(double z) { return std::erfc(std::abs(z) / std::sqrt(2.0)); }

namespace detail {

// Regularized incomplete gamma Q(a, x), series + continued fraction.
inline double gamma_q(double a, double x) {
  if (x < 0 || a <= 0) throw std::domain_error("gamma_q: invalid arguments");
  if (x == 0) return 1.0;
  const double gln = std::lgamma(a);
  if (x < a + 1.0) {
    // series for P(a,x)
    double ap = a, sum = 1.0 / a, del = sum;
    for (int i = 0; i < 500; ++i) {
      ap += 1.0;
      del *= x / ap;
      sum += del;
      if (std::abs(del) < std::abs(sum) * 1e-15) break;
    }
    return 1.0 - sum * std::exp(-x + a * std::log(x) - gln);
  }
  // continued fraction for Q(a,x)
  const double tiny = 1e-300;
  double b = x + 1.0 - a, c = 1.0 / tiny, d = 1.0 / b, h = d;
  for (int i = 1; i < 500; ++i) {
    const double an = -i * (i - a);
    b += 2.0;
    d = an * d + b;
    if (std::abs(d) < tiny) d = tiny;
    c = b + an / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < 1e-15) break;
  }
  return std::exp(-x + a * std::log(x) - gln) * h;
}

}  // namespace detail

/// Upper tail of chi-square with k degrees of freedom.
inline double chi2_pvalue(double stat, int dof) {
  return detail::gamma_q(0.5 * dof, 0.5 * stat);
}

/// Chi-square goodness of fit of samples against the standard normal,
/// equiprobable bins. Returns the p-value.
inline double chi2_gof_normal(const std::vector<double>& samples, double mean,
                              double sd, int bins = 64) {
  if (samples.size() < static_cast<std::size_t>(8 * bins))
    throw std::invalid_argument("chi2_gof_normal: too few samples for bin count");
  std::vector<std::int64_t> count(bins, 0);
  for (double v : samples) {
    const double u = normal_cdf((v - mean) / sd);
    int b = static_cast<int>(u * bins);
    b = std::clamp(b, 0, bins - 1);
    ++count[b];
  }
  const double expect = static_cast<double>(samples.size()) / bins;
  double stat = 0;
  for (int b = 0; b < bins; ++b) {
    const double d = count[b] - expect;
    stat += d * d / expect;
  }
  return chi2_pvalue(stat, bins - 1);
}

/// Kolmogorov distribution tail Q(lambda) = 2 sum (-1)^{j-1} exp(-2 j^2 lambda^2).
inline double kolmogorov_q(double lambda) {
  if (lambda <= 0) return 1.0;
  double sum = 0, sign = 1;
  for (int j = 1; j <= 100; ++j) {
    const double term = std::exp(-2.0 * j * j * lambda * lambda);
    sum += sign * term;
    sign = -sign;
    if (term < 1e-16) break;
  }
  return std::clamp(2.0 * sum, 0.0, 1.0);
}

struct KsResult {
  double statistic = 0;
  double p_value = 1;
};

inline KsResult ks_two_sample(std::vector<double> a, std::vector<double> b) {
  if (a.empty() || b.empty()) throw std::invalid_argument("ks_two_sample: empty sample");
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  const std::size_t na = a.size(), nb = b.size();
  std::size_t i = 0, j = 0;
  double d = 0;
  while (i < na && j < nb) {
    const double x = std::min(a[i], b[j]);
    while (i < na && a[i] <= x) ++i;
    while (j < nb && b[j] <= x) ++j;
    d = std::max(d, std::abs(static_cast<double>(i) / na - static_cast<double>(j) / nb));
  }
  const double ne = std::sqrt(static_cast<double>(na) * nb / (na + nb));
  KsResult r;
  r.statistic = d;
  r.p_value = kolmogorov_q((ne + 0.12 + 0.11 / ne) * d);
  return r;
}

/// Integrated autocorrelation time with a self-consistent window (factor 6).
inline double integrated_autocorr_time(const std::vector<double>& x) {
  const std::size_t n = x.size();
  if (n < 8) return 1.0;
  const MeanVar mv = mean_var(x);
  if (mv.var <= 0) return 1.0;
  double tau = 1.0;
  const std::size_t max_lag = n / 4;
  double acc = 0.0;
  for (std::size_t lag = 1; lag <= max_lag; ++lag) {
    double c = 0;
    for (std::size_t t = 0; t + lag < n; ++t) c += (x[t] - mv.mean) * (x[t + lag] - mv.mean);
    c /= (n - lag);
    acc += c / mv.var;
    tau = 1.0 + 2.0 * acc;
    if (static_cast<double>(lag) >= 6.0 * tau) break;
  }
  return std::max(tau, 1.0);
}

/// Gelman-Rubin R-hat over chains of equal length.
inline double gelman_rubin(const std::vector<std::vector<double>>& chains) {
  const std::size_t m = chains.size();
  if (m < 2) throw std::invalid_argument("gelman_rubin: need at least two chains");
  const std::size_t n = chains[0].size();
  std::vector<double> means(m);
  double w = 0, grand = 0;
  for (std::size_t c = 0; c < m; ++c) {
    if (chains[c].size() != n) throw std::invalid_argument("gelman_rubin: unequal chain lengths");
    const MeanVar mv = mean_var(chains[c]);
    means[c] = mv.mean;
    w += mv.var;
    grand += mv.mean;
  }
  w /= m;
  grand /= m;
  double b = 0;
  for (std::size_t c = 0; c < m; ++c) b += (means[c] - grand) * (means[c] - grand);
  b *= static_cast<double>(n) / (m - 1);
  if (w <= 0) return 1.0;
  const double var_plus = (static_cast<double>(n - 1) / n) * w + b / n;
  return std::sqrt(var_plus / w);
}

struct FitResult {
  double slope = 0;
  double intercept = 0;
};

inline FitResult linear_fit(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2)
    throw std::invalid_argument("linear_fit: need >= 2 matching points");
  const std::size_t n = x.size();
  Eigen::MatrixXd a(n, 2);
  Eigen::VectorXd v(n);
  for (std::size_t i = 0; i < n; ++i) {
    a(static_cast<Eigen::Index>(i), 0) = x[i];
    a(static_cast<Eigen::Index>(i), 1) = 1.0;
    v[static_cast<Eigen::Index>(i)] = y[i];
  }
  Eigen::Vector2d sol = a.colPivHouseholderQr().solve(v);
  return FitResult{sol[0], sol[1]};
}

struct BootstrapCi {
  double low = 0;
  double high = 0;
};

/// Percentile bootstrap over replica indices for a statistic of per-replica rows.
template <typename StatFn>
BootstrapCi bootstrap_ci(std::size_t n_replicas, StatFn&& stat, int n_boot = 200,
                         double level = 0.95, std::uint64_t seed = 0xb00757a9ull) {
  if (n_replicas < 2) throw std::invalid_argument("bootstrap_ci: need >= 2 replicas");
  CounterRng rng = CounterRng::from_seed(seed).absorb(0xb005);
  std::vector<double> stats(n_boot);
  std::vector<std::size_t> pick(n_replicas);
  std::uint64_t ctr = 0;
  for (int b = 0; b < n_boot; ++b) {
    for (std::size_t i = 0; i < n_replicas; ++i)
      pick[i] = static_cast<std::size_t>(rng.bits(ctr++) % n_replicas);
    stats[b] = stat(pick);
  }
  std::sort(stats.begin(), stats.end());
  const double alpha = 0.5 * (1.0 - level);
  const auto at = [&](double q) {
    const double pos = q * (n_boot - 1);
    const int lo = static_cast<int>(pos);
    const int hi = std::min(lo + 1, n_boot - 1);
    return stats[lo] + (pos - lo) * (stats[hi] - stats[lo]);
  };
  return BootstrapCi{at(alpha), at(1.0 - alpha)};
}

}  // namespace phi4
