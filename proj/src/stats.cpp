#include "rpo/stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "rpo/rng.hpp"

namespace rpo::stats {

double mean(std::span<const double> xs) {
  if (xs.empty()) throw std::invalid_argument("mean: empty input");
  double s = 0.0;
  for (double x : xs) s += x;
  return s / static_cast<double>(xs.size());
}

double sample_variance(std::span<const double> xs) {
  if (xs.size() < 2) throw std::invalid_argument("sample_variance: need n >= 2");
  const double m = mean(xs);
  double s = 0.0;
  for (double x : xs) s += (x - m) * (x - m);
  return s / static_cast<double>(xs.size() - 1);
}

double population_stddev(std::span<const double> xs) {
  if (xs.empty()) throw std::invalid_argument("population_stddev: empty input");
  const double m = mean(xs);
  double s = 0.0;
  for (double x : xs) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(xs.size()));
}

namespace {

// Regularized incomplete gamma, series and continued-fraction forms
// (Numerical Recipes gser/gcf).
double gamma_p_series(double a, double x) {
  const double gln = std::lgamma(a);
  double ap = a;
  double sum = 1.0 / a;
  double del = sum;
  for (int n = 0; n < 500; ++n) {
    ap += 1.0;
    del *= x / ap;
    sum += del;
    if (std::abs(del) < std::abs(sum) * 1e-15) break;
  }
  return sum * std::exp(-x + a * std::log(x) - gln);
}

double gamma_q_contfrac(double a, double x) {
  const double gln = std::lgamma(a);
  const double tiny = 1e-300;
  double b = x + 1.0 - a;
  double c = 1.0 / tiny;
  double d = 1.0 / b;
  double h = d;
  for (int i = 1; i <= 500; ++i) {
    const double an = -static_cast<double>(i) * (static_cast<double>(i) - a);
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

double gamma_q(double a, double x) {
  if (x < 0.0 || a <= 0.0) throw std::invalid_argument("gamma_q: bad args");
  if (x == 0.0) return 1.0;
  if (x < a + 1.0) return 1.0 - gamma_p_series(a, x);
  return gamma_q_contfrac(a, x);
}

std::vector<double> average_ranks(std::span<const double> xs) {
  const size_t n = xs.size();
  std::vector<size_t> idx(n);
  std::iota(idx.begin(), idx.end(), size_t{0});
  std::stable_sort(idx.begin(), idx.end(),
                   [&](size_t a, size_t b) { return xs[a] < xs[b]; });
  std::vector<double> ranks(n, 0.0);
  size_t i = 0;
  while (i < n) {
    size_t j = i;
    while (j + 1 < n && xs[idx[j + 1]] == xs[idx[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (size_t k = i; k <= j; ++k) ranks[idx[k]] = r;
    i = j + 1;
  }
  return ranks;
}

double pearson(std::span<const double> x, std::span<const double> y) {
  const double mx = mean(x);
  const double my = mean(y);
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) return 0.0;
  return sxy / std::sqrt(sxx * syy);
}

}  // namespace

double chi_square_sf(double x, int df) {
  if (df < 1) throw std::invalid_argument("chi_square_sf: df must be >= 1");
  if (x <= 0.0) return 1.0;
  return gamma_q(0.5 * static_cast<double>(df), 0.5 * x);
}

double chi_square_statistic(std::span<const int64_t> observed,
                            std::span<const double> expected) {
  if (observed.size() != expected.size() || observed.empty())
    throw std::invalid_argument("chi_square_statistic: size mismatch");
  double stat = 0.0;
  for (size_t i = 0; i < observed.size(); ++i) {
    if (expected[i] <= 0.0)
      throw std::invalid_argument("chi_square_statistic: nonpositive expected");
    const double d = static_cast<double>(observed[i]) - expected[i];
    stat += d * d / expected[i];
  }
  return stat;
}

double spearman_rho(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 3)
    throw std::invalid_argument("spearman_rho: need matched n >= 3");
  const auto rx = average_ranks(x);
  const auto ry = average_ranks(y);
  return pearson(rx, ry);
}

double spearman_pvalue_greater(std::span<const double> x,
                               std::span<const double> y, int permutations,
                               uint64_t seed) {
  if (permutations < 1)
    throw std::invalid_argument("spearman_pvalue_greater: permutations >= 1");
  const double observed = spearman_rho(x, y);
  std::vector<double> shuffled(y.begin(), y.end());
  Rng rng(seed);
  int at_least = 0;
  for (int p = 0; p < permutations; ++p) {
    for (size_t i = shuffled.size() - 1; i > 0; --i) {
      const int j = rng.uniform_int(static_cast<int>(i) + 1);
      std::swap(shuffled[i], shuffled[static_cast<size_t>(j)]);
    }
    if (spearman_rho(x, shuffled) >= observed) ++at_least;
  }
  return (static_cast<double>(at_least) + 1.0) /
         (static_cast<double>(permutations) + 1.0);
}

BootstrapInterval bootstrap_variance_ratio_ci(std::span<const double> a,
                                              std::span<const double> b,
                                              int resamples, double confidence,
                                              uint64_t seed) {
  if (a.size() < 2 || b.size() < 2)
    throw std::invalid_argument("bootstrap_variance_ratio_ci: need n >= 2");
  if (confidence <= 0.0 || confidence >= 1.0)
    throw std::invalid_argument("bootstrap_variance_ratio_ci: bad confidence");
  Rng rng(seed);
  std::vector<double> ratios;
  ratios.reserve(static_cast<size_t>(resamples));
  std::vector<double> ra(a.size()), rb(b.size());
  for (int r = 0; r < resamples; ++r) {
    for (auto& v : ra) v = a[static_cast<size_t>(rng.uniform_int(static_cast<int>(a.size())))];
    for (auto& v : rb) v = b[static_cast<size_t>(rng.uniform_int(static_cast<int>(b.size())))];
    const double vb = sample_variance(rb);
    const double va = sample_variance(ra);
    if (vb == 0.0) {
      ratios.push_back(va == 0.0 ? 1.0 : std::numeric_limits<double>::infinity());
    } else {
      ratios.push_back(va / vb);
    }
  }
  std::sort(ratios.begin(), ratios.end());
  const double tail = 0.5 * (1.0 - confidence);
  const auto pick = [&](double q) {
    const double pos = q * static_cast<double>(ratios.size() - 1);
    const size_t lo = static_cast<size_t>(pos);
    const size_t hi = std::min(lo + 1, ratios.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    return ratios[lo] * (1.0 - frac) + ratios[hi] * frac;
  };
  return BootstrapInterval{pick(tail), pick(1.0 - tail)};
}

}  // namespace rpo::stats
