#include "ampuq/ks.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <vector>

#include <fmt/format.h>

#include "ampuq/weather.hpp"

namespace ampuq {

namespace {

constexpr int kSeriesTerms = 100;

double standard_normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

KsResult finish(double statistic, double effective_n, double alpha) {
  KsResult r;
  r.statistic = statistic;
  r.p_value = kolmogorov_survival(std::sqrt(effective_n) * statistic);
  r.alpha = alpha;
  r.rejected = r.p_value < alpha;
  return r;
}

} // namespace

double kolmogorov_survival(double lambda) {
  using std::numbers::pi;
  if (lambda <= 0.0)
    return 1.0;
  if (lambda < 1.18) {
    // P(K <= l) = sqrt(2 pi) / l * sum_k exp(-(2k-1)^2 pi^2 / (8 l^2)),
    // which converges fast for small l.
    double sum = 0.0;
    for (int k = 1; k <= kSeriesTerms; ++k) {
      const double m = 2.0 * k - 1.0;
      const double term = std::exp(-m * m * pi * pi / (8.0 * lambda * lambda));
      sum += term;
      if (term < 1e-300)
        break;
    }
    return std::clamp(1.0 - std::sqrt(2.0 * pi) / lambda * sum, 0.0, 1.0);
  }
  // P(K > l) = 2 sum_k (-1)^(k-1) exp(-2 k^2 l^2)
  double sum = 0.0;
  for (int k = 1; k <= kSeriesTerms; ++k) {
    const double term = std::exp(-2.0 * k * k * lambda * lambda);
    sum += (k % 2 == 1 ? term : -term);
    if (term < 1e-300)
      break;
  }
  return std::clamp(2.0 * sum, 0.0, 1.0);
}

KsResult ks_test_normal(std::span<const double> samples, double alpha) {
  const std::size_t n = samples.size();
  if (n < 20)
    throw DataError(fmt::format("normality test needs at least 20 samples, got {}", n));
  std::vector<double> xs(samples.begin(), samples.end());
  std::sort(xs.begin(), xs.end());
  const double nd = static_cast<double>(n);
  const double mean = std::accumulate(xs.begin(), xs.end(), 0.0) / nd;
  double ss = 0.0;
  for (double x : xs)
    ss += (x - mean) * (x - mean);
  const double sd = std::sqrt(ss / (nd - 1.0));
  if (!(sd > 0.0))
    throw DataError("normality test on degenerate samples (zero variance)");

  double d = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double f = standard_normal_cdf((xs[i] - mean) / sd);
    const double above = static_cast<double>(i + 1) / nd - f;
    const double below = f - static_cast<double>(i) / nd;
    d = std::max({d, above, below});
  }
  return finish(d, nd, alpha);
}

KsResult ks_test_two_sample(std::span<const double> a, std::span<const double> b,
                            double alpha) {
  if (a.size() < 20 || b.size() < 20)
    throw DataError(fmt::format("two-sample test needs at least 20 samples each, got {} and {}",
                                a.size(), b.size()));
  std::vector<double> xa(a.begin(), a.end()), xb(b.begin(), b.end());
  std::sort(xa.begin(), xa.end());
  std::sort(xb.begin(), xb.end());
  const double na = static_cast<double>(xa.size());
  const double nb = static_cast<double>(xb.size());

  std::size_t i = 0, j = 0;
  double d = 0.0;
  while (i < xa.size() && j < xb.size()) {
    const double x = std::min(xa[i], xb[j]);
    while (i < xa.size() && xa[i] == x)
      ++i;
    while (j < xb.size() && xb[j] == x)
      ++j;
    d = std::max(d, std::abs(static_cast<double>(i) / na - static_cast<double>(j) / nb));
  }
  return finish(d, na * nb / (na + nb), alpha);
}

} // namespace ampuq
