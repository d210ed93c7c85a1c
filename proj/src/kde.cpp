#include "ampuq/kde.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <fmt/format.h>

namespace ampuq {

namespace {

// Type-7 (linear interpolation) sample quantile of sorted data.
double sorted_quantile(std::span<const double> sorted, double q) {
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

double sample_sd(std::span<const double> xs) {
  const double n = static_cast<double>(xs.size());
  const double mean = std::accumulate(xs.begin(), xs.end(), 0.0) / n;
  double ss = 0.0;
  for (double x : xs)
    ss += (x - mean) * (x - mean);
  return std::sqrt(ss / (n - 1.0));
}

// Linear interpolation of a monotone table; clamps outside the grid.
double interp_table(const std::vector<double> &xs, const std::vector<double> &ys, double x) {
  if (x <= xs.front())
    return ys.front();
  if (x >= xs.back())
    return ys.back();
  auto it = std::upper_bound(xs.begin(), xs.end(), x);
  const auto k = static_cast<std::size_t>(it - xs.begin());
  const double t = (x - xs[k - 1]) / (xs[k] - xs[k - 1]);
  return ys[k - 1] + t * (ys[k] - ys[k - 1]);
}

} // namespace

double plugin_bandwidth(std::span<const double> samples) {
  if (samples.size() < 2)
    throw DataError("bandwidth needs at least two samples");
  std::vector<double> sorted(samples.begin(), samples.end());
  std::sort(sorted.begin(), sorted.end());
  const double sd = sample_sd(sorted);
  const double iqr = sorted_quantile(sorted, 0.75) - sorted_quantile(sorted, 0.25);
  double sigma = iqr > 0.0 ? std::min(sd, iqr / 1.349) : sd;
  if (!(sigma > 0.0))
    throw DataError("degenerate samples: zero spread");
  return 2.345 * sigma * std::pow(static_cast<double>(sorted.size()), -0.2);
}

ErrorDistribution::ErrorDistribution(std::vector<double> samples, double bandwidth,
                                     WeatherVariable variable, HorizonClass horizon)
    : variable_(variable), horizon_(horizon), samples_(std::move(samples)),
      bandwidth_(bandwidth) {
  if (samples_.empty())
    throw DataError("kernel density needs at least one sample");
  if (!(bandwidth_ > 0.0) || !std::isfinite(bandwidth_))
    throw DataError(fmt::format("bandwidth must be positive, got {}", bandwidth_));
  for (double s : samples_)
    if (!std::isfinite(s))
      throw DataError("non-finite error sample");
  std::sort(samples_.begin(), samples_.end());
  lo_ = samples_.front() - bandwidth_;
  hi_ = samples_.back() + bandwidth_;

  grid_.resize(kCdfTableSize);
  cdf_.resize(kCdfTableSize);
  const double step = (hi_ - lo_) / static_cast<double>(kCdfTableSize - 1);
  for (std::size_t i = 0; i < kCdfTableSize; ++i)
    grid_[i] = lo_ + step * static_cast<double>(i);
  grid_.back() = hi_;

  double prev = density(grid_[0]);
  cdf_[0] = 0.0;
  for (std::size_t i = 1; i < kCdfTableSize; ++i) {
    const double cur = density(grid_[i]);
    cdf_[i] = cdf_[i - 1] + 0.5 * (prev + cur) * (grid_[i] - grid_[i - 1]);
    prev = cur;
  }
  const double total = cdf_.back();
  for (double &c : cdf_)
    c /= total;
  cdf_.back() = 1.0;
}

double ErrorDistribution::density(double x) const {
  if (x <= lo_ || x >= hi_)
    return 0.0;
  auto first = std::lower_bound(samples_.begin(), samples_.end(), x - bandwidth_);
  auto last = std::upper_bound(first, samples_.end(), x + bandwidth_);
  double sum = 0.0;
  for (auto it = first; it != last; ++it)
    sum += epanechnikov_kernel((x - *it) / bandwidth_);
  return sum / (static_cast<double>(samples_.size()) * bandwidth_);
}

double ErrorDistribution::cdf(double x) const {
  if (x <= lo_)
    return 0.0;
  if (x >= hi_)
    return 1.0;
  return interp_table(grid_, cdf_, x);
}

double ErrorDistribution::quantile(double q) const {
  if (q <= 0.0)
    return lo_;
  if (q >= 1.0)
    return hi_;
  auto it = std::lower_bound(cdf_.begin(), cdf_.end(), q);
  const auto k = static_cast<std::size_t>(it - cdf_.begin());
  if (k == 0)
    return grid_.front();
  const double dc = cdf_[k] - cdf_[k - 1];
  const double t = dc > 0.0 ? (q - cdf_[k - 1]) / dc : 1.0;
  return grid_[k - 1] + t * (grid_[k] - grid_[k - 1]);
}

ErrorDistribution fit_kde(std::vector<double> samples, WeatherVariable variable,
                          HorizonClass horizon, std::size_t min_samples) {
  if (samples.size() < min_samples)
    throw DataError(fmt::format("too few samples for {} / {}: {} < {}", to_string(variable),
                                to_string(horizon), samples.size(), min_samples));
  const double h = plugin_bandwidth(samples);
  return ErrorDistribution(std::move(samples), h, variable, horizon);
}

Bounds physical_bounds(WeatherVariable variable) {
  constexpr double inf = std::numeric_limits<double>::infinity();
  switch (variable) {
  case WeatherVariable::WindSpeed:
    return {0.0, inf};
  case WeatherVariable::Solar:
    return {0.0, kSolarConstant};
  default:
    return {-inf, inf};
  }
}

TruncatedOffsetDistribution::TruncatedOffsetDistribution(
    std::shared_ptr<const ErrorDistribution> base, double center, Bounds bounds)
    : base_(std::move(base)), center_(center), bounds_(bounds) {
  if (!base_)
    throw DataError("truncated distribution needs a base distribution");
  if (!(bounds_.lo < bounds_.hi))
    throw DataError("truncation bounds must satisfy lo < hi");
  cdf_lo_ = base_->cdf(bounds_.lo - center_);
  const double cdf_hi = base_->cdf(bounds_.hi - center_);
  mass_ = cdf_hi - cdf_lo_;
  if (!(mass_ > 1e-9))
    throw DataError(fmt::format(
        "no probability mass inside [{}, {}] for {} error offset to {}", bounds_.lo,
        bounds_.hi, to_string(base_->variable()), center_));
}

TruncatedOffsetDistribution TruncatedOffsetDistribution::point(double value) {
  TruncatedOffsetDistribution d;
  d.center_ = value;
  d.bounds_ = {value, value};
  return d;
}

double TruncatedOffsetDistribution::cdf(double x) const {
  if (is_point())
    return x >= center_ ? 1.0 : 0.0;
  if (x < bounds_.lo)
    return 0.0;
  if (x >= bounds_.hi)
    return 1.0;
  return std::clamp((base_->cdf(x - center_) - cdf_lo_) / mass_, 0.0, 1.0);
}

double TruncatedOffsetDistribution::sample(double u) const {
  if (is_point())
    return center_;
  const double q = cdf_lo_ + std::clamp(u, 0.0, 1.0) * mass_;
  return std::clamp(base_->quantile(q) + center_, bounds_.lo, bounds_.hi);
}

double TruncatedOffsetDistribution::max_value() const {
  if (is_point())
    return center_;
  return std::clamp(base_->quantile(cdf_lo_ + mass_) + center_, bounds_.lo, bounds_.hi);
}

TruncatedOffsetDistribution offset_truncate(std::shared_ptr<const ErrorDistribution> dist,
                                            double center, Bounds bounds) {
  return TruncatedOffsetDistribution(std::move(dist), center, bounds);
}

} // namespace ampuq
