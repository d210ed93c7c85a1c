#include "ampuq/cdf.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "ampuq/weather.hpp"

namespace ampuq {

template <typename T>
void validate_cdf(std::span<const double> grid, std::span<const T> cdf) {
  if (grid.size() < 2)
    throw DataError("CDF grid needs at least two nodes");
  if (grid.size() != cdf.size())
    throw DataError(fmt::format("CDF has {} values for {} grid nodes", cdf.size(), grid.size()));
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (!std::isfinite(grid[i]) || grid[i] < 0.0)
      throw DataError(fmt::format("CDF grid node {} is invalid", i));
    if (i > 0 && !(grid[i] > grid[i - 1]))
      throw DataError(fmt::format("CDF grid not strictly increasing at node {}", i));
    const double c = static_cast<double>(cdf[i]);
    if (!(c >= 0.0 && c <= 1.0))
      throw DataError(fmt::format("CDF value {} at node {} outside [0, 1]", c, i));
    if (i > 0 && c < static_cast<double>(cdf[i - 1]))
      throw DataError(fmt::format("CDF decreases at node {}", i));
  }
  if (cdf.front() != T(0))
    throw DataError("CDF does not start at 0");
  if (cdf.back() != T(1))
    throw DataError("CDF does not end at 1");
}

template <typename T>
double inverse_cdf(std::span<const double> grid, std::span<const T> cdf, double q) {
  auto value = [&](std::size_t i) { return static_cast<double>(cdf[i]); };
  auto first_at_least = [&](double level) {
    auto it = std::partition_point(cdf.begin(), cdf.end(),
                                   [level](T c) { return static_cast<double>(c) < level; });
    return std::min(static_cast<std::size_t>(it - cdf.begin()), cdf.size() - 1);
  };
  // cdf[0] == 0, so the first positive node is at index >= 1.
  const auto first_positive = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::upper_bound(cdf.begin(), cdf.end(), T(0)) - cdf.begin()));
  const auto first_one = first_at_least(1.0);
  if (first_one <= first_positive)
    return grid[first_one];
  if (q <= 0.0)
    return grid[first_positive - 1];
  if (q >= 1.0)
    return grid[first_one];
  const auto k = std::max<std::size_t>(1, first_at_least(q));
  const double c0 = value(k - 1), c1 = value(k);
  const double t = c1 > c0 ? (q - c0) / (c1 - c0) : 1.0;
  return grid[k - 1] + t * (grid[k] - grid[k - 1]);
}

template void validate_cdf<double>(std::span<const double>, std::span<const double>);
template void validate_cdf<float>(std::span<const double>, std::span<const float>);
template double inverse_cdf<double>(std::span<const double>, std::span<const double>, double);
template double inverse_cdf<float>(std::span<const double>, std::span<const float>, double);

NormalizedAmpacityCDF::NormalizedAmpacityCDF(std::vector<double> grid, std::vector<double> cdf)
    : grid_(std::move(grid)), cdf_(std::move(cdf)) {
  validate_cdf<double>(grid_, cdf_);
}

double NormalizedAmpacityCDF::evaluate(double r) const {
  if (r <= grid_.front())
    return cdf_.front();
  if (r >= grid_.back())
    return 1.0;
  auto it = std::upper_bound(grid_.begin(), grid_.end(), r);
  const auto k = static_cast<std::size_t>(it - grid_.begin());
  const double t = (r - grid_[k - 1]) / (grid_[k] - grid_[k - 1]);
  return cdf_[k - 1] + t * (cdf_[k] - cdf_[k - 1]);
}

double NormalizedAmpacityCDF::quantile(double q) const {
  return inverse_cdf<double>(grid_, cdf_, q);
}

NormalizedAmpacityCDF NormalizedAmpacityCDF::resampled(const std::vector<double> &new_grid) const {
  std::vector<double> values(new_grid.size());
  for (std::size_t i = 0; i < new_grid.size(); ++i)
    values[i] = evaluate(new_grid[i]);
  values.front() = 0.0;
  values.back() = 1.0;
  NormalizedAmpacityCDF out(new_grid, std::move(values));
  out.sample_count = sample_count;
  out.seed = seed;
  return out;
}

std::vector<double> uniform_grid(double upper, std::size_t points) {
  std::vector<double> grid(points);
  const double step = upper / static_cast<double>(points - 1);
  for (std::size_t i = 0; i < points; ++i)
    grid[i] = step * static_cast<double>(i);
  grid.back() = upper;
  return grid;
}

NormalizedAmpacityCDF empirical_cdf_on_grid(std::vector<double> samples, std::size_t points) {
  if (samples.empty())
    throw DataError("empirical CDF of an empty sample set");
  std::sort(samples.begin(), samples.end());
  const double upper = std::max(kMinGridUpper, 1.05 * samples.back());
  auto grid = uniform_grid(upper, points);
  std::vector<double> cdf(points);
  const double n = static_cast<double>(samples.size());
  auto it = samples.begin();
  for (std::size_t i = 0; i < points; ++i) {
    it = std::upper_bound(it, samples.end(), grid[i]);
    cdf[i] = static_cast<double>(it - samples.begin()) / n;
  }
  cdf.front() = 0.0;
  cdf.back() = 1.0;
  NormalizedAmpacityCDF out(std::move(grid), std::move(cdf));
  out.sample_count = samples.size();
  return out;
}

} // namespace ampuq
