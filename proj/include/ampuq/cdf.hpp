#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace ampuq {

inline constexpr std::size_t kCdfGridPoints = 1024;
inline constexpr double kMinGridUpper = 4.0;

/// Throws DataError unless grid is finite, nonnegative and strictly
/// increasing and cdf is nondecreasing in [0, 1] with cdf[0] = 0 and
/// cdf[last] = 1.
template <typename T>
void validate_cdf(std::span<const double> grid, std::span<const T> cdf);

/// Linearly interpolated inverse of a discrete CDF, q in [0, 1]. A CDF that
/// rises from 0 to 1 inside a single grid cell is a point mass and maps
/// every q to that cell's upper node.
template <typename T>
double inverse_cdf(std::span<const double> grid, std::span<const T> cdf, double q);

/// Discrete CDF of normalized ampacity r = I_th / I_th0 on a fixed grid.
class NormalizedAmpacityCDF {
public:
  NormalizedAmpacityCDF() = default;
  NormalizedAmpacityCDF(std::vector<double> grid, std::vector<double> cdf);

  const std::vector<double> &grid() const { return grid_; }
  const std::vector<double> &values() const { return cdf_; }
  std::size_t size() const { return grid_.size(); }
  double upper() const { return grid_.back(); }

  double evaluate(double r) const;
  double quantile(double q) const;

  /// Same distribution on another grid (linear interpolation, 1 beyond the
  /// current upper end).
  NormalizedAmpacityCDF resampled(const std::vector<double> &new_grid) const;

  std::size_t sample_count = 0;
  std::uint64_t seed = 0;

private:
  std::vector<double> grid_;
  std::vector<double> cdf_;
};

/// Uniform grid of `points` nodes on [0, upper].
std::vector<double> uniform_grid(double upper, std::size_t points = kCdfGridPoints);

/// Right-continuous empirical CDF of `samples` evaluated on a uniform grid
/// over [0, max(kMinGridUpper, 1.05 * max sample)].
NormalizedAmpacityCDF empirical_cdf_on_grid(std::vector<double> samples,
                                            std::size_t points = kCdfGridPoints);

} // namespace ampuq
