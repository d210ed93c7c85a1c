#pragma once

#include <cstddef>
#include <limits>
#include <memory>
#include <span>
#include <vector>

#include "ampuq/weather.hpp"

namespace ampuq {

inline constexpr std::size_t kDefaultMinSamples = 20;
inline constexpr std::size_t kCdfTableSize = 2048;
inline constexpr double kSolarConstant = 1361.0; // W/m2

/// 0.75 (1 - u^2) on |u| <= 1, zero elsewhere.
constexpr double epanechnikov_kernel(double u) {
  return (u >= -1.0 && u <= 1.0) ? 0.75 * (1.0 - u * u) : 0.0;
}

/// Plug-in bandwidth for the Epanechnikov kernel:
/// h = 2.345 * min(sd, IQR / 1.349) * n^(-1/5). Falls back to sd when the
/// IQR collapses to zero.
double plugin_bandwidth(std::span<const double> samples);

/// Epanechnikov kernel density over forecast-error samples. Immutable once
/// built. The CDF is tabulated on a uniform grid over the support by
/// cumulative trapezoid integration of the density.
class ErrorDistribution {
public:
  ErrorDistribution(std::vector<double> samples, double bandwidth,
                    WeatherVariable variable = WeatherVariable::Temperature,
                    HorizonClass horizon = HorizonClass::Nowcast);

  WeatherVariable variable() const { return variable_; }
  HorizonClass horizon() const { return horizon_; }
  double bandwidth() const { return bandwidth_; }
  double support_lo() const { return lo_; }
  double support_hi() const { return hi_; }
  /// Sorted ascending.
  const std::vector<double> &samples() const { return samples_; }

  double density(double x) const;
  double cdf(double x) const;
  /// Linearly interpolated inverse of the tabulated CDF, q in [0, 1].
  double quantile(double q) const;

  const std::vector<double> &cdf_grid() const { return grid_; }
  const std::vector<double> &cdf_values() const { return cdf_; }

private:
  WeatherVariable variable_;
  HorizonClass horizon_;
  std::vector<double> samples_;
  double bandwidth_;
  double lo_;
  double hi_;
  std::vector<double> grid_;
  std::vector<double> cdf_;
};

ErrorDistribution fit_kde(std::vector<double> samples,
                          WeatherVariable variable = WeatherVariable::Temperature,
                          HorizonClass horizon = HorizonClass::Nowcast,
                          std::size_t min_samples = kDefaultMinSamples);

inline double kde_cdf(const ErrorDistribution &dist, double x) { return dist.cdf(x); }

struct Bounds {
  double lo = -std::numeric_limits<double>::infinity();
  double hi = std::numeric_limits<double>::infinity();
};

/// Physical truncation range for a weather variable: wind speed [0, inf),
/// solar [0, solar constant], the rest unbounded (wind direction is wrapped by
/// the caller instead).
Bounds physical_bounds(WeatherVariable variable);

/// Law of (center + E) conditioned on [lo, hi], E drawn from the base error
/// distribution. A point mass is represented with no base.
class TruncatedOffsetDistribution {
public:
  TruncatedOffsetDistribution(std::shared_ptr<const ErrorDistribution> base, double center,
                              Bounds bounds);

  static TruncatedOffsetDistribution point(double value);

  bool is_point() const { return base_ == nullptr; }
  double center() const { return center_; }
  const Bounds &bounds() const { return bounds_; }
  /// Probability mass of the shifted base inside the bounds.
  double renormalization() const { return mass_; }

  double cdf(double x) const;
  /// Inverse-transform draw, u in [0, 1). Nondecreasing in u.
  double sample(double u) const;

  double min_value() const { return sample(0.0); }
  double max_value() const;

private:
  TruncatedOffsetDistribution() = default;

  std::shared_ptr<const ErrorDistribution> base_;
  double center_ = 0.0;
  Bounds bounds_;
  double cdf_lo_ = 0.0;
  double mass_ = 1.0;
};

/// Throws DataError when the shifted support carries less than 1e-9 mass
/// inside the bounds.
TruncatedOffsetDistribution offset_truncate(std::shared_ptr<const ErrorDistribution> dist,
                                            double center, Bounds bounds);

inline double sample(const TruncatedOffsetDistribution &dist, double u) {
  return dist.sample(u);
}

} // namespace ampuq
