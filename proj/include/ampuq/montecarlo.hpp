#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "ampuq/cdf.hpp"
#include "ampuq/distdb.hpp"
#include "ampuq/error_model.hpp"
#include "ampuq/kde.hpp"
#include "ampuq/thermal.hpp"

namespace ampuq {

/// Thrown when the nominal ampacity at an operating point is zero, so the
/// distribution cannot be normalized.
class DegeneratePointError : public DataError {
public:
  using DataError::DataError;
};

/// SplitMix64 over a (key, counter) pair: each stream is addressed by its
/// key alone, so parallel consumers stay reproducible in any order.
class CounterRng {
public:
  explicit CounterRng(std::uint64_t key) : key_(key) {}

  std::uint64_t next();
  /// Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  static std::uint64_t mix(std::uint64_t x);
  static std::uint64_t derive(std::uint64_t root, std::uint64_t a, std::uint64_t b = 0);

private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

/// p is the total two-sided tail probability; M = ceil(1000 / p).
std::size_t required_samples(double p);

struct OperatingPoint {
  HorizonClass horizon = HorizonClass::Nowcast;
  double wind_speed = 0.0;  // v0, m/s
  double wind_angle = 90.0; // phi0, deg in [0, 90]
  std::string conductor;
  double emissivity = 0.5;
  double temperature = 15.0; // T0, degC
  double solar = 500.0;      // S0, W/m2
};

/// Inverse-transform samplers for (T, S, v, phi) offset to an operating
/// point. Sampled directions are folded back into an attack angle.
struct WeatherSampler {
  TruncatedOffsetDistribution temperature;
  TruncatedOffsetDistribution solar;
  TruncatedOffsetDistribution wind_speed;
  TruncatedOffsetDistribution wind_direction;
};

/// Offsets and truncates the horizon's error distributions at the point. Solar
/// is the constant 0 when S0 == 0.
WeatherSampler make_weather_sampler(const HorizonErrors &errors, const OperatingPoint &op);

/// Point masses at the operating point itself (no uncertainty).
WeatherSampler point_sampler(const OperatingPoint &op);

/// M raw normalized ampacities I_th / I_th0 for one operating point.
std::vector<double> mc_normalized_samples(const OperatingPoint &op, const WeatherSampler &sampler,
                                          const ConductorSpec &spec, std::size_t samples,
                                          std::uint64_t seed,
                                          const ThermalConfig &cfg = default_thermal_config());

NormalizedAmpacityCDF mc_normalized_distribution(const OperatingPoint &op,
                                                 const WeatherSampler &sampler,
                                                 const ConductorSpec &spec, std::size_t samples,
                                                 std::uint64_t seed,
                                                 const ThermalConfig &cfg = default_thermal_config());

inline const std::vector<double> kDefaultTemperatureGrid{0.0, 15.0, 30.0};
inline const std::vector<double> kDefaultSolarGrid{100.0, 500.0, 1000.0};

/// Pointwise mean of the member CDFs over the T x S grid, all mapped to a
/// common grid whose upper end covers every member. Member m uses the seed
/// CounterRng::derive(seed, m).
NormalizedAmpacityCDF average_over_ts_grid(const OperatingPoint &op,
                                           const std::vector<double> &temperatures,
                                           const std::vector<double> &solars,
                                           const HorizonErrors &errors, const ConductorSpec &spec,
                                           std::size_t samples, std::uint64_t seed,
                                           const ThermalConfig &cfg = default_thermal_config());

struct BuildOptions {
  std::size_t samples = 10'000;
  std::uint64_t seed = 0;
  std::vector<double> temperatures = kDefaultTemperatureGrid;
  std::vector<double> solars = kDefaultSolarGrid;
  unsigned threads = 0; // 0: hardware concurrency
  std::string build_time; // recorded verbatim in the manifest when non-empty
  std::function<void(std::size_t done, std::size_t total)> progress;
};

struct BuildFailure {
  std::size_t index;
  std::string message;
};

struct BuildResult {
  DistributionDB db;
  std::vector<BuildFailure> failures;
};

/// One T x S averaged CDF per axis combination; entry i uses the seed
/// CounterRng::derive(seed, i). Failed entries are stored as a point mass at
/// r = 1, listed in the manifest and returned in `failures`.
BuildResult build_database(const DatabaseAxes &axes, const ErrorModel &errors,
                           const std::vector<ConductorSpec> &catalog, const BuildOptions &options,
                           const ThermalConfig &cfg = default_thermal_config());

/// The (T0, S0)-free operating point of a database entry.
OperatingPoint entry_operating_point(const DatabaseAxes &axes, std::size_t index);

} // namespace ampuq
