#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include <json.hpp>

#include "ampuq/thermal.hpp"
#include "ampuq/weather.hpp"

namespace ampuq {

enum class NoiseShape { Gaussian, Skewed };

// Forecast noise standard deviation grows linearly with lead time; `bias` is
// the mean of measured - predicted.
struct NoiseKernel {
  double base_sd = 0.0;
  double sd_per_hour = 0.0;
  double bias = 0.0;

  double sd(double lead_hours) const { return base_sd + sd_per_hour * lead_hours; }
};

/// Stochastic weather model: seasonal + diurnal temperature with AR(1)
/// anomaly, clear-sky solar bell times an AR(1) cloud factor, AR(1) wind
/// speed and random-walk direction. Forecasts add lead-dependent noise to
/// the measured value at the valid time.
struct SyntheticParams {
  int version = 1;
  std::string start = "2023-06-01T00:00:00Z";
  double days = 365.0;
  int step_minutes = 5;
  double latitude = 46.0;

  double temp_mean = 12.0;
  double temp_seasonal_amplitude = 10.0;
  double temp_diurnal_amplitude = 5.0;
  double temp_noise_sd = 1.0;
  double temp_noise_ar = 0.995;

  double solar_peak = 1000.0;
  double cloud_mean = 0.75;
  double cloud_sd = 0.2;
  double cloud_ar = 0.995;

  double wind_mean = 3.0;
  double wind_sd = 1.6;
  double wind_ar = 0.98;
  double direction_start = 220.0;
  double direction_step_sd = 6.0;

  int issue_every_hours = 6;
  int max_lead_hours = 72;
  NoiseShape shape = NoiseShape::Gaussian;
  NoiseKernel temperature_noise{0.4, 0.04};
  NoiseKernel solar_noise{40.0, 4.0};
  NoiseKernel wind_speed_noise{0.4, 0.03};
  NoiseKernel wind_direction_noise{12.0, 0.6};

  const NoiseKernel &noise(WeatherVariable v) const;
};

SyntheticParams synthetic_params_from_json(const nlohmann::json &j);
nlohmann::json to_json(const SyntheticParams &p);
SyntheticParams load_synthetic_params(const std::string &path);
std::string default_synthetic_params_path();

/// Cloudless irradiance at time t (UTC taken as solar time); zero at night.
double clear_sky_irradiance(TimePoint t, double latitude, double peak);

struct SyntheticWeather {
  std::vector<WeatherSample> measured;
  std::vector<ForecastSample> forecast;
};

SyntheticWeather generate_weather(const SyntheticParams &params, std::uint64_t seed);

/// Standard normal and centred unit exponential (mean 0, sd 1) deviates.
double standard_normal(double u1, double u2);
double centred_exponential(double u);

struct SkinSample {
  TimePoint timestamp;
  double skin_temperature; // degC
  double current;          // A
};

std::vector<SkinSample> parse_skin_csv(std::istream &in);
void write_skin_csv(std::ostream &out, const std::vector<SkinSample> &series);
std::vector<SkinSample> read_skin_file(const std::string &path);

struct SkinOptions {
  double mean_current = 400.0;    // A
  double current_swing = 0.3;     // diurnal relative amplitude
  double line_azimuth = 0.0;      // deg from north
  double sensor_bias = 0.0;       // degC added to every reading
  double sensor_noise_sd = 0.0;   // degC
};

/// Skin temperature the thermal model predicts under the measured weather,
/// plus sensor bias and noise.
std::vector<SkinSample> generate_skin_temperature(const std::vector<WeatherSample> &measured,
                                                  const ConductorSpec &spec,
                                                  const SkinOptions &options, std::uint64_t seed,
                                                  const ThermalConfig &cfg = default_thermal_config());

} // namespace ampuq
