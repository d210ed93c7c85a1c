#include "ampuq/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <numbers>
#include <ostream>
#include <sstream>

#include <fmt/format.h>

#include "ampuq/kde.hpp"
#include "ampuq/montecarlo.hpp"

namespace ampuq {

using nlohmann::json;

namespace {

constexpr double kDeg = std::numbers::pi / 180.0;
constexpr std::string_view kSkinHeader = "timestamp,skin_temp_c,current_a";

double day_of_year(TimePoint t) {
  using namespace std::chrono;
  const auto day = floor<days>(t);
  const year_month_day ymd{day};
  const auto jan1 = sys_days{ymd.year() / January / 1};
  const double frac = duration<double>(t - day).count() / 86400.0;
  return static_cast<double>((day - jan1).count()) + frac;
}

double hour_of_day(TimePoint t) {
  using namespace std::chrono;
  return duration<double>(t - floor<days>(t)).count() / 3600.0;
}

NoiseKernel kernel_from_json(const json &j, const NoiseKernel &base) {
  NoiseKernel k = base;
  k.base_sd = j.value("base_sd", k.base_sd);
  k.sd_per_hour = j.value("sd_per_hour", k.sd_per_hour);
  k.bias = j.value("bias", k.bias);
  if (!(k.base_sd >= 0.0 && k.sd_per_hour >= 0.0))
    throw DataError("noise kernel sd must be nonnegative");
  return k;
}

json kernel_to_json(const NoiseKernel &k) {
  return {{"base_sd", k.base_sd}, {"sd_per_hour", k.sd_per_hour}, {"bias", k.bias}};
}

class Gaussian {
public:
  explicit Gaussian(std::uint64_t key) : rng_(key) {}
  double operator()() { return standard_normal(rng_.uniform(), rng_.uniform()); }
  double uniform() { return rng_.uniform(); }

private:
  CounterRng rng_;
};

} // namespace

const NoiseKernel &SyntheticParams::noise(WeatherVariable v) const {
  switch (v) {
  case WeatherVariable::Temperature:
    return temperature_noise;
  case WeatherVariable::Solar:
    return solar_noise;
  case WeatherVariable::WindSpeed:
    return wind_speed_noise;
  case WeatherVariable::WindDirection:
    break;
  }
  return wind_direction_noise;
}

SyntheticParams synthetic_params_from_json(const json &j) {
  SyntheticParams p;
  try {
    p.version = j.value("version", 1);
    if (p.version != 1)
      throw DataError(fmt::format("unsupported synthetic parameter version {}", p.version));
    p.start = j.value("start", p.start);
    parse_timestamp(p.start);
    p.days = j.value("days", p.days);
    p.step_minutes = j.value("step_minutes", p.step_minutes);
    p.latitude = j.value("latitude_deg", p.latitude);
    if (j.contains("temperature")) {
      const auto &t = j.at("temperature");
      p.temp_mean = t.value("mean_c", p.temp_mean);
      p.temp_seasonal_amplitude = t.value("seasonal_amplitude_c", p.temp_seasonal_amplitude);
      p.temp_diurnal_amplitude = t.value("diurnal_amplitude_c", p.temp_diurnal_amplitude);
      p.temp_noise_sd = t.value("noise_sd_c", p.temp_noise_sd);
      p.temp_noise_ar = t.value("noise_ar", p.temp_noise_ar);
    }
    if (j.contains("solar")) {
      const auto &s = j.at("solar");
      p.solar_peak = s.value("peak_wm2", p.solar_peak);
      p.cloud_mean = s.value("cloud_mean", p.cloud_mean);
      p.cloud_sd = s.value("cloud_sd", p.cloud_sd);
      p.cloud_ar = s.value("cloud_ar", p.cloud_ar);
    }
    if (j.contains("wind")) {
      const auto &w = j.at("wind");
      p.wind_mean = w.value("mean_ms", p.wind_mean);
      p.wind_sd = w.value("sd_ms", p.wind_sd);
      p.wind_ar = w.value("ar", p.wind_ar);
      p.direction_start = w.value("direction_start_deg", p.direction_start);
      p.direction_step_sd = w.value("direction_step_sd_deg", p.direction_step_sd);
    }
    if (j.contains("forecast")) {
      const auto &f = j.at("forecast");
      p.issue_every_hours = f.value("issue_every_hours", p.issue_every_hours);
      p.max_lead_hours = f.value("max_lead_hours", p.max_lead_hours);
      const auto shape = f.value("shape", std::string("gaussian"));
      if (shape == "gaussian")
        p.shape = NoiseShape::Gaussian;
      else if (shape == "skewed")
        p.shape = NoiseShape::Skewed;
      else
        throw DataError(fmt::format("unknown noise shape '{}'", shape));
      if (f.contains("noise")) {
        const auto &n = f.at("noise");
        if (n.contains("temperature"))
          p.temperature_noise = kernel_from_json(n.at("temperature"), p.temperature_noise);
        if (n.contains("solar"))
          p.solar_noise = kernel_from_json(n.at("solar"), p.solar_noise);
        if (n.contains("wind_speed"))
          p.wind_speed_noise = kernel_from_json(n.at("wind_speed"), p.wind_speed_noise);
        if (n.contains("wind_direction"))
          p.wind_direction_noise = kernel_from_json(n.at("wind_direction"), p.wind_direction_noise);
      }
    }
  } catch (const json::exception &e) {
    throw DataError(fmt::format("synthetic parameters: {}", e.what()));
  }
  if (!(p.days > 0.0) || p.step_minutes <= 0 || p.issue_every_hours <= 0 ||
      p.max_lead_hours < 0 || p.max_lead_hours > 72)
    throw DataError("synthetic parameters: invalid time settings");
  for (double ar : {p.temp_noise_ar, p.cloud_ar, p.wind_ar})
    if (!(ar >= 0.0 && ar < 1.0))
      throw DataError("synthetic parameters: AR coefficients must lie in [0, 1)");
  return p;
}

json to_json(const SyntheticParams &p) {
  return {{"format", "ampuq-synthetic-weather"},
          {"version", p.version},
          {"start", p.start},
          {"days", p.days},
          {"step_minutes", p.step_minutes},
          {"latitude_deg", p.latitude},
          {"temperature",
           {{"mean_c", p.temp_mean},
            {"seasonal_amplitude_c", p.temp_seasonal_amplitude},
            {"diurnal_amplitude_c", p.temp_diurnal_amplitude},
            {"noise_sd_c", p.temp_noise_sd},
            {"noise_ar", p.temp_noise_ar}}},
          {"solar",
           {{"peak_wm2", p.solar_peak},
            {"cloud_mean", p.cloud_mean},
            {"cloud_sd", p.cloud_sd},
            {"cloud_ar", p.cloud_ar}}},
          {"wind",
           {{"mean_ms", p.wind_mean},
            {"sd_ms", p.wind_sd},
            {"ar", p.wind_ar},
            {"direction_start_deg", p.direction_start},
            {"direction_step_sd_deg", p.direction_step_sd}}},
          {"forecast",
           {{"issue_every_hours", p.issue_every_hours},
            {"max_lead_hours", p.max_lead_hours},
            {"shape", p.shape == NoiseShape::Gaussian ? "gaussian" : "skewed"},
            {"noise",
             {{"temperature", kernel_to_json(p.temperature_noise)},
              {"solar", kernel_to_json(p.solar_noise)},
              {"wind_speed", kernel_to_json(p.wind_speed_noise)},
              {"wind_direction", kernel_to_json(p.wind_direction_noise)}}}}}};
}

SyntheticParams load_synthetic_params(const std::string &path) {
  std::ifstream in(path);
  if (!in)
    throw DataError(fmt::format("cannot open {}", path));
  try {
    return synthetic_params_from_json(json::parse(in));
  } catch (const json::parse_error &e) {
    throw DataError(fmt::format("{}: {}", path, e.what()));
  }
}

std::string default_synthetic_params_path() {
  return std::string(AMPUQ_DATA_DIR) + "/synthetic_weather.json";
}

double clear_sky_irradiance(TimePoint t, double latitude, double peak) {
  const double doy = day_of_year(t);
  const double declination = 23.44 * kDeg * std::sin(2.0 * std::numbers::pi * (284.0 + doy) / 365.0);
  const double hour_angle = 15.0 * kDeg * (hour_of_day(t) - 12.0);
  const double lat = latitude * kDeg;
  const double sin_elevation = std::sin(lat) * std::sin(declination) +
                               std::cos(lat) * std::cos(declination) * std::cos(hour_angle);
  return sin_elevation > 0.0 ? std::min(peak * sin_elevation, kSolarConstant) : 0.0;
}

double standard_normal(double u1, double u2) {
  return std::sqrt(-2.0 * std::log1p(-u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

double centred_exponential(double u) { return -std::log1p(-u) - 1.0; }

SyntheticWeather generate_weather(const SyntheticParams &p, std::uint64_t seed) {
  using namespace std::chrono;
  const TimePoint start = parse_timestamp(p.start);
  const seconds step = minutes(p.step_minutes);
  const auto count = static_cast<std::size_t>(std::floor(p.days * 86400.0 / step.count())) + 1;

  SyntheticWeather out;
  out.measured.reserve(count);
  Gaussian z(CounterRng::derive(seed, 1));
  double temp_anomaly = 0.0;
  double cloud = p.cloud_mean;
  double wind = p.wind_mean;
  double direction = p.direction_start;
  const double temp_innov = p.temp_noise_sd * std::sqrt(1.0 - p.temp_noise_ar * p.temp_noise_ar);
  const double cloud_innov = p.cloud_sd * std::sqrt(1.0 - p.cloud_ar * p.cloud_ar);
  const double wind_innov = p.wind_sd * std::sqrt(1.0 - p.wind_ar * p.wind_ar);
  for (std::size_t k = 0; k < count; ++k) {
    const TimePoint t = start + k * step;
    const double doy = day_of_year(t);
    const double hour = hour_of_day(t);
    temp_anomaly = p.temp_noise_ar * temp_anomaly + temp_innov * z();
    cloud = p.cloud_mean + p.cloud_ar * (cloud - p.cloud_mean) + cloud_innov * z();
    wind = p.wind_mean + p.wind_ar * (wind - p.wind_mean) + wind_innov * z();
    direction = std::fmod(direction + p.direction_step_sd * z() + 360.0, 360.0);

    WeatherSample s;
    s.timestamp = t;
    s.temperature = p.temp_mean -
                    p.temp_seasonal_amplitude * std::cos(2.0 * std::numbers::pi * (doy + 10.0) / 365.0) +
                    p.temp_diurnal_amplitude * std::cos(2.0 * std::numbers::pi * (hour - 15.0) / 24.0) +
                    temp_anomaly;
    s.solar_irradiance =
        clear_sky_irradiance(t, p.latitude, p.solar_peak) * std::clamp(cloud, 0.05, 1.0);
    s.wind_speed = std::max(wind, 0.0);
    s.wind_direction = direction;
    out.measured.push_back(s);
  }

  Gaussian noise(CounterRng::derive(seed, 2));
  auto draw = [&] {
    return p.shape == NoiseShape::Gaussian ? noise() : centred_exponential(noise.uniform());
  };
  const seconds issue_step = hours(p.issue_every_hours);
  const TimePoint end = out.measured.back().timestamp;
  for (TimePoint issued = start; issued <= end; issued += issue_step) {
    for (int lead = 0; lead <= p.max_lead_hours; ++lead) {
      const TimePoint valid = issued + hours(lead);
      if (valid > end)
        break;
      const auto idx = static_cast<std::size_t>((valid - start) / step);
      if (start + idx * step != valid)
        continue;
      const auto &m = out.measured[idx];
      const double h = static_cast<double>(lead);
      ForecastSample f;
      f.issued_at = issued;
      f.valid_at = valid;
      f.temperature = m.temperature - p.temperature_noise.bias + p.temperature_noise.sd(h) * draw();
      const double solar = m.solar_irradiance - p.solar_noise.bias + p.solar_noise.sd(h) * draw();
      f.solar_irradiance = clear_sky_irradiance(valid, p.latitude, p.solar_peak) > 0.0
                               ? std::clamp(solar, 0.0, kSolarConstant)
                               : 0.0;
      f.wind_speed = std::max(
          0.0, m.wind_speed - p.wind_speed_noise.bias + p.wind_speed_noise.sd(h) * draw());
      f.wind_direction =
          std::fmod(m.wind_direction - p.wind_direction_noise.bias +
                                     p.wind_direction_noise.sd(h) * draw() + 720.0,
                                 360.0);
      out.forecast.push_back(f);
    }
  }
  return out;
}

std::vector<SkinSample> parse_skin_csv(std::istream &in) {
  std::vector<SkinSample> out;
  std::string line;
  std::size_t line_no = 0;
  bool seen_header = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r')
      line.pop_back();
    if (line.empty())
      continue;
    if (!seen_header) {
      if (line != kSkinHeader)
        throw DataError(fmt::format("expected header '{}'", kSkinHeader), line_no);
      seen_header = true;
      continue;
    }
    std::vector<std::string> fields;
    std::stringstream ss(line);
    for (std::string f; std::getline(ss, f, ',');)
      fields.push_back(f);
    if (fields.size() != 3)
      throw DataError(fmt::format("expected 3 fields, got {}", fields.size()), line_no);
    SkinSample s;
    try {
      s.timestamp = parse_timestamp(fields[0]);
      std::size_t used = 0;
      s.skin_temperature = std::stod(fields[1], &used);
      if (used != fields[1].size())
        throw std::invalid_argument("trailing characters");
      s.current = std::stod(fields[2], &used);
      if (used != fields[2].size())
        throw std::invalid_argument("trailing characters");
    } catch (const DataError &e) {
      throw DataError(e.what(), line_no);
    } catch (const std::exception &) {
      throw DataError("malformed number", line_no);
    }
    if (!std::isfinite(s.skin_temperature) || !std::isfinite(s.current) || s.current < 0.0)
      throw DataError("skin temperature and current must be finite, current nonnegative", line_no);
    if (!out.empty() && s.timestamp <= out.back().timestamp)
      throw DataError("timestamps must be strictly increasing", line_no);
    out.push_back(s);
  }
  if (!seen_header)
    throw DataError("missing CSV header");
  return out;
}

void write_skin_csv(std::ostream &out, const std::vector<SkinSample> &series) {
  out << kSkinHeader << '\n';
  for (const auto &s : series)
    out << fmt::format("{},{},{}\n", format_timestamp(s.timestamp), s.skin_temperature, s.current);
}

std::vector<SkinSample> read_skin_file(const std::string &path) {
  std::ifstream in(path);
  if (!in)
    throw DataError(fmt::format("cannot open {}", path));
  return parse_skin_csv(in);
}

std::vector<SkinSample> generate_skin_temperature(const std::vector<WeatherSample> &measured,
                                                  const ConductorSpec &spec,
                                                  const SkinOptions &options, std::uint64_t seed,
                                                  const ThermalConfig &cfg) {
  Gaussian z(CounterRng::derive(seed, 3));
  std::vector<SkinSample> out;
  out.reserve(measured.size());
  for (const auto &m : measured) {
    const double hour = hour_of_day(m.timestamp);
    const double current =
        options.mean_current *
        (1.0 + options.current_swing * std::cos(2.0 * std::numbers::pi * (hour - 18.0) / 24.0));
    const AmbientConditions amb{m.temperature, m.solar_irradiance, m.wind_speed,
                                wind_attack_angle(m.wind_direction, options.line_azimuth)};
    const double tc = solve_conductor_temperature(current, amb, spec, cfg);
    out.push_back({m.timestamp, tc + options.sensor_bias + options.sensor_noise_sd * z(), current});
  }
  return out;
}

} // namespace ampuq
