#pragma once

#include <chrono>
#include <cstddef>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace ampuq {

using TimePoint = std::chrono::sys_seconds;
using Duration = std::chrono::seconds;

/// Thrown for malformed or out-of-range input data. `line` is 1-based and
/// counts the header; 0 means the error is not tied to a line.
class DataError : public std::runtime_error {
public:
  DataError(const std::string &what, std::size_t line = 0);
  std::size_t line() const { return line_; }

private:
  std::size_t line_;
};

TimePoint parse_timestamp(std::string_view text);
std::string format_timestamp(TimePoint t);

// Missing CSV fields are carried as NaN and dropped pairwise when errors are
// computed.
struct WeatherSample {
  TimePoint timestamp;
  double temperature;      // degC
  double solar_irradiance; // W/m2
  double wind_speed;       // m/s
  double wind_direction;   // deg from north, [0, 360)
};

struct ForecastSample {
  TimePoint issued_at;
  TimePoint valid_at;
  double temperature;
  double solar_irradiance;
  double wind_speed;
  double wind_direction;

  Duration lead() const { return valid_at - issued_at; }
};

enum class HorizonClass { Nowcast = 0, ShortTerm = 1, MediumTerm = 2 };

inline constexpr HorizonClass kAllHorizons[] = {
    HorizonClass::Nowcast, HorizonClass::ShortTerm, HorizonClass::MediumTerm};

std::string_view to_string(HorizonClass h);
HorizonClass parse_horizon(std::string_view name);

enum class WeatherVariable { Temperature = 0, Solar = 1, WindSpeed = 2, WindDirection = 3 };

inline constexpr WeatherVariable kAllVariables[] = {
    WeatherVariable::Temperature, WeatherVariable::Solar,
    WeatherVariable::WindSpeed, WeatherVariable::WindDirection};

std::string_view to_string(WeatherVariable v);
WeatherVariable parse_variable(std::string_view name);

struct ErrorSample {
  WeatherVariable variable;
  double value;
  HorizonClass horizon;
  TimePoint valid_at;
};

using WeatherPair = std::pair<WeatherSample, ForecastSample>;

inline constexpr Duration kMaxLead = std::chrono::hours(72);
inline constexpr Duration kDefaultAlignTolerance = std::chrono::seconds(150);

std::vector<WeatherSample> parse_measured_csv(std::istream &in);
std::vector<ForecastSample> parse_forecast_csv(std::istream &in);
void write_measured_csv(std::ostream &out, const std::vector<WeatherSample> &series);
void write_forecast_csv(std::ostream &out, const std::vector<ForecastSample> &series);

std::vector<WeatherSample> read_measured_file(const std::string &path);
std::vector<ForecastSample> read_forecast_file(const std::string &path);

/// Total partition of [0 h, 72 h]: 0 is a nowcast, (0, 12 h] short-term,
/// (12 h, 72 h] medium-term.
HorizonClass classify_horizon(Duration lead);

/// Matches each forecast to the nearest measured sample within `tolerance`.
/// A measured sample is used at most once per forecast issue time.
std::vector<WeatherPair> align_pairs(const std::vector<WeatherSample> &measured,
                                     const std::vector<ForecastSample> &forecast,
                                     Duration tolerance = kDefaultAlignTolerance);

/// Folds an angle difference into (-180, 180].
double fold_direction_difference(double degrees);

std::vector<ErrorSample> compute_errors(const std::vector<WeatherPair> &pairs,
                                        WeatherVariable variable);

/// Keeps pairs whose predicted solar irradiance is strictly positive.
std::vector<WeatherPair> filter_solar_nonzero(const std::vector<WeatherPair> &pairs);

} // namespace ampuq
