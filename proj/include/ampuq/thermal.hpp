#pragma once

#include <cmath>
#include <string>
#include <vector>

#include <json.hpp>

#include "ampuq/weather.hpp"

namespace ampuq {

class UnknownConductorError : public DataError {
public:
  using DataError::DataError;
};

struct ConductorSpec {
  std::string name;
  double diameter = 0.0;                    // m
  double ac_resistance_at_20c = 0.0;        // ohm/m
  double resistance_temp_coefficient = 0.0; // 1/K
  double solar_absorptivity = 0.5;
  double emissivity = 0.5;
  double max_temperature = 80.0; // degC

  /// Throws DataError if any invariant is broken.
  void validate() const;
  double resistance(double conductor_temp) const;
};

struct AmbientConditions {
  double temperature = 20.0;      // degC
  double solar_irradiance = 0.0;  // W/m2
  double wind_speed = 0.0;        // m/s
  double wind_attack_angle = 90.0; // deg relative to the conductor axis, [0, 90]

  void validate() const;
};

struct PowerLaw {
  PowerLaw(double c, double e) : coefficient(c), exponent(e), log_coefficient(std::log(c)) {}

  double coefficient;
  double exponent;
  double log_coefficient;
};

/// Constants of the steady-state heat balance. Forced and natural Nusselt
/// numbers are the upper envelope of their power-law branches, which keeps
/// them continuous across regime boundaries.
struct ThermalConfig {
  double altitude = 0.0; // m, for relative air density
  std::vector<PowerLaw> forced{{0.641, 0.471}, {0.178, 0.633}};
  std::vector<PowerLaw> natural{
      {0.675, 0.058}, {1.020, 0.148}, {0.850, 0.188}, {0.480, 0.250}, {0.125, 0.333}};
  // K(d) = c0 + c_cos cos d + c_cos2 cos 2d + c_sin2 sin 2d
  double angle_c0 = 1.194;
  double angle_cos = -1.0;
  double angle_cos2 = 0.194;
  double angle_sin2 = 0.368;
};

const ThermalConfig &default_thermal_config();
ThermalConfig thermal_config_from_json(const nlohmann::json &j);
ThermalConfig load_thermal_config(const std::string &path);

struct HeatTerms {
  double joule = 0.0;
  double solar = 0.0;
  double convective = 0.0;
  double radiative = 0.0;

  double residual() const { return joule + solar - convective - radiative; }
};

HeatTerms heat_terms(double conductor_temp, double current, const AmbientConditions &amb,
                     const ConductorSpec &spec,
                     const ThermalConfig &cfg = default_thermal_config());

/// Gains minus losses in W/m.
double heat_balance_residual(double conductor_temp, double current,
                             const AmbientConditions &amb, const ConductorSpec &spec,
                             const ThermalConfig &cfg = default_thermal_config());

/// Steady-state conductor temperature by bisection on
/// [ambient - 5, 400] degC. Throws DataError when the residual does not change
/// sign over the bracket.
double solve_conductor_temperature(double current, const AmbientConditions &amb,
                                   const ConductorSpec &spec,
                                   const ThermalConfig &cfg = default_thermal_config());

/// Current that holds the conductor at exactly its maximum temperature;
/// zero when cooling cannot offset solar gain.
double ampacity(const AmbientConditions &amb, const ConductorSpec &spec,
                const ThermalConfig &cfg = default_thermal_config());

/// Pointwise computed - measured.
std::vector<double> skin_temperature_error(const std::vector<double> &measured,
                                           const std::vector<double> &computed);

/// Folds any angle (degrees) into an attack angle in [0, 90].
double fold_attack_angle(double degrees);

/// Attack angle between a wind direction and a line azimuth, both measured
/// from north.
inline double wind_attack_angle(double wind_direction, double line_azimuth) {
  return fold_attack_angle(wind_direction - line_azimuth);
}

ConductorSpec conductor_from_json(const nlohmann::json &j);
nlohmann::json to_json(const ConductorSpec &spec);
std::vector<ConductorSpec> load_conductor_catalog(const std::string &path);
/// The catalog shipped in data/conductors.json.
std::string default_conductor_catalog_path();
const ConductorSpec &find_conductor(const std::vector<ConductorSpec> &catalog,
                                    const std::string &name);

} // namespace ampuq
