#include "ampuq/thermal.hpp"

#include <algorithm>
#include <fstream>
#include <limits>
#include <numbers>

#include <fmt/format.h>

namespace ampuq {

using nlohmann::json;

namespace {

constexpr double kKelvin = 273.15;
constexpr double kStefanBoltzmann = 5.670374419e-8;
constexpr double kGravity = 9.807;
constexpr double kSolveLowerOffset = 5.0;
constexpr double kSolveUpper = 400.0;
constexpr double kResidualTolerance = 1e-6;
constexpr double kBracketTolerance = 1e-10;
constexpr double kDegToRad = std::numbers::pi / 180.0;

double power_law_envelope(const std::vector<PowerLaw> &branches, double x) {
  if (!(x > 0.0))
    return 0.0;
  const double lx = std::log(x);
  double best = -std::numeric_limits<double>::infinity();
  for (const auto &b : branches)
    best = std::max(best, b.log_coefficient + b.exponent * lx);
  return std::exp(best);
}

double attack_angle_factor(double angle_deg, const ThermalConfig &cfg) {
  const double d = angle_deg * kDegToRad;
  return cfg.angle_c0 + cfg.angle_cos * std::cos(d) + cfg.angle_cos2 * std::cos(2.0 * d) +
         cfg.angle_sin2 * std::sin(2.0 * d);
}

double convective_loss(double tc, const AmbientConditions &amb, const ConductorSpec &spec,
                       const ThermalConfig &cfg) {
  const double dt = tc - amb.temperature;
  if (dt == 0.0)
    return 0.0;
  const double film = 0.5 * (tc + amb.temperature);
  const double conductivity = 2.368e-2 + 7.23e-5 * film - 2.763e-8 * film * film;
  const double viscosity = 1.32e-5 + 9.5e-8 * film;
  const double rel_density = std::exp(-1.16e-4 * cfg.altitude);

  const double reynolds = rel_density * amb.wind_speed * spec.diameter / viscosity;
  const double nu_forced = power_law_envelope(cfg.forced, reynolds) *
                           attack_angle_factor(amb.wind_attack_angle, cfg);

  const double grashof = kGravity * spec.diameter * spec.diameter * spec.diameter *
                         std::abs(dt) / ((film + kKelvin) * viscosity * viscosity);
  const double prandtl = 0.715 - 2.5e-4 * film;
  const double nu_natural = power_law_envelope(cfg.natural, grashof * prandtl);

  return std::numbers::pi * conductivity * dt * std::max(nu_forced, nu_natural);
}

double radiative_loss(double tc, const AmbientConditions &amb, const ConductorSpec &spec) {
  const double tk = tc + kKelvin;
  const double ta = amb.temperature + kKelvin;
  return std::numbers::pi * spec.diameter * kStefanBoltzmann * spec.emissivity *
         (tk * tk * tk * tk - ta * ta * ta * ta);
}

} // namespace

void ConductorSpec::validate() const {
  if (!(diameter > 0.0))
    throw DataError(fmt::format("conductor '{}': diameter must be positive", name));
  if (!(ac_resistance_at_20c > 0.0))
    throw DataError(fmt::format("conductor '{}': resistance must be positive", name));
  if (!(emissivity >= 0.0 && emissivity <= 1.0))
    throw DataError(fmt::format("conductor '{}': emissivity outside [0, 1]", name));
  if (!(solar_absorptivity >= 0.0 && solar_absorptivity <= 1.0))
    throw DataError(fmt::format("conductor '{}': absorptivity outside [0, 1]", name));
  if (!(max_temperature > -kKelvin))
    throw DataError(fmt::format("conductor '{}': max temperature below absolute zero", name));
}

double ConductorSpec::resistance(double conductor_temp) const {
  return ac_resistance_at_20c * (1.0 + resistance_temp_coefficient * (conductor_temp - 20.0));
}

void AmbientConditions::validate() const {
  if (!std::isfinite(temperature) || temperature <= -kKelvin)
    throw DataError("ambient temperature invalid");
  if (!(wind_speed >= 0.0) || !std::isfinite(wind_speed))
    throw DataError("wind speed must be nonnegative");
  if (!(solar_irradiance >= 0.0 && solar_irradiance <= 1361.0))
    throw DataError("solar irradiance outside [0, 1361] W/m2");
  if (!(wind_attack_angle >= 0.0 && wind_attack_angle <= 90.0))
    throw DataError("wind attack angle outside [0, 90] deg");
}

const ThermalConfig &default_thermal_config() {
  static const ThermalConfig cfg{};
  return cfg;
}

ThermalConfig thermal_config_from_json(const json &j) {
  try {
    ThermalConfig cfg;
    cfg.altitude = j.value("altitude_m", 0.0);
    if (j.contains("forced_convection")) {
      cfg.forced.clear();
      for (const auto &b : j.at("forced_convection"))
        cfg.forced.emplace_back(b.at("B").get<double>(), b.at("n").get<double>());
    }
    if (j.contains("natural_convection")) {
      cfg.natural.clear();
      for (const auto &b : j.at("natural_convection"))
        cfg.natural.emplace_back(b.at("A").get<double>(), b.at("m").get<double>());
    }
    if (j.contains("attack_angle_factor")) {
      const auto &a = j.at("attack_angle_factor");
      cfg.angle_c0 = a.at("c0").get<double>();
      cfg.angle_cos = a.at("c_cos").get<double>();
      cfg.angle_cos2 = a.at("c_cos2").get<double>();
      cfg.angle_sin2 = a.at("c_sin2").get<double>();
    }
    if (cfg.forced.empty() || cfg.natural.empty())
      throw DataError("thermal config needs at least one forced and one natural branch");
    return cfg;
  } catch (const json::exception &e) {
    throw DataError(fmt::format("malformed thermal config: {}", e.what()));
  }
}

ThermalConfig load_thermal_config(const std::string &path) {
  std::ifstream in(path);
  if (!in)
    throw DataError(fmt::format("cannot open '{}'", path));
  json j;
  try {
    in >> j;
  } catch (const json::exception &e) {
    throw DataError(fmt::format("'{}' is not valid JSON: {}", path, e.what()));
  }
  return thermal_config_from_json(j);
}

HeatTerms heat_terms(double tc, double current, const AmbientConditions &amb,
                     const ConductorSpec &spec, const ThermalConfig &cfg) {
  HeatTerms t;
  t.joule = current * current * spec.resistance(tc);
  t.solar = spec.solar_absorptivity * amb.solar_irradiance * spec.diameter;
  t.convective = convective_loss(tc, amb, spec, cfg);
  t.radiative = radiative_loss(tc, amb, spec);
  return t;
}

double heat_balance_residual(double tc, double current, const AmbientConditions &amb,
                             const ConductorSpec &spec, const ThermalConfig &cfg) {
  return heat_terms(tc, current, amb, spec, cfg).residual();
}

double solve_conductor_temperature(double current, const AmbientConditions &amb,
                                   const ConductorSpec &spec, const ThermalConfig &cfg) {
  if (!(current >= 0.0))
    throw DataError("current must be nonnegative");
  double lo = amb.temperature - kSolveLowerOffset;
  double hi = kSolveUpper;
  double r_lo = heat_balance_residual(lo, current, amb, spec, cfg);
  double r_hi = heat_balance_residual(hi, current, amb, spec, cfg);
  if (!(r_lo > 0.0 && r_hi < 0.0))
    throw DataError(fmt::format("no conductor temperature root in [{}, {}] degC for {} A",
                                lo, hi, current));
  double mid = 0.5 * (lo + hi);
  for (int iter = 0; iter < 200; ++iter) {
    mid = 0.5 * (lo + hi);
    const double r = heat_balance_residual(mid, current, amb, spec, cfg);
    if (r == 0.0)
      return mid;
    if (r > 0.0)
      lo = mid;
    else
      hi = mid;
    if (hi - lo < kBracketTolerance && std::abs(r) < kResidualTolerance)
      break;
  }
  return 0.5 * (lo + hi);
}

double ampacity(const AmbientConditions &amb, const ConductorSpec &spec,
                const ThermalConfig &cfg) {
  if (spec.max_temperature <= amb.temperature)
    return 0.0;
  const auto t = heat_terms(spec.max_temperature, 0.0, amb, spec, cfg);
  const double net = t.convective + t.radiative - t.solar;
  if (net <= 0.0)
    return 0.0;
  return std::sqrt(net / spec.resistance(spec.max_temperature));
}

std::vector<double> skin_temperature_error(const std::vector<double> &measured,
                                           const std::vector<double> &computed) {
  if (measured.size() != computed.size())
    throw DataError(fmt::format("skin temperature series differ in length: {} vs {}",
                                measured.size(), computed.size()));
  std::vector<double> out(measured.size());
  for (std::size_t i = 0; i < measured.size(); ++i)
    out[i] = computed[i] - measured[i];
  return out;
}

double fold_attack_angle(double degrees) {
  double a = std::fmod(std::abs(degrees), 180.0);
  if (a > 90.0)
    a = 180.0 - a;
  return a;
}

ConductorSpec conductor_from_json(const json &j) {
  try {
    ConductorSpec s;
    s.name = j.at("name").get<std::string>();
    s.diameter = j.at("diameter_m").get<double>();
    s.ac_resistance_at_20c = j.at("ac_resistance_20c_ohm_per_m").get<double>();
    s.resistance_temp_coefficient = j.at("resistance_temp_coeff_per_k").get<double>();
    s.solar_absorptivity = j.value("solar_absorptivity", 0.5);
    s.emissivity = j.value("emissivity", 0.5);
    s.max_temperature = j.value("max_temperature_c", 80.0);
    s.validate();
    return s;
  } catch (const json::exception &e) {
    throw DataError(fmt::format("malformed conductor entry: {}", e.what()));
  }
}

json to_json(const ConductorSpec &s) {
  return json{{"name", s.name},
              {"diameter_m", s.diameter},
              {"ac_resistance_20c_ohm_per_m", s.ac_resistance_at_20c},
              {"resistance_temp_coeff_per_k", s.resistance_temp_coefficient},
              {"solar_absorptivity", s.solar_absorptivity},
              {"emissivity", s.emissivity},
              {"max_temperature_c", s.max_temperature}};
}

std::vector<ConductorSpec> load_conductor_catalog(const std::string &path) {
  std::ifstream in(path);
  if (!in)
    throw DataError(fmt::format("cannot open conductor catalog '{}'", path));
  json j;
  try {
    in >> j;
  } catch (const json::exception &e) {
    throw DataError(fmt::format("'{}' is not valid JSON: {}", path, e.what()));
  }
  if (!j.is_array())
    throw DataError("conductor catalog must be a JSON array");
  std::vector<ConductorSpec> out;
  for (const auto &entry : j) {
    auto spec = conductor_from_json(entry);
    for (const auto &existing : out)
      if (existing.name == spec.name)
        throw DataError(fmt::format("duplicate conductor '{}'", spec.name));
    out.push_back(std::move(spec));
  }
  return out;
}

std::string default_conductor_catalog_path() {
  return std::string(AMPUQ_DATA_DIR) + "/conductors.json";
}

const ConductorSpec &find_conductor(const std::vector<ConductorSpec> &catalog,
                                    const std::string &name) {
  for (const auto &c : catalog)
    if (c.name == name)
      return c;
  throw UnknownConductorError(fmt::format("unknown conductor '{}'", name));
}

} // namespace ampuq
