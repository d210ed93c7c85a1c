#include "ampuq/error_model.hpp"

#include <cmath>
#include <fstream>

#include <fmt/format.h>

#include "ampuq/checksum.hpp"

namespace ampuq {

using nlohmann::json;

bool HorizonErrors::complete() const {
  for (const auto &d : by_variable)
    if (!d)
      return false;
  return true;
}

const HorizonErrors &ErrorModel::at(HorizonClass h) const {
  auto it = horizons.find(h);
  if (it == horizons.end() || !it->second.complete())
    throw DataError(fmt::format("no error distributions for horizon '{}'", to_string(h)));
  return it->second;
}

std::string ErrorModel::fingerprint() const { return hex64(crc64(to_json(*this).dump())); }

ErrorModel fit_error_model(const std::vector<WeatherSample> &measured,
                           const std::vector<ForecastSample> &forecast,
                           const FitOptions &options, FitReport *report) {
  const auto pairs = align_pairs(measured, forecast, options.tolerance);
  const auto solar_pairs = filter_solar_nonzero(pairs);

  std::map<std::pair<WeatherVariable, HorizonClass>, std::vector<double>> cells;
  std::map<HorizonClass, std::size_t> solar_excluded;
  for (auto variable : kAllVariables) {
    const auto &source = variable == WeatherVariable::Solar ? solar_pairs : pairs;
    for (const auto &e : compute_errors(source, variable))
      cells[{variable, e.horizon}].push_back(e.value);
  }
  for (const auto &[m, f] : pairs)
    if (!(f.solar_irradiance > 0.0) && !std::isnan(m.solar_irradiance) &&
        !std::isnan(f.solar_irradiance))
      ++solar_excluded[classify_horizon(f.lead())];

  ErrorModel model;
  for (auto horizon : kAllHorizons) {
    HorizonErrors errors;
    bool any = false;
    for (auto variable : kAllVariables)
      if (cells.count({variable, horizon}))
        any = true;
    if (!any)
      continue;
    for (auto variable : kAllVariables)
      errors.by_variable[static_cast<std::size_t>(variable)] =
          std::make_shared<const ErrorDistribution>(
              fit_kde(cells[{variable, horizon}], variable, horizon, options.min_samples));
    model.horizons.emplace(horizon, std::move(errors));
  }
  if (model.horizons.empty())
    throw DataError("no aligned measured/forecast pairs");

  if (report) {
    *report = test_error_model(model, options.alpha);
    for (auto &entry : report->normality)
      if (entry.variable == WeatherVariable::Solar)
        entry.excluded = solar_excluded[entry.horizon];
  }
  return model;
}

FitReport test_error_model(const ErrorModel &model, double alpha) {
  FitReport report;
  for (const auto &[horizon, errors] : model.horizons)
    for (auto variable : kAllVariables) {
      const auto &dist = errors.get(variable);
      if (!dist)
        continue;
      report.normality.push_back({variable, horizon, dist->samples().size(), 0,
                                  dist->bandwidth(), ks_test_normal(dist->samples(), alpha)});
    }
  for (auto variable : kAllVariables)
    for (auto a = model.horizons.begin(); a != model.horizons.end(); ++a)
      for (auto b = std::next(a); b != model.horizons.end(); ++b) {
        const auto &da = a->second.get(variable);
        const auto &db = b->second.get(variable);
        if (da && db)
          report.comparisons.push_back(
              {variable, a->first, b->first,
               ks_test_two_sample(da->samples(), db->samples(), alpha)});
      }
  return report;
}

json to_json(const ErrorDistribution &dist) {
  return json{{"variable", to_string(dist.variable())},
              {"horizon", to_string(dist.horizon())},
              {"bandwidth", dist.bandwidth()},
              {"support", {dist.support_lo(), dist.support_hi()}},
              {"n", dist.samples().size()},
              {"samples", dist.samples()}};
}

ErrorDistribution error_distribution_from_json(const json &j) {
  try {
    auto samples = j.at("samples").get<std::vector<double>>();
    if (samples.size() != j.at("n").get<std::size_t>())
      throw DataError("sample count does not match 'n'");
    return ErrorDistribution(std::move(samples), j.at("bandwidth").get<double>(),
                             parse_variable(j.at("variable").get<std::string>()),
                             parse_horizon(j.at("horizon").get<std::string>()));
  } catch (const json::exception &e) {
    throw DataError(fmt::format("malformed error distribution: {}", e.what()));
  }
}

json to_json(const ErrorModel &model) {
  json dists = json::array();
  for (const auto &[h, errors] : model.horizons)
    for (const auto &d : errors.by_variable)
      if (d)
        dists.push_back(to_json(*d));
  return json{{"format", "ampuq-error-distributions"}, {"version", 1}, {"distributions", dists}};
}

ErrorModel error_model_from_json(const json &j) {
  try {
    if (j.at("format") != "ampuq-error-distributions" || j.at("version") != 1)
      throw DataError("unsupported error-distribution file");
    ErrorModel model;
    for (const auto &entry : j.at("distributions")) {
      auto dist = std::make_shared<const ErrorDistribution>(error_distribution_from_json(entry));
      auto &slot = model.horizons[dist->horizon()]
                       .by_variable[static_cast<std::size_t>(dist->variable())];
      slot = std::move(dist);
    }
    return model;
  } catch (const json::exception &e) {
    throw DataError(fmt::format("malformed error-distribution file: {}", e.what()));
  }
}

void save_error_model(const ErrorModel &model, const std::string &path) {
  std::ofstream out(path);
  if (!out)
    throw DataError(fmt::format("cannot write '{}'", path));
  out << to_json(model).dump() << '\n';
}

ErrorModel load_error_model(const std::string &path) {
  std::ifstream in(path);
  if (!in)
    throw DataError(fmt::format("cannot open '{}'", path));
  json j;
  try {
    in >> j;
  } catch (const json::exception &e) {
    throw DataError(fmt::format("'{}' is not valid JSON: {}", path, e.what()));
  }
  return error_model_from_json(j);
}

namespace {
json ks_json(const KsResult &r) {
  return json{{"statistic", r.statistic},
              {"p_value", r.p_value},
              {"alpha", r.alpha},
              {"rejected", r.rejected}};
}
} // namespace

json to_json(const FitReport &report) {
  json normality = json::array();
  for (const auto &e : report.normality)
    normality.push_back({{"variable", to_string(e.variable)},
                         {"horizon", to_string(e.horizon)},
                         {"samples", e.samples},
                         {"excluded_zero_prediction", e.excluded},
                         {"bandwidth", e.bandwidth},
                         {"ks_normal", ks_json(e.ks)}});
  json comparisons = json::array();
  for (const auto &c : report.comparisons)
    comparisons.push_back({{"variable", to_string(c.variable)},
                           {"a", to_string(c.a)},
                           {"b", to_string(c.b)},
                           {"ks_two_sample", ks_json(c.ks)}});
  return json{{"normality", normality}, {"horizon_comparisons", comparisons}};
}

} // namespace ampuq
