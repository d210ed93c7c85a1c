#pragma once

#include <array>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "ampuq/kde.hpp"
#include "ampuq/ks.hpp"
#include "ampuq/weather.hpp"

namespace ampuq {

/// The four fitted error distributions for one horizon class.
struct HorizonErrors {
  std::array<std::shared_ptr<const ErrorDistribution>, 4> by_variable;

  const std::shared_ptr<const ErrorDistribution> &get(WeatherVariable v) const {
    return by_variable[static_cast<std::size_t>(v)];
  }
  bool complete() const;
};

struct ErrorModel {
  std::map<HorizonClass, HorizonErrors> horizons;

  const HorizonErrors &at(HorizonClass h) const;
  /// CRC-64 of the canonical JSON form, hex encoded.
  std::string fingerprint() const;
};

struct NormalityEntry {
  WeatherVariable variable;
  HorizonClass horizon;
  std::size_t samples = 0;
  std::size_t excluded = 0; // solar pairs dropped for a zero prediction
  double bandwidth = 0.0;
  KsResult ks;
};

struct HorizonComparison {
  WeatherVariable variable;
  HorizonClass a;
  HorizonClass b;
  KsResult ks;
};

struct FitReport {
  std::vector<NormalityEntry> normality;
  std::vector<HorizonComparison> comparisons;
};

struct FitOptions {
  Duration tolerance = kDefaultAlignTolerance;
  std::size_t min_samples = kDefaultMinSamples;
  double alpha = 0.01;
};

/// Aligns, differences and fits one KDE per (variable, horizon). Solar is
/// fitted only on pairs with a nonzero prediction. Throws DataError when a
/// cell has too few samples.
ErrorModel fit_error_model(const std::vector<WeatherSample> &measured,
                           const std::vector<ForecastSample> &forecast,
                           const FitOptions &options = {}, FitReport *report = nullptr);

/// KS-vs-normal per cell and two-sample KS between horizons of each
/// variable, from the stored samples.
FitReport test_error_model(const ErrorModel &model, double alpha = 0.01);

nlohmann::json to_json(const ErrorDistribution &dist);
ErrorDistribution error_distribution_from_json(const nlohmann::json &j);

nlohmann::json to_json(const ErrorModel &model);
ErrorModel error_model_from_json(const nlohmann::json &j);

void save_error_model(const ErrorModel &model, const std::string &path);
ErrorModel load_error_model(const std::string &path);

nlohmann::json to_json(const FitReport &report);

} // namespace ampuq
