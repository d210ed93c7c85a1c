#include "ampuq/uncertainty.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

namespace ampuq {

void UncertaintyQuery::validate() const {
  ambient.validate();
  if (conductor.empty())
    throw DataError("conductor is required");
  if (!(emissivity >= 0.0 && emissivity <= 1.0))
    throw DataError("emissivity outside [0, 1]");
  if (nominal_ampacity && !(*nominal_ampacity > 0.0 && std::isfinite(*nominal_ampacity)))
    throw DataError("nominal_ampacity must be positive");
  if (!(confidence > 0.0 && confidence < 1.0))
    throw DataError("confidence must lie in (0, 1)");
}

NormalizedAmpacityCDF interpolate_cdf(const DistributionDB &db, const GridCell &cell) {
  const std::size_t n = db.grid.size();
  std::vector<double> values(n, 0.0);
  if (cell.nodes.size() == 1) {
    const auto e = db.entry(cell.nodes.front().first);
    std::copy(e.begin(), e.end(), values.begin());
  } else {
    for (const auto &[index, weight] : cell.nodes) {
      const auto e = db.entry(index);
      for (std::size_t i = 0; i < n; ++i)
        values[i] += weight * static_cast<double>(e[i]);
    }
    for (auto &v : values)
      v = std::min(v, 1.0);
    values.front() = 0.0;
    values.back() = 1.0;
  }
  return NormalizedAmpacityCDF(db.grid, std::move(values));
}

NormalizedAmpacityCDF interpolate_cdf(const DistributionDB &db, const LocateQuery &query) {
  return interpolate_cdf(db, locate(db, query));
}

std::pair<double, double> confidence_limits(const NormalizedAmpacityCDF &cdf, double nominal,
                                            double confidence) {
  if (!(confidence > 0.0 && confidence < 1.0))
    throw DataError("confidence must lie in (0, 1)");
  if (!(nominal > 0.0))
    throw DataError("nominal ampacity must be positive");
  const double alpha = 1.0 - confidence;
  return {cdf.quantile(alpha / 2.0) * nominal, cdf.quantile(1.0 - alpha / 2.0) * nominal};
}

ConductorSpec manifest_conductor(const DistributionDB &db, const std::string &name) {
  if (db.manifest.contains("conductors"))
    for (const auto &c : db.manifest.at("conductors"))
      if (c.value("name", "") == name)
        return conductor_from_json(c);
  throw UnknownConductorError(fmt::format("conductor '{}' has no parameters in the database", name));
}

UncertaintyResult assess(const DistributionDB &db, const UncertaintyQuery &query, bool keep_cdf) {
  query.validate();
  LocateQuery lq;
  lq.horizon = query.horizon;
  lq.wind_speed = query.ambient.wind_speed;
  lq.wind_angle = query.ambient.wind_attack_angle;
  lq.conductor = query.conductor;
  lq.emissivity = query.emissivity;
  const auto cell = locate(db, lq);

  UncertaintyResult result;
  result.confidence = query.confidence;
  result.clamped = cell.clamped;
  result.nodes = cell.nodes;
  if (query.nominal_ampacity) {
    result.nominal = *query.nominal_ampacity;
  } else {
    auto spec = manifest_conductor(db, query.conductor);
    spec.emissivity = query.emissivity;
    result.nominal = ampacity(query.ambient, spec);
    result.nominal_computed = true;
    if (!(result.nominal > 0.0))
      throw DataError("computed nominal ampacity is zero; supply nominal_ampacity");
  }
  auto cdf = interpolate_cdf(db, cell);
  std::tie(result.lower, result.upper) = confidence_limits(cdf, result.nominal, query.confidence);
  if (keep_cdf)
    result.cdf = std::move(cdf);
  return result;
}

} // namespace ampuq
