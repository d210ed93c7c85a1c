#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "ampuq/cdf.hpp"
#include "ampuq/distdb.hpp"
#include "ampuq/thermal.hpp"

namespace ampuq {

struct UncertaintyQuery {
  AmbientConditions ambient; // forecast values at the span
  HorizonClass horizon = HorizonClass::Nowcast;
  std::string conductor;
  double emissivity = 0.5;
  std::optional<double> nominal_ampacity; // I_th0 in A; computed when absent
  double confidence = 0.95;

  void validate() const;
};

struct UncertaintyResult {
  double nominal = 0.0; // I_th0, A
  double lower = 0.0;   // A
  double upper = 0.0;   // A
  double confidence = 0.0;
  ClampFlags clamped;
  bool nominal_computed = false;
  std::vector<std::pair<std::size_t, double>> nodes;
  std::optional<NormalizedAmpacityCDF> cdf; // kept on request, for plotting
};

/// Pointwise convex combination of the located entries on the shared grid.
NormalizedAmpacityCDF interpolate_cdf(const DistributionDB &db, const GridCell &cell);
NormalizedAmpacityCDF interpolate_cdf(const DistributionDB &db, const LocateQuery &query);

/// (r_lo * I_th0, r_hi * I_th0) where r_lo and r_hi are the linearly
/// interpolated inverse CDF at alpha/2 and 1 - alpha/2, alpha = 1 - confidence.
std::pair<double, double> confidence_limits(const NormalizedAmpacityCDF &cdf, double nominal,
                                            double confidence);

/// Conductor parameters recorded in the database manifest.
ConductorSpec manifest_conductor(const DistributionDB &db, const std::string &name);

UncertaintyResult assess(const DistributionDB &db, const UncertaintyQuery &query,
                         bool keep_cdf = false);

} // namespace ampuq
