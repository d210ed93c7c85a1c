#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ampuq/distdb.hpp"
#include "ampuq/error_model.hpp"
#include "ampuq/montecarlo.hpp"
#include "ampuq/synthetic.hpp"
#include "ampuq/thermal.hpp"

namespace ampuq::test {

std::vector<double> normal_draws(std::uint64_t seed, std::size_t n, double mean = 0.0,
                                 double sd = 1.0);
std::vector<double> exponential_draws(std::uint64_t seed, std::size_t n);

/// Fresh scratch directory under the build tree.
std::string scratch_dir(const std::string &name);

const std::vector<ConductorSpec> &catalog();
const ConductorSpec &conductor(const std::string &name = "243-AL1/39");

/// Error model fitted to 120 days of default synthetic weather, seed 11.
const ErrorModel &synthetic_errors();

/// Nowcast and short-term, v {0.5, 2, 5}, angle {0, 90}, one conductor,
/// emissivity {0.2, 0.9}; M = 2000.
const DistributionDB &small_db();

/// Database whose entries are written directly rather than simulated: entry
/// i is uniform on [0.5 + 0.01 k, 1.5 + 0.01 k], k = i mod 100.
DistributionDB synthetic_uniform_db(const DatabaseAxes &axes);

} // namespace ampuq::test
