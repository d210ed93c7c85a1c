#include "support.hpp"

#include <algorithm>
#include <filesystem>

#include <json.hpp>

namespace ampuq::test {

using nlohmann::json;

std::vector<double> normal_draws(std::uint64_t seed, std::size_t n, double mean, double sd) {
  CounterRng rng(seed);
  std::vector<double> out(n);
  for (auto &x : out)
    x = mean + sd * standard_normal(rng.uniform(), rng.uniform());
  return out;
}

std::vector<double> exponential_draws(std::uint64_t seed, std::size_t n) {
  CounterRng rng(seed);
  std::vector<double> out(n);
  for (auto &x : out)
    x = centred_exponential(rng.uniform()) + 1.0;
  return out;
}

std::string scratch_dir(const std::string &name) {
  const auto p = std::filesystem::temp_directory_path() / "ampuq-tests" / name;
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p.string();
}

const std::vector<ConductorSpec> &catalog() {
  static const auto c = load_conductor_catalog(default_conductor_catalog_path());
  return c;
}

const ConductorSpec &conductor(const std::string &name) { return find_conductor(catalog(), name); }

const ErrorModel &synthetic_errors() {
  static const ErrorModel model = [] {
    auto params = load_synthetic_params(default_synthetic_params_path());
    params.days = 120;
    const auto w = generate_weather(params, 11);
    return fit_error_model(w.measured, w.forecast);
  }();
  return model;
}

const DistributionDB &small_db() {
  static const DistributionDB db = [] {
    DatabaseAxes axes;
    axes.horizons = {HorizonClass::Nowcast, HorizonClass::ShortTerm};
    axes.wind_speeds = {0.5, 2.0, 5.0};
    axes.wind_angles = {0.0, 90.0};
    axes.conductors = {"243-AL1/39"};
    axes.emissivities = {0.2, 0.9};
    BuildOptions options;
    options.samples = 2000;
    options.seed = 5;
    options.threads = 2;
    auto result = build_database(axes, synthetic_errors(), catalog(), options);
    return std::move(result.db);
  }();
  return db;
}

DistributionDB synthetic_uniform_db(const DatabaseAxes &axes) {
  DistributionDB db;
  db.axes = axes;
  db.grid = uniform_grid(4.0);
  db.entries.resize(axes.entry_count() * db.grid.size());
  for (std::size_t i = 0; i < axes.entry_count(); ++i) {
    const double lo = 0.5 + 0.01 * static_cast<double>(i % 100);
    for (std::size_t k = 0; k < db.grid.size(); ++k)
      db.entries[i * db.grid.size() + k] =
          static_cast<float>(std::clamp((db.grid[k] - lo) / 1.0, 0.0, 1.0));
  }
  json conductors = json::array();
  for (const auto &name : axes.conductors)
    conductors.push_back(to_json(conductor(name)));
  db.manifest = {{"format", "ampuq-distribution-db"}, {"conductors", conductors}};
  db.validate();
  return db;
}

} // namespace ampuq::test
