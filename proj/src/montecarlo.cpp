#include "ampuq/montecarlo.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <mutex>
#include <optional>
#include <thread>

#include <fmt/format.h>

namespace ampuq {

using nlohmann::json;

std::uint64_t CounterRng::mix(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

std::uint64_t CounterRng::next() {
  ++counter_;
  return mix(key_ + counter_ * 0x9E3779B97F4A7C15ULL);
}

std::uint64_t CounterRng::derive(std::uint64_t root, std::uint64_t a, std::uint64_t b) {
  return mix(mix(mix(root) ^ (a + 0x632BE59BD9B4E019ULL)) ^ (b + 0x8CB92BA72F3D8DD7ULL));
}

std::size_t required_samples(double p) {
  if (!(p > 0.0 && p <= 1.0))
    throw DataError(fmt::format("tail probability {} outside (0, 1]", p));
  // 1e4 / (10 p); the small offset absorbs representation error in p.
  return static_cast<std::size_t>(std::ceil(1000.0 / p - 1e-9));
}

WeatherSampler make_weather_sampler(const HorizonErrors &errors, const OperatingPoint &op) {
  auto shifted = [&](WeatherVariable v, double center) {
    return offset_truncate(errors.get(v), center, physical_bounds(v));
  };
  return WeatherSampler{
      shifted(WeatherVariable::Temperature, op.temperature),
      op.solar > 0.0 ? shifted(WeatherVariable::Solar, op.solar)
                     : TruncatedOffsetDistribution::point(0.0),
      shifted(WeatherVariable::WindSpeed, op.wind_speed),
      shifted(WeatherVariable::WindDirection, op.wind_angle),
  };
}

WeatherSampler point_sampler(const OperatingPoint &op) {
  return WeatherSampler{TruncatedOffsetDistribution::point(op.temperature),
                        TruncatedOffsetDistribution::point(op.solar),
                        TruncatedOffsetDistribution::point(op.wind_speed),
                        TruncatedOffsetDistribution::point(op.wind_angle)};
}

std::vector<double> mc_normalized_samples(const OperatingPoint &op, const WeatherSampler &sampler,
                                          const ConductorSpec &spec, std::size_t samples,
                                          std::uint64_t seed, const ThermalConfig &cfg) {
  ConductorSpec conductor = spec;
  conductor.emissivity = op.emissivity;
  const AmbientConditions nominal_amb{op.temperature, op.solar, op.wind_speed,
                                      fold_attack_angle(op.wind_angle)};
  const double nominal = ampacity(nominal_amb, conductor, cfg);
  if (!(nominal > 0.0))
    throw DegeneratePointError(fmt::format(
        "nominal ampacity is zero at T={} S={} v={} ({}), cannot normalize", op.temperature,
        op.solar, op.wind_speed, conductor.name));

  CounterRng rng(seed);
  std::vector<double> out(samples);
  for (auto &r : out) {
    AmbientConditions amb;
    amb.temperature = sampler.temperature.sample(rng.uniform());
    amb.solar_irradiance = sampler.solar.sample(rng.uniform());
    amb.wind_speed = sampler.wind_speed.sample(rng.uniform());
    amb.wind_attack_angle = fold_attack_angle(sampler.wind_direction.sample(rng.uniform()));
    r = ampacity(amb, conductor, cfg) / nominal;
  }
  return out;
}

NormalizedAmpacityCDF mc_normalized_distribution(const OperatingPoint &op,
                                                 const WeatherSampler &sampler,
                                                 const ConductorSpec &spec, std::size_t samples,
                                                 std::uint64_t seed, const ThermalConfig &cfg) {
  auto cdf = empirical_cdf_on_grid(mc_normalized_samples(op, sampler, spec, samples, seed, cfg));
  cdf.seed = seed;
  return cdf;
}

NormalizedAmpacityCDF average_over_ts_grid(const OperatingPoint &op,
                                           const std::vector<double> &temperatures,
                                           const std::vector<double> &solars,
                                           const HorizonErrors &errors, const ConductorSpec &spec,
                                           std::size_t samples, std::uint64_t seed,
                                           const ThermalConfig &cfg) {
  if (temperatures.empty() || solars.empty())
    throw DataError("temperature and solar grids must be nonempty");
  std::vector<NormalizedAmpacityCDF> members;
  members.reserve(temperatures.size() * solars.size());
  std::uint64_t member = 0;
  for (double t : temperatures)
    for (double s : solars) {
      OperatingPoint p = op;
      p.temperature = t;
      p.solar = s;
      members.push_back(mc_normalized_distribution(p, make_weather_sampler(errors, p), spec,
                                                   samples, CounterRng::derive(seed, member++),
                                                   cfg));
    }
  if (members.size() == 1) {
    members.front().seed = seed;
    return std::move(members.front());
  }

  double upper = 0.0;
  for (const auto &m : members)
    upper = std::max(upper, m.upper());
  const auto grid = uniform_grid(upper, members.front().size());
  std::vector<double> mean(grid.size(), 0.0);
  for (const auto &m : members) {
    const bool same_grid = m.upper() == upper;
    for (std::size_t i = 0; i < grid.size(); ++i)
      mean[i] += same_grid ? m.values()[i] : m.evaluate(grid[i]);
  }
  const double count = static_cast<double>(members.size());
  for (auto &v : mean)
    v = std::min(1.0, v / count);
  mean.front() = 0.0;
  mean.back() = 1.0;
  NormalizedAmpacityCDF out(grid, std::move(mean));
  out.sample_count = samples * members.size();
  out.seed = seed;
  return out;
}

OperatingPoint entry_operating_point(const DatabaseAxes &axes, std::size_t index) {
  const auto c = axes.coord(index);
  OperatingPoint op;
  op.horizon = axes.horizons[c.horizon];
  op.wind_speed = axes.wind_speeds[c.wind_speed];
  op.wind_angle = axes.wind_angles[c.wind_angle];
  op.conductor = axes.conductors[c.conductor];
  op.emissivity = axes.emissivities[c.emissivity];
  return op;
}

BuildResult build_database(const DatabaseAxes &axes, const ErrorModel &errors,
                           const std::vector<ConductorSpec> &catalog, const BuildOptions &options,
                           const ThermalConfig &cfg) {
  axes.validate();
  if (options.samples < 1000)
    throw DataError(fmt::format("at least 1000 samples per member required, got {}",
                                options.samples));
  std::vector<const ConductorSpec *> specs;
  for (const auto &name : axes.conductors)
    specs.push_back(&find_conductor(catalog, name));
  for (auto h : axes.horizons)
    errors.at(h);

  const std::size_t total = axes.entry_count();
  std::vector<std::optional<NormalizedAmpacityCDF>> results(total);
  std::vector<std::string> messages(total);
  std::atomic<std::size_t> next{0};
  std::atomic<std::size_t> done{0};
  std::mutex progress_mutex;

  auto worker = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= total)
        return;
      const auto op = entry_operating_point(axes, i);
      const auto &spec = *specs[axes.coord(i).conductor];
      try {
        results[i] = average_over_ts_grid(op, options.temperatures, options.solars,
                                          errors.at(op.horizon), spec, options.samples,
                                          CounterRng::derive(options.seed, i), cfg);
      } catch (const DataError &e) {
        messages[i] = e.what();
      }
      const std::size_t finished = done.fetch_add(1) + 1;
      if (options.progress) {
        std::lock_guard lock(progress_mutex);
        options.progress(finished, total);
      }
    }
  };
  unsigned threads = options.threads ? options.threads : std::thread::hardware_concurrency();
  threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(total)));
  {
    std::vector<std::jthread> pool;
    for (unsigned t = 1; t < threads; ++t)
      pool.emplace_back(worker);
    worker();
  }

  BuildResult out;
  double upper = kMinGridUpper;
  for (const auto &r : results)
    if (r)
      upper = std::max(upper, r->upper());
  auto &db = out.db;
  db.axes = axes;
  db.grid = uniform_grid(upper);
  db.entries.resize(total * db.grid.size());
  json failed = json::array();
  for (std::size_t i = 0; i < total; ++i) {
    float *dst = db.entries.data() + i * db.grid.size();
    if (results[i]) {
      const auto &r = *results[i];
      const bool same_grid = r.upper() == upper && r.size() == db.grid.size();
      for (std::size_t k = 0; k < db.grid.size(); ++k)
        dst[k] = static_cast<float>(same_grid ? r.values()[k] : r.evaluate(db.grid[k]));
      dst[0] = 0.0f;
      dst[db.grid.size() - 1] = 1.0f;
    } else {
      for (std::size_t k = 0; k < db.grid.size(); ++k)
        dst[k] = db.grid[k] >= 1.0 ? 1.0f : 0.0f;
      out.failures.push_back({i, messages[i]});
      failed.push_back({{"index", i}, {"error", messages[i]}});
    }
  }

  json conductors = json::array();
  for (const auto *s : specs)
    conductors.push_back(to_json(*s));
  db.manifest = json{{"format", "ampuq-distribution-db"},
                     {"axes", to_json(axes)},
                     {"samples_per_member", options.samples},
                     {"seed", options.seed},
                     {"ts_grid", {{"temperatures", options.temperatures},
                                  {"solars", options.solars}}},
                     {"error_fingerprint", errors.fingerprint()},
                     {"conductors", conductors},
                     {"grid_points", db.grid.size()},
                     {"failed_entries", failed}};
  if (!options.build_time.empty())
    db.manifest["build_time"] = options.build_time;
  db.validate();
  return out;
}

} // namespace ampuq
