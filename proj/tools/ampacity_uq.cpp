#include <algorithm>
#include <atomic>
#include <cmath>
#include <csignal>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <pthread.h>
#include <unistd.h>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <json.hpp>

#include "ampuq/checksum.hpp"
#include "ampuq/distdb.hpp"
#include "ampuq/error_model.hpp"
#include "ampuq/montecarlo.hpp"
#include "ampuq/service.hpp"
#include "ampuq/synthetic.hpp"
#include "ampuq/thermal.hpp"
#include "ampuq/uncertainty.hpp"
#include "ampuq/weather.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace ampuq;

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitInternal = 3;

// Run configuration: {"<subcommand>": {"<option>": value, ...}, ...}.
// Keys may use '_' or '-'; arrays feed multi-value options.
class JsonConfig : public CLI::Config {
public:
  std::string to_config(const CLI::App *app, bool default_also, bool,
                        std::string) const override {
    json out = json::object();
    auto dump = [&](const CLI::App *a, json &dst) {
      for (const auto *opt : a->get_options()) {
        const auto name = opt->get_single_name();
        if (opt->get_lnames().empty() || name == "help" || name == "config")
          continue;
        if (opt->count() > 0)
          dst[name] = opt->results();
        else if (default_also && !opt->get_default_str().empty())
          dst[name] = opt->get_default_str();
      }
    };
    dump(app, out);
    for (const auto *sub : app->get_subcommands({}))
      dump(sub, out[sub->get_name()]);
    return out.dump(2);
  }

  std::vector<CLI::ConfigItem> from_config(std::istream &input) const override {
    json j;
    try {
      j = json::parse(input);
    } catch (const json::parse_error &e) {
      throw CLI::ConversionError(fmt::format("config is not valid JSON: {}", e.what()));
    }
    if (!j.is_object())
      throw CLI::ConversionError("config must be a JSON object");
    std::vector<CLI::ConfigItem> items;
    auto add = [&](std::vector<std::string> parents, std::string key, const json &value) {
      std::replace(key.begin(), key.end(), '_', '-');
      CLI::ConfigItem item;
      item.parents = std::move(parents);
      item.name = key;
      if (value.is_array()) {
        for (const auto &v : value)
          item.inputs.push_back(scalar(v));
      } else {
        item.inputs.push_back(scalar(value));
      }
      items.push_back(std::move(item));
    };
    for (const auto &[key, value] : j.items()) {
      if (value.is_object()) {
        for (const auto &[k, v] : value.items())
          add({key}, k, v);
      } else {
        add({}, key, value);
      }
    }
    return items;
  }

private:
  static std::string scalar(const json &v) {
    if (v.is_string())
      return v.get<std::string>();
    if (v.is_boolean())
      return v.get<bool>() ? "true" : "false";
    return v.dump();
  }
};

class UsageError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

fs::path prepare_out(const std::string &dir) {
  fs::path p(dir);
  fs::create_directories(p);
  return p;
}

std::ofstream open_out(const fs::path &path) {
  std::ofstream out(path, std::ios::binary);
  if (!out)
    throw DataError(fmt::format("cannot write {}", path.string()));
  return out;
}

void write_json(const fs::path &path, const json &j) { open_out(path) << j.dump(2) << '\n'; }

// ---------------------------------------------------------------- generate

struct GenerateArgs {
  std::string params = default_synthetic_params_path();
  std::optional<std::uint64_t> seed;
  std::optional<double> days;
  std::optional<std::string> start;
  std::optional<std::string> shape;
  std::optional<double> wind_mean;
  std::optional<double> wind_sd;
  std::optional<double> direction_start;
  std::optional<double> direction_step_sd;
  std::string out = ".";
  std::string skin_conductor;
  std::string catalog = default_conductor_catalog_path();
  SkinOptions skin;
};

int cmd_generate(const GenerateArgs &a) {
  if (!a.seed)
    throw UsageError("generate: --seed is required");
  auto p = load_synthetic_params(a.params);
  json j = to_json(p);
  if (a.days)
    j["days"] = *a.days;
  if (a.start)
    j["start"] = *a.start;
  if (a.shape)
    j["forecast"]["shape"] = *a.shape;
  if (a.wind_mean)
    j["wind"]["mean_ms"] = *a.wind_mean;
  if (a.wind_sd)
    j["wind"]["sd_ms"] = *a.wind_sd;
  if (a.direction_start)
    j["wind"]["direction_start_deg"] = *a.direction_start;
  if (a.direction_step_sd)
    j["wind"]["direction_step_sd_deg"] = *a.direction_step_sd;
  p = synthetic_params_from_json(j);

  const auto weather = generate_weather(p, *a.seed);
  const auto dir = prepare_out(a.out);
  {
    auto f = open_out(dir / "measured.csv");
    write_measured_csv(f, weather.measured);
  }
  {
    auto f = open_out(dir / "forecast.csv");
    write_forecast_csv(f, weather.forecast);
  }
  json summary{{"params", to_json(p)},
               {"seed", *a.seed},
               {"measured_rows", weather.measured.size()},
               {"forecast_rows", weather.forecast.size()}};
  if (!a.skin_conductor.empty()) {
    const auto catalog = load_conductor_catalog(a.catalog);
    const auto &spec = find_conductor(catalog, a.skin_conductor);
    const auto skin = generate_skin_temperature(weather.measured, spec, a.skin, *a.seed);
    auto f = open_out(dir / "skin.csv");
    write_skin_csv(f, skin);
    summary["skin_rows"] = skin.size();
  }
  write_json(dir / "synthetic.json", summary);
  std::cout << summary.dump(2) << '\n';
  return 0;
}

// ------------------------------------------------------------------ ingest

struct IngestArgs {
  std::string measured;
  std::string forecast;
  double tolerance_s = static_cast<double>(kDefaultAlignTolerance.count());
  std::string out = ".";
};

Duration tolerance_from(double seconds) {
  if (!(seconds >= 0.0))
    throw UsageError("tolerance must be nonnegative");
  return Duration(static_cast<Duration::rep>(std::llround(seconds)));
}

int cmd_ingest(const IngestArgs &a) {
  const auto measured = read_measured_file(a.measured);
  const auto forecast = read_forecast_file(a.forecast);
  const auto pairs = align_pairs(measured, forecast, tolerance_from(a.tolerance_s));
  const auto solar_pairs = filter_solar_nonzero(pairs);

  const auto dir = prepare_out(a.out);
  auto f = open_out(dir / "errors.csv");
  f << "valid_at,horizon,variable,error\n";
  std::map<std::string, std::size_t> counts;
  for (auto v : kAllVariables) {
    for (const auto &e : compute_errors(v == WeatherVariable::Solar ? solar_pairs : pairs, v)) {
      f << fmt::format("{},{},{},{}\n", format_timestamp(e.valid_at), to_string(e.horizon),
                       to_string(v), e.value);
      ++counts[fmt::format("{}/{}", to_string(v), to_string(e.horizon))];
    }
  }
  std::vector<std::int64_t> steps;
  for (std::size_t i = 1; i < measured.size(); ++i)
    steps.push_back((measured[i].timestamp - measured[i - 1].timestamp).count());
  std::optional<std::int64_t> median_step;
  if (!steps.empty()) {
    std::nth_element(steps.begin(), steps.begin() + steps.size() / 2, steps.end());
    median_step = steps[steps.size() / 2];
  }
  json summary{{"measured_rows", measured.size()},
               {"forecast_rows", forecast.size()},
               {"aligned_pairs", pairs.size()},
               {"solar_pairs_excluded_zero_prediction", pairs.size() - solar_pairs.size()},
               {"median_measured_step_s", median_step ? json(*median_step) : json(nullptr)},
               {"errors_per_cell", counts}};
  write_json(dir / "ingest_summary.json", summary);
  std::cout << summary.dump(2) << '\n';
  return 0;
}

// ------------------------------------------------------- fit-errors, ks-report

void write_ks_report(const fs::path &dir, const FitReport &report) {
  write_json(dir / "ks_report.json", to_json(report));
  auto f = open_out(dir / "ks_normality.csv");
  f << "variable,horizon,samples,excluded_zero_prediction,bandwidth,statistic,p_value,rejected\n";
  for (const auto &e : report.normality)
    f << fmt::format("{},{},{},{},{},{},{},{}\n", to_string(e.variable), to_string(e.horizon),
                     e.samples, e.excluded, e.bandwidth, e.ks.statistic, e.ks.p_value,
                     e.ks.rejected ? 1 : 0);
  auto g = open_out(dir / "ks_horizons.csv");
  g << "variable,horizon_a,horizon_b,statistic,p_value,rejected\n";
  for (const auto &c : report.comparisons)
    g << fmt::format("{},{},{},{},{},{}\n", to_string(c.variable), to_string(c.a),
                     to_string(c.b), c.ks.statistic, c.ks.p_value, c.ks.rejected ? 1 : 0);
}

void print_ks_report(const FitReport &report) {
  std::cout << fmt::format("{:<15} {:<12} {:>7} {:>9} {:>11}  {}\n", "variable", "horizon", "n",
                           "D", "p", "normal?");
  for (const auto &e : report.normality)
    std::cout << fmt::format("{:<15} {:<12} {:>7} {:>9.5f} {:>11.3e}  {}\n",
                             to_string(e.variable), to_string(e.horizon), e.samples,
                             e.ks.statistic, e.ks.p_value,
                             e.ks.rejected ? "rejected" : "not rejected");
  std::cout << '\n';
  for (const auto &c : report.comparisons)
    std::cout << fmt::format("{:<15} {} vs {}: D={:.5f} p={:.3e} {}\n", to_string(c.variable),
                             to_string(c.a), to_string(c.b), c.ks.statistic, c.ks.p_value,
                             c.ks.rejected ? "differ" : "not distinguished");
}

struct FitArgs {
  std::string measured;
  std::string forecast;
  std::optional<std::uint64_t> seed;
  double tolerance_s = static_cast<double>(kDefaultAlignTolerance.count());
  std::size_t min_samples = kDefaultMinSamples;
  double alpha = 0.01;
  std::size_t density_points = 401;
  std::string out = ".";
};

int cmd_fit_errors(const FitArgs &a) {
  if (!a.seed)
    throw UsageError("fit-errors: --seed is required");
  const auto measured = read_measured_file(a.measured);
  const auto forecast = read_forecast_file(a.forecast);
  FitOptions options;
  options.tolerance = tolerance_from(a.tolerance_s);
  options.min_samples = a.min_samples;
  options.alpha = a.alpha;
  FitReport report;
  const auto model = fit_error_model(measured, forecast, options, &report);

  const auto dir = prepare_out(a.out);
  save_error_model(model, (dir / "error_distributions.json").string());
  write_ks_report(dir, report);
  // Plot-ready density and CDF per cell.
  for (const auto &[horizon, errors] : model.horizons)
    for (auto v : kAllVariables) {
      const auto &d = *errors.get(v);
      auto f = open_out(dir / fmt::format("density_{}_{}.csv", to_string(v), to_string(horizon)));
      f << "x,density,cdf\n";
      const std::size_t n = std::max<std::size_t>(a.density_points, 2);
      for (std::size_t i = 0; i < n; ++i) {
        const double x = d.support_lo() + (d.support_hi() - d.support_lo()) * i / (n - 1);
        f << fmt::format("{},{},{}\n", x, d.density(x), d.cdf(x));
      }
    }
  print_ks_report(report);
  std::cout << fmt::format("error model fingerprint {}\n", model.fingerprint());
  return 0;
}

struct KsArgs {
  std::string errors;
  double alpha = 0.01;
  std::string out = ".";
};

int cmd_ks_report(const KsArgs &a) {
  const auto model = load_error_model(a.errors);
  const auto report = test_error_model(model, a.alpha);
  write_ks_report(prepare_out(a.out), report);
  print_ks_report(report);
  return 0;
}

// ----------------------------------------------------------------- build-db

struct BuildArgs {
  std::string errors;
  std::string catalog = default_conductor_catalog_path();
  std::string thermal;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> samples;
  std::optional<double> tail_probability;
  unsigned threads = 0;
  std::vector<std::string> horizons;
  std::vector<double> wind_speeds;
  std::vector<double> wind_angles;
  std::vector<std::string> conductors;
  std::vector<double> emissivities;
  std::vector<double> ts_temperatures;
  std::vector<double> ts_solars;
  std::string build_time;
  bool quiet = false;
  std::string out = ".";
  std::string name = "ampacity.dtru";
};

int cmd_build_db(const BuildArgs &a) {
  if (!a.seed)
    throw UsageError("build-db: --seed is required");
  if (a.samples && a.tail_probability)
    throw UsageError("build-db: give --samples or --tail-probability, not both");
  const auto catalog = load_conductor_catalog(a.catalog);
  const auto cfg = a.thermal.empty() ? default_thermal_config() : load_thermal_config(a.thermal);
  const auto model = load_error_model(a.errors);

  std::vector<std::string> names;
  for (const auto &c : catalog)
    names.push_back(c.name);
  json overrides = json::object();
  if (!a.horizons.empty())
    overrides["horizons"] = a.horizons;
  if (!a.wind_speeds.empty())
    overrides["wind_speeds"] = a.wind_speeds;
  if (!a.wind_angles.empty())
    overrides["wind_angles"] = a.wind_angles;
  if (!a.conductors.empty())
    overrides["conductors"] = a.conductors;
  if (!a.emissivities.empty())
    overrides["emissivities"] = a.emissivities;
  const auto axes = axes_from_json(overrides, DatabaseAxes::defaults(names));

  BuildOptions options;
  options.seed = *a.seed;
  if (a.samples)
    options.samples = *a.samples;
  if (a.tail_probability)
    options.samples = required_samples(*a.tail_probability);
  options.threads = a.threads;
  if (!a.ts_temperatures.empty())
    options.temperatures = a.ts_temperatures;
  if (!a.ts_solars.empty())
    options.solars = a.ts_solars;
  options.build_time = a.build_time;
  if (options.build_time.empty())
    if (const char *epoch = std::getenv("SOURCE_DATE_EPOCH"))
      options.build_time =
          format_timestamp(TimePoint(std::chrono::seconds(std::stoll(epoch))));
  const std::size_t total = axes.entry_count();
  std::size_t step = std::max<std::size_t>(1, total / 20);
  if (!a.quiet)
    options.progress = [step](std::size_t done, std::size_t n) {
      if (done % step == 0 || done == n)
        std::cerr << fmt::format("\rbuilt {}/{} entries", done, n) << (done == n ? "\n" : "")
                  << std::flush;
    };

  const auto t0 = std::chrono::steady_clock::now();
  auto result = build_database(axes, model, catalog, options, cfg);
  const double seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  const auto dir = prepare_out(a.out);
  const auto path = dir / a.name;
  const auto bytes = write_db_file(result.db, path.string());
  // Re-read to prove the file validates.
  read_db_file(path.string());

  json summary{{"path", path.string()},
               {"entries", total},
               {"bytes", bytes},
               {"checksum", hex64(result.db.checksum)},
               {"samples_per_member", options.samples},
               {"seconds", seconds},
               {"failed_entries", result.failures.size()}};
  write_json(dir / "build_summary.json", summary);
  std::cout << summary.dump(2) << '\n';
  for (const auto &f : result.failures)
    std::cerr << fmt::format("entry {} failed: {}\n", f.index, f.message);
  return 0;
}

// ---------------------------------------------------------- db-info, export

int cmd_db_info(const std::string &db_path) {
  std::cout << db_info(read_db_file(db_path));
  return 0;
}

struct ExportArgs {
  std::string db;
  std::vector<std::size_t> indices;
  bool all = false;
  std::string out = ".";
};

int cmd_db_export(const ExportArgs &a) {
  const auto db = read_db_file(a.db);
  std::vector<std::size_t> indices = a.indices;
  if (a.all) {
    indices.resize(db.entry_count());
    for (std::size_t i = 0; i < indices.size(); ++i)
      indices[i] = i;
  }
  if (indices.empty())
    throw UsageError("db-export: give --index or --all");
  const auto dir = prepare_out(a.out);
  auto index_csv = open_out(dir / "entries.csv");
  index_csv << "index,horizon,wind_speed_ms,wind_angle_deg,conductor,emissivity,file\n";
  for (auto i : indices) {
    if (i >= db.entry_count())
      throw DataError(fmt::format("entry index {} out of range (0..{})", i, db.entry_count() - 1));
    const auto file = fmt::format("entry_{:04}.csv", i);
    auto f = open_out(dir / file);
    export_entry_csv(db, i, f);
    const auto c = db.axes.coord(i);
    index_csv << fmt::format("{},{},{},{},\"{}\",{},{}\n", i, to_string(db.axes.horizons[c.horizon]),
                             db.axes.wind_speeds[c.wind_speed], db.axes.wind_angles[c.wind_angle],
                             db.axes.conductors[c.conductor], db.axes.emissivities[c.emissivity],
                             file);
  }
  std::cout << fmt::format("exported {} entries to {}\n", indices.size(), dir.string());
  return 0;
}

// ------------------------------------------------------------------ assess

struct AssessArgs {
  std::string db;
  std::optional<double> temperature;
  std::optional<double> solar;
  std::optional<double> wind_speed;
  std::optional<double> wind_angle;
  std::optional<double> wind_direction;
  double azimuth = 0.0;
  std::string horizon = "nowcast";
  std::string conductor;
  double emissivity = 0.5;
  std::optional<double> nominal;
  double confidence = 0.95;
  std::string batch;
  std::string out = ".";
};

UncertaintyQuery base_query(const AssessArgs &a) {
  if (a.conductor.empty())
    throw UsageError("assess: --conductor is required");
  UncertaintyQuery q;
  q.horizon = parse_horizon(a.horizon);
  q.conductor = a.conductor;
  q.emissivity = a.emissivity;
  q.confidence = a.confidence;
  q.nominal_ampacity = a.nominal;
  return q;
}

constexpr std::string_view kBatchHeader = "timestamp,temperature_c,solar_wm2,wind_speed_ms,wind_dir_deg";

int cmd_assess(const AssessArgs &a) {
  const auto db = read_db_file(a.db);
  auto q = base_query(a);
  if (a.batch.empty()) {
    if (!a.temperature || !a.solar || !a.wind_speed)
      throw UsageError("assess: --temperature, --solar and --wind-speed are required");
    if (a.wind_angle && a.wind_direction)
      throw UsageError("assess: give --wind-angle or --wind-direction, not both");
    q.ambient.temperature = *a.temperature;
    q.ambient.solar_irradiance = *a.solar;
    q.ambient.wind_speed = *a.wind_speed;
    if (a.wind_angle)
      q.ambient.wind_attack_angle = *a.wind_angle;
    else if (a.wind_direction)
      q.ambient.wind_attack_angle = wind_attack_angle(*a.wind_direction, a.azimuth);
    std::cout << to_json(assess(db, q)).dump(2) << '\n';
    return 0;
  }

  // Batch: one query per measured-format row; bad rows are reported and skipped.
  std::ifstream in(a.batch);
  if (!in)
    throw DataError(fmt::format("cannot open {}", a.batch));
  const auto dir = prepare_out(a.out);
  auto out = open_out(dir / "assess.csv");
  out << "time,nominal_a,lower_a,upper_a\n";
  std::string line;
  std::size_t line_no = 0, ok = 0, bad = 0, clamped = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r')
      line.pop_back();
    if (line_no == 1) {
      if (line != kBatchHeader)
        throw DataError(fmt::format("expected header '{}'", kBatchHeader), 1);
      continue;
    }
    if (line.empty())
      continue;
    try {
      std::istringstream row(std::string(kBatchHeader) + "\n" + line + "\n");
      const auto parsed = parse_measured_csv(row);
      const auto &w = parsed.front();
      if (std::isnan(w.temperature) || std::isnan(w.solar_irradiance) ||
          std::isnan(w.wind_speed) || std::isnan(w.wind_direction))
        throw DataError("missing field");
      q.ambient = {w.temperature, w.solar_irradiance, w.wind_speed,
                   wind_attack_angle(w.wind_direction, a.azimuth)};
      const auto r = assess(db, q);
      out << fmt::format("{},{},{},{}\n", format_timestamp(w.timestamp), r.nominal, r.lower,
                         r.upper);
      ++ok;
      clamped += r.clamped.any() ? 1 : 0;
    } catch (const DataError &e) {
      if (dynamic_cast<const UnknownConductorError *>(&e) ||
          dynamic_cast<const MissingHorizonError *>(&e))
        throw;
      std::cerr << fmt::format("{}:{}: {}\n", a.batch, line_no, e.what());
      ++bad;
    }
  }
  std::cout << json{{"rows", ok}, {"errors", bad}, {"clamped", clamped},
                    {"output", (dir / "assess.csv").string()}}
                   .dump(2)
            << '\n';
  return bad ? kExitData : 0;
}

// ------------------------------------------------------- validate-skin-temp

struct SkinArgs {
  std::string skin;
  std::string measured;
  std::string forecast;
  std::string conductor;
  std::string catalog = default_conductor_catalog_path();
  std::string thermal;
  double azimuth = 0.0;
  std::string horizon = "nowcast";
  double tolerance_s = static_cast<double>(kDefaultAlignTolerance.count());
  std::string out = ".";
};

json spread_summary(std::vector<double> e) {
  if (e.empty())
    return json{{"n", 0}};
  std::sort(e.begin(), e.end());
  const double n = static_cast<double>(e.size());
  double mean = 0.0;
  for (double x : e)
    mean += x;
  mean /= n;
  double ss = 0.0;
  for (double x : e)
    ss += (x - mean) * (x - mean);
  auto q = [&](double p) {
    const double pos = p * (n - 1.0);
    const auto i = static_cast<std::size_t>(std::floor(pos));
    const auto j = std::min(i + 1, e.size() - 1);
    return e[i] + (pos - i) * (e[j] - e[i]);
  };
  return json{{"n", e.size()},      {"mean", mean},
              {"sd", e.size() > 1 ? std::sqrt(ss / (n - 1.0)) : 0.0},
              {"p05", q(0.05)},     {"p25", q(0.25)},
              {"median", q(0.5)},   {"p75", q(0.75)},
              {"p95", q(0.95)},     {"iqr", q(0.75) - q(0.25)}};
}

// Index of the sample nearest to t within tolerance.
template <typename Series, typename Key>
std::optional<std::size_t> nearest(const Series &s, TimePoint t, Duration tol, Key key) {
  auto it = std::lower_bound(s.begin(), s.end(), t,
                             [&](const auto &x, TimePoint v) { return key(x) < v; });
  std::optional<std::size_t> best;
  Duration best_d = Duration::max();
  for (auto c : {it, it == s.begin() ? it : std::prev(it)}) {
    if (c == s.end())
      continue;
    const auto d = key(*c) > t ? key(*c) - t : t - key(*c);
    if (d <= tol && d < best_d) {
      best = static_cast<std::size_t>(c - s.begin());
      best_d = d;
    }
  }
  return best;
}

int cmd_validate_skin(const SkinArgs &a) {
  const auto skin = read_skin_file(a.skin);
  const auto measured = read_measured_file(a.measured);
  const auto forecast = read_forecast_file(a.forecast);
  const auto catalog = load_conductor_catalog(a.catalog);
  const auto &spec = find_conductor(catalog, a.conductor);
  const auto cfg = a.thermal.empty() ? default_thermal_config() : load_thermal_config(a.thermal);
  const auto horizon = parse_horizon(a.horizon);
  const auto tol = tolerance_from(a.tolerance_s);
  const auto skin_time = [](const SkinSample &s) { return s.timestamp; };

  const auto dir = prepare_out(a.out);
  auto csv = open_out(dir / "skin_errors.csv");
  csv << "timestamp,source,computed_c,measured_c,error_c\n";
  auto model_temp = [&](double current, double t, double s, double v, double dir_deg) {
    const AmbientConditions amb{t, std::min(s, 1361.0), v, wind_attack_angle(dir_deg, a.azimuth)};
    return solve_conductor_temperature(current, amb, spec, cfg);
  };

  std::vector<double> measured_err, forecast_err, measured_err_matched;
  std::vector<double> computed, observed;
  for (const auto &m : measured) {
    if (std::isnan(m.temperature) || std::isnan(m.solar_irradiance) || std::isnan(m.wind_speed) ||
        std::isnan(m.wind_direction))
      continue;
    const auto k = nearest(skin, m.timestamp, tol, skin_time);
    if (!k)
      continue;
    const auto &s = skin[*k];
    computed.push_back(model_temp(s.current, m.temperature, m.solar_irradiance, m.wind_speed,
                                  m.wind_direction));
    observed.push_back(s.skin_temperature);
    csv << fmt::format("{},measured_weather,{},{},{}\n", format_timestamp(s.timestamp),
                       computed.back(), s.skin_temperature, computed.back() - s.skin_temperature);
  }
  measured_err = skin_temperature_error(observed, computed);

  for (const auto &f : forecast) {
    if (classify_horizon(f.lead()) != horizon)
      continue;
    if (std::isnan(f.temperature) || std::isnan(f.solar_irradiance) || std::isnan(f.wind_speed) ||
        std::isnan(f.wind_direction))
      continue;
    const auto k = nearest(skin, f.valid_at, tol, skin_time);
    if (!k)
      continue;
    const auto &s = skin[*k];
    const double c = model_temp(s.current, f.temperature, f.solar_irradiance, f.wind_speed,
                                f.wind_direction);
    forecast_err.push_back(c - s.skin_temperature);
    csv << fmt::format("{},{}_forecast,{},{},{}\n", format_timestamp(s.timestamp),
                       to_string(horizon), c, s.skin_temperature, c - s.skin_temperature);
  }
  if (measured_err.empty() || forecast_err.empty())
    throw DataError("skin temperature series could not be aligned with the weather series");

  const auto ms = spread_summary(measured_err);
  const auto fs_ = spread_summary(forecast_err);
  const bool forecast_wider = fs_.at("iqr").get<double>() > ms.at("iqr").get<double>();
  json report{{"conductor", spec.name},
              {"horizon", to_string(horizon)},
              {"measured_weather", ms},
              {"forecast_weather", fs_},
              {"larger_spread", forecast_wider ? "forecast_weather" : "measured_weather"}};
  write_json(dir / "skin_report.json", report);
  std::cout << report.dump(2) << '\n';
  return 0;
}

// ----------------------------------------------------------- compare-static

struct StaticArgs {
  std::string assessed;
  std::string static_ampacity;
  std::string load;
  std::string out = ".";
};

struct AssessedRow {
  TimePoint time;
  double nominal, lower, upper;
};

std::vector<std::string> split_csv(const std::string &line) {
  std::vector<std::string> f;
  std::stringstream ss(line);
  for (std::string x; std::getline(ss, x, ',');)
    f.push_back(x);
  return f;
}

double to_double(const std::string &s, std::size_t line) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used == s.size() && std::isfinite(v))
      return v;
  } catch (const std::exception &) {
  }
  throw DataError(fmt::format("malformed number '{}'", s), line);
}

template <typename Fn>
void read_csv(const std::string &path, std::string_view header, std::size_t fields, Fn fn) {
  std::ifstream in(path);
  if (!in)
    throw DataError(fmt::format("cannot open {}", path));
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (!line.empty() && line.back() == '\r')
      line.pop_back();
    if (n == 1) {
      if (line != header)
        throw DataError(fmt::format("{}: expected header '{}'", path, header), 1);
      continue;
    }
    if (line.empty())
      continue;
    const auto f = split_csv(line);
    if (f.size() != fields)
      throw DataError(fmt::format("{}: expected {} fields", path, fields), n);
    fn(f, n);
  }
  if (n == 0)
    throw DataError(fmt::format("{}: missing CSV header", path));
}

int cmd_compare_static(const StaticArgs &a) {
  double static_a = 0.0;
  if (a.static_ampacity == "inf" || a.static_ampacity == "+inf")
    static_a = std::numeric_limits<double>::infinity();
  else
    static_a = to_double(a.static_ampacity, 0);
  if (static_a < 0.0)
    throw UsageError("compare-static: --static must be nonnegative");

  std::vector<AssessedRow> rows;
  read_csv(a.assessed, "time,nominal_a,lower_a,upper_a", 4, [&](const auto &f, std::size_t n) {
    rows.push_back({parse_timestamp(f[0]), to_double(f[1], n), to_double(f[2], n),
                    to_double(f[3], n)});
  });
  if (rows.empty())
    throw DataError("compare-static: empty batch");

  std::map<TimePoint, double> load;
  if (!a.load.empty())
    read_csv(a.load, "timestamp,load_a", 2, [&](const auto &f, std::size_t n) {
      load[parse_timestamp(f[0])] = to_double(f[1], n);
    });

  std::size_t lower_below = 0, nominal_above = 0, load_above = 0, load_matched = 0;
  const auto dir = prepare_out(a.out);
  auto csv = open_out(dir / "static_comparison.csv");
  csv << "time,static_a,nominal_a,lower_a,upper_a,load_a\n";
  for (const auto &r : rows) {
    lower_below += r.lower < static_a ? 1 : 0;
    nominal_above += r.nominal > static_a ? 1 : 0;
    std::string load_field;
    if (auto it = load.find(r.time); it != load.end()) {
      ++load_matched;
      load_above += it->second > r.lower ? 1 : 0;
      load_field = fmt::format("{}", it->second);
    }
    csv << fmt::format("{},{},{},{},{},{}\n", format_timestamp(r.time), static_a, r.nominal,
                       r.lower, r.upper, load_field);
  }
  // Empirical quantiles of each current series.
  auto dist = open_out(dir / "current_distributions.csv");
  dist << "quantile,nominal_a,lower_a,upper_a\n";
  auto sorted = [&](auto member) {
    std::vector<double> v;
    for (const auto &r : rows)
      v.push_back(r.*member);
    std::sort(v.begin(), v.end());
    return v;
  };
  const auto sn = sorted(&AssessedRow::nominal), sl = sorted(&AssessedRow::lower),
             su = sorted(&AssessedRow::upper);
  for (int k = 0; k <= 100; ++k) {
    const auto i = static_cast<std::size_t>(std::lround(k / 100.0 * (rows.size() - 1)));
    dist << fmt::format("{},{},{},{}\n", k / 100.0, sn[i], sl[i], su[i]);
  }

  const double n = static_cast<double>(rows.size());
  json report{{"rows", rows.size()},
              {"static_a", std::isinf(static_a) ? json("inf") : json(static_a)},
              {"lower_below_static", lower_below},
              {"fraction_lower_below_static", lower_below / n},
              {"nominal_above_static", nominal_above},
              {"fraction_nominal_above_static", nominal_above / n}};
  if (!a.load.empty()) {
    report["load_matched"] = load_matched;
    report["load_above_lower"] = load_above;
    report["fraction_load_above_lower"] =
        load_matched ? json(static_cast<double>(load_above) / load_matched) : json(nullptr);
  }
  write_json(dir / "static_report.json", report);
  std::cout << report.dump(2) << '\n';
  return 0;
}

// ------------------------------------------------------------------- serve

struct ServeArgs {
  std::string db;
  std::string listen = "127.0.0.1:8080";
  std::string demo_cadence;
  DemoOptions demo;
  std::string horizon = "short_term";
  std::string out;
};

std::pair<std::string, int> split_listen(const std::string &s) {
  const auto colon = s.rfind(':');
  if (colon == std::string::npos)
    throw UsageError(fmt::format("--listen expects host:port, got '{}'", s));
  int port = 0;
  try {
    port = std::stoi(s.substr(colon + 1));
  } catch (const std::exception &) {
    throw UsageError(fmt::format("--listen: bad port in '{}'", s));
  }
  if (port < 0 || port > 65535)
    throw UsageError(fmt::format("--listen: port out of range in '{}'", s));
  return {s.substr(0, colon), port};
}

int cmd_serve(ServeArgs a) {
  if (a.db.empty())
    throw UsageError("serve: --db is required");
  auto db = std::make_shared<const DistributionDB>(read_db_file(a.db));

  if (!a.demo_cadence.empty()) {
    if (a.demo.conductor.empty())
      throw UsageError("serve --demo-cadence: --conductor is required");
    a.demo.forecast_horizon = parse_horizon(a.horizon);
    std::ifstream in(a.demo_cadence);
    if (!in)
      throw DataError(fmt::format("cannot open {}", a.demo_cadence));
    std::size_t rows = 0;
    if (a.out.empty()) {
      rows = run_demo_cadence(*db, in, a.demo, std::cout);
    } else {
      auto f = open_out(prepare_out(a.out) / "demo_cadence.csv");
      rows = run_demo_cadence(*db, in, a.demo, f);
    }
    std::cerr << fmt::format("demo cadence: {} assessments\n", rows);
    return 0;
  }

  const auto [host, port] = split_listen(a.listen);
  // Signals are taken synchronously by a dedicated thread.
  sigset_t set;
  sigemptyset(&set);
  sigaddset(&set, SIGINT);
  sigaddset(&set, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &set, nullptr);

  AssessService service(db);
  const int bound = service.bind(host, port);
  if (bound < 0)
    throw DataError(fmt::format("cannot bind {}", a.listen));
  std::atomic<bool> stopping{false};
  std::thread waiter([&] {
    int sig = 0;
    sigwait(&set, &sig);
    stopping = true;
    service.stop();
  });
  std::cerr << fmt::format("serving {} entries (db {}) on {}:{}\n", db->entry_count(),
                           hex64(db->checksum), host, bound);
  const bool ok = service.listen();
  if (!stopping)
    kill(getpid(), SIGTERM);
  waiter.join();
  std::cerr << "stopped\n";
  return ok || stopping ? 0 : kExitInternal;
}

} // namespace

int main(int argc, char **argv) {
  CLI::App app{"Probabilistic ampacity assessment toolkit"};
  app.name("ampacity-uq");
  app.require_subcommand(1);
  app.config_formatter(std::make_shared<JsonConfig>());
  app.set_config("--config", "", "JSON run configuration, sections keyed by subcommand");

  GenerateArgs gen;
  auto *g = app.add_subcommand("generate", "Write synthetic measured/forecast weather (and skin temperature)");
  g->add_option("--params", gen.params, "Synthetic model parameter file")->check(CLI::ExistingFile);
  g->add_option("--seed", gen.seed, "Random seed");
  g->add_option("--days", gen.days, "Length of the series in days");
  g->add_option("--start", gen.start, "Start instant (RFC 3339)");
  g->add_option("--shape", gen.shape, "Forecast noise shape")->check(CLI::IsMember({"gaussian", "skewed"}));
  g->add_option("--wind-mean", gen.wind_mean, "Mean wind speed, m/s");
  g->add_option("--wind-sd", gen.wind_sd, "Wind speed standard deviation, m/s");
  g->add_option("--direction-start", gen.direction_start, "Initial wind direction, deg from north");
  g->add_option("--direction-step-sd", gen.direction_step_sd, "Wind direction random-walk step sd, deg");
  g->add_option("--skin-conductor", gen.skin_conductor, "Also write skin temperature for this conductor");
  g->add_option("--catalog", gen.catalog, "Conductor catalog")->check(CLI::ExistingFile);
  g->add_option("--current", gen.skin.mean_current, "Mean line current for skin temperature, A");
  g->add_option("--sensor-bias", gen.skin.sensor_bias, "Skin sensor bias, degC");
  g->add_option("--sensor-noise", gen.skin.sensor_noise_sd, "Skin sensor noise sd, degC");
  g->add_option("--azimuth", gen.skin.line_azimuth, "Line azimuth, deg from north");
  g->add_option("--out", gen.out, "Output directory");

  IngestArgs ing;
  auto *i = app.add_subcommand("ingest", "Align measured and forecast weather and write error samples");
  i->add_option("--measured", ing.measured)->required()->check(CLI::ExistingFile);
  i->add_option("--forecast", ing.forecast)->required()->check(CLI::ExistingFile);
  i->add_option("--tolerance", ing.tolerance_s, "Alignment tolerance, s");
  i->add_option("--out", ing.out);

  FitArgs fit;
  auto *f = app.add_subcommand("fit-errors", "Fit kernel error distributions and test them");
  f->add_option("--measured", fit.measured)->required()->check(CLI::ExistingFile);
  f->add_option("--forecast", fit.forecast)->required()->check(CLI::ExistingFile);
  f->add_option("--seed", fit.seed, "Run seed (recorded for reproducibility)");
  f->add_option("--tolerance", fit.tolerance_s, "Alignment tolerance, s");
  f->add_option("--min-samples", fit.min_samples);
  f->add_option("--alpha", fit.alpha, "KS significance level");
  f->add_option("--density-points", fit.density_points);
  f->add_option("--out", fit.out);

  KsArgs ks;
  auto *k = app.add_subcommand("ks-report", "Rerun KS tests on fitted error distributions");
  k->add_option("--errors", ks.errors)->required()->check(CLI::ExistingFile);
  k->add_option("--alpha", ks.alpha);
  k->add_option("--out", ks.out);

  BuildArgs build;
  auto *b = app.add_subcommand("build-db", "Precompute the normalized ampacity distribution database");
  b->add_option("--errors", build.errors)->required()->check(CLI::ExistingFile);
  b->add_option("--catalog", build.catalog)->check(CLI::ExistingFile);
  b->add_option("--thermal", build.thermal, "Thermal model constants")->check(CLI::ExistingFile);
  b->add_option("--seed", build.seed);
  b->add_option("--samples", build.samples, "Monte Carlo trials per T x S member");
  b->add_option("--tail-probability", build.tail_probability, "Derive the trial count from p");
  b->add_option("--threads", build.threads);
  b->add_option("--horizons", build.horizons);
  b->add_option("--wind-speeds", build.wind_speeds);
  b->add_option("--wind-angles", build.wind_angles);
  b->add_option("--conductors", build.conductors);
  b->add_option("--emissivities", build.emissivities);
  b->add_option("--ts-temperatures", build.ts_temperatures);
  b->add_option("--ts-solars", build.ts_solars);
  b->add_option("--build-time", build.build_time, "Timestamp recorded in the manifest");
  b->add_flag("--quiet", build.quiet);
  b->add_option("--name", build.name, "Database file name");
  b->add_option("--out", build.out);

  std::string info_db;
  auto *d = app.add_subcommand("db-info", "Describe a database file");
  d->add_option("--db", info_db)->required()->check(CLI::ExistingFile);

  ExportArgs exp;
  auto *e = app.add_subcommand("db-export", "Write database entries as CSV");
  e->add_option("--db", exp.db)->required()->check(CLI::ExistingFile);
  e->add_option("--index", exp.indices);
  e->add_flag("--all", exp.all);
  e->add_option("--out", exp.out);

  AssessArgs as;
  auto *s = app.add_subcommand("assess", "Ampacity confidence limits for one query or a batch CSV");
  s->add_option("--db", as.db)->required()->check(CLI::ExistingFile);
  s->add_option("--temperature", as.temperature, "Forecast ambient temperature, degC");
  s->add_option("--solar", as.solar, "Forecast solar irradiance, W/m2");
  s->add_option("--wind-speed", as.wind_speed, "Forecast wind speed, m/s");
  s->add_option("--wind-angle", as.wind_angle, "Wind attack angle, deg");
  s->add_option("--wind-direction", as.wind_direction, "Wind direction, deg from north");
  s->add_option("--azimuth", as.azimuth, "Line azimuth, deg from north");
  s->add_option("--horizon", as.horizon)->check(CLI::IsMember({"nowcast", "short_term", "medium_term"}));
  s->add_option("--conductor", as.conductor);
  s->add_option("--emissivity", as.emissivity);
  s->add_option("--nominal", as.nominal, "Nominal ampacity, A (computed when omitted)");
  s->add_option("--confidence", as.confidence);
  s->add_option("--batch", as.batch, "Weather CSV, one query per row")->check(CLI::ExistingFile);
  s->add_option("--out", as.out);

  SkinArgs sk;
  auto *v = app.add_subcommand("validate-skin-temp", "Compare modelled and measured conductor temperature");
  v->add_option("--skin", sk.skin)->required()->check(CLI::ExistingFile);
  v->add_option("--measured", sk.measured)->required()->check(CLI::ExistingFile);
  v->add_option("--forecast", sk.forecast)->required()->check(CLI::ExistingFile);
  v->add_option("--conductor", sk.conductor)->required();
  v->add_option("--catalog", sk.catalog)->check(CLI::ExistingFile);
  v->add_option("--thermal", sk.thermal)->check(CLI::ExistingFile);
  v->add_option("--azimuth", sk.azimuth);
  v->add_option("--horizon", sk.horizon)->check(CLI::IsMember({"nowcast", "short_term", "medium_term"}));
  v->add_option("--tolerance", sk.tolerance_s);
  v->add_option("--out", sk.out);

  StaticArgs st;
  auto *c = app.add_subcommand("compare-static", "Compare assessed limits against a static rating");
  c->add_option("--assessed", st.assessed, "assess.csv from a batch run")->required()->check(CLI::ExistingFile);
  c->add_option("--static", st.static_ampacity, "Static rating, A ('inf' allowed)")->required();
  c->add_option("--load", st.load, "Measured load CSV (timestamp,load_a)")->check(CLI::ExistingFile);
  c->add_option("--out", st.out);

  ServeArgs sv;
  auto *h = app.add_subcommand("serve", "HTTP assessment service");
  h->add_option("--db", sv.db)->envname("AMPACITY_UQ_DB")->check(CLI::ExistingFile);
  h->add_option("--listen", sv.listen)->envname("AMPACITY_UQ_LISTEN");
  h->add_option("--demo-cadence", sv.demo_cadence, "Replay a weather CSV at the operating cadence")
      ->envname("AMPACITY_UQ_DEMO_CADENCE")
      ->check(CLI::ExistingFile);
  h->add_option("--conductor", sv.demo.conductor);
  h->add_option("--emissivity", sv.demo.emissivity);
  h->add_option("--confidence", sv.demo.confidence);
  h->add_option("--azimuth", sv.demo.line_azimuth);
  h->add_option("--horizon", sv.horizon, "Horizon of the 5-minute forecast queries")
      ->check(CLI::IsMember({"short_term", "medium_term"}));
  h->add_option("--out", sv.out);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp &err) {
    return app.exit(err);
  } catch (const CLI::CallForAllHelp &err) {
    return app.exit(err);
  } catch (const CLI::ParseError &err) {
    app.exit(err);
    return kExitUsage;
  }

  try {
    if (*g)
      return cmd_generate(gen);
    if (*i)
      return cmd_ingest(ing);
    if (*f)
      return cmd_fit_errors(fit);
    if (*k)
      return cmd_ks_report(ks);
    if (*b)
      return cmd_build_db(build);
    if (*d)
      return cmd_db_info(info_db);
    if (*e)
      return cmd_db_export(exp);
    if (*s)
      return cmd_assess(as);
    if (*v)
      return cmd_validate_skin(sk);
    if (*c)
      return cmd_compare_static(st);
    if (*h)
      return cmd_serve(sv);
  } catch (const UsageError &err) {
    std::cerr << "usage error: " << err.what() << '\n';
    return kExitUsage;
  } catch (const DataError &err) {
    if (err.line())
      std::cerr << fmt::format("data error (line {}): {}\n", err.line(), err.what());
    else
      std::cerr << "data error: " << err.what() << '\n';
    return kExitData;
  } catch (const std::exception &err) {
    std::cerr << "internal error: " << err.what() << '\n';
    return kExitInternal;
  }
  return kExitUsage;
}
