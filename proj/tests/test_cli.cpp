#include <doctest.h>

#include <sys/wait.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "ampuq/checksum.hpp"
#include "ampuq/distdb.hpp"
#include "ampuq/uncertainty.hpp"
#include "support.hpp"

using namespace ampuq;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct RunResult {
  int code = -1;
  std::string out;
};

// Runs the CLI; stdout is captured, stderr goes to <dir>/stderr.txt.
RunResult run(const std::string &args, const std::string &dir = test::scratch_dir("cli-run")) {
  const auto cmd = std::string(AMPUQ_CLI_PATH) + " " + args + " 2>" + dir + "/stderr.txt";
  RunResult r;
  FILE *p = popen(cmd.c_str(), "r");
  REQUIRE(p != nullptr);
  char buf[4096];
  for (std::size_t n; (n = fread(buf, 1, sizeof buf, p)) > 0;)
    r.out.append(buf, n);
  const int status = pclose(p);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::string slurp(const fs::path &p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

json read_json(const fs::path &p) { return json::parse(slurp(p)); }

std::vector<std::vector<std::string>> read_rows(const fs::path &p) {
  std::ifstream in(p);
  std::vector<std::vector<std::string>> rows;
  std::string line;
  std::getline(in, line);
  while (std::getline(in, line)) {
    std::vector<std::string> f;
    std::stringstream ss(line);
    for (std::string x; std::getline(ss, x, ',');)
      f.push_back(x);
    rows.push_back(f);
  }
  return rows;
}

constexpr const char *kAxes = "--horizons nowcast short_term --wind-speeds 0.15 4 --wind-angles 90 "
                              "--conductors 243-AL1/39 --emissivities 0.5";

// generate -> fit-errors -> build-db once, shared by the cases below.
struct Pipeline {
  fs::path root;
  fs::path weather, fit, db;

  Pipeline() {
    root = test::scratch_dir("cli-pipeline");
    weather = root / "weather";
    fit = root / "fit";
    const auto d = root.string();
    REQUIRE(run("generate --seed 2 --days 60 --out " + weather.string(), d).code == 0);
    REQUIRE(run("fit-errors --seed 2 --measured " + (weather / "measured.csv").string() +
                    " --forecast " + (weather / "forecast.csv").string() + " --out " + fit.string(),
                d)
                .code == 0);
    REQUIRE(run(build_args(root / "db"), d).code == 0);
    db = root / "db" / "ampacity.dtru";
  }

  std::string build_args(const fs::path &out) const {
    return "build-db --quiet --seed 3 --samples 1000 --threads 2 --build-time 2024-01-01T00:00:00Z "
           "--errors " +
           (fit / "error_distributions.json").string() + " " + kAxes + " --out " + out.string();
  }
};

const Pipeline &pipeline() {
  static const Pipeline p;
  return p;
}

} // namespace

TEST_SUITE("cli") {

TEST_CASE("usage problems exit 1 and data problems exit 2") {
  const auto dir = test::scratch_dir("cli-codes");
  CHECK(run("generate --out " + dir, dir).code == 1);
  CHECK(run("no-such-command", dir).code == 1);
  CHECK(run("", dir).code == 1);
  CHECK(run("assess --db /nonexistent.dtru --conductor x", dir).code == 1);
  CHECK(run("compare-static --assessed /dev/null --static -5", dir).code == 1);

  std::ofstream(dir + "/bad.csv") << "timestamp,temperature_c,solar_wm2,wind_speed_ms,wind_dir_deg\n"
                                  << "2023-01-01T00:00:00Z,20,100,-4,10\n";
  CHECK(run("fit-errors --seed 1 --measured " + dir + "/bad.csv --forecast " + dir + "/bad.csv",
            dir)
            .code == 2);
  CHECK(slurp(dir + "/stderr.txt").find("line 2") != std::string::npos);

  std::ofstream(dir + "/junk.dtru") << "not a database";
  CHECK(run("db-info --db " + dir + "/junk.dtru", dir).code == 2);
}

TEST_CASE("pipeline writes a database that matches the library") {
  const auto &p = pipeline();
  const auto summary = read_json(p.root / "db" / "build_summary.json");
  CHECK(summary.at("entries") == 4);
  CHECK(summary.at("failed_entries") == 0);
  const auto db = read_db_file(p.db.string());
  CHECK(db.entry_count() == 4);
  CHECK(hex64(db.checksum) == summary.at("checksum"));
  CHECK(fs::exists(p.fit / "ks_report.json"));
  CHECK(fs::exists(p.fit / "density_wind_speed_nowcast.csv"));

  const auto info = run("db-info --db " + p.db.string(), p.root.string());
  CHECK(info.code == 0);
  CHECK(info.out.find(hex64(db.checksum)) != std::string::npos);

  const auto r = run("assess --db " + p.db.string() +
                         " --conductor 243-AL1/39 --temperature 25 --solar 300 --wind-speed 1.2 "
                         "--wind-angle 90 --nominal 500 --emissivity 0.5",
                     p.root.string());
  REQUIRE(r.code == 0);
  const auto body = json::parse(r.out);
  UncertaintyQuery q;
  q.ambient = {25.0, 300.0, 1.2, 90.0};
  q.conductor = "243-AL1/39";
  q.emissivity = 0.5;
  q.nominal_ampacity = 500.0;
  const auto lib = assess(db, q);
  CHECK(body.at("lower_a").get<double>() == doctest::Approx(lib.lower).epsilon(1e-12));
  CHECK(body.at("upper_a").get<double>() == doctest::Approx(lib.upper).epsilon(1e-12));
}

TEST_CASE("rebuilding with the same seed is byte-identical") {
  const auto &p = pipeline();
  const auto again = p.root / "db-again";
  REQUIRE(run(p.build_args(again), p.root.string()).code == 0);
  CHECK(slurp(p.db) == slurp(again / "ampacity.dtru"));
}

TEST_CASE("batch assess skips malformed rows and exits 2") {
  const auto &p = pipeline();
  const auto dir = test::scratch_dir("cli-batch");
  {
    std::ofstream f(dir + "/batch.csv");
    f << "timestamp,temperature_c,solar_wm2,wind_speed_ms,wind_dir_deg\n"
      << "2023-06-01T10:00:00Z,25,500,3,0\n"
      << "2023-06-01T10:05:00Z,25,oops,3,0\n"
      << "2023-06-01T10:10:00Z,26,520,2.5,0\n";
  }
  const auto r = run("assess --db " + p.db.string() + " --conductor 243-AL1/39 --azimuth 90 --batch " +
                         dir + "/batch.csv --out " + dir,
                     dir);
  CHECK(r.code == 2);
  const auto rows = read_rows(dir + "/assess.csv");
  REQUIRE(rows.size() == 2);
  CHECK(rows[0][0] == "2023-06-01T10:00:00Z");
  CHECK(rows[1][0] == "2023-06-01T10:10:00Z");
  for (const auto &row : rows)
    CHECK(std::stod(row[2]) <= std::stod(row[3]));
  CHECK(slurp(dir + "/stderr.txt").find(":3:") != std::string::npos);
}

TEST_CASE("calm crosswind day keeps the lower limit above nominal") {
  const auto &p = pipeline();
  const auto dir = test::scratch_dir("cli-calm");
  REQUIRE(run("generate --seed 4 --days 1 --wind-mean 0.05 --wind-sd 0.05 --direction-start 270 "
              "--direction-step-sd 0 --out " +
                  dir,
              dir)
              .code == 0);
  REQUIRE(run("assess --db " + p.db.string() + " --conductor 243-AL1/39 --horizon nowcast "
                  "--azimuth 0 --batch " + dir + "/measured.csv --out " + dir,
              dir)
              .code == 0);
  const auto rows = read_rows(dir + "/assess.csv");
  REQUIRE(rows.size() == 289);
  for (const auto &row : rows)
    CHECK(std::stod(row[2]) >= std::stod(row[1]));
}

TEST_CASE("compare-static counts agree with a recount") {
  const auto &p = pipeline();
  const auto dir = test::scratch_dir("cli-static");
  REQUIRE(run("assess --db " + p.db.string() + " --conductor 243-AL1/39 --azimuth 45 --batch " +
                  (p.weather / "measured.csv").string() + " --out " + dir,
              dir)
              .code == 0);
  const auto rows = read_rows(dir + "/assess.csv");
  REQUIRE(rows.size() > 1000);

  const auto report = [&](const std::string &s) {
    const auto r = run("compare-static --assessed " + dir + "/assess.csv --static " + s +
                           " --out " + dir,
                       dir);
    REQUIRE(r.code == 0);
    return json::parse(r.out);
  };
  CHECK(report("0").at("fraction_lower_below_static") == 0.0);
  CHECK(report("inf").at("fraction_lower_below_static") == 1.0);

  std::vector<double> lower;
  for (const auto &row : rows)
    lower.push_back(std::stod(row[2]));
  std::sort(lower.begin(), lower.end());
  const double s = lower[lower.size() / 3];
  std::size_t below = 0;
  for (double x : lower)
    below += x < s ? 1 : 0;
  std::ostringstream text;
  text.precision(17);
  text << s;
  const auto mid = report(text.str());
  CHECK(mid.at("lower_below_static") == below);
  CHECK(mid.at("rows") == rows.size());
}

TEST_CASE("skin validation recovers a closed loop and a sensor bias") {
  const auto dir = test::scratch_dir("cli-skin");
  const auto gen = [&](const std::string &sub, const std::string &bias) {
    REQUIRE(run("generate --seed 6 --days 20 --skin-conductor 243-AL1/39 --sensor-noise 0 "
                "--azimuth 30 --sensor-bias " +
                    bias + " --out " + dir + "/" + sub,
                dir)
                .code == 0);
    const auto w = dir + "/" + sub;
    const auto r = run("validate-skin-temp --conductor 243-AL1/39 --azimuth 30 --skin " + w +
                           "/skin.csv --measured " + w + "/measured.csv --forecast " + w +
                           "/forecast.csv --horizon short_term --out " + w,
                       dir);
    REQUIRE(r.code == 0);
    return json::parse(r.out);
  };
  const auto exact = gen("exact", "0");
  CHECK(std::abs(exact.at("measured_weather").at("mean").get<double>()) < 1e-3);
  CHECK(exact.at("measured_weather").at("iqr").get<double>() < 1e-3);
  CHECK(exact.at("larger_spread") == "forecast_weather");

  const auto biased = gen("biased", "2");
  CHECK(biased.at("measured_weather").at("mean").get<double>() == doctest::Approx(-2.0).epsilon(1e-3));
}

TEST_CASE("skewed synthetic errors fail the normality test") {
  const auto dir = test::scratch_dir("cli-skewed");
  REQUIRE(run("generate --seed 8 --days 60 --shape skewed --out " + dir, dir).code == 0);
  REQUIRE(run("fit-errors --seed 8 --measured " + dir + "/measured.csv --forecast " + dir +
                  "/forecast.csv --out " + dir,
              dir)
              .code == 0);
  bool seen = false;
  for (const auto &row : read_rows(dir + "/ks_normality.csv"))
    if (row[0] == "temperature" && row[1] == "nowcast") {
      seen = true;
      CHECK(std::stod(row[6]) < 1e-4);
    }
  CHECK(seen);
}

TEST_CASE("generated CSVs read back through ingest") {
  const auto &p = pipeline();
  const auto dir = test::scratch_dir("cli-ingest");
  const auto r = run("ingest --measured " + (p.weather / "measured.csv").string() + " --forecast " +
                         (p.weather / "forecast.csv").string() + " --out " + dir,
                     dir);
  REQUIRE(r.code == 0);
  const auto s = json::parse(r.out);
  CHECK(s.at("measured_rows") == 60 * 288 + 1);
  CHECK(s.at("median_measured_step_s") == 300);
  CHECK(s.at("aligned_pairs").get<std::size_t>() > 0);

  const auto ks = run("ks-report --errors " + (p.fit / "error_distributions.json").string() +
                          " --out " + dir,
                      dir);
  CHECK(ks.code == 0);
  CHECK(slurp(dir + "/ks_horizons.csv") == slurp(p.fit / "ks_horizons.csv"));
}

TEST_CASE("db-export writes one CSV per entry") {
  const auto &p = pipeline();
  const auto dir = test::scratch_dir("cli-export");
  REQUIRE(run("db-export --all --db " + p.db.string() + " --out " + dir, dir).code == 0);
  const auto index = read_rows(dir + "/entries.csv");
  REQUIRE(index.size() == 4);
  const auto db = read_db_file(p.db.string());
  const auto entry = read_rows(dir + "/entry_0003.csv");
  CHECK(entry.size() == db.grid.size());
  CHECK(std::stod(entry.back()[1]) == doctest::Approx(1.0));
  CHECK(run("db-export --db " + p.db.string() + " --index 9 --out " + dir, dir).code == 2);
  CHECK(run("db-export --db " + p.db.string() + " --out " + dir, dir).code == 1);
}

TEST_CASE("JSON run configuration feeds subcommand options") {
  const auto dir = test::scratch_dir("cli-config");
  std::ofstream(dir + "/run.json") << json{{"generate", {{"seed", 5}, {"days", 1}, {"out", dir + "/a"}}}}.dump();
  REQUIRE(run("--config " + dir + "/run.json generate", dir).code == 0);
  REQUIRE(run("generate --seed 5 --days 1 --out " + dir + "/b", dir).code == 0);
  CHECK(slurp(dir + "/a/measured.csv") == slurp(dir + "/b/measured.csv"));
}

} // TEST_SUITE
