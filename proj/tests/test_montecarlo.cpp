#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "ampuq/cdf.hpp"
#include "ampuq/montecarlo.hpp"
#include "support.hpp"

using namespace ampuq;

namespace {

OperatingPoint point(double v, double angle = 90.0, HorizonClass h = HorizonClass::Nowcast,
                     double t = 15.0, double s = 500.0) {
  OperatingPoint op;
  op.horizon = h;
  op.wind_speed = v;
  op.wind_angle = angle;
  op.conductor = "243-AL1/39";
  op.emissivity = 0.5;
  op.temperature = t;
  op.solar = s;
  return op;
}

WeatherSampler sampler_for(const OperatingPoint &op) {
  return make_weather_sampler(test::synthetic_errors().at(op.horizon), op);
}

double sorted_quantile(std::vector<double> xs, double q) {
  std::sort(xs.begin(), xs.end());
  const double pos = q * static_cast<double>(xs.size() - 1);
  const auto lo = static_cast<std::size_t>(pos);
  const auto hi = std::min(lo + 1, xs.size() - 1);
  return xs[lo] + (pos - static_cast<double>(lo)) * (xs[hi] - xs[lo]);
}

double sd_of(const std::vector<double> &xs) {
  double m = 0.0, ss = 0.0;
  for (double x : xs)
    m += x;
  m /= static_cast<double>(xs.size());
  for (double x : xs)
    ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(xs.size() - 1));
}

} // namespace

TEST_SUITE("montecarlo") {

TEST_CASE("required sample count") {
  CHECK(required_samples(0.1) == 10'000);
  CHECK(required_samples(0.01) == 100'000);
  CHECK(required_samples(1.0) == 1'000);
  CHECK(required_samples(0.05) == 20'000);
  CHECK(required_samples(0.003) == 333'334);
  CHECK_THROWS_AS(required_samples(0.0), DataError);
  CHECK_THROWS_AS(required_samples(1.5), DataError);
  CHECK_THROWS_AS(required_samples(-0.1), DataError);
}

TEST_CASE("counter RNG streams are reproducible and distinct") {
  CounterRng a(1), b(1), c(2);
  for (int i = 0; i < 100; ++i) {
    const auto x = a.next();
    CHECK(x == b.next());
    CHECK(x != c.next());
  }
  CHECK(CounterRng::derive(5, 1) != CounterRng::derive(5, 2));
  CHECK(CounterRng::derive(5, 1, 0) != CounterRng::derive(5, 0, 1));
  CounterRng u(3);
  double mean = 0.0;
  for (int i = 0; i < 100000; ++i) {
    const double x = u.uniform();
    CHECK(x >= 0.0);
    CHECK(x < 1.0);
    mean += x;
  }
  CHECK(mean / 100000.0 == doctest::Approx(0.5).epsilon(0.01));
}

TEST_CASE("empirical CDF on the fixed grid") {
  const auto cdf = empirical_cdf_on_grid({0.5, 1.0, 1.0, 2.0});
  CHECK(cdf.size() == kCdfGridPoints);
  CHECK(cdf.upper() == 4.0);
  CHECK(cdf.grid().front() == 0.0);
  CHECK(cdf.values().front() == 0.0);
  CHECK(cdf.values().back() == 1.0);
  CHECK(cdf.evaluate(0.75) == doctest::Approx(0.25).epsilon(0.01));
  CHECK(cdf.evaluate(1.5) == doctest::Approx(0.75).epsilon(0.01));
  CHECK(empirical_cdf_on_grid({1.0, 10.0}).upper() == doctest::Approx(10.5));
  CHECK_THROWS_AS(empirical_cdf_on_grid({}), DataError);
}

TEST_CASE("CDF invariants are enforced on construction") {
  const auto grid = uniform_grid(4.0, 5);
  CHECK_NOTHROW(NormalizedAmpacityCDF(grid, {0.0, 0.2, 0.5, 0.9, 1.0}));
  CHECK_THROWS_AS(NormalizedAmpacityCDF(grid, {0.0, 0.5, 0.4, 0.9, 1.0}), DataError);
  CHECK_THROWS_AS(NormalizedAmpacityCDF(grid, {0.1, 0.2, 0.5, 0.9, 1.0}), DataError);
  CHECK_THROWS_AS(NormalizedAmpacityCDF(grid, {0.0, 0.2, 0.5, 0.9, 0.99}), DataError);
  CHECK_THROWS_AS(NormalizedAmpacityCDF({0.0, 1.0, 1.0, 2.0, 3.0}, {0.0, 0.2, 0.5, 0.9, 1.0}), DataError);
  CHECK_THROWS_AS(NormalizedAmpacityCDF(grid, {0.0, 1.0}), DataError);
}

TEST_CASE("point masses give a step at r = 1") {
  for (double v : {0.0, 0.5, 5.0}) {
    const auto op = point(v, 45.0);
    const auto cdf = mc_normalized_distribution(op, point_sampler(op), test::conductor(), 1000, 1);
    CHECK(cdf.evaluate(0.995) == 0.0);
    CHECK(cdf.evaluate(1.005) == 1.0);
    CHECK(cdf.quantile(0.5) == doctest::Approx(1.0).epsilon(0.005));
    for (double r : mc_normalized_samples(op, point_sampler(op), test::conductor(), 100, 1))
      CHECK(r == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("still air with wind errors truncated at zero never lowers the ampacity") {
  for (auto h : kAllHorizons)
    for (double angle : {0.0, 45.0, 90.0}) {
      auto op = point(0.0, angle, h);
      auto sampler = sampler_for(op);
      sampler.temperature = TruncatedOffsetDistribution::point(op.temperature);
      sampler.solar = TruncatedOffsetDistribution::point(op.solar);
      const auto rs = mc_normalized_samples(op, sampler, test::conductor(), 10'000, 3);
      CHECK(*std::min_element(rs.begin(), rs.end()) >= 1.0 - 1e-12);
      const auto cdf = empirical_cdf_on_grid(rs);
      CHECK(cdf.quantile(0.0) >= 1.0 - 1.0 / 256.0);
    }
}

TEST_CASE("grid quantiles match the raw-sample quantiles") {
  const std::size_t m = 10'000;
  for (double v : {0.5, 2.0, 10.0}) {
    const auto op = point(v, 45.0, HorizonClass::ShortTerm);
    const auto raw = mc_normalized_samples(op, sampler_for(op), test::conductor(), m, 21);
    const auto cdf = mc_normalized_distribution(op, sampler_for(op), test::conductor(), m, 21);
    CHECK(cdf.sample_count == m);
    for (double q : {0.005, 0.025, 0.05, 0.25, 0.5, 0.75, 0.95, 0.975, 0.995}) {
      // Compare in probability: where the grid quantile lands in the raw ECDF.
      const double r = cdf.quantile(q);
      const double ecdf = static_cast<double>(std::count_if(raw.begin(), raw.end(),
                                                            [&](double x) { return x <= r; })) / m;
      CHECK(std::abs(ecdf - q) <= 2.0 / std::sqrt(static_cast<double>(m)));
      CHECK(std::abs(r - sorted_quantile(raw, q)) <= cdf.upper() / 1023.0 + 1e-12);
    }
  }
}

TEST_CASE("zero nominal ampacity cannot be normalized") {
  auto op = point(0.0, 0.0, HorizonClass::Nowcast, 85.0, 1200.0);
  CHECK_THROWS_AS(mc_normalized_distribution(op, point_sampler(op), test::conductor(), 1000, 1),
                  DegeneratePointError);
}

TEST_CASE("same seed reproduces the samples exactly") {
  const auto op = point(2.0, 45.0, HorizonClass::MediumTerm);
  const auto a = mc_normalized_samples(op, sampler_for(op), test::conductor(), 2000, 77);
  const auto b = mc_normalized_samples(op, sampler_for(op), test::conductor(), 2000, 77);
  const auto c = mc_normalized_samples(op, sampler_for(op), test::conductor(), 2000, 78);
  CHECK(a == b);
  CHECK(a != c);
}

TEST_CASE("night operating points sample solar as exactly zero") {
  const auto op = point(2.0, 45.0, HorizonClass::ShortTerm, 10.0, 0.0);
  const auto s = sampler_for(op);
  CHECK(s.solar.is_point());
  CHECK(s.solar.center() == 0.0);
  CHECK_FALSE(sampler_for(point(2.0, 45.0, HorizonClass::ShortTerm, 10.0, 5.0)).solar.is_point());
}

TEST_CASE("single-member averaging equals the direct distribution") {
  const auto op = point(2.0, 45.0);
  const auto &errs = test::synthetic_errors().at(op.horizon);
  const auto avg = average_over_ts_grid(op, {15.0}, {500.0}, errs, test::conductor(), 2000, 9);
  const auto direct = mc_normalized_distribution(op, sampler_for(op), test::conductor(), 2000,
                                                 CounterRng::derive(9, 0));
  CHECK(avg.grid() == direct.grid());
  CHECK(avg.values() == direct.values());
}

TEST_CASE("two identical members average to either") {
  const auto op = point(2.0, 45.0);
  const auto &errs = test::synthetic_errors().at(op.horizon);
  const auto one = average_over_ts_grid(op, {15.0}, {500.0}, errs, test::conductor(), 2000, 9);
  // Same (T, S) twice: members differ only by seed, so compare in distribution.
  const auto two = average_over_ts_grid(op, {15.0, 15.0}, {500.0}, errs, test::conductor(), 20'000, 9);
  const auto ref = average_over_ts_grid(op, {15.0}, {500.0}, errs, test::conductor(), 40'000, 10);
  for (double q : {0.05, 0.5, 0.95})
    CHECK(two.quantile(q) == doctest::Approx(ref.quantile(q)).epsilon(0.01));
  CHECK(one.values().back() == 1.0);
}

TEST_CASE("the 3 x 3 average lies inside the member envelope") {
  const auto op = point(2.0, 45.0, HorizonClass::ShortTerm);
  const auto &errs = test::synthetic_errors().at(op.horizon);
  const auto avg = average_over_ts_grid(op, kDefaultTemperatureGrid, kDefaultSolarGrid, errs,
                                        test::conductor(), 2000, 12);
  CHECK(avg.sample_count == 18'000);
  std::vector<NormalizedAmpacityCDF> members;
  std::uint64_t m = 0;
  for (double t : kDefaultTemperatureGrid)
    for (double s : kDefaultSolarGrid) {
      auto p = op;
      p.temperature = t;
      p.solar = s;
      members.push_back(mc_normalized_distribution(p, make_weather_sampler(errs, p),
                                                   test::conductor(), 2000,
                                                   CounterRng::derive(12, m++)));
    }
  for (std::size_t i = 0; i < avg.size(); ++i) {
    double lo = 1.0, hi = 0.0;
    for (const auto &mem : members) {
      lo = std::min(lo, mem.evaluate(avg.grid()[i]));
      hi = std::max(hi, mem.evaluate(avg.grid()[i]));
    }
    CHECK(avg.values()[i] >= lo - 1e-12);
    CHECK(avg.values()[i] <= hi + 1e-12);
  }
}

TEST_CASE("normalized samples are invariant to a uniform resistance rescaling") {
  CounterRng rng(60);
  for (int n = 0; n < 10; ++n) {
    const auto op = point(rng.uniform() * 12.0, rng.uniform() * 90.0, HorizonClass::ShortTerm,
                          rng.uniform() * 30.0, 100.0 + rng.uniform() * 800.0);
    auto scaled = test::conductor();
    scaled.ac_resistance_at_20c *= 0.25 + rng.uniform() * 4.0;
    const auto a = mc_normalized_samples(op, sampler_for(op), test::conductor(), 500, n);
    const auto b = mc_normalized_samples(op, sampler_for(op), scaled, 500, n);
    for (std::size_t i = 0; i < a.size(); ++i)
      CHECK(b[i] == doctest::Approx(a[i]).epsilon(1e-10));
  }
}

TEST_CASE("more samples shrink the spread of the 5 % quantile over seeds") {
  const auto op = point(2.0, 45.0, HorizonClass::ShortTerm);
  std::vector<double> small, large;
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    small.push_back(sorted_quantile(
        mc_normalized_samples(op, sampler_for(op), test::conductor(), 1000, 500 + seed), 0.05));
    large.push_back(sorted_quantile(
        mc_normalized_samples(op, sampler_for(op), test::conductor(), 10'000, 900 + seed), 0.05));
  }
  CHECK(sd_of(large) < sd_of(small));
}

TEST_CASE("the two aluminium conductors agree in normalized form at high wind") {
  // Each comparison is a test at alpha = 0.01, so single seeds reject at
  // that rate under the null; require 9 of 10 seeds per combination.
  for (auto h : kAllHorizons)
    for (double v : {5.0, 10.0, 15.0})
      for (double angle : {0.0, 45.0, 90.0}) {
        auto op = point(v, angle, h);
        const auto sampler = sampler_for(op);
        int accepted = 0;
        for (std::uint64_t seed = 0; seed < 10; ++seed) {
          const auto a = mc_normalized_samples(op, sampler, test::conductor("243-AL1/39"), 10'000,
                                               CounterRng::derive(seed, 1));
          const auto b = mc_normalized_samples(op, sampler, test::conductor("490-AL1/64"), 10'000,
                                               CounterRng::derive(seed, 2));
          accepted += ks_test_two_sample(a, b, 0.01).rejected ? 0 : 1;
        }
        CAPTURE(v);
        CAPTURE(angle);
        CHECK(accepted >= 9);
      }
}

TEST_CASE("the two aluminium conductors differ in shape at low wind") {
  auto op = point(0.5, 90.0, HorizonClass::Nowcast);
  const auto sampler = sampler_for(op);
  const auto a = mc_normalized_samples(op, sampler, test::conductor("243-AL1/39"), 10'000, 1);
  const auto b = mc_normalized_samples(op, sampler, test::conductor("490-AL1/64"), 10'000, 2);
  CHECK(ks_test_two_sample(a, b, 0.01).rejected);
}

TEST_CASE("database axes and entry count") {
  auto axes = DatabaseAxes::defaults({"243-AL1/39", "490-AL1/64", "243-ZTAL/39-HACIN",
                                      "149-AL1/24", "149-AL1/24 HACIN", "Cu80"});
  CHECK(axes.entry_count() == 972);
  CHECK(axes.wind_speeds == std::vector<double>{0.15, 0.5, 2.0, 5.0, 10.0, 15.0});
  CHECK(axes.wind_angles == std::vector<double>{0.0, 45.0, 90.0});
  CHECK(axes.emissivities == std::vector<double>{0.2, 0.5, 0.9});
  for (std::size_t i = 0; i < axes.entry_count(); i += 7)
    CHECK(axes.index(axes.coord(i)) == i);
  const auto c = axes.coord(axes.index({2, 3, 1, 4, 2}));
  CHECK(c.horizon == 2);
  CHECK(c.wind_speed == 3);
  CHECK(c.wind_angle == 1);
  CHECK(c.conductor == 4);
  CHECK(c.emissivity == 2);
  CHECK(axes.index({0, 0, 0, 0, 1}) == 1);

  axes.wind_speeds = {2.0, 1.0};
  CHECK_THROWS_AS(axes.validate(), DataError);
}

TEST_CASE("one value per axis builds one entry") {
  DatabaseAxes axes;
  axes.horizons = {HorizonClass::ShortTerm};
  axes.wind_speeds = {2.0};
  axes.wind_angles = {45.0};
  axes.conductors = {"243-AL1/39"};
  axes.emissivities = {0.5};
  BuildOptions opts;
  opts.samples = 1000;
  opts.seed = 3;
  opts.threads = 1;
  const auto res = build_database(axes, test::synthetic_errors(), test::catalog(), opts);
  CHECK(res.db.entry_count() == 1);
  CHECK(res.failures.empty());
  CHECK_NOTHROW(res.db.validate());
  CHECK(res.db.manifest.at("samples_per_member") == 1000);
}

TEST_CASE("builds are independent of thread count") {
  DatabaseAxes axes;
  axes.horizons = {HorizonClass::Nowcast, HorizonClass::MediumTerm};
  axes.wind_speeds = {0.5, 5.0};
  axes.wind_angles = {90.0};
  axes.conductors = {"243-AL1/39", "Cu80"};
  axes.emissivities = {0.5};
  BuildOptions opts;
  opts.samples = 1000;
  opts.seed = 8;
  opts.temperatures = {15.0};
  opts.solars = {500.0};
  opts.threads = 1;
  auto a = build_database(axes, test::synthetic_errors(), test::catalog(), opts).db;
  opts.threads = 3;
  auto b = build_database(axes, test::synthetic_errors(), test::catalog(), opts).db;
  CHECK(serialize_db(a) == serialize_db(b));
}

TEST_CASE("failed entries are recorded and the build continues") {
  DatabaseAxes axes;
  axes.horizons = {HorizonClass::Nowcast};
  axes.wind_speeds = {0.15, 2.0};
  axes.wind_angles = {0.0};
  axes.conductors = {"243-AL1/39"};
  axes.emissivities = {0.5};
  BuildOptions opts;
  opts.samples = 1000;
  opts.seed = 2;
  opts.temperatures = {90.0};
  opts.solars = {1000.0};
  opts.threads = 1;
  std::size_t calls = 0;
  opts.progress = [&](std::size_t, std::size_t total) {
    ++calls;
    CHECK(total == 2);
  };
  const auto res = build_database(axes, test::synthetic_errors(), test::catalog(), opts);
  CHECK(calls == 2);
  CHECK(res.failures.size() == 2);
  CHECK(res.db.manifest.at("failed_entries").size() == 2);
  CHECK(res.db.entry_cdf(0).quantile(0.5) == doctest::Approx(1.0).epsilon(0.01));
}

TEST_CASE("missing horizon or conductor stops the build up front") {
  DatabaseAxes axes;
  axes.horizons = {HorizonClass::Nowcast};
  axes.wind_speeds = {2.0};
  axes.wind_angles = {0.0};
  axes.conductors = {"nope"};
  axes.emissivities = {0.5};
  BuildOptions opts;
  opts.samples = 1000;
  CHECK_THROWS_AS(build_database(axes, test::synthetic_errors(), test::catalog(), opts),
                  UnknownConductorError);
  opts.samples = 10;
  axes.conductors = {"Cu80"};
  CHECK_THROWS_AS(build_database(axes, test::synthetic_errors(), test::catalog(), opts), DataError);
}

} // TEST_SUITE
