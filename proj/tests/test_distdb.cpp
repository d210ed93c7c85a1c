#include <doctest.h>

#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "ampuq/checksum.hpp"
#include "ampuq/distdb.hpp"
#include "ampuq/uncertainty.hpp"
#include "support.hpp"

using namespace ampuq;

namespace {

const std::vector<std::string> kSixConductors{"243-AL1/39", "490-AL1/64", "243-ZTAL/39-HACIN",
                                              "149-AL1/24", "149-AL1/24 HACIN", "Cu80"};

DatabaseAxes two_speed_axes() {
  DatabaseAxes axes;
  axes.horizons = {HorizonClass::Nowcast, HorizonClass::MediumTerm};
  axes.wind_speeds = {5.0, 15.0};
  axes.wind_angles = {0.0, 45.0, 90.0};
  axes.conductors = {"243-AL1/39", "Cu80"};
  axes.emissivities = {0.2, 0.5, 0.9};
  return axes;
}

void put_u64(std::vector<std::uint8_t> &bytes, std::size_t at, std::uint64_t v) {
  for (int i = 0; i < 8; ++i)
    bytes[at + i] = static_cast<std::uint8_t>(v >> (8 * i));
}

// Recomputes the trailer so only the payload change is visible to the reader.
void reseal(std::vector<std::uint8_t> &bytes) {
  const auto body = std::span<const std::uint8_t>(bytes).first(bytes.size() - 8);
  put_u64(bytes, bytes.size() - 8, crc64(body));
}

// Axis block size from the format: tag u8, length u16, then f64 values or
// u16-prefixed names.
std::size_t axes_block_bytes(const DatabaseAxes &a) {
  std::size_t n = 0;
  auto named = [&](const std::vector<std::string> &names) {
    n += 3;
    for (const auto &s : names)
      n += 2 + s.size();
  };
  auto numeric = [&](const std::vector<double> &v) { n += 3 + 8 * v.size(); };
  std::vector<std::string> horizons;
  for (auto h : a.horizons)
    horizons.emplace_back(to_string(h));
  named(horizons);
  numeric(a.wind_speeds);
  numeric(a.wind_angles);
  named(a.conductors);
  numeric(a.emissivities);
  return n;
}

double max_abs_diff(const NormalizedAmpacityCDF &a, const NormalizedAmpacityCDF &b) {
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    d = std::max(d, std::abs(a.values()[i] - b.values()[i]));
  return d;
}

} // namespace

TEST_SUITE("distdb") {

TEST_CASE("CRC-64/XZ check value") {
  CHECK(crc64(std::string("123456789")) == 0x995DC9BBDF1939FAULL);
  CHECK(crc64(std::string("")) == 0);
  const std::string s = "hello, world";
  const auto bytes = std::span(reinterpret_cast<const std::uint8_t *>(s.data()), s.size());
  CHECK(crc64(bytes.subspan(5), crc64(bytes.first(5))) == crc64(s));
  CHECK(hex64(0xABCull) == "0000000000000abc");
}

TEST_CASE("write then read gives back the same database") {
  auto db = test::small_db();
  std::stringstream buf;
  const auto n = write_db(db, buf);
  const auto text = buf.str();
  CHECK(n == text.size());
  std::istringstream in(text);
  const auto back = read_db(in);
  CHECK(back.axes == db.axes);
  CHECK(back.grid == db.grid);
  CHECK(back.entries == db.entries);
  CHECK(back.manifest == db.manifest);
  CHECK(back.checksum == db.checksum);
  CHECK(serialize_db(back) == serialize_db(db));
}

TEST_CASE("writing twice is byte-identical") {
  const auto &db = test::small_db();
  CHECK(serialize_db(db) == serialize_db(db));
  const auto dir = test::scratch_dir("distdb-write");
  auto copy = db;
  write_db_file(copy, dir + "/a.dtru");
  write_db_file(copy, dir + "/b.dtru");
  std::ifstream a(dir + "/a.dtru", std::ios::binary), b(dir + "/b.dtru", std::ios::binary);
  std::stringstream sa, sb;
  sa << a.rdbuf();
  sb << b.rdbuf();
  CHECK(sa.str() == sb.str());
  CHECK(read_db_file(dir + "/a.dtru").entry_count() == db.entry_count());
}

TEST_CASE("header layout") {
  const auto bytes = serialize_db(test::small_db());
  CHECK(std::memcmp(bytes.data(), "DTRU", 4) == 0);
  CHECK((bytes[4] | bytes[5] << 8) == kDbVersion);
  CHECK((bytes[6] | bytes[7] << 8) == kDbFlagFloat32);
  const std::uint32_t manifest_len = bytes[8] | bytes[9] << 8 | bytes[10] << 16 | bytes[11] << 24;
  const auto manifest = nlohmann::json::parse(bytes.begin() + 12, bytes.begin() + 12 + manifest_len);
  CHECK(manifest == test::small_db().manifest);
}

TEST_CASE("972-entry file size matches the format arithmetic") {
  const auto axes = DatabaseAxes::defaults(kSixConductors);
  auto db = test::synthetic_uniform_db(axes);
  CHECK(db.entry_count() == 972);
  const auto size = serialize_db(db).size();
  const double expected = 16.0 + static_cast<double>(axes_block_bytes(axes)) + 972.0 * 1024.0 * 4.0;
  CHECK(std::abs(static_cast<double>(size) - expected) <= 0.1 * expected);
  std::stringstream buf;
  write_db(db, buf);
  CHECK(read_db(buf).entry_count() == 972);
}

TEST_CASE("each corruption has its own error") {
  const auto good = serialize_db(test::small_db());

  auto bad = good;
  bad[0] = 'X';
  CHECK_THROWS_AS(read_db(bad), BadMagicError);

  bad = good;
  bad[4] = 2;
  CHECK_THROWS_AS(read_db(bad), UnsupportedVersionError);

  bad = good;
  bad[bad.size() - 100] ^= 0x01; // inside the entry block
  CHECK_THROWS_AS(read_db(bad), ChecksumError);

  bad = good;
  bad.resize(good.size() - 1000);
  CHECK_THROWS_AS(read_db(bad), DbError);

  bad = good;
  bad[6] = 0;
  reseal(bad);
  CHECK_THROWS_AS(read_db(bad), DbFormatError);

  // A decreasing CDF with a valid checksum.
  bad = good;
  const std::size_t last_entry_value = bad.size() - 8 - 4;
  const float half = 0.5f;
  std::memcpy(&bad[last_entry_value], &half, 4);
  reseal(bad);
  CHECK_THROWS_AS(read_db(bad), InvariantError);

  CHECK_THROWS_AS(read_db(std::vector<std::uint8_t>{}), BadMagicError);
}

TEST_CASE("random corruptions are always rejected") {
  const auto good = serialize_db(test::small_db());
  CounterRng rng(70);
  for (int trial = 0; trial < 300; ++trial) {
    auto bad = good;
    const int mode = trial % 3;
    if (mode == 0) {
      bad.resize(static_cast<std::size_t>(rng.uniform() * static_cast<double>(good.size())));
    } else if (mode == 1) {
      const auto at = static_cast<std::size_t>(rng.uniform() * static_cast<double>(good.size()));
      bad[at] ^= static_cast<std::uint8_t>(1u << (rng.next() % 8));
    } else {
      for (int k = 0; k < 5; ++k)
        bad[static_cast<std::size_t>(rng.uniform() * static_cast<double>(good.size()))] =
            static_cast<std::uint8_t>(rng.next());
      if (bad == good)
        continue;
    }
    CHECK_THROWS_AS(read_db(bad), DbError);
  }
}

TEST_CASE("locate at a node returns that node alone") {
  const auto &db = test::small_db();
  for (std::size_t i = 0; i < db.entry_count(); ++i) {
    const auto c = db.axes.coord(i);
    const LocateQuery q{db.axes.horizons[c.horizon], db.axes.wind_speeds[c.wind_speed],
                        db.axes.wind_angles[c.wind_angle], db.axes.conductors[c.conductor],
                        db.axes.emissivities[c.emissivity]};
    const auto cell = locate(db, q);
    REQUIRE(cell.nodes.size() == 1);
    CHECK(cell.nodes[0].first == i);
    CHECK(cell.nodes[0].second == 1.0);
    CHECK_FALSE(cell.clamped.any());
  }
}

TEST_CASE("wind speed interpolates on a log scale") {
  const auto db = test::synthetic_uniform_db(two_speed_axes());
  LocateQuery q{HorizonClass::Nowcast, 10.0, 0.0, "243-AL1/39", 0.2};
  auto cell = locate(db, q);
  REQUIRE(cell.nodes.size() == 2);
  const double t = std::log(2.0) / std::log(3.0);
  CHECK(cell.nodes[0].second == doctest::Approx(1.0 - t));
  CHECK(cell.nodes[1].second == doctest::Approx(t));

  // The log-scale midpoint of 5 and 15.
  q.wind_speed = std::sqrt(75.0);
  cell = locate(db, q);
  REQUIRE(cell.nodes.size() == 2);
  CHECK(cell.nodes[0].second == doctest::Approx(0.5));
  CHECK(cell.nodes[1].second == doctest::Approx(0.5));
}

TEST_CASE("out-of-range coordinates clamp and raise flags") {
  const auto db = test::synthetic_uniform_db(two_speed_axes());
  LocateQuery q{HorizonClass::Nowcast, 20.0, 45.0, "243-AL1/39", 0.5};
  auto cell = locate(db, q);
  REQUIRE(cell.nodes.size() == 1);
  CHECK(cell.clamped.wind_speed);
  CHECK_FALSE(cell.clamped.wind_angle);
  CHECK(db.axes.coord(cell.nodes[0].first).wind_speed == 1);

  q.wind_speed = 0.0;
  q.emissivity = 1.0;
  cell = locate(db, q);
  CHECK(cell.clamped.wind_speed);
  CHECK(cell.clamped.emissivity);
  CHECK(db.axes.coord(cell.nodes[0].first).wind_speed == 0);
  CHECK(db.axes.coord(cell.nodes[0].first).emissivity == 2);
}

TEST_CASE("categorical keys must match exactly") {
  const auto db = test::synthetic_uniform_db(two_speed_axes());
  CHECK_THROWS_AS(locate(db, {HorizonClass::Nowcast, 5.0, 0.0, "490-AL1/64", 0.5}), UnknownConductorError);
  CHECK_THROWS_AS(locate(db, {HorizonClass::ShortTerm, 5.0, 0.0, "Cu80", 0.5}), MissingHorizonError);
  CHECK_THROWS_AS(locate(db, {HorizonClass::Nowcast, NAN, 0.0, "Cu80", 0.5}), DataError);
}

TEST_CASE("locate weights form a partition of unity") {
  const auto db = test::synthetic_uniform_db(DatabaseAxes::defaults(kSixConductors));
  CounterRng rng(71);
  for (int n = 0; n < 2000; ++n) {
    LocateQuery q;
    q.horizon = kAllHorizons[rng.next() % 3];
    q.wind_speed = rng.uniform() * 18.0;
    q.wind_angle = rng.uniform() * 90.0;
    q.conductor = kSixConductors[rng.next() % 6];
    q.emissivity = rng.uniform();
    const auto cell = locate(db, q);
    CHECK(cell.nodes.size() >= 1);
    CHECK(cell.nodes.size() <= 8);
    double sum = 0.0;
    for (const auto &[i, w] : cell.nodes) {
      CHECK(w >= 0.0);
      CHECK(i < db.entry_count());
      const auto c = db.axes.coord(i);
      CHECK(db.axes.horizons[c.horizon] == q.horizon);
      CHECK(db.axes.conductors[c.conductor] == q.conductor);
      sum += w;
    }
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("interpolated CDFs move continuously with the coordinates") {
  const auto &db = test::small_db();
  CounterRng rng(72);
  for (int n = 0; n < 300; ++n) {
    LocateQuery q{kAllHorizons[rng.next() % 2], 0.5 + rng.uniform() * 4.5, rng.uniform() * 90.0,
                  "243-AL1/39", 0.2 + rng.uniform() * 0.7};
    // Hit node coordinates too, where the cell changes shape.
    if (n % 5 == 0)
      q.wind_speed = 2.0;
    if (n % 7 == 0)
      q.wind_angle = 0.0;
    const auto base = interpolate_cdf(db, q);
    for (int var = 0; var < 3; ++var)
      for (double d : {-1e-6, 1e-6}) {
        auto p = q;
        (var == 0 ? p.wind_speed : var == 1 ? p.wind_angle : p.emissivity) += d;
        CHECK(max_abs_diff(base, interpolate_cdf(db, p)) < 1e-5);
      }
  }
}

TEST_CASE("axes validation") {
  auto axes = two_speed_axes();
  CHECK_NOTHROW(axes.validate());
  axes.conductors = {"Cu80", "Cu80"};
  CHECK_THROWS_AS(axes.validate(), DataError);
  axes = two_speed_axes();
  axes.emissivities = {};
  CHECK_THROWS_AS(axes.validate(), DataError);
  axes = two_speed_axes();
  axes.wind_angles = {0.0, 120.0};
  CHECK_THROWS_AS(axes.validate(), DataError);
  axes = two_speed_axes();
  CHECK(axes_from_json(to_json(axes), DatabaseAxes{}) == axes);
}

TEST_CASE("info and entry export") {
  const auto &db = test::small_db();
  const auto info = db_info(db);
  CHECK(info.find("entries: 24") != std::string::npos);
  CHECK(info.find(hex64(db.checksum)) != std::string::npos);
  std::ostringstream csv;
  export_entry_csv(db, 3, csv);
  std::istringstream in(csv.str());
  std::string line;
  std::getline(in, line);
  CHECK(line == "r,cdf");
  std::size_t rows = 0;
  double last = -1.0;
  while (std::getline(in, line)) {
    const double c = std::stod(line.substr(line.find(',') + 1));
    CHECK(c >= last);
    last = c;
    ++rows;
  }
  CHECK(rows == db.grid.size());
  CHECK(last == 1.0);
  std::ostringstream sink;
  CHECK_THROWS_AS(export_entry_csv(db, 24, sink), DataError);
}

} // TEST_SUITE
