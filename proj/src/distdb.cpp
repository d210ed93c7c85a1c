#include "ampuq/distdb.hpp"
#include "ampuq/thermal.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <set>
#include <sstream>

#include <fmt/format.h>

#include "ampuq/checksum.hpp"

namespace ampuq {

using nlohmann::json;

namespace {

enum AxisTag : std::uint8_t { kNumericAxis = 0, kNamedAxis = 1 };

class ByteWriter {
public:
  void u8(std::uint8_t v) { buf_.push_back(v); }
  void u16(std::uint16_t v) { put_le(v, 2); }
  void u32(std::uint32_t v) { put_le(v, 4); }
  void u64(std::uint64_t v) { put_le(v, 8); }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void raw(const void *p, std::size_t n) {
    const auto *b = static_cast<const std::uint8_t *>(p);
    buf_.insert(buf_.end(), b, b + n);
  }
  std::vector<std::uint8_t> &bytes() { return buf_; }

private:
  void put_le(std::uint64_t v, int n) {
    for (int i = 0; i < n; ++i)
      buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  std::vector<std::uint8_t> buf_;
};

class ByteReader {
public:
  explicit ByteReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  std::uint8_t u8() { return static_cast<std::uint8_t>(get_le(1)); }
  std::uint16_t u16() { return static_cast<std::uint16_t>(get_le(2)); }
  std::uint32_t u32() { return static_cast<std::uint32_t>(get_le(4)); }
  std::uint64_t u64() { return get_le(8); }
  float f32() { return std::bit_cast<float>(u32()); }
  double f64() { return std::bit_cast<double>(u64()); }
  std::string str(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char *>(bytes_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  std::size_t remaining() const { return bytes_.size() - pos_; }

private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n)
      throw DbFormatError("database file is truncated");
  }
  std::uint64_t get_le(int n) {
    need(static_cast<std::size_t>(n));
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i)
      v |= static_cast<std::uint64_t>(bytes_[pos_ + i]) << (8 * i);
    pos_ += static_cast<std::size_t>(n);
    return v;
  }
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

void write_numeric_axis(ByteWriter &w, const std::vector<double> &values) {
  w.u8(kNumericAxis);
  w.u16(static_cast<std::uint16_t>(values.size()));
  for (double v : values)
    w.f64(v);
}

void write_named_axis(ByteWriter &w, const std::vector<std::string> &names) {
  w.u8(kNamedAxis);
  w.u16(static_cast<std::uint16_t>(names.size()));
  for (const auto &n : names) {
    w.u16(static_cast<std::uint16_t>(n.size()));
    w.raw(n.data(), n.size());
  }
}

std::vector<double> read_numeric_axis(ByteReader &r, const char *name) {
  if (r.u8() != kNumericAxis)
    throw DbFormatError(fmt::format("axis '{}' has the wrong type tag", name));
  std::vector<double> out(r.u16());
  for (auto &v : out)
    v = r.f64();
  return out;
}

std::vector<std::string> read_named_axis(ByteReader &r, const char *name) {
  if (r.u8() != kNamedAxis)
    throw DbFormatError(fmt::format("axis '{}' has the wrong type tag", name));
  std::vector<std::string> out(r.u16());
  for (auto &s : out)
    s = r.str(r.u16());
  return out;
}

void check_increasing(const std::vector<double> &axis, const char *name) {
  if (axis.empty())
    throw DataError(fmt::format("axis '{}' is empty", name));
  for (std::size_t i = 0; i < axis.size(); ++i) {
    if (!std::isfinite(axis[i]))
      throw DataError(fmt::format("axis '{}' has a non-finite value", name));
    if (i > 0 && !(axis[i] > axis[i - 1]))
      throw DataError(fmt::format("axis '{}' is not strictly increasing", name));
  }
}

template <typename T> void check_unique(const std::vector<T> &axis, const char *name) {
  if (axis.empty())
    throw DataError(fmt::format("axis '{}' is empty", name));
  std::set<T> seen(axis.begin(), axis.end());
  if (seen.size() != axis.size())
    throw DataError(fmt::format("axis '{}' has duplicates", name));
}

struct AxisBracket {
  std::size_t lo = 0;
  std::size_t hi = 0;
  double t = 0.0; // weight of hi
  bool clamped = false;
};

AxisBracket bracket(const std::vector<double> &axis, double x, bool log_scale) {
  AxisBracket b;
  if (axis.size() == 1) {
    b.clamped = x != axis[0];
    return b;
  }
  if (x <= axis.front()) {
    b.clamped = x < axis.front();
    return b;
  }
  if (x >= axis.back()) {
    b.lo = b.hi = axis.size() - 1;
    b.clamped = x > axis.back();
    return b;
  }
  const auto it = std::upper_bound(axis.begin(), axis.end(), x);
  b.hi = static_cast<std::size_t>(it - axis.begin());
  b.lo = b.hi - 1;
  if (axis[b.lo] == x) {
    b.hi = b.lo;
    return b;
  }
  const double a0 = log_scale ? std::log(axis[b.lo]) : axis[b.lo];
  const double a1 = log_scale ? std::log(axis[b.hi]) : axis[b.hi];
  const double xx = log_scale ? std::log(x) : x;
  b.t = (xx - a0) / (a1 - a0);
  return b;
}

} // namespace

DatabaseAxes DatabaseAxes::defaults(std::vector<std::string> conductors) {
  DatabaseAxes a;
  a.horizons = {HorizonClass::Nowcast, HorizonClass::ShortTerm, HorizonClass::MediumTerm};
  a.wind_speeds = {0.15, 0.5, 2.0, 5.0, 10.0, 15.0};
  a.wind_angles = {0.0, 45.0, 90.0};
  a.conductors = std::move(conductors);
  a.emissivities = {0.2, 0.5, 0.9};
  return a;
}

void DatabaseAxes::validate() const {
  check_unique(horizons, "horizons");
  check_increasing(wind_speeds, "wind_speeds");
  if (wind_speeds.front() <= 0.0)
    throw DataError("axis 'wind_speeds' must be positive (log-scale interpolation)");
  check_increasing(wind_angles, "wind_angles");
  if (wind_angles.front() < 0.0 || wind_angles.back() > 90.0)
    throw DataError("axis 'wind_angles' must lie in [0, 90]");
  check_unique(conductors, "conductors");
  check_increasing(emissivities, "emissivities");
  if (emissivities.front() < 0.0 || emissivities.back() > 1.0)
    throw DataError("axis 'emissivities' must lie in [0, 1]");
  for (const auto &c : conductors)
    if (c.size() > 0xFFFF)
      throw DataError("conductor name too long");
  for (auto n : {horizons.size(), wind_speeds.size(), wind_angles.size(), conductors.size(),
                 emissivities.size()})
    if (n > 0xFFFF)
      throw DataError("axis too long");
}

std::size_t DatabaseAxes::entry_count() const {
  return horizons.size() * wind_speeds.size() * wind_angles.size() * conductors.size() *
         emissivities.size();
}

std::size_t DatabaseAxes::index(const Coord &c) const {
  return (((c.horizon * wind_speeds.size() + c.wind_speed) * wind_angles.size() +
           c.wind_angle) *
              conductors.size() +
          c.conductor) *
             emissivities.size() +
         c.emissivity;
}

DatabaseAxes::Coord DatabaseAxes::coord(std::size_t index) const {
  Coord c;
  c.emissivity = index % emissivities.size();
  index /= emissivities.size();
  c.conductor = index % conductors.size();
  index /= conductors.size();
  c.wind_angle = index % wind_angles.size();
  index /= wind_angles.size();
  c.wind_speed = index % wind_speeds.size();
  c.horizon = index / wind_speeds.size();
  return c;
}

json to_json(const DatabaseAxes &axes) {
  json horizons = json::array();
  for (auto h : axes.horizons)
    horizons.push_back(to_string(h));
  return json{{"horizons", horizons},
              {"wind_speeds", axes.wind_speeds},
              {"wind_angles", axes.wind_angles},
              {"conductors", axes.conductors},
              {"emissivities", axes.emissivities}};
}

DatabaseAxes axes_from_json(const json &j, const DatabaseAxes &base) {
  try {
    DatabaseAxes a = base;
    if (j.contains("horizons")) {
      a.horizons.clear();
      for (const auto &h : j.at("horizons"))
        a.horizons.push_back(parse_horizon(h.get<std::string>()));
    }
    if (j.contains("wind_speeds"))
      a.wind_speeds = j.at("wind_speeds").get<std::vector<double>>();
    if (j.contains("wind_angles"))
      a.wind_angles = j.at("wind_angles").get<std::vector<double>>();
    if (j.contains("conductors"))
      a.conductors = j.at("conductors").get<std::vector<std::string>>();
    if (j.contains("emissivities"))
      a.emissivities = j.at("emissivities").get<std::vector<double>>();
    a.validate();
    return a;
  } catch (const json::exception &e) {
    throw DataError(fmt::format("malformed axes: {}", e.what()));
  }
}

std::span<const float> DistributionDB::entry(std::size_t index) const {
  const std::size_t n = grid.size();
  return std::span<const float>(entries).subspan(index * n, n);
}

NormalizedAmpacityCDF DistributionDB::entry_cdf(std::size_t index) const {
  const auto e = entry(index);
  return NormalizedAmpacityCDF(grid, std::vector<double>(e.begin(), e.end()));
}

void DistributionDB::validate() const {
  try {
    axes.validate();
  } catch (const DataError &e) {
    throw InvariantError(e.what());
  }
  if (entries.size() != entry_count() * grid.size())
    throw InvariantError(fmt::format("expected {} entry values, found {}",
                                     entry_count() * grid.size(), entries.size()));
  for (std::size_t i = 0; i < entry_count(); ++i) {
    try {
      validate_cdf<float>(grid, entry(i));
    } catch (const DataError &e) {
      throw InvariantError(fmt::format("entry {}: {}", i, e.what()));
    }
  }
}

std::vector<std::uint8_t> serialize_db(const DistributionDB &db) {
  db.validate();
  ByteWriter w;
  w.raw(kDbMagic, 4);
  w.u16(kDbVersion);
  w.u16(kDbFlagFloat32);
  const std::string manifest = db.manifest.dump();
  w.u32(static_cast<std::uint32_t>(manifest.size()));
  w.raw(manifest.data(), manifest.size());

  std::vector<std::string> horizon_names;
  for (auto h : db.axes.horizons)
    horizon_names.emplace_back(to_string(h));
  write_named_axis(w, horizon_names);
  write_numeric_axis(w, db.axes.wind_speeds);
  write_numeric_axis(w, db.axes.wind_angles);
  write_named_axis(w, db.axes.conductors);
  write_numeric_axis(w, db.axes.emissivities);

  w.u32(static_cast<std::uint32_t>(db.grid.size()));
  for (double r : db.grid)
    w.f64(r);
  for (float c : db.entries)
    w.f32(c);
  const std::uint64_t crc = crc64(w.bytes());
  w.u64(crc);
  return std::move(w.bytes());
}

std::size_t write_db(DistributionDB &db, std::ostream &out) {
  const auto bytes = serialize_db(db);
  out.write(reinterpret_cast<const char *>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out)
    throw DataError("failed writing database");
  std::uint64_t crc = 0;
  for (int i = 0; i < 8; ++i)
    crc |= static_cast<std::uint64_t>(bytes[bytes.size() - 8 + i]) << (8 * i);
  db.checksum = crc;
  return bytes.size();
}

std::size_t write_db_file(DistributionDB &db, const std::string &path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out)
    throw DataError(fmt::format("cannot write '{}'", path));
  const auto n = write_db(db, out);
  out.close();
  if (!out)
    throw DataError(fmt::format("failed writing '{}'", path));
  return n;
}

DistributionDB read_db(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kDbMagic, 4) != 0)
    throw BadMagicError("not a distribution database (bad magic)");
  if (bytes.size() < 6)
    throw DbFormatError("database file is truncated");
  const std::uint16_t version = static_cast<std::uint16_t>(bytes[4] | (bytes[5] << 8));
  if (version != kDbVersion)
    throw UnsupportedVersionError(fmt::format("unsupported database version {}", version));
  if (bytes.size() < 8 + 8)
    throw ChecksumError("database file too short for its checksum");

  const auto body = bytes.first(bytes.size() - 8);
  std::uint64_t stored = 0;
  for (int i = 0; i < 8; ++i)
    stored |= static_cast<std::uint64_t>(bytes[body.size() + i]) << (8 * i);
  const std::uint64_t actual = crc64(body);
  if (stored != actual)
    throw ChecksumError(fmt::format("checksum mismatch (stored {}, computed {})", hex64(stored),
                                    hex64(actual)));

  ByteReader r(body);
  r.str(4);
  r.u16();
  const std::uint16_t flags = r.u16();
  if (flags != kDbFlagFloat32)
    throw DbFormatError(fmt::format("unsupported flags {:#06x}", flags));

  DistributionDB db;
  const std::uint32_t manifest_len = r.u32();
  try {
    db.manifest = json::parse(r.str(manifest_len));
  } catch (const json::exception &e) {
    throw DbFormatError(fmt::format("manifest is not valid JSON: {}", e.what()));
  }
  try {
    for (const auto &name : read_named_axis(r, "horizons"))
      db.axes.horizons.push_back(parse_horizon(name));
  } catch (const DbError &) {
    throw;
  } catch (const DataError &e) {
    throw DbFormatError(e.what());
  }
  db.axes.wind_speeds = read_numeric_axis(r, "wind_speeds");
  db.axes.wind_angles = read_numeric_axis(r, "wind_angles");
  db.axes.conductors = read_named_axis(r, "conductors");
  db.axes.emissivities = read_numeric_axis(r, "emissivities");

  db.grid.resize(r.u32());
  for (auto &g : db.grid)
    g = r.f64();
  const std::size_t values = db.axes.entry_count() * db.grid.size();
  if (r.remaining() != values * 4)
    throw DbFormatError(fmt::format("expected {} entry bytes, found {}", values * 4,
                                    r.remaining()));
  db.entries.resize(values);
  for (auto &c : db.entries)
    c = r.f32();
  db.validate();
  db.checksum = stored;
  return db;
}

DistributionDB read_db(std::istream &in) {
  std::vector<std::uint8_t> bytes{std::istreambuf_iterator<char>(in),
                                  std::istreambuf_iterator<char>()};
  return read_db(bytes);
}

DistributionDB read_db_file(const std::string &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw DataError(fmt::format("cannot open database '{}'", path));
  return read_db(in);
}

GridCell locate(const DistributionDB &db, const LocateQuery &q) {
  const auto &axes = db.axes;
  auto h = std::find(axes.horizons.begin(), axes.horizons.end(), q.horizon);
  if (h == axes.horizons.end())
    throw MissingHorizonError(
        fmt::format("horizon '{}' is not stored in the database", to_string(q.horizon)));
  auto c = std::find(axes.conductors.begin(), axes.conductors.end(), q.conductor);
  if (c == axes.conductors.end())
    throw UnknownConductorError(fmt::format("unknown conductor '{}'", q.conductor));
  if (!std::isfinite(q.wind_speed) || !std::isfinite(q.wind_angle) ||
      !std::isfinite(q.emissivity))
    throw DataError("query coordinates must be finite");

  const double v = std::max(q.wind_speed, axes.wind_speeds.front());
  auto bv = bracket(axes.wind_speeds, v, true);
  bv.clamped = bv.clamped || q.wind_speed < axes.wind_speeds.front();
  const auto ba = bracket(axes.wind_angles, q.wind_angle, false);
  const auto be = bracket(axes.emissivities, q.emissivity, false);

  GridCell cell;
  cell.clamped = {bv.clamped, ba.clamped, be.clamped};
  DatabaseAxes::Coord coord;
  coord.horizon = static_cast<std::size_t>(h - axes.horizons.begin());
  coord.conductor = static_cast<std::size_t>(c - axes.conductors.begin());
  for (int iv = 0; iv < 2; ++iv) {
    const double wv = iv ? bv.t : 1.0 - bv.t;
    if (wv == 0.0 || (iv && bv.hi == bv.lo))
      continue;
    coord.wind_speed = iv ? bv.hi : bv.lo;
    for (int ia = 0; ia < 2; ++ia) {
      const double wa = ia ? ba.t : 1.0 - ba.t;
      if (wa == 0.0 || (ia && ba.hi == ba.lo))
        continue;
      coord.wind_angle = ia ? ba.hi : ba.lo;
      for (int ie = 0; ie < 2; ++ie) {
        const double we = ie ? be.t : 1.0 - be.t;
        if (we == 0.0 || (ie && be.hi == be.lo))
          continue;
        coord.emissivity = ie ? be.hi : be.lo;
        cell.nodes.emplace_back(axes.index(coord), wv * wa * we);
      }
    }
  }
  return cell;
}

std::string db_info(const DistributionDB &db) {
  std::ostringstream out;
  out << "entries: " << db.entry_count() << '\n';
  out << "grid: " << db.grid.size() << " points on [" << db.grid.front() << ", "
      << db.grid.back() << "]\n";
  out << "checksum: " << hex64(db.checksum) << '\n';
  out << "axes: " << to_json(db.axes).dump() << '\n';
  out << "manifest: " << db.manifest.dump(2) << '\n';
  return out.str();
}

void export_entry_csv(const DistributionDB &db, std::size_t index, std::ostream &out) {
  if (index >= db.entry_count())
    throw DataError(fmt::format("entry index {} out of range (0..{})", index,
                                db.entry_count() - 1));
  const auto e = db.entry(index);
  out << "r,cdf\n";
  for (std::size_t i = 0; i < db.grid.size(); ++i)
    out << fmt::format("{},{}\n", db.grid[i], e[i]);
}

} // namespace ampuq
