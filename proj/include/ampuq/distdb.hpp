#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "ampuq/cdf.hpp"
#include "ampuq/weather.hpp"

namespace ampuq {

// Distinct failure modes of read_db.
class DbError : public DataError {
public:
  using DataError::DataError;
};
class BadMagicError : public DbError {
public:
  using DbError::DbError;
};
class UnsupportedVersionError : public DbError {
public:
  using DbError::DbError;
};
class ChecksumError : public DbError {
public:
  using DbError::DbError;
};
class DbFormatError : public DbError {
public:
  using DbError::DbError;
};
class InvariantError : public DbError {
public:
  using DbError::DbError;
};
class MissingHorizonError : public DataError {
public:
  using DataError::DataError;
};

inline constexpr char kDbMagic[4] = {'D', 'T', 'R', 'U'};
inline constexpr std::uint16_t kDbVersion = 1;
inline constexpr std::uint16_t kDbFlagFloat32 = 0x0001;

/// Grid axes in storage order: horizon, wind speed, wind angle, conductor,
/// emissivity. Entries are row-major with emissivity varying fastest.
struct DatabaseAxes {
  std::vector<HorizonClass> horizons;
  std::vector<double> wind_speeds;  // m/s
  std::vector<double> wind_angles;  // deg
  std::vector<std::string> conductors;
  std::vector<double> emissivities;

  /// 3 horizons x 6 wind speeds x 3 angles x conductors x 3 emissivities.
  static DatabaseAxes defaults(std::vector<std::string> conductors);

  void validate() const;
  std::size_t entry_count() const;

  struct Coord {
    std::size_t horizon = 0, wind_speed = 0, wind_angle = 0, conductor = 0, emissivity = 0;
  };
  std::size_t index(const Coord &c) const;
  Coord coord(std::size_t index) const;

  bool operator==(const DatabaseAxes &) const = default;
};

nlohmann::json to_json(const DatabaseAxes &axes);
DatabaseAxes axes_from_json(const nlohmann::json &j, const DatabaseAxes &base);

struct DistributionDB {
  DatabaseAxes axes;
  std::vector<double> grid;   // shared normalized-ampacity grid
  std::vector<float> entries; // entry_count() * grid.size(), row-major
  nlohmann::json manifest = nlohmann::json::object();
  /// CRC-64 trailer of the serialized form; set by write_db and read_db.
  std::uint64_t checksum = 0;

  std::size_t entry_count() const { return axes.entry_count(); }
  std::span<const float> entry(std::size_t index) const;
  NormalizedAmpacityCDF entry_cdf(std::size_t index) const;

  /// Throws InvariantError unless sizes agree and every entry is a valid CDF.
  void validate() const;
};

/// Serializes the database; returns the byte count. Same db, same bytes.
std::size_t write_db(DistributionDB &db, std::ostream &out);
std::size_t write_db_file(DistributionDB &db, const std::string &path);
std::vector<std::uint8_t> serialize_db(const DistributionDB &db);

DistributionDB read_db(std::span<const std::uint8_t> bytes);
DistributionDB read_db(std::istream &in);
DistributionDB read_db_file(const std::string &path);

struct LocateQuery {
  HorizonClass horizon = HorizonClass::Nowcast;
  double wind_speed = 0.0;
  double wind_angle = 90.0;
  std::string conductor;
  double emissivity = 0.5;
};

struct ClampFlags {
  bool wind_speed = false;
  bool wind_angle = false;
  bool emissivity = false;

  bool any() const { return wind_speed || wind_angle || emissivity; }
};

struct GridCell {
  std::vector<std::pair<std::size_t, double>> nodes; // (entry index, weight)
  ClampFlags clamped;
};

/// Surrounding grid nodes and multilinear weights. Wind speed is
/// interpolated in log space, angle and emissivity linearly; horizon and
/// conductor must match exactly. Out-of-range numeric coordinates clamp.
GridCell locate(const DistributionDB &db, const LocateQuery &query);

/// Human-readable summary: axes, entry count, manifest.
std::string db_info(const DistributionDB &db);

/// CSV (r,cdf) dump of one entry.
void export_entry_csv(const DistributionDB &db, std::size_t index, std::ostream &out);

} // namespace ampuq
