#pragma once

#include <chrono>
#include <iosfwd>
#include <memory>
#include <string>

#include <json.hpp>

#include "ampuq/distdb.hpp"
#include "ampuq/uncertainty.hpp"

namespace httplib {
class Server;
}

namespace ampuq {

/// Invalid request field; maps to HTTP 400.
class RequestError : public DataError {
public:
  RequestError(std::string field, const std::string &message);
  const std::string &field() const { return field_; }

private:
  std::string field_;
};

/// Parses an assess request body. Either `wind_attack_angle_deg` or the pair
/// `wind_direction_deg` + `line_azimuth_deg` gives the attack angle.
UncertaintyQuery query_from_json(const nlohmann::json &j);
nlohmann::json to_json(const UncertaintyResult &r);

struct HttpReply {
  int status = 200;
  std::string body;
};

/// Request -> response without side effects. `db` may be null (not loaded).
HttpReply handle_assess(const DistributionDB *db, const std::string &body);
HttpReply handle_health(const DistributionDB *db, double uptime_seconds);

class AssessService {
public:
  explicit AssessService(std::shared_ptr<const DistributionDB> db);
  ~AssessService();
  AssessService(const AssessService &) = delete;
  AssessService &operator=(const AssessService &) = delete;

  /// Binds to host:port (port 0 picks a free one) and returns the port, or -1.
  int bind(const std::string &host, int port);
  /// Serves until stop(); in-flight requests finish first.
  bool listen();
  void stop();
  void wait_until_ready() const;

private:
  std::shared_ptr<const DistributionDB> db_;
  std::unique_ptr<httplib::Server> server_;
  std::chrono::steady_clock::time_point started_;
};

struct DemoOptions {
  std::string conductor;
  double emissivity = 0.5;
  double confidence = 0.95;
  double line_azimuth = 0.0;
  HorizonClass forecast_horizon = HorizonClass::ShortTerm;
};

/// Replays a measured-format weather CSV: one nowcast query per simulated
/// minute and one forecast query every fifth minute, holding the latest
/// weather sample. Writes time,kind,horizon,nominal_a,lower_a,upper_a.
/// Returns the number of rows written.
std::size_t run_demo_cadence(const DistributionDB &db, std::istream &weather_csv,
                             const DemoOptions &options, std::ostream &out);

} // namespace ampuq
