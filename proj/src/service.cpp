#include "ampuq/service.hpp"

#include <istream>
#include <ostream>

#include <fmt/format.h>
// Bursts of concurrent clients must queue rather than be dropped.
#define CPPHTTPLIB_LISTEN_BACKLOG 256
#include <httplib.h>

#include "ampuq/checksum.hpp"
#include "ampuq/kde.hpp"

namespace ampuq {

using nlohmann::json;

RequestError::RequestError(std::string field, const std::string &message)
    : DataError(fmt::format("{}: {}", field, message)), field_(std::move(field)) {}

namespace {

double number_field(const json &j, const char *name) {
  if (!j.contains(name))
    throw RequestError(name, "required field missing");
  const auto &v = j.at(name);
  if (!v.is_number())
    throw RequestError(name, "must be a number");
  const double d = v.get<double>();
  if (!std::isfinite(d))
    throw RequestError(name, "must be finite");
  return d;
}

std::optional<double> optional_number(const json &j, const char *name) {
  if (!j.contains(name) || j.at(name).is_null())
    return std::nullopt;
  return number_field(j, name);
}

std::string reply_error(const std::string &message, const std::string &field = {}) {
  json j{{"error", message}};
  if (!field.empty())
    j["field"] = field;
  return j.dump();
}

} // namespace

UncertaintyQuery query_from_json(const json &j) {
  if (!j.is_object())
    throw RequestError("body", "must be a JSON object");
  UncertaintyQuery q;
  q.ambient.temperature = number_field(j, "temperature_c");
  q.ambient.solar_irradiance = number_field(j, "solar_wm2");
  q.ambient.wind_speed = number_field(j, "wind_speed_ms");
  if (auto angle = optional_number(j, "wind_attack_angle_deg")) {
    q.ambient.wind_attack_angle = *angle;
  } else {
    const double direction = number_field(j, "wind_direction_deg");
    const double azimuth = optional_number(j, "line_azimuth_deg").value_or(0.0);
    q.ambient.wind_attack_angle = wind_attack_angle(direction, azimuth);
  }
  if (!j.contains("horizon") || !j.at("horizon").is_string())
    throw RequestError("horizon", "required string (nowcast, short_term, medium_term)");
  try {
    q.horizon = parse_horizon(j.at("horizon").get<std::string>());
  } catch (const DataError &e) {
    throw RequestError("horizon", e.what());
  }
  if (!j.contains("conductor") || !j.at("conductor").is_string())
    throw RequestError("conductor", "required string");
  q.conductor = j.at("conductor").get<std::string>();
  q.emissivity = number_field(j, "emissivity");
  q.nominal_ampacity = optional_number(j, "nominal_ampacity_a");
  q.confidence = number_field(j, "confidence");

  if (q.ambient.wind_speed < 0.0)
    throw RequestError("wind_speed_ms", "must be nonnegative");
  if (q.ambient.solar_irradiance < 0.0 || q.ambient.solar_irradiance > kSolarConstant)
    throw RequestError("solar_wm2", "must lie in [0, 1361]");
  if (q.ambient.temperature <= -273.15)
    throw RequestError("temperature_c", "below absolute zero");
  if (q.ambient.wind_attack_angle < 0.0 || q.ambient.wind_attack_angle > 90.0)
    throw RequestError("wind_attack_angle_deg", "must lie in [0, 90]");
  if (q.emissivity < 0.0 || q.emissivity > 1.0)
    throw RequestError("emissivity", "must lie in [0, 1]");
  if (q.nominal_ampacity && !(*q.nominal_ampacity > 0.0))
    throw RequestError("nominal_ampacity_a", "must be positive");
  if (!(q.confidence > 0.0 && q.confidence < 1.0))
    throw RequestError("confidence", "must lie in (0, 1)");
  return q;
}

json to_json(const UncertaintyResult &r) {
  json j{{"nominal_ampacity_a", r.nominal},
         {"lower_a", r.lower},
         {"upper_a", r.upper},
         {"confidence", r.confidence},
         {"nominal_computed", r.nominal_computed},
         {"clamped",
          {{"wind_speed", r.clamped.wind_speed},
           {"wind_angle", r.clamped.wind_angle},
           {"emissivity", r.clamped.emissivity}}},
         {"nodes", r.nodes.size()}};
  if (r.cdf) {
    j["cdf"] = {{"r", r.cdf->grid()}, {"cdf", r.cdf->values()}};
  }
  return j;
}

HttpReply handle_assess(const DistributionDB *db, const std::string &body) {
  if (!db)
    return {503, reply_error("database not loaded")};
  json request;
  try {
    request = json::parse(body);
  } catch (const json::exception &e) {
    return {400, reply_error(fmt::format("body is not valid JSON: {}", e.what()), "body")};
  }
  try {
    const auto query = query_from_json(request);
    const bool keep_cdf = request.value("include_cdf", false);
    return {200, to_json(assess(*db, query, keep_cdf)).dump()};
  } catch (const RequestError &e) {
    return {400, reply_error(e.what(), e.field())};
  } catch (const UnknownConductorError &e) {
    return {404, reply_error(e.what(), "conductor")};
  } catch (const MissingHorizonError &e) {
    return {404, reply_error(e.what(), "horizon")};
  } catch (const DataError &e) {
    return {400, reply_error(e.what())};
  } catch (const json::exception &e) {
    return {400, reply_error(e.what())};
  }
}

HttpReply handle_health(const DistributionDB *db, double uptime_seconds) {
  if (!db)
    return {503, json{{"status", "no database"}, {"uptime_s", uptime_seconds}}.dump()};
  return {200, json{{"status", "ok"},
                    {"db_fingerprint", hex64(db->checksum)},
                    {"entries", db->entry_count()},
                    {"uptime_s", uptime_seconds}}
                   .dump()};
}

AssessService::AssessService(std::shared_ptr<const DistributionDB> db)
    : db_(std::move(db)), server_(std::make_unique<httplib::Server>()),
      started_(std::chrono::steady_clock::now()) {
  // Small JSON replies must not wait on delayed ACKs.
  server_->set_tcp_nodelay(true);
  server_->Post("/v1/assess", [this](const httplib::Request &req, httplib::Response &res) {
    const auto t0 = std::chrono::steady_clock::now();
    const auto reply = handle_assess(db_.get(), req.body);
    const auto us = std::chrono::duration_cast<std::chrono::microseconds>(
                        std::chrono::steady_clock::now() - t0)
                        .count();
    res.status = reply.status;
    res.set_header("X-Assess-Micros", std::to_string(us));
    res.set_content(reply.body, "application/json");
  });
  server_->Get("/v1/health", [this](const httplib::Request &, httplib::Response &res) {
    const double uptime =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - started_).count();
    const auto reply = handle_health(db_.get(), uptime);
    res.status = reply.status;
    res.set_content(reply.body, "application/json");
  });
}

AssessService::~AssessService() = default;

int AssessService::bind(const std::string &host, int port) {
  if (port == 0)
    return server_->bind_to_any_port(host);
  return server_->bind_to_port(host, port) ? port : -1;
}

bool AssessService::listen() { return server_->listen_after_bind(); }

void AssessService::stop() { server_->stop(); }

void AssessService::wait_until_ready() const { server_->wait_until_ready(); }

std::size_t run_demo_cadence(const DistributionDB &db, std::istream &weather_csv,
                             const DemoOptions &options, std::ostream &out) {
  const auto series = parse_measured_csv(weather_csv);
  out << "time,kind,horizon,nominal_a,lower_a,upper_a\n";
  if (series.empty())
    return 0;
  std::size_t rows = 0;
  std::size_t idx = 0;
  std::size_t minute = 0;
  for (auto t = series.front().timestamp; t <= series.back().timestamp;
       t += std::chrono::minutes(1), ++minute) {
    while (idx + 1 < series.size() && series[idx + 1].timestamp <= t)
      ++idx;
    const auto &w = series[idx];
    if (std::isnan(w.temperature) || std::isnan(w.solar_irradiance) ||
        std::isnan(w.wind_speed) || std::isnan(w.wind_direction))
      continue;
    UncertaintyQuery q;
    q.ambient = {w.temperature, std::min(w.solar_irradiance, kSolarConstant), w.wind_speed,
                 wind_attack_angle(w.wind_direction, options.line_azimuth)};
    q.conductor = options.conductor;
    q.emissivity = options.emissivity;
    q.confidence = options.confidence;
    auto emit = [&](HorizonClass h, const char *kind) {
      q.horizon = h;
      const auto r = assess(db, q);
      out << fmt::format("{},{},{},{},{},{}\n", format_timestamp(t), kind, to_string(h),
                         r.nominal, r.lower, r.upper);
      ++rows;
    };
    emit(HorizonClass::Nowcast, "realtime");
    if (minute % 5 == 0)
      emit(options.forecast_horizon, "forecast");
  }
  return rows;
}

} // namespace ampuq
