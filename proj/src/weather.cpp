#include "ampuq/weather.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>
#include <set>

#include <fmt/format.h>

namespace ampuq {

DataError::DataError(const std::string &what, std::size_t line)
    : std::runtime_error(line ? fmt::format("line {}: {}", line, what) : what),
      line_(line) {}

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

constexpr std::string_view kMeasuredHeader =
    "timestamp,temperature_c,solar_wm2,wind_speed_ms,wind_dir_deg";
constexpr std::string_view kForecastHeader =
    "issued_at,valid_at,temperature_c,solar_wm2,wind_speed_ms,wind_dir_deg";

int parse_digits(std::string_view s, std::size_t pos, std::size_t count) {
  if (pos + count > s.size())
    throw DataError(fmt::format("malformed timestamp '{}'", s));
  int value = 0;
  for (std::size_t i = pos; i < pos + count; ++i) {
    if (s[i] < '0' || s[i] > '9')
      throw DataError(fmt::format("malformed timestamp '{}'", s));
    value = value * 10 + (s[i] - '0');
  }
  return value;
}

void expect_char(std::string_view s, std::size_t pos, char c) {
  if (pos >= s.size() || s[pos] != c)
    throw DataError(fmt::format("malformed timestamp '{}'", s));
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t'))
    s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r'))
    s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (;;) {
    auto comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      out.push_back(trim(line.substr(start)));
      break;
    }
    out.push_back(trim(line.substr(start, comma - start)));
    start = comma + 1;
  }
  return out;
}

// Empty field -> NaN (missing value).
double parse_number(std::string_view field, std::string_view name, std::size_t line) {
  if (field.empty())
    return kNaN;
  double value = 0.0;
  auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), value);
  if (ec != std::errc() || ptr != field.data() + field.size() || !std::isfinite(value))
    throw DataError(fmt::format("non-numeric {} '{}'", name, field), line);
  return value;
}

TimePoint parse_time_field(std::string_view field, std::size_t line) {
  try {
    return parse_timestamp(field);
  } catch (const DataError &e) {
    throw DataError(e.what(), line);
  }
}

void check_ranges(double temperature, double solar, double speed, double direction,
                  std::size_t line) {
  if (!std::isnan(temperature) && temperature <= -273.15)
    throw DataError(fmt::format("temperature {} below absolute zero", temperature), line);
  if (!std::isnan(solar) && solar < 0.0)
    throw DataError(fmt::format("solar irradiance {} is negative", solar), line);
  if (!std::isnan(speed) && speed < 0.0)
    throw DataError(fmt::format("wind speed {} is negative", speed), line);
  if (!std::isnan(direction) && (direction < 0.0 || direction >= 360.0))
    throw DataError(fmt::format("wind direction {} outside [0, 360)", direction), line);
}

template <typename RowFn>
void for_each_row(std::istream &in, std::string_view header, std::size_t fields,
                  RowFn &&fn) {
  std::string line;
  std::size_t line_no = 0;
  bool seen_header = false;
  while (std::getline(in, line)) {
    ++line_no;
    std::string_view view = trim(line);
    if (line_no == 1 && view.size() >= 3 && view.substr(0, 3) == "\xEF\xBB\xBF")
      view.remove_prefix(3);
    if (view.empty())
      continue;
    if (!seen_header) {
      if (view != header)
        throw DataError(fmt::format("expected header '{}'", header), line_no);
      seen_header = true;
      continue;
    }
    auto parts = split_fields(view);
    if (parts.size() != fields)
      throw DataError(fmt::format("expected {} fields, got {}", fields, parts.size()), line_no);
    fn(parts, line_no);
  }
  if (!seen_header)
    throw DataError("missing CSV header");
}

std::string format_field(double v) {
  if (std::isnan(v))
    return {};
  return fmt::format("{}", v);
}

} // namespace

TimePoint parse_timestamp(std::string_view s) {
  s = trim(s);
  // YYYY-MM-DDTHH:MM:SS[.fff](Z|+HH:MM|-HH:MM)
  const int year = parse_digits(s, 0, 4);
  expect_char(s, 4, '-');
  const int month = parse_digits(s, 5, 2);
  expect_char(s, 7, '-');
  const int day = parse_digits(s, 8, 2);
  if (s.size() <= 10 || (s[10] != 'T' && s[10] != 't' && s[10] != ' '))
    throw DataError(fmt::format("malformed timestamp '{}'", s));
  const int hour = parse_digits(s, 11, 2);
  expect_char(s, 13, ':');
  const int minute = parse_digits(s, 14, 2);
  expect_char(s, 16, ':');
  const int second = parse_digits(s, 17, 2);
  std::size_t pos = 19;
  if (pos < s.size() && s[pos] == '.') {
    ++pos;
    while (pos < s.size() && s[pos] >= '0' && s[pos] <= '9')
      ++pos;
  }
  int offset_minutes = 0;
  if (pos < s.size() && (s[pos] == 'Z' || s[pos] == 'z')) {
    ++pos;
  } else if (pos < s.size() && (s[pos] == '+' || s[pos] == '-')) {
    const int sign = s[pos] == '+' ? 1 : -1;
    const int oh = parse_digits(s, pos + 1, 2);
    expect_char(s, pos + 3, ':');
    const int om = parse_digits(s, pos + 4, 2);
    offset_minutes = sign * (oh * 60 + om);
    pos += 6;
  } else {
    throw DataError(fmt::format("timestamp '{}' lacks a UTC designator", s));
  }
  if (pos != s.size())
    throw DataError(fmt::format("malformed timestamp '{}'", s));

  using namespace std::chrono;
  const year_month_day ymd{std::chrono::year{year}, std::chrono::month{unsigned(month)},
                           std::chrono::day{unsigned(day)}};
  if (!ymd.ok() || hour > 23 || minute > 59 || second > 60)
    throw DataError(fmt::format("invalid date/time in '{}'", s));
  return sys_days{ymd} + hours{hour} + minutes{minute} + seconds{second} -
         minutes{offset_minutes};
}

std::string format_timestamp(TimePoint t) {
  using namespace std::chrono;
  const auto day = floor<days>(t);
  const year_month_day ymd{day};
  const hh_mm_ss hms{t - day};
  return fmt::format("{:04}-{:02}-{:02}T{:02}:{:02}:{:02}Z", int(ymd.year()),
                     unsigned(ymd.month()), unsigned(ymd.day()), hms.hours().count(),
                     hms.minutes().count(), hms.seconds().count());
}

std::string_view to_string(HorizonClass h) {
  switch (h) {
  case HorizonClass::Nowcast:
    return "nowcast";
  case HorizonClass::ShortTerm:
    return "short_term";
  case HorizonClass::MediumTerm:
    return "medium_term";
  }
  return "?";
}

HorizonClass parse_horizon(std::string_view name) {
  for (auto h : kAllHorizons)
    if (to_string(h) == name)
      return h;
  throw DataError(fmt::format("unknown horizon '{}'", name));
}

std::string_view to_string(WeatherVariable v) {
  switch (v) {
  case WeatherVariable::Temperature:
    return "temperature";
  case WeatherVariable::Solar:
    return "solar";
  case WeatherVariable::WindSpeed:
    return "wind_speed";
  case WeatherVariable::WindDirection:
    return "wind_direction";
  }
  return "?";
}

WeatherVariable parse_variable(std::string_view name) {
  for (auto v : kAllVariables)
    if (to_string(v) == name)
      return v;
  throw DataError(fmt::format("unknown weather variable '{}'", name));
}

std::vector<WeatherSample> parse_measured_csv(std::istream &in) {
  std::vector<WeatherSample> out;
  for_each_row(in, kMeasuredHeader, 5, [&](const auto &f, std::size_t line) {
    WeatherSample s;
    s.timestamp = parse_time_field(f[0], line);
    s.temperature = parse_number(f[1], "temperature_c", line);
    s.solar_irradiance = parse_number(f[2], "solar_wm2", line);
    s.wind_speed = parse_number(f[3], "wind_speed_ms", line);
    s.wind_direction = parse_number(f[4], "wind_dir_deg", line);
    check_ranges(s.temperature, s.solar_irradiance, s.wind_speed, s.wind_direction, line);
    if (!out.empty() && s.timestamp <= out.back().timestamp)
      throw DataError("timestamps must be strictly increasing", line);
    out.push_back(s);
  });
  return out;
}

std::vector<ForecastSample> parse_forecast_csv(std::istream &in) {
  std::vector<ForecastSample> out;
  for_each_row(in, kForecastHeader, 6, [&](const auto &f, std::size_t line) {
    ForecastSample s;
    s.issued_at = parse_time_field(f[0], line);
    s.valid_at = parse_time_field(f[1], line);
    s.temperature = parse_number(f[2], "temperature_c", line);
    s.solar_irradiance = parse_number(f[3], "solar_wm2", line);
    s.wind_speed = parse_number(f[4], "wind_speed_ms", line);
    s.wind_direction = parse_number(f[5], "wind_dir_deg", line);
    check_ranges(s.temperature, s.solar_irradiance, s.wind_speed, s.wind_direction, line);
    if (s.valid_at < s.issued_at)
      throw DataError("valid_at precedes issued_at", line);
    if (s.lead() > kMaxLead)
      throw DataError("lead time exceeds 72 h", line);
    out.push_back(s);
  });
  return out;
}

void write_measured_csv(std::ostream &out, const std::vector<WeatherSample> &series) {
  out << kMeasuredHeader << '\n';
  for (const auto &s : series)
    out << format_timestamp(s.timestamp) << ',' << format_field(s.temperature) << ','
        << format_field(s.solar_irradiance) << ',' << format_field(s.wind_speed) << ','
        << format_field(s.wind_direction) << '\n';
}

void write_forecast_csv(std::ostream &out, const std::vector<ForecastSample> &series) {
  out << kForecastHeader << '\n';
  for (const auto &s : series)
    out << format_timestamp(s.issued_at) << ',' << format_timestamp(s.valid_at) << ','
        << format_field(s.temperature) << ',' << format_field(s.solar_irradiance) << ','
        << format_field(s.wind_speed) << ',' << format_field(s.wind_direction) << '\n';
}

std::vector<WeatherSample> read_measured_file(const std::string &path) {
  std::ifstream in(path);
  if (!in)
    throw DataError(fmt::format("cannot open '{}'", path));
  return parse_measured_csv(in);
}

std::vector<ForecastSample> read_forecast_file(const std::string &path) {
  std::ifstream in(path);
  if (!in)
    throw DataError(fmt::format("cannot open '{}'", path));
  return parse_forecast_csv(in);
}

HorizonClass classify_horizon(Duration lead) {
  if (lead < Duration::zero() || lead > kMaxLead)
    throw DataError(fmt::format("lead time {} s outside [0, 72 h]", lead.count()));
  if (lead == Duration::zero())
    return HorizonClass::Nowcast;
  if (lead <= std::chrono::hours(12))
    return HorizonClass::ShortTerm;
  return HorizonClass::MediumTerm;
}

std::vector<WeatherPair> align_pairs(const std::vector<WeatherSample> &measured,
                                     const std::vector<ForecastSample> &forecast,
                                     Duration tolerance) {
  std::vector<WeatherPair> out;
  if (measured.empty())
    return out;
  std::set<std::pair<TimePoint, std::size_t>> used;
  for (const auto &f : forecast) {
    auto it = std::lower_bound(
        measured.begin(), measured.end(), f.valid_at,
        [](const WeatherSample &m, TimePoint t) { return m.timestamp < t; });
    std::size_t best = measured.size();
    Duration best_gap = Duration::max();
    auto consider = [&](std::size_t idx) {
      const auto gap = measured[idx].timestamp > f.valid_at
                           ? measured[idx].timestamp - f.valid_at
                           : f.valid_at - measured[idx].timestamp;
      if (gap <= tolerance && gap < best_gap) {
        best = idx;
        best_gap = gap;
      }
    };
    const auto pos = static_cast<std::size_t>(it - measured.begin());
    if (pos < measured.size())
      consider(pos);
    if (pos > 0)
      consider(pos - 1);
    if (best == measured.size())
      continue;
    if (!used.emplace(f.issued_at, best).second)
      continue;
    out.emplace_back(measured[best], f);
  }
  return out;
}

double fold_direction_difference(double d) {
  double r = std::fmod(d, 360.0);
  if (r <= -180.0)
    r += 360.0;
  else if (r > 180.0)
    r -= 360.0;
  return r;
}

std::vector<ErrorSample> compute_errors(const std::vector<WeatherPair> &pairs,
                                        WeatherVariable variable) {
  std::vector<ErrorSample> out;
  out.reserve(pairs.size());
  for (const auto &[m, f] : pairs) {
    double measured = 0.0, predicted = 0.0;
    switch (variable) {
    case WeatherVariable::Temperature:
      measured = m.temperature, predicted = f.temperature;
      break;
    case WeatherVariable::Solar:
      measured = m.solar_irradiance, predicted = f.solar_irradiance;
      break;
    case WeatherVariable::WindSpeed:
      measured = m.wind_speed, predicted = f.wind_speed;
      break;
    case WeatherVariable::WindDirection:
      measured = m.wind_direction, predicted = f.wind_direction;
      break;
    }
    if (std::isnan(measured) || std::isnan(predicted))
      continue;
    double value = measured - predicted;
    if (variable == WeatherVariable::WindDirection)
      value = fold_direction_difference(value);
    out.push_back({variable, value, classify_horizon(f.lead()), f.valid_at});
  }
  return out;
}

std::vector<WeatherPair> filter_solar_nonzero(const std::vector<WeatherPair> &pairs) {
  std::vector<WeatherPair> out;
  std::copy_if(pairs.begin(), pairs.end(), std::back_inserter(out),
               [](const WeatherPair &p) { return p.second.solar_irradiance > 0.0; });
  return out;
}

} // namespace ampuq
