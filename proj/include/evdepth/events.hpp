#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <istream>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "evdepth/error.hpp"

namespace evdepth {

// Microseconds.
using Timestamp = std::int64_t;

inline constexpr Timestamp kMicrosPerSecond = 1'000'000;

inline constexpr Timestamp milliseconds(double ms) {
  return static_cast<Timestamp>(ms * 1000.0 + (ms >= 0 ? 0.5 : -0.5));
}

struct Event {
  Timestamp t = 0;
  int x = 0;
  int y = 0;
  int polarity = 1;  // +1 or -1; carried through but unused by the estimator

  friend bool operator==(const Event&, const Event&) = default;
};

enum class CameraSide { kLeft, kRight };

constexpr std::string_view to_string(CameraSide side) {
  return side == CameraSide::kLeft ? "left" : "right";
}

namespace detail {

inline std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r' || line[i] == ',')) ++i;
    std::size_t j = i;
    while (j < line.size() && line[j] != ' ' && line[j] != '\t' && line[j] != '\r' && line[j] != ',') ++j;
    if (j > i) out.push_back(line.substr(i, j - i));
    i = j;
  }
  return out;
}

inline bool is_blank_or_comment(std::string_view line) {
  for (char c : line) {
    if (c == '#') return true;
    if (c != ' ' && c != '\t' && c != '\r') return false;
  }
  return true;
}

template <typename Int>
bool parse_int(std::string_view s, Int& out) {
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && p == s.data() + s.size();
}

inline bool parse_double(std::string_view s, double& out) {
  // std::from_chars for double is not available on every toolchain we target.
  std::string tmp(s);
  char* end = nullptr;
  out = std::strtod(tmp.c_str(), &end);
  return end == tmp.c_str() + tmp.size() && !tmp.empty() && std::isfinite(out);
}

inline std::string line_error(const std::filesystem::path& path, std::size_t line_no, std::string_view what) {
  std::ostringstream msg;
  msg << path.string() << ":" << line_no << ": " << what;
  return msg.str();
}

}  // namespace detail

// Parses seconds given as decimal text into microseconds. Plain decimals are
// converted exactly (rounded at the seventh fractional digit); other
// spellings go through double.
inline bool parse_timestamp(std::string_view s, Timestamp& out) {
  if (s.empty()) return false;
  const bool plain = std::all_of(s.begin(), s.end(), [](char c) { return (c >= '0' && c <= '9') || c == '.'; }) &&
                     std::count(s.begin(), s.end(), '.') <= 1;
  if (plain) {
    const auto dot = s.find('.');
    std::string_view whole = s.substr(0, dot);
    std::string_view frac = dot == std::string_view::npos ? std::string_view{} : s.substr(dot + 1);
    if (whole.empty() && frac.empty()) return false;
    Timestamp seconds = 0;
    if (!whole.empty() && !detail::parse_int(whole, seconds)) return false;
    Timestamp micros = 0;
    for (std::size_t i = 0; i < 6; ++i) {
      micros = micros * 10 + (i < frac.size() ? frac[i] - '0' : 0);
    }
    if (frac.size() > 6 && frac[6] >= '5') ++micros;
    out = seconds * kMicrosPerSecond + micros;
    return true;
  }
  double seconds = 0.0;
  if (!detail::parse_double(s, seconds)) return false;
  out = static_cast<Timestamp>(std::llround(seconds * 1e6));
  return true;
}

// Exact "s.uuuuuu" rendering of a non-negative timestamp.
inline std::string format_timestamp(Timestamp t) {
  std::ostringstream os;
  if (t < 0) {
    os << '-';
    t = -t;
  }
  const Timestamp frac = t % kMicrosPerSecond;
  os << t / kMicrosPerSecond << '.';
  std::string digits = std::to_string(frac);
  os << std::string(6 - digits.size(), '0') << digits;
  return os.str();
}

struct EventLoadOptions {
  // Stable-sort out-of-order input instead of rejecting it.
  bool sort_out_of_order = false;
  // When both are positive, coordinates outside the sensor are rejected.
  int sensor_width = 0;
  int sensor_height = 0;
};

// Reads "t x y p" lines (t in seconds). Polarity accepts 1 / 0 / -1, with 0
// mapped to -1.
inline std::vector<Event> parse_events(std::istream& in, const std::filesystem::path& origin,
                                       const EventLoadOptions& options = {}) {
  std::vector<Event> events;
  std::string line;
  std::size_t line_no = 0;
  bool ordered = true;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::is_blank_or_comment(line)) continue;
    const auto tokens = detail::split_ws(line);
    if (tokens.size() != 4) {
      throw Error(ErrorCode::kParse, detail::line_error(origin, line_no, "expected 't x y p'"));
    }
    Event e;
    int polarity = 0;
    if (!parse_timestamp(tokens[0], e.t) || !detail::parse_int(tokens[1], e.x) ||
        !detail::parse_int(tokens[2], e.y) || !detail::parse_int(tokens[3], polarity)) {
      throw Error(ErrorCode::kParse, detail::line_error(origin, line_no, "malformed event"));
    }
    if (polarity != 1 && polarity != 0 && polarity != -1) {
      throw Error(ErrorCode::kParse, detail::line_error(origin, line_no, "polarity must be 1, 0 or -1"));
    }
    e.polarity = polarity == 1 ? 1 : -1;
    if (e.x < 0 || e.y < 0 ||
        (options.sensor_width > 0 && options.sensor_height > 0 &&
         (e.x >= options.sensor_width || e.y >= options.sensor_height))) {
      throw Error(ErrorCode::kParse, detail::line_error(origin, line_no, "event outside the sensor"));
    }
    if (!events.empty() && e.t < events.back().t) {
      if (!options.sort_out_of_order) {
        throw Error(ErrorCode::kOutOfOrder, detail::line_error(origin, line_no, "timestamp decreases"));
      }
      ordered = false;
    }
    events.push_back(e);
  }
  if (events.empty()) {
    throw Error(ErrorCode::kEmptyStream, origin.string() + ": no events");
  }
  if (!ordered) {
    std::stable_sort(events.begin(), events.end(), [](const Event& a, const Event& b) { return a.t < b.t; });
  }
  return events;
}

inline std::vector<Event> load_events(const std::filesystem::path& path, CameraSide side,
                                      const EventLoadOptions& options = {}) {
  std::ifstream in(path);
  if (!in) {
    throw Error(ErrorCode::kIo, "cannot open " + std::string(to_string(side)) + " events file " + path.string());
  }
  return parse_events(in, path, options);
}

inline void write_events(std::ostream& out, std::span<const Event> events) {
  for (const Event& e : events) {
    out << format_timestamp(e.t) << ' ' << e.x << ' ' << e.y << ' ' << (e.polarity > 0 ? 1 : 0) << '\n';
  }
}

inline void write_events(const std::filesystem::path& path, std::span<const Event> events) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path.string());
  write_events(out, events);
  if (!out) throw Error(ErrorCode::kIo, "failed writing " + path.string());
}

}  // namespace evdepth
