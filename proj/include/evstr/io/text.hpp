#pragma once

#include <array>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <istream>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <system_error>
#include <type_traits>
#include <vector>

#include <Eigen/Geometry>

#include "evstr/core/so3.hpp"
#include "evstr/core/types.hpp"
#include "evstr/error.hpp"

namespace evstr::io {

// Quaternions further than this from unit norm are rejected on read.
inline constexpr double kQuaternionNormTolerance = 1e-3;

namespace detail {

// Whitespace-separated fields of one line.
inline std::size_t split_fields(std::string_view line, std::span<std::string_view> out) {
  std::size_t n = 0;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    if (i == line.size()) break;
    const std::size_t start = i;
    while (i < line.size() && !std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    if (n < out.size()) out[n] = line.substr(start, i - start);
    ++n;
  }
  return n;
}

inline bool skippable(std::string_view line) {
  for (char c : line) {
    if (c == '#') return true;
    if (!std::isspace(static_cast<unsigned char>(c))) return false;
  }
  return true;
}

[[noreturn]] inline void parse_error(const std::string& source, std::size_t line,
                                     const std::string& what) {
  raise(ErrorCategory::kParse, source + ":" + std::to_string(line) + ": " + what);
}

template <class T>
T parse_number(std::string_view field, const std::string& source, std::size_t line) {
  T value{};
  const auto [end, ec] = std::from_chars(field.data(), field.data() + field.size(), value);
  if (ec != std::errc() || end != field.data() + field.size()) {
    parse_error(source, line, "bad number '" + std::string(field) + "'");
  }
  if constexpr (std::is_floating_point_v<T>) {
    if (!std::isfinite(value)) parse_error(source, line, "non-finite value");
  }
  return value;
}

// Calls `f(fields, line_number)` for every non-blank, non-comment line
// holding exactly N fields.
template <std::size_t N, class F>
void for_each_record(std::istream& in, const std::string& source, F&& f) {
  std::string line;
  std::array<std::string_view, N> fields;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (skippable(line)) continue;
    const std::size_t n = split_fields(line, fields);
    if (n != N) {
      parse_error(source, number,
                  "expected " + std::to_string(N) + " fields, got " + std::to_string(n));
    }
    f(fields, number);
  }
  if (in.bad()) raise(ErrorCategory::kIo, source + ": read failed");
}

inline std::ifstream open_in(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) raise(ErrorCategory::kIo, "cannot open " + path.string());
  return in;
}

inline std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) raise(ErrorCategory::kIo, "cannot write " + path.string());
  return out;
}

inline void check_written(std::ostream& out, const std::filesystem::path& path) {
  out.flush();
  if (!out) raise(ErrorCategory::kIo, "write failed: " + path.string());
}

}  // namespace detail

// Shortest decimal form that reads back to the same double.
inline std::string format_double(double v) {
  std::array<char, 32> buf;
  const auto [end, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), end);
}

// ----------------------------------------------------------------- events

// Lines "t x y p" with p in {0, 1}; '#' lines and blank lines are skipped.
inline std::vector<Event> parse_events(std::istream& in, const std::string& source = "events") {
  std::vector<Event> events;
  detail::for_each_record<4>(in, source, [&](const auto& f, std::size_t line) {
    Event e;
    e.t = detail::parse_number<double>(f[0], source, line);
    e.u.x() = detail::parse_number<double>(f[1], source, line);
    e.u.y() = detail::parse_number<double>(f[2], source, line);
    const int p = detail::parse_number<int>(f[3], source, line);
    if (p != 0 && p != 1) detail::parse_error(source, line, "polarity must be 0 or 1");
    e.p = p == 1 ? 1 : -1;
    if (!events.empty() && e.t < events.back().t) {
      raise(ErrorCategory::kOrdering,
            source + ":" + std::to_string(line) + ": time stamp goes backwards");
    }
    events.push_back(e);
  });
  return events;
}

inline std::vector<Event> read_events(const std::filesystem::path& path) {
  std::ifstream in = detail::open_in(path);
  return parse_events(in, path.string());
}

inline void format_events(std::ostream& out, std::span<const Event> events) {
  std::string line;
  for (const Event& e : events) {
    line = format_double(e.t);
    line += ' ';
    line += format_double(e.u.x());
    line += ' ';
    line += format_double(e.u.y());
    line += e.p > 0 ? " 1\n" : " 0\n";
    out << line;
  }
}

inline void write_events(const std::filesystem::path& path, std::span<const Event> events) {
  std::ofstream out = detail::open_out(path);
  format_events(out, events);
  detail::check_written(out, path);
}

// ------------------------------------------------------------ calibration

// One line "fx fy cx cy k1 k2 width height".
inline CameraIntrinsics parse_calibration(std::istream& in,
                                          const std::string& source = "calibration") {
  std::optional<CameraIntrinsics> intr;
  detail::for_each_record<8>(in, source, [&](const auto& f, std::size_t line) {
    if (intr) detail::parse_error(source, line, "more than one calibration line");
    std::array<double, 6> v;
    for (std::size_t i = 0; i < 6; ++i) v[i] = detail::parse_number<double>(f[i], source, line);
    const int w = detail::parse_number<int>(f[6], source, line);
    const int h = detail::parse_number<int>(f[7], source, line);
    if (!(v[0] > 0.0) || !(v[1] > 0.0)) {
      detail::parse_error(source, line, "focal lengths must be positive");
    }
    try {
      intr = CameraIntrinsics(v[0], v[1], v[2], v[3], v[4], v[5], {w, h});
    } catch (const Error& e) {
      detail::parse_error(source, line, e.what());
    }
  });
  if (!intr) raise(ErrorCategory::kParse, source + ": no calibration line");
  return *intr;
}

inline CameraIntrinsics read_calibration(const std::filesystem::path& path) {
  std::ifstream in = detail::open_in(path);
  return parse_calibration(in, path.string());
}

inline void format_calibration(std::ostream& out, const CameraIntrinsics& intr) {
  out << format_double(intr.fx()) << ' ' << format_double(intr.fy()) << ' '
      << format_double(intr.cx()) << ' ' << format_double(intr.cy()) << ' '
      << format_double(intr.k1()) << ' ' << format_double(intr.k2()) << ' '
      << intr.resolution().width << ' ' << intr.resolution().height << '\n';
}

inline void write_calibration(const std::filesystem::path& path, const CameraIntrinsics& intr) {
  std::ofstream out = detail::open_out(path);
  format_calibration(out, intr);
  detail::check_written(out, path);
}

// ------------------------------------------------------------- trajectory

// Lines "t qx qy qz qw" of camera-to-world orientations, time-sorted.
// Quaternions are renormalised when within kQuaternionNormTolerance of unit
// norm and rejected otherwise.
inline std::vector<TrajectoryRecord> parse_trajectory(std::istream& in,
                                                      const std::string& source = "trajectory") {
  std::vector<TrajectoryRecord> out;
  detail::for_each_record<5>(in, source, [&](const auto& f, std::size_t line) {
    std::array<double, 5> v;
    for (std::size_t i = 0; i < 5; ++i) v[i] = detail::parse_number<double>(f[i], source, line);
    const Eigen::Quaterniond q(v[4], v[1], v[2], v[3]);
    if (std::abs(q.norm() - 1.0) > kQuaternionNormTolerance) {
      raise(ErrorCategory::kData,
            source + ":" + std::to_string(line) + ": quaternion is not unit length");
    }
    if (!out.empty() && v[0] < out.back().t) {
      raise(ErrorCategory::kOrdering,
            source + ":" + std::to_string(line) + ": time stamp goes backwards");
    }
    out.push_back({v[0], Rotation::from_quaternion(q)});
  });
  return out;
}

inline std::vector<TrajectoryRecord> read_trajectory(const std::filesystem::path& path) {
  std::ifstream in = detail::open_in(path);
  return parse_trajectory(in, path.string());
}

inline void format_trajectory(std::ostream& out, std::span<const TrajectoryRecord> traj) {
  for (const TrajectoryRecord& r : traj) {
    const Eigen::Quaterniond q = r.orientation.quaternion();
    out << format_double(r.t) << ' ' << format_double(q.x()) << ' ' << format_double(q.y())
        << ' ' << format_double(q.z()) << ' ' << format_double(q.w()) << '\n';
  }
}

inline void write_trajectory(const std::filesystem::path& path,
                             std::span<const TrajectoryRecord> traj) {
  std::ofstream out = detail::open_out(path);
  format_trajectory(out, traj);
  detail::check_written(out, path);
}

}  // namespace evstr::io
