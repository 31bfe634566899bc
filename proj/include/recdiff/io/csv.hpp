#pragma once

#include <charconv>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>
#include <system_error>
#include <vector>

#include "recdiff/core/errors.hpp"
#include "recdiff/recovery/episode.hpp"

namespace recdiff {

// CSV output is byte-deterministic: shortest round-trip decimal for every
// number ('.' decimal point, no locale), LF line endings, no quoting. Fields
// therefore must not contain commas, quotes, or newlines.

namespace detail {

inline std::string fmt_double(double x) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), x);
  if (res.ec != std::errc())
    throw IoError("cannot format a double");
  return std::string(buf, res.ptr);
}

inline std::string fmt_int(long long x) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), x);
  return std::string(buf, res.ptr);
}

inline double parse_double(const std::string& s) {
  const char* b = s.c_str();
  char* e = nullptr;
  const double v = std::strtod(b, &e);
  if (e == b || static_cast<size_t>(e - b) != s.size())
    throw IoError("bad numeric field: '" + s + "'");
  return v;
}

inline long long parse_int(const std::string& s) {
  long long v = 0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size())
    throw IoError("bad integer field: '" + s + "'");
  return v;
}

inline void check_field(const std::string& s) {
  for (char c : s)
    if (c == ',' || c == '"' || c == '\n' || c == '\r')
      throw IoError("field needs quoting, which this writer does not do: '" + s + "'");
}

inline std::vector<std::string> split_row(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  return out;
}

}  // namespace detail

// A header row plus data rows, all fields as text.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

inline std::string csv_to_string(const CsvTable& t) {
  std::string out;
  auto put_row = [&out](const std::vector<std::string>& row) {
    for (size_t i = 0; i < row.size(); ++i) {
      detail::check_field(row[i]);
      if (i) out.push_back(',');
      out += row[i];
    }
    out.push_back('\n');
  };
  put_row(t.header);
  for (const auto& r : t.rows) {
    if (r.size() != t.header.size())
      throw IoError("row width differs from header width");
    put_row(r);
  }
  return out;
}

inline void write_csv(const std::string& path, const CsvTable& t) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open for writing: " + path);
  os << csv_to_string(t);
  if (!os) throw IoError("write failed: " + path);
}

inline CsvTable read_csv(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open: " + path);
  CsvTable t;
  std::string line;
  bool first = true;
  while (std::getline(is, line)) {
    if (line.empty() && is.peek() == std::char_traits<char>::eof()) break;
    auto row = detail::split_row(line);
    if (first) {
      t.header = std::move(row);
      first = false;
    } else {
      if (row.size() != t.header.size())
        throw IoError("ragged row in " + path);
      t.rows.push_back(std::move(row));
    }
  }
  if (first) throw IoError("empty CSV: " + path);
  return t;
}

inline const char* kMetricsHeader[] = {
    "method",           "recovery_success", "recovery_timeout",
    "task_metric_mean", "task_metric_ci95", "plan_time_mean_s"};

// One row per method. With include_timing off, the timing column is written
// as 0 so that reruns of the same seed and config produce identical bytes.
inline CsvTable metrics_table(const std::vector<MethodSummary>& sums,
                              bool include_timing = true) {
  CsvTable t;
  for (const char* h : kMetricsHeader) t.header.emplace_back(h);
  for (const MethodSummary& s : sums) {
    t.rows.push_back({method_name(s.method),
                      detail::fmt_double(s.recovery_success),
                      detail::fmt_double(s.recovery_timeout),
                      detail::fmt_double(s.task_metric_mean),
                      detail::fmt_double(s.task_metric_ci95),
                      detail::fmt_double(include_timing ? s.plan_time_mean_s : 0.0)});
  }
  return t;
}

inline void write_metrics_csv(const std::string& path,
                              const std::vector<MethodSummary>& sums,
                              bool include_timing = true) {
  write_csv(path, metrics_table(sums, include_timing));
}

inline std::vector<MethodSummary> read_metrics_csv(const std::string& path) {
  const CsvTable t = read_csv(path);
  const size_t want = sizeof(kMetricsHeader) / sizeof(kMetricsHeader[0]);
  if (t.header.size() != want) throw IoError("unexpected metrics header in " + path);
  for (size_t i = 0; i < want; ++i)
    if (t.header[i] != kMetricsHeader[i])
      throw IoError("unexpected metrics header in " + path);
  std::vector<MethodSummary> out;
  for (const auto& r : t.rows) {
    MethodSummary s;
    s.method = method_from_name(r[0]);
    s.recovery_success = detail::parse_double(r[1]);
    s.recovery_timeout = detail::parse_double(r[2]);
    s.task_metric_mean = detail::parse_double(r[3]);
    s.task_metric_ci95 = detail::parse_double(r[4]);
    s.plan_time_mean_s = detail::parse_double(r[5]);
    out.push_back(s);
  }
  return out;
}

}  // namespace recdiff
