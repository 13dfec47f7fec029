// Copyright 2026 The asynclqr Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "asynclqr/engine.hpp"
#include "asynclqr/errors.hpp"

namespace asynclqr {

inline constexpr const char* kTraceFixedColumns[] = {
    "n", "clock", "avg_grad_norm_sq", "max_staleness", "all_stable"};
inline constexpr std::size_t kTraceFixedCount = 5;

inline std::string trace_header(std::size_t M) {
  std::string h;
  for (std::size_t k = 0; k < kTraceFixedCount; ++k) {
    if (k > 0) h += ',';
    h += kTraceFixedColumns[k];
  }
  for (std::size_t i = 1; i <= M; ++i) h += ",gap_" + std::to_string(i);
  return h;
}

/// Shortest text that round-trips a double.
inline std::string format_real(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline void write_trace_csv(std::ostream& os, const std::vector<TraceRecord>& trace) {
  const std::size_t M = trace.empty() ? 0 : trace.front().gaps.size();
  os << trace_header(M) << '\n';
  for (const TraceRecord& r : trace) {
    if (r.gaps.size() != M) throw Error("trace records disagree on the fleet size");
    os << r.n << ',' << format_real(r.clock) << ',' << format_real(r.avg_grad_norm_sq)
       << ',' << r.max_staleness() << ',' << (r.all_stable ? 1 : 0);
    for (double g : r.gaps) os << ',' << format_real(g);
    os << '\n';
  }
}

inline void write_trace_csv(const std::string& path,
                            const std::vector<TraceRecord>& trace) {
  std::ofstream os(path);
  if (!os) throw Error("cannot open " + path + " for writing");
  write_trace_csv(os, trace);
  if (!os) throw Error("failed writing " + path);
}

/// One parsed CSV row. Per-report staleness is not stored in the CSV, only
/// its maximum.
struct TraceRow {
  std::int64_t n = 0;
  double clock = 0.0;
  double avg_grad_norm_sq = 0.0;
  std::int64_t max_staleness = 0;
  bool all_stable = true;
  std::vector<double> gaps;
};

struct TraceTable {
  std::string source;
  std::vector<TraceRow> rows;

  std::size_t fleet_size() const { return rows.empty() ? 0 : rows.front().gaps.size(); }
};

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream is(line);
  while (std::getline(is, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

inline double parse_real(const std::string& s, const std::string& where) {
  // strtod accepts "inf" and "nan", which the writer emits for unstable iterates.
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (s.empty() || end != s.c_str() + s.size()) {
    throw IncompatibleTraces(where + ": not a number: '" + s + "'");
  }
  return v;
}

inline std::int64_t parse_int(const std::string& s, const std::string& where) {
  char* end = nullptr;
  const long long v = std::strtoll(s.c_str(), &end, 10);
  if (s.empty() || end != s.c_str() + s.size()) {
    throw IncompatibleTraces(where + ": not an integer: '" + s + "'");
  }
  return v;
}

}  // namespace detail

inline TraceTable read_trace_csv(std::istream& is, const std::string& source) {
  TraceTable t;
  t.source = source;
  std::string line;
  if (!std::getline(is, line)) throw IncompatibleTraces(source + ": empty trace file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const std::vector<std::string> header = detail::split_csv_line(line);
  if (header.size() < kTraceFixedCount + 1) {
    throw IncompatibleTraces(source + ": header has too few columns");
  }
  const std::size_t M = header.size() - kTraceFixedCount;
  if (line != trace_header(M)) {
    throw IncompatibleTraces(source + ": unexpected header '" + line + "'");
  }
  std::size_t lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const std::vector<std::string> f = detail::split_csv_line(line);
    const std::string where = source + ":" + std::to_string(lineno);
    if (f.size() != header.size()) {
      throw IncompatibleTraces(where + ": expected " + std::to_string(header.size()) +
                               " fields, got " + std::to_string(f.size()));
    }
    TraceRow row;
    row.n = detail::parse_int(f[0], where);
    row.clock = detail::parse_real(f[1], where);
    row.avg_grad_norm_sq = detail::parse_real(f[2], where);
    row.max_staleness = detail::parse_int(f[3], where);
    row.all_stable = detail::parse_int(f[4], where) != 0;
    row.gaps.reserve(M);
    for (std::size_t i = 0; i < M; ++i) {
      row.gaps.push_back(detail::parse_real(f[kTraceFixedCount + i], where));
    }
    t.rows.push_back(std::move(row));
  }
  return t;
}

inline TraceTable read_trace_csv(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw Error("cannot open " + path);
  return read_trace_csv(is, path);
}

/// Rows of an in-memory trace, as they would read back from the CSV.
inline TraceTable to_table(const std::vector<TraceRecord>& trace,
                           const std::string& source = "<memory>") {
  TraceTable t;
  t.source = source;
  t.rows.reserve(trace.size());
  for (const TraceRecord& r : trace) {
    t.rows.push_back({r.n, r.clock, r.avg_grad_norm_sq, r.max_staleness(),
                      r.all_stable, r.gaps});
  }
  return t;
}

}  // namespace asynclqr
