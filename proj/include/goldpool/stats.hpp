/*
 * Copyright 2026 the goldpool authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <cinttypes>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "goldpool/store.hpp"

// Project statistics: the throughput estimate (validated work x assumed
// flops per even over a time window) and per-day registration counts.

namespace goldpool::stats {

using core::TimeMs;

class IoError : public std::runtime_error {
 public:
  explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

struct ThroughputEstimate {
  TimeMs window_start = 0;
  TimeMs window_end = 0;
  std::uint64_t tasks_validated = 0;
  std::uint64_t evens_validated = 0;
  double est_flops = 0.0;  // operations per second
};

// Counts VALID tasks received in [window_start, window_end) — half-open,
// matching the day-bucket convention. The estimate is exactly
// evens x flops_per_even / window_seconds.
inline ThroughputEstimate estimate_throughput(core::Txn& t, TimeMs window_start,
                                              TimeMs window_end, double flops_per_even) {
  if (window_end <= window_start)
    throw core::InvalidArgumentError("throughput window must have positive length");
  ThroughputEstimate e;
  e.window_start = window_start;
  e.window_end = window_end;
  t.for_each_task([&](const core::TaskInstance& row) {
    if (row.state != core::TaskState::Valid) return;
    if (!row.received_at || *row.received_at < window_start || *row.received_at >= window_end)
      return;
    ++e.tasks_validated;
    e.evens_validated += row.payload ? row.payload->evens_checked : 0;
  });
  const double window_secs =
      static_cast<double>(window_end - window_start) / (double)core::kMsPerSec;
  e.est_flops = (double)e.evens_validated * flops_per_even / window_secs;
  return e;
}

struct DailyGrowth {
  std::uint32_t day = 0;
  std::uint32_t new_users = 0;
  std::uint32_t new_hosts = 0;
};

// Per-day registration counts from the stored timestamps, zero-filled
// through the last day that saw either kind of arrival. Day 0 starts at
// epoch/simulation start.
inline std::vector<DailyGrowth> daily_growth(core::Txn& t) {
  std::vector<DailyGrowth> rows;
  auto day_of = [](TimeMs at) { return (std::uint32_t)(at / core::kMsPerDay); };
  auto ensure = [&](std::uint32_t day) -> DailyGrowth& {
    while (rows.size() <= day) rows.push_back({(std::uint32_t)rows.size(), 0, 0});
    return rows[day];
  };
  bool any = false;
  t.for_each_user([&](const core::UserRecord& u) {
    ensure(day_of(u.registered_at)).new_users++;
    any = true;
  });
  t.for_each_host([&](const core::HostRecord& h) {
    ensure(day_of(h.registered_at)).new_hosts++;
    any = true;
  });
  if (!any) rows.clear();
  return rows;
}

// ---- CSV export ----
// RFC-4180: CRLF line endings, header row. All fields here are plain
// numerics, so no quoting is ever needed, and re-export of equal inputs is
// byte-identical.

inline std::string growth_to_csv(const std::vector<DailyGrowth>& rows) {
  std::string out = "day,new_users,new_hosts\r\n";
  char line[96];
  for (const DailyGrowth& r : rows) {
    std::snprintf(line, sizeof line, "%u,%u,%u\r\n", r.day, r.new_users, r.new_hosts);
    out += line;
  }
  return out;
}

inline std::string throughput_to_csv(const ThroughputEstimate& e) {
  std::string out = "window_start_ms,window_end_ms,tasks_validated,evens_validated,est_flops\r\n";
  char line[160];
  std::snprintf(line, sizeof line, "%" PRId64 ",%" PRId64 ",%" PRIu64 ",%" PRIu64 ",%.6g\r\n",
                e.window_start, e.window_end, e.tasks_validated, e.evens_validated, e.est_flops);
  out += line;
  return out;
}

inline void export_csv(const std::string& content, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  out.write(content.data(), (std::streamsize)content.size());
  out.flush();
  if (!out) throw IoError("write failed: " + path.string());
}

}  // namespace goldpool::stats
