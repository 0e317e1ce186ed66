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

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "goldpool/clock.hpp"
#include "goldpool/store.hpp"

// Scheduler-facing operations: host registration, work assignment, result
// intake. The daemons (see daemons.hpp) share the same config object.

namespace goldpool::server {

using core::Id;
using core::TimeMs;

struct SchedulerConfig {
  std::uint32_t per_host_task_cap = 4;
  std::uint32_t unsent_buffer_target = 100;
  std::uint64_t generator_range_width_evens = 1'000'000;
  std::uint64_t credit_per_million_evens = 1;
  std::int64_t retention_after_assimilation_secs = 86'400;
  std::int64_t daemon_poll_interval_ms = 5'000;

  // Replication policy stamped onto new units.
  std::uint32_t target_replication = 2;
  std::uint32_t quorum = 2;
  std::uint32_t max_total_instances = 8;
  std::int64_t deadline_delay_secs = 7 * 86'400;

  // Optional behaviors.
  bool capability_sizing = false;     // scale range width by mean cpu class
  std::uint64_t frontier_limit = 0;   // stop generating at this even (0 = never)
  double flops_per_even = 1000.0;     // for the /stats estimate
  std::int64_t stats_window_secs = 3600;

  void validate() const {
    if (per_host_task_cap < 1 || unsent_buffer_target < 1 ||
        generator_range_width_evens < 1 || credit_per_million_evens < 1)
      throw core::InvalidArgumentError("scheduler counts must be at least 1");
    if (retention_after_assimilation_secs <= 0 || daemon_poll_interval_ms <= 0 ||
        deadline_delay_secs <= 0)
      throw core::InvalidArgumentError("scheduler durations must be positive");
    if (quorum < 1) throw core::InvalidArgumentError("quorum must be at least 1");
    if (frontier_limit != 0 && (frontier_limit % 2 != 0 || frontier_limit < 4))
      throw core::InvalidArgumentError("frontier limit must be an even number >= 4");
  }

  // Policy as stamped onto a new unit. quorum may be raised above the
  // configured replication via set-config; the unit invariant
  // quorum <= replication <= max then pulls the other two up.
  std::uint32_t effective_replication() const { return std::max(target_replication, quorum); }
  std::uint32_t effective_max_instances() const {
    return std::max(max_total_instances, effective_replication());
  }
};

// Reads `cfg.*` overrides (written by `admin set-config`) over the given
// defaults.
inline SchedulerConfig load_config(core::Txn& t, SchedulerConfig defaults = {}) {
  SchedulerConfig c = defaults;
  auto get = [&](const char* key, std::int64_t fallback) {
    return t.meta(std::string("cfg.") + key, fallback);
  };
  c.per_host_task_cap = (std::uint32_t)get("per_host_cap", c.per_host_task_cap);
  c.unsent_buffer_target = (std::uint32_t)get("buffer_target", c.unsent_buffer_target);
  c.generator_range_width_evens = (std::uint64_t)get("width_evens", c.generator_range_width_evens);
  c.credit_per_million_evens = (std::uint64_t)get("credit_per_million", c.credit_per_million_evens);
  c.retention_after_assimilation_secs = get("retention_secs", c.retention_after_assimilation_secs);
  c.daemon_poll_interval_ms = get("poll_ms", c.daemon_poll_interval_ms);
  c.target_replication = (std::uint32_t)get("replication", c.target_replication);
  c.quorum = (std::uint32_t)get("quorum", c.quorum);
  c.max_total_instances = (std::uint32_t)get("max_total_instances", c.max_total_instances);
  c.deadline_delay_secs = get("deadline_secs", c.deadline_delay_secs);
  c.capability_sizing = get("capability_sizing", c.capability_sizing ? 1 : 0) != 0;
  c.frontier_limit = (std::uint64_t)get("frontier_limit", c.frontier_limit);
  c.flops_per_even = (double)get("flops_per_even", (std::int64_t)c.flops_per_even);
  c.stats_window_secs = get("stats_window_secs", c.stats_window_secs);
  c.validate();
  return c;
}

struct Registration {
  Id host_id = core::kNoId;
  Id user_id = core::kNoId;
};

// Looks the user up by display name, creating them on first contact, and
// registers a new host under them.
inline Registration register_host(core::Store& store, const core::Clock& clock,
                                  const std::string& user_name, const core::HostSpec& spec) {
  core::validate_host_spec(spec);
  if (user_name.empty()) throw core::InvalidArgumentError("user name must not be empty");
  return core::with_txn(store, [&](core::Txn& t) {
    const TimeMs now = clock.now_ms();
    Id user = t.find_user(user_name);
    if (user == core::kNoId) {
      core::UserRecord u;
      u.display_name = user_name;
      u.registered_at = now;
      user = t.new_user(u);
    }
    core::HostRecord h;
    h.user_id = user;
    h.ram_bytes = spec.ram_bytes;
    h.free_disk_bytes = spec.free_disk_bytes;
    h.cpu_class = spec.cpu_class;
    h.registered_at = now;
    return Registration{t.new_host(h), user};
  });
}

struct TaskGrant {
  Id task_id = core::kNoId;
  goldbach::GoldbachRange range;
  TimeMs deadline = 0;
};

namespace detail {

// True if any instance of the unit has ever been on this host. Replicas
// must land on distinct hosts or replication proves nothing.
inline bool unit_touched_host(core::Txn& t, Id wu_id, Id host_id) {
  for (Id tid : t.tasks_of(wu_id)) {
    auto row = t.task(tid);
    if (row && row->host_id == host_id) return true;
  }
  return false;
}

}  // namespace detail

// Hand out up to (per_host_task_cap - tasks_in_progress) tasks: queued
// UNSENT instances first, then freshly minted instances of units still
// short of their replication target. Ranges are assigned in ascending
// order because both indexes iterate in id order.
inline std::vector<TaskGrant> assign_work(core::Store& store, const core::Clock& clock,
                                          const SchedulerConfig& cfg, Id host_id,
                                          std::uint32_t max_tasks = UINT32_MAX) {
  return core::with_txn(store, [&](core::Txn& t) {
    const TimeMs now = clock.now_ms();
    const core::HostRecord host = t.host_or_throw(host_id);
    std::vector<TaskGrant> grants;

    std::uint32_t budget = 0;
    if (host.tasks_in_progress < cfg.per_host_task_cap)
      budget = std::min(cfg.per_host_task_cap - host.tasks_in_progress, max_tasks);
    if (budget == 0) return grants;

    std::set<Id> granted_units;

    auto send = [&](Id task_id, const core::WorkUnit& wu) {
      const TimeMs deadline = now + wu.deadline_delay_ms;
      const bool ok = t.transition_task(task_id, core::TaskState::Unsent, core::TaskState::Sent,
                                        [&](core::TaskInstance& row) {
                                          row.host_id = host_id;
                                          row.sent_at = now;
                                          row.deadline = deadline;
                                        });
      if (!ok) return false;
      t.transition_unit(wu.wu_id, core::WuState::Generated, core::WuState::InProgress);
      granted_units.insert(wu.wu_id);
      grants.push_back({task_id, wu.range(), deadline});
      --budget;
      return true;
    };

    // Queued instances (timeout replacements, disagreement extras).
    for (Id tid : t.unsent_tasks()) {
      if (budget == 0) break;
      auto row = t.task(tid);
      if (!row || row->state != core::TaskState::Unsent) continue;
      auto wu = t.unit(row->wu_id);
      if (!wu || (wu->state != core::WuState::Generated && wu->state != core::WuState::InProgress))
        continue;
      if (granted_units.count(wu->wu_id) || detail::unit_touched_host(t, wu->wu_id, host_id))
        continue;
      send(tid, *wu);
    }

    // Fresh instances of units below their replication target.
    for (Id wid : t.open_units()) {
      if (budget == 0) break;
      if (granted_units.count(wid)) continue;
      auto wu = t.unit(wid);
      if (!wu || (wu->state != core::WuState::Generated && wu->state != core::WuState::InProgress))
        continue;
      if (t.tasks_of(wid).size() >= wu->target_replication) continue;
      if (detail::unit_touched_host(t, wid, host_id)) continue;
      core::TaskInstance fresh;
      fresh.wu_id = wid;
      send(t.new_task(fresh), *wu);
    }

    return grants;
  });
}

enum class ReportStatus { Ok, Rejected };

struct ReportOutcome {
  ReportStatus status = ReportStatus::Rejected;
  std::string reason;  // set when rejected
};

// Accepts a result for a SENT task; everything else is either an
// idempotent duplicate (ack, no change) or a rejection. A host that missed
// its deadline learns about it here — there is no push channel.
inline ReportOutcome report_result(core::Store& store, const core::Clock& clock, Id task_id,
                                   const goldbach::GoldbachResult& payload) {
  return core::with_txn(store, [&](core::Txn& t) -> ReportOutcome {
    const TimeMs now = clock.now_ms();
    const core::TaskInstance row = t.task_or_throw(task_id);
    switch (row.state) {
      case core::TaskState::Sent: {
        t.transition_task(task_id, core::TaskState::Sent, core::TaskState::Returned,
                          [&](core::TaskInstance& r) {
                            r.payload = payload;
                            r.received_at = now;
                          });
        return {ReportStatus::Ok, {}};
      }
      case core::TaskState::Returned:
      case core::TaskState::Valid:
      case core::TaskState::Invalid:
        if (row.payload && *row.payload == payload) return {ReportStatus::Ok, {}};
        return {ReportStatus::Rejected, "conflicting duplicate report"};
      case core::TaskState::TimedOut:
        return {ReportStatus::Rejected, "deadline expired"};
      case core::TaskState::Cancelled:
        return {ReportStatus::Rejected, "task cancelled"};
      case core::TaskState::Unsent:
        return {ReportStatus::Rejected, "task was never sent"};
    }
    return {ReportStatus::Rejected, "unknown state"};
  });
}

}  // namespace goldpool::server
