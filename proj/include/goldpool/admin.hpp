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

#include <set>
#include <sstream>

#include "goldpool/daemons.hpp"
#include "goldpool/log_store.hpp"

// Project administration: create a data dir, inspect counts, cancel a
// unit, tweak config knobs. Write operations expect the server to be
// stopped (single-process store); status/stats reads are safe against a
// live data dir via read-only opens.

namespace goldpool::admin {

using core::Id;

// Creates the data directory with the generation frontier at the first
// interesting even number. Refuses to re-init a project that has state.
inline void init_project(const std::filesystem::path& data_dir) {
  core::LogStore store(data_dir);
  store.transact([&](core::Txn& t) {
    if (t.unit_rows() != 0 || t.meta(server::kFrontierKey, 0) != 0)
      throw core::InvalidArgumentError("project already initialized: " + data_dir.string());
    t.put_meta(server::kFrontierKey, 4);
  });
  store.snapshot_now();
}

struct StatusReport {
  std::uint64_t users = 0;
  std::uint64_t hosts = 0;
  std::uint64_t units_by_state[6] = {};
  std::uint64_t tasks_by_state[7] = {};
  std::uint64_t task_rows = 0;
  std::uint64_t archive_rows = 0;
  std::uint64_t frontier = 4;
  std::uint64_t credit_total = 0;

  std::string to_text() const {
    std::ostringstream os;
    os << "users: " << users << "\nhosts: " << hosts << "\nfrontier: " << frontier
       << "\ncredit_total: " << credit_total << "\nunits:";
    for (int s = 0; s < 6; ++s)
      os << ' ' << core::to_string((core::WuState)s) << '=' << units_by_state[s];
    os << "\ntasks:";
    for (int s = 0; s < 7; ++s)
      os << ' ' << core::to_string((core::TaskState)s) << '=' << tasks_by_state[s];
    os << "\narchive_rows: " << archive_rows << '\n';
    return os.str();
  }
};

inline StatusReport status(core::Txn& t) {
  StatusReport r;
  r.users = t.user_rows();
  r.hosts = t.host_rows();
  for (int s = 0; s < 6; ++s) r.units_by_state[s] = t.unit_count((core::WuState)s);
  for (int s = 0; s < 7; ++s) r.tasks_by_state[s] = t.task_count((core::TaskState)s);
  r.task_rows = t.task_rows();
  r.archive_rows = t.archive_rows();
  r.frontier = (std::uint64_t)t.meta(server::kFrontierKey, 4);
  t.for_each_user([&](const core::UserRecord& u) { r.credit_total += u.credit_total; });
  return r;
}

struct CancelOutcome {
  std::uint32_t cancelled_sent = 0;
  std::uint32_t invalidated_returned = 0;
  std::uint32_t deleted_unsent = 0;
  bool unit_errored = false;
};

// Cancels every non-terminal instance of the unit. Instances that were
// never handed out simply disappear; in-flight ones are CANCELLED so a late
// report gets a proper rejection; unadjudicated returns become INVALID.
// A unit that has not delivered science yet ends in ERROR (a GENERATED one
// passes through IN_PROGRESS — there is no direct edge); a unit already
// past validation keeps its archive course.
inline CancelOutcome cancel_workunit(core::Txn& t, Id wu_id) {
  CancelOutcome out;
  const core::WorkUnit wu = t.unit_or_throw(wu_id);
  for (Id tid : t.tasks_of(wu_id)) {
    const core::TaskInstance row = t.task_or_throw(tid);
    switch (row.state) {
      case core::TaskState::Unsent:
        t.delete_task(tid);
        ++out.deleted_unsent;
        break;
      case core::TaskState::Sent:
        t.transition_task(tid, core::TaskState::Sent, core::TaskState::Cancelled);
        ++out.cancelled_sent;
        break;
      case core::TaskState::Returned:
        t.transition_task(tid, core::TaskState::Returned, core::TaskState::Invalid);
        ++out.invalidated_returned;
        break;
      default:
        break;
    }
  }
  if (wu.state == core::WuState::Generated) {
    t.transition_unit(wu_id, core::WuState::Generated, core::WuState::InProgress);
    t.transition_unit(wu_id, core::WuState::InProgress, core::WuState::Error);
    out.unit_errored = true;
  } else if (wu.state == core::WuState::InProgress) {
    t.transition_unit(wu_id, core::WuState::InProgress, core::WuState::Error,
                      [](core::WorkUnit& u) {
                        u.needs_validation = false;
                        u.pending_disagreement = false;
                      });
    out.unit_errored = true;
  }
  return out;
}

inline const std::set<std::string>& config_keys() {
  static const std::set<std::string> keys = {
      "per_host_cap",     "buffer_target",   "width_evens",        "credit_per_million",
      "retention_secs",   "poll_ms",         "replication",        "quorum",
      "max_total_instances", "deadline_secs", "capability_sizing", "frontier_limit",
      "flops_per_even",   "stats_window_secs"};
  return keys;
}

// Stores an override; the staged value is validated by loading the full
// config before commit, so a nonsense value aborts the transaction.
inline void set_config(core::Txn& t, const std::string& key, std::int64_t value) {
  if (!config_keys().count(key))
    throw core::InvalidArgumentError("unknown config key: " + key);
  t.put_meta("cfg." + key, value);
  server::load_config(t);  // throws on invalid combinations
}

}  // namespace goldpool::admin
