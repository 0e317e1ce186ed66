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

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>

#include "goldpool/clock.hpp"
#include "goldpool/goldbach.hpp"

namespace goldpool::core {

// Store-issued identifiers: monotonically increasing per table, never 0.
using Id = std::uint64_t;
constexpr Id kNoId = 0;

class NotFoundError : public std::runtime_error {
 public:
  explicit NotFoundError(const std::string& what) : std::runtime_error(what) {}
};

class InvalidArgumentError : public std::invalid_argument {
 public:
  explicit InvalidArgumentError(const std::string& what) : std::invalid_argument(what) {}
};

// ---- work unit lifecycle ----
//
//   GENERATED -> IN_PROGRESS -> VALIDATED -> ASSIMILATED -> PURGED
//                     `-> ERROR
//
// Every state change goes through a compare-and-set against this edge set;
// there is no other way to move a unit, so an illegal hop is a bug by
// construction rather than a convention.

enum class WuState : std::uint8_t {
  Generated,
  InProgress,
  Validated,
  Assimilated,
  Purged,
  Error,
};

constexpr bool wu_transition_legal(WuState from, WuState to) {
  switch (from) {
    case WuState::Generated:
      return to == WuState::InProgress;
    case WuState::InProgress:
      return to == WuState::Validated || to == WuState::Error;
    case WuState::Validated:
      return to == WuState::Assimilated;
    case WuState::Assimilated:
      return to == WuState::Purged;
    case WuState::Purged:
    case WuState::Error:
      return false;
  }
  return false;
}

constexpr bool wu_state_terminal(WuState s) {
  return s == WuState::Purged || s == WuState::Error;
}

constexpr const char* to_string(WuState s) {
  switch (s) {
    case WuState::Generated: return "GENERATED";
    case WuState::InProgress: return "IN_PROGRESS";
    case WuState::Validated: return "VALIDATED";
    case WuState::Assimilated: return "ASSIMILATED";
    case WuState::Purged: return "PURGED";
    case WuState::Error: return "ERROR";
  }
  return "?";
}

// ---- task instance lifecycle ----
//
//   UNSENT -> SENT -> RETURNED -> VALID | INVALID
//               |`-> TIMED_OUT
//                `-> CANCELLED

enum class TaskState : std::uint8_t {
  Unsent,
  Sent,
  Returned,
  TimedOut,
  Valid,
  Invalid,
  Cancelled,
};

constexpr bool task_transition_legal(TaskState from, TaskState to) {
  switch (from) {
    case TaskState::Unsent:
      return to == TaskState::Sent;
    case TaskState::Sent:
      return to == TaskState::Returned || to == TaskState::TimedOut ||
             to == TaskState::Cancelled;
    case TaskState::Returned:
      return to == TaskState::Valid || to == TaskState::Invalid;
    case TaskState::TimedOut:
    case TaskState::Valid:
    case TaskState::Invalid:
    case TaskState::Cancelled:
      return false;
  }
  return false;
}

constexpr bool task_state_terminal(TaskState s) {
  return s == TaskState::TimedOut || s == TaskState::Valid ||
         s == TaskState::Invalid || s == TaskState::Cancelled;
}

constexpr const char* to_string(TaskState s) {
  switch (s) {
    case TaskState::Unsent: return "UNSENT";
    case TaskState::Sent: return "SENT";
    case TaskState::Returned: return "RETURNED";
    case TaskState::TimedOut: return "TIMED_OUT";
    case TaskState::Valid: return "VALID";
    case TaskState::Invalid: return "INVALID";
    case TaskState::Cancelled: return "CANCELLED";
  }
  return "?";
}

// ---- rows ----

struct WorkUnit {
  Id wu_id = kNoId;
  std::uint64_t range_start = 4;
  std::uint64_t range_end = 4;
  std::uint32_t target_replication = 2;  // instances wanted out at once
  std::uint32_t quorum = 2;              // agreeing results needed
  std::uint32_t max_total_instances = 8; // lifetime cap before giving up
  TimeMs deadline_delay_ms = 0;          // per-instance completion budget
  WuState state = WuState::Generated;
  TimeMs created_at = 0;
  Id canonical_result_id = kNoId;  // task whose payload won validation

  // Pipeline bookkeeping (all maintained by the daemons, not clients).
  bool needs_validation = false;      // quorum met, validator should look
  bool pending_disagreement = false;  // validation ran and failed to agree
  std::uint32_t returned_at_last_validation = 0;
  TimeMs validated_at = 0;
  TimeMs assimilated_at = 0;

  goldbach::GoldbachRange range() const { return {range_start, range_end}; }
};

struct TaskInstance {
  Id task_id = kNoId;
  Id wu_id = kNoId;
  Id host_id = kNoId;  // 0 until sent
  TaskState state = TaskState::Unsent;
  TimeMs sent_at = 0;
  TimeMs deadline = 0;  // sent_at + parent's deadline_delay_ms
  std::optional<TimeMs> received_at;
  std::optional<goldbach::GoldbachResult> payload;  // present iff RETURNED/VALID/INVALID
  std::uint64_t credit_granted = 0;                 // nonzero only when VALID
};

struct HostRecord {
  Id host_id = kNoId;
  Id user_id = kNoId;
  std::uint64_t ram_bytes = 0;
  std::uint64_t free_disk_bytes = 0;
  std::uint32_t cpu_class = 3;  // 1 (slowest) .. 5 (fastest)
  TimeMs registered_at = 0;
  std::uint32_t tasks_in_progress = 0;  // live SENT instances on this host
};

struct UserRecord {
  Id user_id = kNoId;
  std::string display_name;
  TimeMs registered_at = 0;
  std::uint64_t credit_total = 0;
  // Credit whose backing task rows have been purged. The audit identity is
  //   credit_total == sum(credit of live VALID tasks) + credit_purged
  // and cleanup maintains it inside the purging transaction.
  std::uint64_t credit_purged = 0;
};

// One row per validated unit: the scientific output that outlives the
// operational tables.
struct ArchiveRecord {
  Id wu_id = kNoId;
  std::uint64_t range_start = 4;
  std::uint64_t range_end = 4;
  goldbach::GoldbachResult result;
  TimeMs validated_at = 0;

  goldbach::GoldbachRange range() const { return {range_start, range_end}; }
};

struct HostSpec {
  std::uint64_t ram_bytes = 0;
  std::uint64_t free_disk_bytes = 0;
  std::uint32_t cpu_class = 3;
};

inline void validate_host_spec(const HostSpec& h) {
  if (h.ram_bytes == 0 || h.free_disk_bytes == 0)
    throw InvalidArgumentError("host resources must be positive");
  if (h.cpu_class < 1 || h.cpu_class > 5)
    throw InvalidArgumentError("cpu_class must be in 1..5");
}

}  // namespace goldpool::core
