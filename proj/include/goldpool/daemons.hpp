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

#include <condition_variable>
#include <map>
#include <set>
#include <thread>
#include <tuple>

#include "goldpool/scheduler.hpp"

// The five server daemons. Each *_step function is one poll pass over one
// transaction: collect the worklist from the committed snapshot, stage all
// changes, commit. Steps are idempotent — rerunning one against an
// unchanged store is a no-op — so the system behaves the same whether the
// daemons run interleaved, round-robin, or after a crash-restart.

namespace goldpool::server {

inline constexpr const char* kFrontierKey = "frontier";

// ---- work generator ----

struct GeneratorOutcome {
  std::uint32_t units_created = 0;
  std::uint64_t frontier = 4;
};

namespace detail {

inline std::uint64_t effective_width(core::Txn& t, const SchedulerConfig& cfg) {
  if (!cfg.capability_sizing) return cfg.generator_range_width_evens;
  const double mean = t.mean_cpu_class();
  if (mean <= 0.0) return cfg.generator_range_width_evens;
  const auto cls = std::clamp<std::int64_t>(std::llround(mean), 1, 5);
  return std::max<std::uint64_t>(1, cfg.generator_range_width_evens * (std::uint64_t)cls / 3);
}

}  // namespace detail

// Keeps the assignable supply (queued UNSENT instances plus instances the
// GENERATED units will mint) at or above unsent_buffer_target, tiling new
// ranges off the frontier with no gap and no overlap.
inline GeneratorOutcome work_generator_step(core::Txn& t, const SchedulerConfig& cfg,
                                            core::TimeMs now) {
  std::uint64_t frontier = (std::uint64_t)t.meta(kFrontierKey, 4);
  GeneratorOutcome out;
  std::uint64_t supply = t.task_count(core::TaskState::Unsent) +
                         t.unit_count(core::WuState::Generated) * cfg.effective_replication();
  const std::uint64_t start_frontier = frontier;
  while (supply < cfg.unsent_buffer_target) {
    if (cfg.frontier_limit != 0 && frontier >= cfg.frontier_limit) break;
    const std::uint64_t width = detail::effective_width(t, cfg);
    std::uint64_t end = frontier + 2 * (width - 1);
    if (cfg.frontier_limit != 0) end = std::min(end, cfg.frontier_limit - 2);

    core::WorkUnit wu;
    wu.range_start = frontier;
    wu.range_end = end;
    wu.target_replication = cfg.effective_replication();
    wu.quorum = cfg.quorum;
    wu.max_total_instances = cfg.effective_max_instances();
    wu.deadline_delay_ms = cfg.deadline_delay_secs * core::kMsPerSec;
    wu.created_at = now;
    t.new_unit(wu);

    ++out.units_created;
    supply += cfg.effective_replication();
    frontier = end + 2;
  }
  if (frontier != start_frontier) t.put_meta(kFrontierKey, (std::int64_t)frontier);
  out.frontier = frontier;
  return out;
}

// ---- transitioner ----

struct TransitionerOutcome {
  std::uint32_t timed_out = 0;
  std::uint32_t replacements = 0;     // instances minted for timeouts
  std::uint32_t extra_replicas = 0;   // instances minted after disagreement
  std::uint32_t flagged = 0;          // units handed to the validator
  std::uint32_t errored = 0;          // units that ran out of instances
};

inline TransitionerOutcome transitioner_step(core::Txn& t, const SchedulerConfig& cfg,
                                             core::TimeMs now) {
  (void)cfg;
  TransitionerOutcome out;

  const std::vector<core::Id> due = t.due_sent_tasks(now);
  const std::vector<core::Id> dirty = t.dirty_units();
  std::set<core::Id> units(dirty.begin(), dirty.end());

  // Expire overdue SENT instances wherever they are; mint a replacement
  // only while the parent is still being worked on.
  for (core::Id tid : due) {
    auto row = t.task(tid);
    if (!row || row->state != core::TaskState::Sent) continue;
    if (!t.transition_task(tid, core::TaskState::Sent, core::TaskState::TimedOut)) continue;
    ++out.timed_out;
    units.insert(row->wu_id);
    auto wu = t.unit(row->wu_id);
    if (wu && wu->state == core::WuState::InProgress &&
        t.tasks_of(wu->wu_id).size() < wu->max_total_instances) {
      core::TaskInstance fresh;
      fresh.wu_id = wu->wu_id;
      t.new_task(fresh);
      ++out.replacements;
    }
  }

  for (core::Id wid : units) {
    auto maybe = t.unit(wid);
    if (!maybe) continue;
    core::WorkUnit wu = *maybe;

    if (wu.state != core::WuState::InProgress) {
      // Late events against a settled unit: queued instances will never be
      // sent, and straggler results will never be validated.
      for (core::Id tid : t.tasks_of(wid)) {
        auto row = t.task(tid);
        if (!row) continue;
        if (row->state == core::TaskState::Unsent) t.delete_task(tid);
        else if (row->state == core::TaskState::Returned)
          t.transition_task(tid, core::TaskState::Returned, core::TaskState::Invalid);
      }
      continue;
    }

    auto census = [&] {
      std::uint32_t returned = 0, live = 0, total = 0;
      for (core::Id tid : t.tasks_of(wid)) {
        auto row = t.task(tid);
        if (!row) continue;
        ++total;
        if (row->state == core::TaskState::Returned) ++returned;
        if (row->state == core::TaskState::Unsent || row->state == core::TaskState::Sent) ++live;
      }
      return std::tuple(returned, live, total);
    };
    auto [returned, live, total] = census();

    if (wu.pending_disagreement) {
      if (total < wu.max_total_instances) {
        core::TaskInstance fresh;
        fresh.wu_id = wid;
        t.new_task(fresh);
        ++out.extra_replicas;
        ++live;
        ++total;
      }
      wu.pending_disagreement = false;
      t.put_unit(wu);
    }

    if (returned >= wu.quorum && returned > wu.returned_at_last_validation &&
        !wu.needs_validation) {
      wu.needs_validation = true;
      t.put_unit(wu);
      ++out.flagged;
    }

    // Nothing in flight, not enough returns, room to grow: reissue. This
    // covers cancellations and replacement minting missed at the max.
    if (!wu.needs_validation && live == 0 && returned < wu.quorum &&
        total < wu.max_total_instances) {
      core::TaskInstance fresh;
      fresh.wu_id = wid;
      t.new_task(fresh);
      ++live;
      ++total;
    }

    // Nothing in flight and nothing for the validator: the unit cannot
    // make progress anymore.
    if (live == 0 && !wu.needs_validation) {
      t.transition_unit(wid, core::WuState::InProgress, core::WuState::Error);
      for (core::Id tid : t.tasks_of(wid))
        t.transition_task(tid, core::TaskState::Returned, core::TaskState::Invalid);
      ++out.errored;
    }
  }

  t.clear_dirty({units.begin(), units.end()});
  return out;
}

// ---- validator ----

struct ValidatorOutcome {
  std::uint32_t units_validated = 0;
  std::uint32_t disagreements = 0;
  std::uint32_t tasks_valid = 0;
  std::uint32_t tasks_invalid = 0;
  std::uint64_t credit_granted = 0;
  std::uint64_t evens_validated = 0;
};

namespace detail {

inline bool structurally_valid(const goldbach::GoldbachResult& r,
                               const goldbach::GoldbachRange& range) {
  if (r.counterexample) {
    const std::uint64_t cx = *r.counterexample;
    if (cx % 2 != 0 || cx < range.start || cx > range.end) return false;
    if (r.evens_checked != (cx - range.start) / 2 + 1) return false;
    if (r.evens_checked > 1 && r.max_min_p < 2) return false;
    return true;
  }
  if (r.evens_checked != range.evens()) return false;
  if (r.max_min_p < 2) return false;
  if (r.argmax_n < range.start || r.argmax_n > range.end || r.argmax_n % 2 != 0) return false;
  return true;
}

inline std::uint64_t credit_for(const goldbach::GoldbachResult& r, const SchedulerConfig& cfg) {
  return (r.evens_checked + 999'999) / 1'000'000 * cfg.credit_per_million_evens;
}

}  // namespace detail

// Group structurally-valid returns by exact payload equality; a group of
// quorum size wins, its lowest task id becomes the canonical result, every
// member earns credit, everyone else is INVALID. No winner means the
// transitioner gets to issue another replica.
inline ValidatorOutcome validator_step(core::Txn& t, const SchedulerConfig& cfg,
                                       core::TimeMs now) {
  ValidatorOutcome out;
  for (core::Id wid : t.units_needing_validation()) {
    auto maybe = t.unit(wid);
    if (!maybe || maybe->state != core::WuState::InProgress || !maybe->needs_validation) continue;
    core::WorkUnit wu = *maybe;

    std::vector<core::Id> returned;
    for (core::Id tid : t.tasks_of(wid)) {
      auto row = t.task(tid);
      if (row && row->state == core::TaskState::Returned) returned.push_back(tid);
    }

    // Payload-keyed grouping; the encoded bytes make a handy exact key.
    std::map<std::string, std::vector<core::Id>> groups;
    for (core::Id tid : returned) {
      const core::TaskInstance row = t.task_or_throw(tid);
      if (!detail::structurally_valid(*row.payload, wu.range())) {
        t.transition_task(tid, core::TaskState::Returned, core::TaskState::Invalid);
        ++out.tasks_invalid;
        continue;
      }
      groups[goldbach::encode_result(*row.payload)].push_back(tid);
    }

    const std::vector<core::Id>* best = nullptr;
    for (const auto& [key, members] : groups)
      if (!best || members.size() > best->size() ||
          (members.size() == best->size() && members.front() < best->front()))
        best = &members;

    if (best && best->size() >= wu.quorum) {
      const core::Id canonical = best->front();
      for (core::Id tid : *best) {
        const core::TaskInstance row = t.task_or_throw(tid);
        const std::uint64_t credit = detail::credit_for(*row.payload, cfg);
        t.transition_task(tid, core::TaskState::Returned, core::TaskState::Valid,
                          [&](core::TaskInstance& r) { r.credit_granted = credit; });
        core::UserRecord user = t.user_or_throw(t.host_or_throw(row.host_id).user_id);
        user.credit_total += credit;
        t.put_user(user);
        out.credit_granted += credit;
        out.evens_validated += row.payload->evens_checked;
        ++out.tasks_valid;
      }
      for (const auto& [key, members] : groups) {
        if (&members == best) continue;
        for (core::Id tid : members) {
          t.transition_task(tid, core::TaskState::Returned, core::TaskState::Invalid);
          ++out.tasks_invalid;
        }
      }
      for (core::Id tid : t.tasks_of(wid)) {
        auto row = t.task(tid);
        if (row && row->state == core::TaskState::Unsent) t.delete_task(tid);
      }
      t.transition_unit(wid, core::WuState::InProgress, core::WuState::Validated,
                        [&](core::WorkUnit& u) {
                          u.canonical_result_id = canonical;
                          u.needs_validation = false;
                          u.validated_at = now;
                          u.returned_at_last_validation = (std::uint32_t)returned.size();
                        });
      ++out.units_validated;
    } else {
      std::uint32_t still_returned = 0;
      for (const auto& [key, members] : groups) still_returned += members.size();
      wu.needs_validation = false;
      wu.pending_disagreement = true;
      wu.returned_at_last_validation = still_returned;
      t.put_unit(wu);
      ++out.disagreements;
    }
  }
  return out;
}

// ---- assimilator ----

struct AssimilatorOutcome {
  std::uint32_t archived = 0;
};

inline AssimilatorOutcome assimilator_step(core::Txn& t, core::TimeMs now) {
  AssimilatorOutcome out;
  for (core::Id wid : t.validated_units()) {
    auto maybe = t.unit(wid);
    if (!maybe || maybe->state != core::WuState::Validated) continue;
    const core::WorkUnit wu = *maybe;
    const core::TaskInstance canonical = t.task_or_throw(wu.canonical_result_id);
    core::ArchiveRecord rec;
    rec.wu_id = wid;
    rec.range_start = wu.range_start;
    rec.range_end = wu.range_end;
    rec.result = *canonical.payload;
    rec.validated_at = wu.validated_at;
    t.put_archive(rec);  // false on a rerun after a crash: already written
    t.transition_unit(wid, core::WuState::Validated, core::WuState::Assimilated,
                      [&](core::WorkUnit& u) { u.assimilated_at = now; });
    ++out.archived;
  }
  return out;
}

// ---- cleanup ----

struct CleanupOutcome {
  std::uint32_t units_purged = 0;
  std::uint32_t tasks_deleted = 0;
};

// Deletes the operational rows of units assimilated longer ago than the
// retention window. The science archive and user credit are untouchable;
// credit backed by deleted rows moves into the user's purged-credit
// carryover inside the same transaction.
inline CleanupOutcome cleanup_step(core::Txn& t, const SchedulerConfig& cfg, core::TimeMs now) {
  CleanupOutcome out;
  const core::TimeMs cutoff = now - cfg.retention_after_assimilation_secs * core::kMsPerSec;
  for (core::Id wid : t.purgeable_units(cutoff)) {
    auto maybe = t.unit(wid);
    if (!maybe || maybe->state != core::WuState::Assimilated) continue;
    for (core::Id tid : t.tasks_of(wid)) {
      const core::TaskInstance row = t.task_or_throw(tid);
      if (row.state == core::TaskState::Valid && row.credit_granted > 0) {
        core::UserRecord user = t.user_or_throw(t.host_or_throw(row.host_id).user_id);
        user.credit_purged += row.credit_granted;
        t.put_user(user);
      }
      t.delete_task(tid);
      ++out.tasks_deleted;
    }
    t.transition_unit(wid, core::WuState::Assimilated, core::WuState::Purged);
    ++out.units_purged;
  }
  return out;
}

// ---- one full pass, and the threaded runner ----

// Pipeline order: make work, move states, validate, archive, purge. One
// pass drains a whole ready chain (return -> flag -> validate -> archive)
// because each step's transaction commits before the next step reads.
inline void run_daemon_pass(core::Store& store, const SchedulerConfig& cfg,
                            const core::Clock& clock) {
  store.transact([&](core::Txn& t) { work_generator_step(t, cfg, clock.now_ms()); });
  store.transact([&](core::Txn& t) { transitioner_step(t, cfg, clock.now_ms()); });
  store.transact([&](core::Txn& t) { validator_step(t, cfg, clock.now_ms()); });
  store.transact([&](core::Txn& t) { assimilator_step(t, clock.now_ms()); });
  store.transact([&](core::Txn& t) { cleanup_step(t, cfg, clock.now_ms()); });
}

// Five independent pollers, one thread each, as in the real deployment.
class DaemonRunner {
 public:
  DaemonRunner(core::Store& store, SchedulerConfig cfg, const core::Clock& clock)
      : store_(store), cfg_(cfg), clock_(clock) {}

  ~DaemonRunner() { stop(); }

  void start() {
    auto spawn = [this](std::function<void()> step) {
      threads_.emplace_back([this, step = std::move(step)](std::stop_token st) {
        while (!st.stop_requested()) {
          step();
          std::unique_lock<std::mutex> lk(mu_);
          cv_.wait_for(lk, std::chrono::milliseconds(cfg_.daemon_poll_interval_ms),
                       [&] { return st.stop_requested(); });
        }
      });
    };
    spawn([this] { store_.transact([&](core::Txn& t) { work_generator_step(t, cfg_, clock_.now_ms()); }); });
    spawn([this] { store_.transact([&](core::Txn& t) { transitioner_step(t, cfg_, clock_.now_ms()); }); });
    spawn([this] { store_.transact([&](core::Txn& t) { validator_step(t, cfg_, clock_.now_ms()); }); });
    spawn([this] { store_.transact([&](core::Txn& t) { assimilator_step(t, clock_.now_ms()); }); });
    spawn([this] { store_.transact([&](core::Txn& t) { cleanup_step(t, cfg_, clock_.now_ms()); }); });
  }

  void stop() {
    for (auto& th : threads_) th.request_stop();
    cv_.notify_all();
    threads_.clear();  // jthread joins on destruction
  }

 private:
  core::Store& store_;
  SchedulerConfig cfg_;
  const core::Clock& clock_;
  std::mutex mu_;
  std::condition_variable cv_;
  std::vector<std::jthread> threads_;  // last member: joins before cv_ dies
};

}  // namespace goldpool::server
