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
#include <array>
#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <map>
#include <memory>
#include <optional>
#include <queue>
#include <set>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "goldpool/clock.hpp"
#include "goldpool/daemons.hpp"
#include "goldpool/goldbach.hpp"
#include "goldpool/oracle.hpp"
#include "goldpool/rng.hpp"
#include "goldpool/scheduler.hpp"
#include "goldpool/store.hpp"
#include "goldpool/types.hpp"

// Deterministic discrete-event harness: one in-memory project server, a
// population of simulated hosts with seeded behaviors (honest / slow /
// dropout / cheater), Poisson user and host arrivals, per-host network
// latency, and optional daily availability windows.  Everything runs on a
// single thread over a virtual clock; two runs with the same config produce
// byte-identical traces.

namespace goldpool::sim {

// ---------------------------------------------------------------------------
// Honest-result cache
// ---------------------------------------------------------------------------

// The true result for each range, computed once with a shared sieve and
// reused by every simulated host (and later by the auditors).  Sharing one
// cache across many runs is safe and makes repeated-seed studies cheap,
// because every run tiles ranges off the same frontier.
class ResultCache {
 public:
  const goldbach::GoldbachResult& result_for(const goldbach::GoldbachRange& r) {
    const auto key = std::make_pair(r.start, r.end);
    auto it = cache_.find(key);
    if (it != cache_.end()) return it->second;
    ensure_limit(r.end);
    goldbach::VerifyOptions opts;
    opts.primes = primes_.get();
    goldbach::GoldbachResult res = goldbach::verify_range(r, std::nullopt, opts);
    return cache_.emplace(key, std::move(res)).first->second;
  }

  const goldbach::PrimeTable* primes() const { return primes_.get(); }

 private:
  void ensure_limit(std::uint64_t end) {
    if (primes_ && primes_->limit() >= end) return;
    std::uint64_t want = std::max<std::uint64_t>(end, 1u << 21);
    if (primes_) want = std::max(want, primes_->limit() * 2);
    primes_ = std::make_unique<goldbach::PrimeTable>(want);
  }

  std::unique_ptr<goldbach::PrimeTable> primes_;
  std::map<std::pair<std::uint64_t, std::uint64_t>, goldbach::GoldbachResult> cache_;
};

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

enum class Behavior : std::uint8_t { kHonest, kSlow, kDropout, kCheater };

inline const char* to_string(Behavior b) {
  switch (b) {
    case Behavior::kHonest: return "HONEST";
    case Behavior::kSlow: return "SLOW";
    case Behavior::kDropout: return "DROPOUT";
    case Behavior::kCheater: return "CHEATER";
  }
  return "?";
}

struct SimConfig {
  std::uint64_t seed = 1;
  std::uint32_t days = 5;

  // Population dynamics.
  double users_per_day = 1.5;
  double hosts_per_day = 2.0;
  std::uint32_t initial_users = 1;  // present at t=0 so early hosts have an owner
  std::uint32_t initial_hosts = 0;

  // Fault mix; the remainder of the population is honest.
  double dropout_frac = 0.0;
  double cheater_frac = 0.0;
  double slow_frac = 0.0;
  double slow_factor = 3.0;

  // Host compute model: virtual seconds per task by cpu class 1..5; one
  // task in flight per simulated host (cpu class changes speed, not width).
  std::array<std::uint32_t, 5> compute_secs_by_class{7200, 5400, 3600, 2700, 1800};

  // Daily availability: 0 = always on.  When nonzero, each host is active
  // only inside a window of this length whose start is drawn uniformly over
  // the day — unless single_window forces every host onto the same one.
  std::uint32_t availability_window_hours = 0;
  bool single_window = false;

  // Network model: constant per-host latency drawn once at arrival.
  core::TimeMs latency_min_ms = 50;
  core::TimeMs latency_max_ms = 500;
  core::TimeMs idle_poll_ms = 10'000;       // first retry after an empty grant
  core::TimeMs idle_poll_cap_ms = 300'000;  // polls back off exponentially to this

  // Project-server knobs.
  std::uint64_t unit_width_evens = 1'000;
  std::uint32_t quorum = 2;
  std::uint32_t target_replication = 2;
  std::uint32_t max_total_instances = 8;
  std::uint32_t per_host_task_cap = 4;
  std::uint64_t unsent_buffer_target = 64;
  std::int64_t deadline_secs = 86'400;
  std::int64_t retention_secs = 600;
  std::uint64_t frontier_limit = 0;  // 0 = unbounded science
  double flops_per_even = 1'000.0;
  double server_capacity_rps = 50.0;  // only the saturation study uses this

  // Harness switches.
  bool strict_ticks = false;    // schedule every 1s tick instead of eliding no-ops
  bool record_history = false;  // keep the full transition log for audits
  ResultCache* shared_cache = nullptr;  // optional cross-run cache

  void validate() const {
    using core::InvalidArgumentError;
    if (days < 1) throw InvalidArgumentError("days must be >= 1");
    auto frac_ok = [](double f) { return f >= 0.0 && f <= 1.0; };
    if (!frac_ok(dropout_frac) || !frac_ok(cheater_frac) || !frac_ok(slow_frac) ||
        dropout_frac + cheater_frac + slow_frac > 1.0)
      throw InvalidArgumentError("behavior fractions must lie in [0,1] and sum to <= 1");
    if (users_per_day < 0 || hosts_per_day < 0)
      throw InvalidArgumentError("arrival rates must be >= 0");
    if (slow_factor < 1.0) throw InvalidArgumentError("slow_factor must be >= 1");
    for (auto s : compute_secs_by_class)
      if (s == 0) throw InvalidArgumentError("compute seconds must be positive");
    if (availability_window_hours > 24)
      throw InvalidArgumentError("availability window must be <= 24 hours");
    if (latency_min_ms <= 0 || latency_max_ms < latency_min_ms)
      throw InvalidArgumentError("latency bounds must satisfy 0 < min <= max");
    if (idle_poll_ms <= 0 || idle_poll_cap_ms < idle_poll_ms)
      throw InvalidArgumentError("poll intervals must satisfy 0 < first <= cap");
    if (initial_hosts > 0 && initial_users == 0)
      throw InvalidArgumentError("initial hosts need at least one initial user");
    if (unit_width_evens == 0) throw InvalidArgumentError("unit width must be positive");
    if (server_capacity_rps <= 0)
      throw InvalidArgumentError("server capacity must be positive");
    server_config().validate();
  }

  server::SchedulerConfig server_config() const {
    server::SchedulerConfig s;
    s.per_host_task_cap = per_host_task_cap;
    s.unsent_buffer_target = unsent_buffer_target;
    s.generator_range_width_evens = unit_width_evens;
    s.retention_after_assimilation_secs = retention_secs;
    s.daemon_poll_interval_ms = 1'000;
    s.target_replication = target_replication;
    s.quorum = quorum;
    s.max_total_instances = max_total_instances;
    s.deadline_delay_secs = deadline_secs;
    s.frontier_limit = frontier_limit;
    s.flops_per_even = flops_per_even;
    return s;
  }
};

// ---------------------------------------------------------------------------
// Trace
// ---------------------------------------------------------------------------

struct DayRow {
  std::uint32_t day = 0;
  std::uint32_t new_users = 0;
  std::uint32_t new_hosts = 0;
  std::uint64_t tasks_returned = 0;
  std::uint64_t units_assimilated = 0;
  double est_flops = 0.0;
  std::uint64_t task_table_rows = 0;
  std::uint64_t archive_rows = 0;
};

struct SimTrace {
  std::vector<DayRow> days;

  std::string to_csv() const {
    std::string out =
        "day,new_users,new_hosts,tasks_returned,units_assimilated,"
        "est_flops,task_table_rows,archive_rows\r\n";
    char buf[192];
    for (const DayRow& r : days) {
      std::snprintf(buf, sizeof buf,
                    "%" PRIu32 ",%" PRIu32 ",%" PRIu32 ",%" PRIu64 ",%" PRIu64
                    ",%.6g,%" PRIu64 ",%" PRIu64 "\r\n",
                    r.day, r.new_users, r.new_hosts, r.tasks_returned, r.units_assimilated,
                    r.est_flops, r.task_table_rows, r.archive_rows);
      out += buf;
    }
    return out;
  }
};

// ---------------------------------------------------------------------------
// Per-host simulated state
// ---------------------------------------------------------------------------

struct SimHostState {
  core::Id host_id = core::kNoId;
  Behavior behavior = Behavior::kHonest;
  std::uint32_t cpu_class = 3;
  std::uint64_t cheat_delta = 0;   // nonzero only for cheaters
  core::TimeMs latency_ms = 0;     // constant per host
  bool windowed = false;
  core::TimeMs window_start_ms = 0;  // offset within the day
  core::TimeMs window_len_ms = 0;
  bool dropped = false;
  core::TimeMs poll_backoff_ms = 0;
  core::Id pending_task = core::kNoId;
  goldbach::GoldbachResult pending_result;
};

struct SimResult {
  SimTrace trace;
  SimConfig config;
  std::shared_ptr<core::MemStore> store;
  std::map<core::Id, SimHostState> hosts;
  std::vector<std::uint64_t> hourly_assimilated;  // one bucket per virtual hour

  std::uint64_t poisson_user_arrivals = 0;  // excludes the initial seed users
  std::uint64_t poisson_host_arrivals = 0;
  std::uint64_t reports_ok = 0;
  std::uint64_t reports_rejected = 0;
  std::uint64_t units_purged = 0;
  std::uint64_t units_errored = 0;
  std::uint64_t tasks_timed_out = 0;
  bool cheat_delta_collision = false;

  ResultCache* cache = nullptr;  // honest results for every range seen
  std::shared_ptr<ResultCache> owned_cache;
};

// ---------------------------------------------------------------------------
// The engine
// ---------------------------------------------------------------------------

namespace detail {

enum class EvKind : std::uint8_t {
  kDayFlush,      // rank 0: samples the trace row before same-time activity
  kDaemonTick,    // rank 1: server pass, always at whole virtual seconds
  kUserArrival,   // rank 2 from here on
  kHostArrival,
  kWorkRequest,
  kResultReturn,
  kDropout,
};

struct Event {
  core::TimeMs at = 0;
  std::uint8_t rank = 2;
  std::uint64_t seq = 0;
  EvKind kind = EvKind::kDaemonTick;
  std::uint64_t subject = 0;

  bool operator>(const Event& o) const {
    if (at != o.at) return at > o.at;
    if (rank != o.rank) return rank > o.rank;
    return seq > o.seq;
  }
};

class Engine {
 public:
  explicit Engine(const SimConfig& cfg) : cfg_(cfg), scfg_(cfg.server_config()), master_(cfg.seed) {
    cfg_.validate();
    result_.config = cfg_;
    result_.store = std::make_shared<core::MemStore>();
    result_.store->record_history(cfg_.record_history);
    if (cfg_.shared_cache) {
      result_.cache = cfg_.shared_cache;
    } else {
      result_.owned_cache = std::make_shared<ResultCache>();
      result_.cache = result_.owned_cache.get();
    }
    end_ms_ = static_cast<core::TimeMs>(cfg_.days) * core::kMsPerDay;
    day_users_.assign(cfg_.days + 1, 0);
    day_hosts_.assign(cfg_.days + 1, 0);
    day_returned_.assign(cfg_.days + 1, 0);
    day_assimilated_.assign(cfg_.days + 1, 0);
    day_evens_validated_.assign(cfg_.days + 1, 0);
    result_.hourly_assimilated.assign(std::size_t(cfg_.days) * 24 + 1, 0);
  }

  SimResult run() {
    seed_events();
    while (!queue_.empty() && queue_.top().at <= end_ms_) {
      const Event ev = queue_.top();
      queue_.pop();
      clock_.advance_to(ev.at);
      dispatch(ev);
    }
    return std::move(result_);
  }

 private:
  // ---- event plumbing ----

  void push(core::TimeMs at, std::uint8_t rank, EvKind kind, std::uint64_t subject) {
    queue_.push(Event{at, rank, seq_++, kind, subject});
  }

  // The next whole second strictly after t: work created by an event at t is
  // first visible to the tick after it, exactly as a fixed 1 Hz ticker would
  // see it (same-time ticks order before other events).
  static core::TimeMs next_tick_slot(core::TimeMs t) {
    return (t / core::kMsPerSec + 1) * core::kMsPerSec;
  }
  // The first whole second at which a wall-clock threshold t has passed.
  static core::TimeMs covering_tick_slot(core::TimeMs t) {
    return ((t + core::kMsPerSec - 1) / core::kMsPerSec) * core::kMsPerSec;
  }

  void schedule_tick_at(core::TimeMs slot) {
    if (cfg_.strict_ticks) return;  // every slot is already queued
    if (slot > end_ms_) return;
    if (!scheduled_ticks_.insert(slot).second) return;
    push(slot, 1, EvKind::kDaemonTick, 0);
  }

  void schedule_tick_after(core::TimeMs t) { schedule_tick_at(next_tick_slot(t)); }

  void seed_events() {
    // Day-boundary samples; rank 0 so a row reflects state strictly before
    // anything that happens at the boundary instant.
    for (std::uint32_t d = 1; d <= cfg_.days; ++d)
      push(static_cast<core::TimeMs>(d) * core::kMsPerDay, 0, EvKind::kDayFlush, d - 1);

    // Pre-generated Poisson arrival streams (independent RNG substreams, so
    // the arrival pattern is unaffected by anything that happens mid-run).
    Rng user_rng = master_.fork(1);
    Rng host_rng = master_.fork(2);
    attr_rng_ = master_.fork(3);
    seed_arrival_stream(user_rng, cfg_.users_per_day, EvKind::kUserArrival);
    seed_arrival_stream(host_rng, cfg_.hosts_per_day, EvKind::kHostArrival);

    if (cfg_.strict_ticks) {
      for (core::TimeMs t = 0; t <= end_ms_; t += core::kMsPerSec)
        push(t, 1, EvKind::kDaemonTick, 0);
    } else {
      schedule_tick_at(0);
      scheduled_ticks_.insert(0);
    }

    for (std::uint32_t i = 0; i < cfg_.initial_users; ++i) create_user(0);
    for (std::uint32_t i = 0; i < cfg_.initial_hosts; ++i) create_host(0);
  }

  void seed_arrival_stream(Rng& rng, double per_day, EvKind kind) {
    if (per_day <= 0.0) return;
    const double mean_gap = static_cast<double>(core::kMsPerDay) / per_day;
    double t = rng.exponential(mean_gap);
    while (t < static_cast<double>(end_ms_)) {
      push(static_cast<core::TimeMs>(std::llround(t)), 2, kind, 0);
      t += rng.exponential(mean_gap);
    }
  }

  // ---- population ----

  std::uint32_t day_of(core::TimeMs t) const {
    return std::min<std::uint32_t>(static_cast<std::uint32_t>(t / core::kMsPerDay), cfg_.days);
  }

  void create_user(core::TimeMs now) {
    const std::string name = "u" + std::to_string(++user_seq_);
    result_.store->transact([&](core::Txn& t) {
      core::UserRecord u;
      u.display_name = name;
      u.registered_at = now;
      t.new_user(u);
    });
    ++day_users_[day_of(now)];
  }

  void create_host(core::TimeMs now) {
    if (user_seq_ == 0) create_user(now);  // a host always has an owner
    const std::string owner = "u" + std::to_string(attr_rng_.below(user_seq_) + 1);

    SimHostState h;
    const double u = attr_rng_.unit();
    if (u < cfg_.cheater_frac) {
      h.behavior = Behavior::kCheater;
    } else if (u < cfg_.cheater_frac + cfg_.dropout_frac) {
      h.behavior = Behavior::kDropout;
    } else if (u < cfg_.cheater_frac + cfg_.dropout_frac + cfg_.slow_frac) {
      h.behavior = Behavior::kSlow;
    }
    h.cpu_class = static_cast<std::uint32_t>(attr_rng_.below(5)) + 1;
    h.latency_ms = static_cast<core::TimeMs>(
        cfg_.latency_min_ms +
        attr_rng_.below(std::uint64_t(cfg_.latency_max_ms - cfg_.latency_min_ms) + 1));
    if (cfg_.availability_window_hours > 0 && cfg_.availability_window_hours < 24) {
      h.windowed = true;
      h.window_len_ms = core::TimeMs(cfg_.availability_window_hours) * core::kMsPerHour;
      h.window_start_ms =
          cfg_.single_window ? 0 : static_cast<core::TimeMs>(attr_rng_.below(core::kMsPerDay));
    }
    if (h.behavior == Behavior::kCheater) {
      while (h.cheat_delta == 0) h.cheat_delta = attr_rng_.u64();
      if (!cheat_deltas_.insert(h.cheat_delta).second) result_.cheat_delta_collision = true;
    }
    h.poll_backoff_ms = cfg_.idle_poll_ms;

    core::HostSpec spec;
    spec.ram_bytes = 4ull << 30;
    spec.free_disk_bytes = 64ull << 30;
    spec.cpu_class = h.cpu_class;
    h.host_id = server::register_host(*result_.store, clock_, owner, spec).host_id;
    result_.hosts.emplace(h.host_id, h);
    ++day_hosts_[day_of(now)];
    push(now, 2, EvKind::kWorkRequest, h.host_id);
  }

  // ---- availability-window arithmetic ----

  static core::TimeMs day_offset(core::TimeMs t) { return t % core::kMsPerDay; }

  static bool in_window(const SimHostState& h, core::TimeMs t) {
    if (!h.windowed) return true;
    const core::TimeMs rel =
        (day_offset(t) - h.window_start_ms + core::kMsPerDay) % core::kMsPerDay;
    return rel < h.window_len_ms;
  }

  static core::TimeMs next_window_start(const SimHostState& h, core::TimeMs t) {
    const core::TimeMs diff =
        (h.window_start_ms - day_offset(t) + core::kMsPerDay) % core::kMsPerDay;
    return t + diff;
  }

  // Finish time for `work_ms` of compute starting at `start`, pausing while
  // the host is outside its availability window (checkpointing makes the
  // pause lossless in the real client; the sim mirrors that).
  static core::TimeMs finish_time(const SimHostState& h, core::TimeMs start,
                                  core::TimeMs work_ms) {
    if (!h.windowed) return start + work_ms;
    core::TimeMs cur = in_window(h, start) ? start : next_window_start(h, start);
    core::TimeMs remaining = work_ms;
    for (;;) {
      const core::TimeMs used =
          (day_offset(cur) - h.window_start_ms + core::kMsPerDay) % core::kMsPerDay;
      const core::TimeMs avail = h.window_len_ms - used;
      if (remaining <= avail) return cur + remaining;
      remaining -= avail;
      cur += avail + (core::kMsPerDay - h.window_len_ms);
    }
  }

  // ---- dispatch ----

  void dispatch(const Event& ev) {
    switch (ev.kind) {
      case EvKind::kDayFlush: flush_day(static_cast<std::uint32_t>(ev.subject)); break;
      case EvKind::kDaemonTick: daemon_tick(ev.at); break;
      case EvKind::kUserArrival:
        ++result_.poisson_user_arrivals;
        create_user(ev.at);
        break;
      case EvKind::kHostArrival:
        ++result_.poisson_host_arrivals;
        create_host(ev.at);
        break;
      case EvKind::kWorkRequest: work_request(ev.at, ev.subject); break;
      case EvKind::kResultReturn: result_return(ev.at, ev.subject); break;
      case EvKind::kDropout: result_.hosts.at(ev.subject).dropped = true; break;
    }
  }

  void work_request(core::TimeMs now, core::Id host_id) {
    SimHostState& h = result_.hosts.at(host_id);
    if (h.dropped || h.pending_task != core::kNoId) return;
    if (!in_window(h, now)) {
      push(next_window_start(h, now), 2, EvKind::kWorkRequest, host_id);
      return;
    }
    const auto grants = server::assign_work(*result_.store, clock_, scfg_, host_id, 1);
    if (grants.empty()) {
      push(now + h.poll_backoff_ms, 2, EvKind::kWorkRequest, host_id);
      h.poll_backoff_ms = std::min<core::TimeMs>(h.poll_backoff_ms * 2, cfg_.idle_poll_cap_ms);
      return;
    }
    h.poll_backoff_ms = cfg_.idle_poll_ms;
    schedule_tick_after(now);  // the send may leave the unsent buffer short

    const server::TaskGrant& g = grants.front();
    if (h.behavior == Behavior::kDropout) {
      push(now, 2, EvKind::kDropout, host_id);  // takes the work and vanishes
      return;
    }
    goldbach::GoldbachResult res = result_.cache->result_for(g.range);
    if (h.behavior == Behavior::kCheater) res.checksum64 += h.cheat_delta;

    double work_ms = double(cfg_.compute_secs_by_class[h.cpu_class - 1]) * core::kMsPerSec;
    if (h.behavior == Behavior::kSlow) work_ms *= cfg_.slow_factor;
    const core::TimeMs start = now + h.latency_ms;  // grant arrives at the host
    const core::TimeMs done =
        finish_time(h, start, static_cast<core::TimeMs>(std::llround(work_ms)));
    h.pending_task = g.task_id;
    h.pending_result = res;
    push(done + h.latency_ms, 2, EvKind::kResultReturn, host_id);
  }

  void result_return(core::TimeMs now, core::Id host_id) {
    SimHostState& h = result_.hosts.at(host_id);
    bool accepted = false;
    try {
      const auto outcome =
          server::report_result(*result_.store, clock_, h.pending_task, h.pending_result);
      accepted = outcome.status == server::ReportStatus::Ok;
    } catch (const core::NotFoundError&) {
      // The unit finished without this replica and cleanup already purged
      // the row; a very late report simply bounces.
    }
    h.pending_task = core::kNoId;
    if (accepted) {
      ++result_.reports_ok;
      ++day_returned_[day_of(now)];
    } else {
      ++result_.reports_rejected;
    }
    schedule_tick_after(now);
    push(now, 2, EvKind::kWorkRequest, host_id);
  }

  void daemon_tick(core::TimeMs now) {
    scheduled_ticks_.erase(now);
    core::MemStore& store = *result_.store;
    server::GeneratorOutcome gen;
    server::TransitionerOutcome tr;
    server::ValidatorOutcome val;
    server::AssimilatorOutcome ass;
    server::CleanupOutcome cl;
    store.transact([&](core::Txn& t) { gen = server::work_generator_step(t, scfg_, now); });
    store.transact([&](core::Txn& t) { tr = server::transitioner_step(t, scfg_, now); });
    store.transact([&](core::Txn& t) { val = server::validator_step(t, scfg_, now); });
    store.transact([&](core::Txn& t) { ass = server::assimilator_step(t, now); });
    store.transact([&](core::Txn& t) { cl = server::cleanup_step(t, scfg_, now); });

    const std::uint32_t day = day_of(now);
    day_assimilated_[day] += ass.archived;
    day_evens_validated_[day] += val.evens_validated;
    result_.hourly_assimilated[std::min<std::size_t>(now / core::kMsPerHour,
                                                     result_.hourly_assimilated.size() - 1)] +=
        ass.archived;
    result_.units_purged += cl.units_purged;
    result_.units_errored += tr.errored;
    result_.tasks_timed_out += tr.timed_out;

    const bool active = gen.units_created || tr.timed_out || tr.replacements ||
                        tr.extra_replicas || tr.flagged || tr.errored || val.units_validated ||
                        val.disagreements || ass.archived || cl.units_purged;
    if (active) schedule_tick_at(now + core::kMsPerSec);

    // Time-driven wakeups that no event will trigger: task deadlines and
    // the retention cutoff of assimilated units.
    core::with_txn(store, [&](core::Txn& t) {
      if (auto dl = t.earliest_deadline()) schedule_tick_at(covering_tick_slot(*dl));
      if (auto at = t.earliest_assimilated_at())
        schedule_tick_at(
            covering_tick_slot(*at + cfg_.retention_secs * core::kMsPerSec));
      return 0;
    });
  }

  void flush_day(std::uint32_t day) {
    DayRow row;
    row.day = day;
    row.new_users = day_users_[day];
    row.new_hosts = day_hosts_[day];
    row.tasks_returned = day_returned_[day];
    row.units_assimilated = day_assimilated_[day];
    row.est_flops = double(day_evens_validated_[day]) * cfg_.flops_per_even /
                    (double(core::kMsPerDay) / core::kMsPerSec);
    core::with_txn(*result_.store, [&](core::Txn& t) {
      row.task_table_rows = t.task_rows();
      row.archive_rows = t.archive_rows();
      return 0;
    });
    result_.trace.days.push_back(row);
  }

  SimConfig cfg_;
  server::SchedulerConfig scfg_;
  Rng master_;
  Rng attr_rng_{0};
  core::VirtualClock clock_;
  core::TimeMs end_ms_ = 0;
  std::uint64_t seq_ = 0;
  std::priority_queue<Event, std::vector<Event>, std::greater<Event>> queue_;
  std::set<core::TimeMs> scheduled_ticks_;
  std::unordered_set<std::uint64_t> cheat_deltas_;
  std::uint64_t user_seq_ = 0;
  std::vector<std::uint32_t> day_users_, day_hosts_;
  std::vector<std::uint64_t> day_returned_, day_assimilated_, day_evens_validated_;
  SimResult result_;
};

}  // namespace detail

inline SimResult run_sim_full(const SimConfig& cfg) { return detail::Engine(cfg).run(); }

inline SimTrace run_sim(const SimConfig& cfg) { return run_sim_full(cfg).trace; }

// ---------------------------------------------------------------------------
// Auditors
// ---------------------------------------------------------------------------

struct AuditOptions {
  // When set, every generated unit must have finished the whole pipeline and
  // the archive must tile the generated span without gap or overlap.
  bool expect_all_assimilated = false;
  // Re-check every archived range against the trial-division oracle where
  // feasible (range end within the oracle's reach); shared memo optional.
  goldbach::TrialPrimality* shared_oracle = nullptr;
};

struct AuditReport {
  std::uint64_t archives_checked = 0;
  std::uint64_t oracle_checked = 0;
  std::uint64_t units_quorum_checked = 0;
  std::uint64_t replica_pairs_checked = 0;
  std::vector<std::string> problems;

  bool ok() const { return problems.empty(); }
  std::string summary() const {
    if (ok()) return "clean";
    std::string s = problems.front();
    if (problems.size() > 1) s += " (+" + std::to_string(problems.size() - 1) + " more)";
    return s;
  }
};

// Cross-checks a finished run against ground truth: every archived result
// equals the honest result for its range (and the independent oracle where
// it can reach); every validated unit holds >= quorum agreeing VALID
// payloads on distinct hosts; credit is conserved per user; recorded state
// transitions were all legal; optionally the archive tiles the frontier.
inline AuditReport audit_run(const SimResult& r, const AuditOptions& opts = {}) {
  AuditReport rep;
  auto fail = [&](std::string msg) { rep.problems.push_back(std::move(msg)); };

  core::with_txn(*r.store, [&](core::Txn& t) {
    // Archive vs ground truth.
    std::vector<core::ArchiveRecord> archive;
    t.for_each_archive([&](const core::ArchiveRecord& a) { archive.push_back(a); });
    std::sort(archive.begin(), archive.end(),
              [](const auto& a, const auto& b) { return a.range_start < b.range_start; });
    for (const core::ArchiveRecord& a : archive) {
      ++rep.archives_checked;
      const goldbach::GoldbachResult& truth = r.cache->result_for(a.range());
      if (!(a.result == truth))
        fail("archived result differs from recompute on [" + std::to_string(a.range_start) +
             "," + std::to_string(a.range_end) + "]");
      if (a.range_end <= goldbach::kOracleMaxEnd) {
        ++rep.oracle_checked;
        const goldbach::GoldbachResult o =
            goldbach::oracle_verify_range(a.range(), opts.shared_oracle);
        if (!(a.result == o))
          fail("archived result differs from oracle on [" + std::to_string(a.range_start) +
               "," + std::to_string(a.range_end) + "]");
      }
    }

    // Tiling of the generated span.
    if (opts.expect_all_assimilated) {
      const std::uint64_t frontier = std::uint64_t(t.meta("frontier", 4));
      std::uint64_t expect_start = 4;
      for (const core::ArchiveRecord& a : archive) {
        if (a.range_start != expect_start) {
          fail("archive gap or overlap at " + std::to_string(expect_start));
          break;
        }
        expect_start = a.range_end + 2;
      }
      if (expect_start != frontier)
        fail("archive covers up to " + std::to_string(expect_start) + " but frontier is " +
             std::to_string(frontier));
    }

    // Unit-by-unit lifecycle checks.
    t.for_each_unit([&](const core::WorkUnit& u) {
      if (opts.expect_all_assimilated && u.state != core::WuState::Assimilated &&
          u.state != core::WuState::Purged)
        fail("unit " + std::to_string(u.wu_id) + " ended in state " +
             std::string(core::to_string(u.state)));

      const auto task_ids = t.tasks_of(u.wu_id);
      std::map<core::Id, int> per_host;
      for (core::Id tid : task_ids) {
        const core::TaskInstance task = t.task_or_throw(tid);
        if (task.state != core::TaskState::Unsent && ++per_host[task.host_id] > 1)
          fail("unit " + std::to_string(u.wu_id) + " has two replicas on host " +
               std::to_string(task.host_id));
        ++rep.replica_pairs_checked;
      }

      const bool closed = u.state == core::WuState::Validated ||
                          u.state == core::WuState::Assimilated ||
                          u.state == core::WuState::Purged;
      if (!closed || task_ids.empty()) return;  // purged units keep only the archive
      ++rep.units_quorum_checked;
      const core::TaskInstance canon = t.task_or_throw(u.canonical_result_id);
      if (!canon.payload) {
        fail("unit " + std::to_string(u.wu_id) + " canonical task has no payload");
        return;
      }
      std::uint32_t agreeing = 0;
      for (core::Id tid : task_ids) {
        const core::TaskInstance task = t.task_or_throw(tid);
        if (task.state != core::TaskState::Valid) continue;
        if (!task.payload || !(*task.payload == *canon.payload))
          fail("VALID task " + std::to_string(tid) + " disagrees with canonical payload");
        else
          ++agreeing;
      }
      if (agreeing < u.quorum)
        fail("unit " + std::to_string(u.wu_id) + " validated with only " +
             std::to_string(agreeing) + " agreeing results (quorum " +
             std::to_string(u.quorum) + ")");
      if (!(canon.payload->counterexample.has_value()) &&
          !(*canon.payload == r.cache->result_for(u.range())))
        fail("unit " + std::to_string(u.wu_id) + " canonical payload is wrong");
    });

    // Credit conservation, user by user.
    t.for_each_user([&](const core::UserRecord& u) {
      if (t.audit_credit(u.user_id) != u.credit_total)
        fail("user " + std::to_string(u.user_id) + " credit " +
             std::to_string(u.credit_total) + " != audited " +
             std::to_string(t.audit_credit(u.user_id)));
    });
    return 0;
  });

  if (r.cheat_delta_collision)
    fail("two cheater hosts drew the same checksum delta; rerun with a new seed");

  // Every recorded state transition must be a legal edge.  Records with
  // from == to mark row creation, not a state change.
  for (const core::TransitionRecord& h : r.store->history()) {
    if (h.from == h.to) continue;
    const bool legal = h.entity == 'W'
                           ? core::wu_transition_legal(core::WuState(h.from), core::WuState(h.to))
                           : core::task_transition_legal(core::TaskState(h.from),
                                                         core::TaskState(h.to));
    if (!legal)
      fail(std::string("illegal recorded transition on ") + h.entity + " " +
           std::to_string(h.id));
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Saturation study
// ---------------------------------------------------------------------------

struct SaturationReport {
  std::vector<std::uint64_t> queue_depth;       // backlog after each 1s tick
  std::vector<double> mean_latency_per_tick;    // seconds; 0 for empty ticks
  std::vector<double> sorted_latencies;         // per-request, ascending
  std::uint64_t arrivals_total = 0;
  std::uint64_t served_total = 0;

  double latency_percentile(double p) const {
    if (sorted_latencies.empty()) return 0.0;
    const double clamped = std::clamp(p, 0.0, 100.0);
    const std::size_t idx = std::min(
        sorted_latencies.size() - 1,
        static_cast<std::size_t>(std::ceil(clamped / 100.0 * sorted_latencies.size())) -
            (clamped > 0.0 ? 1 : 0));
    return sorted_latencies[idx];
  }
};

// Open-loop scheduler saturation model: requests arrive Poisson at
// 0.8 x capacity x multiplier per second and drain FIFO at the fixed
// capacity. Below saturation the backlog stays bounded; past it the backlog
// (and so the queueing latency) grows without limit.
inline SaturationReport saturate_server(const SimConfig& cfg, double multiplier,
                                        std::uint32_t ticks = 600) {
  cfg.validate();
  if (multiplier < 1.0) throw core::InvalidArgumentError("multiplier must be >= 1");
  if (ticks == 0) throw core::InvalidArgumentError("ticks must be positive");

  Rng rng = Rng(cfg.seed).fork(0x5a7);
  const double capacity = cfg.server_capacity_rps;
  const double rate = 0.8 * capacity * multiplier;  // requests per second
  const std::uint64_t served_per_tick = std::max<std::uint64_t>(1, std::llround(capacity));

  SaturationReport rep;
  std::uint64_t queue = 0;
  for (std::uint32_t tick = 0; tick < ticks; ++tick) {
    // Exact Poisson count via exponential gaps within the one-second tick.
    std::uint64_t arrivals = 0;
    for (double t = rng.exponential(1.0 / rate); t <= 1.0; t += rng.exponential(1.0 / rate))
      ++arrivals;
    double latency_sum = 0.0;
    for (std::uint64_t i = 0; i < arrivals; ++i) {
      const double latency = double(queue + i + 1) / capacity;  // FIFO drain position
      rep.sorted_latencies.push_back(latency);
      latency_sum += latency;
    }
    rep.mean_latency_per_tick.push_back(arrivals ? latency_sum / double(arrivals) : 0.0);
    rep.arrivals_total += arrivals;
    queue += arrivals;
    const std::uint64_t served = std::min(queue, served_per_tick);
    queue -= served;
    rep.served_total += served;
    rep.queue_depth.push_back(queue);
  }
  std::sort(rep.sorted_latencies.begin(), rep.sorted_latencies.end());
  return rep;
}

}  // namespace goldpool::sim
