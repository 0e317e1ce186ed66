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

// The discrete-event fleet simulation: determinism, tick-elision equivalence,
// fault-model behavior under audit, growth accounting, and the saturation
// study.

#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <string>
#include <vector>

#include "goldpool/sim.hpp"
#include "goldpool/stats.hpp"

namespace {

using namespace goldpool;

// Small, fast fleet: flat 20-minute tasks, modest ranges, no randomness in
// the population unless a test asks for it.
sim::SimConfig fast_cfg() {
  sim::SimConfig c;
  c.seed = 11;
  c.days = 2;
  c.users_per_day = 0.0;
  c.hosts_per_day = 0.0;
  c.initial_users = 2;
  c.initial_hosts = 6;
  c.compute_secs_by_class = {1'200, 1'200, 1'200, 1'200, 1'200};
  c.unit_width_evens = 200;
  c.unsent_buffer_target = 16;
  c.deadline_secs = 86'400;
  c.retention_secs = 1'000'000;  // keep rows around for inspection
  return c;
}

std::uint64_t max_instances_of_any_unit(core::Store& s) {
  return core::with_txn(s, [](core::Txn& t) {
    std::uint64_t best = 0;
    t.for_each_unit([&](const core::WorkUnit& u) {
      best = std::max<std::uint64_t>(best, t.tasks_of(u.wu_id).size());
    });
    return best;
  });
}

}  // namespace

TEST_CASE("sim config validation catches bad inputs") {
  sim::SimConfig c;
  c.dropout_frac = 0.6;
  c.cheater_frac = 0.6;
  CHECK_THROWS_AS(c.validate(), core::InvalidArgumentError);
  c = {};
  c.initial_users = 0;
  c.initial_hosts = 2;
  CHECK_THROWS_AS(c.validate(), core::InvalidArgumentError);
  c = {};
  c.latency_min_ms = 500;
  c.latency_max_ms = 100;
  CHECK_THROWS_AS(c.validate(), core::InvalidArgumentError);
  c = {};
  c.slow_factor = 0.5;
  CHECK_THROWS_AS(c.validate(), core::InvalidArgumentError);
  c = {};
  c.availability_window_hours = 25;
  CHECK_THROWS_AS(c.validate(), core::InvalidArgumentError);
}

TEST_CASE("the same config and seed reproduce the run byte for byte") {
  sim::ResultCache cache;
  auto cfg = fast_cfg();
  cfg.seed = 42;
  cfg.dropout_frac = 0.2;
  cfg.cheater_frac = 0.2;
  cfg.users_per_day = 1.0;
  cfg.hosts_per_day = 2.0;
  cfg.shared_cache = &cache;

  const sim::SimResult a = sim::run_sim_full(cfg);
  const sim::SimResult b = sim::run_sim_full(cfg);
  CHECK(a.trace.to_csv() == b.trace.to_csv());
  CHECK(a.reports_ok == b.reports_ok);
  CHECK(a.reports_rejected == b.reports_rejected);
  CHECK(a.tasks_timed_out == b.tasks_timed_out);
  CHECK(a.units_purged == b.units_purged);
  CHECK(a.poisson_user_arrivals == b.poisson_user_arrivals);
  CHECK(a.poisson_host_arrivals == b.poisson_host_arrivals);
  CHECK(a.hourly_assimilated == b.hourly_assimilated);

  // A different seed tells a different story.
  cfg.seed = 43;
  const sim::SimResult c = sim::run_sim_full(cfg);
  CHECK(a.trace.to_csv() != c.trace.to_csv());
}

TEST_CASE("eliding idle daemon ticks changes nothing observable") {
  sim::ResultCache cache;
  auto cfg = fast_cfg();
  cfg.days = 1;
  cfg.initial_hosts = 3;
  cfg.shared_cache = &cache;

  cfg.strict_ticks = false;
  const sim::SimResult lazy = sim::run_sim_full(cfg);
  cfg.strict_ticks = true;
  const sim::SimResult strict = sim::run_sim_full(cfg);

  CHECK(lazy.trace.to_csv() == strict.trace.to_csv());
  CHECK(lazy.reports_ok == strict.reports_ok);
  CHECK(lazy.reports_rejected == strict.reports_rejected);
  CHECK(lazy.tasks_timed_out == strict.tasks_timed_out);
  CHECK(lazy.units_purged == strict.units_purged);
  CHECK(lazy.hourly_assimilated == strict.hourly_assimilated);
}

TEST_CASE("an all-honest fleet finishes a capped frontier and passes audit") {
  auto cfg = fast_cfg();
  cfg.initial_hosts = 4;
  cfg.compute_secs_by_class = {600, 600, 600, 600, 600};
  cfg.frontier_limit = 4'004;  // ten 200-even units, then the well runs dry
  cfg.retention_secs = 3'600;
  cfg.record_history = true;

  const sim::SimResult r = sim::run_sim_full(cfg);
  const sim::SimTrace& trace = r.trace;
  REQUIRE(trace.days.size() == cfg.days);
  CHECK(trace.days[0].units_assimilated > 0);
  CHECK(trace.days[0].est_flops > 0.0);
  // The archive only ever grows.
  CHECK(trace.days[1].archive_rows >= trace.days[0].archive_rows);
  CHECK(trace.days.back().archive_rows == 10);

  goldbach::TrialPrimality memo;
  sim::AuditOptions opts;
  opts.expect_all_assimilated = true;
  opts.shared_oracle = &memo;
  const sim::AuditReport audit = sim::audit_run(r, opts);
  INFO(audit.summary());
  CHECK(audit.ok());
  CHECK(audit.archives_checked == 10);
  CHECK(audit.oracle_checked == 10);  // every range within the oracle's reach
}

TEST_CASE("cheaters trigger extra replicas but never poison the archive") {
  auto cfg = fast_cfg();
  cfg.seed = 7;
  cfg.days = 3;
  cfg.initial_hosts = 8;
  cfg.cheater_frac = 0.3;
  cfg.users_per_day = 1.0;
  cfg.hosts_per_day = 2.0;
  cfg.record_history = true;

  const sim::SimResult r = sim::run_sim_full(cfg);
  CHECK(r.reports_ok > 0);

  bool any_cheater = false;
  for (const auto& [id, h] : r.hosts) any_cheater |= h.behavior == sim::Behavior::kCheater;
  CHECK(any_cheater);

  // At least one unit needed a tie-breaking third instance.
  CHECK(max_instances_of_any_unit(*r.store) >= 3);

  const sim::AuditReport audit = sim::audit_run(r);
  INFO(audit.summary());
  CHECK(audit.ok());
  CHECK(audit.archives_checked > 0);
  CHECK(audit.units_quorum_checked > 0);
}

TEST_CASE("dropouts cost deadlines, then reissues recover the unit") {
  auto cfg = fast_cfg();
  cfg.seed = 19;
  cfg.days = 2;
  cfg.initial_hosts = 8;
  cfg.dropout_frac = 0.4;
  cfg.hosts_per_day = 2.0;
  cfg.users_per_day = 1.0;
  cfg.deadline_secs = 1'200;  // short leash so the run sees the recovery
  cfg.record_history = true;

  const sim::SimResult r = sim::run_sim_full(cfg);
  CHECK(r.tasks_timed_out > 0);
  CHECK(r.reports_ok > 0);

  bool any_dropped = false;
  for (const auto& [id, h] : r.hosts) any_dropped |= h.dropped;
  CHECK(any_dropped);

  const sim::AuditReport audit = sim::audit_run(r);
  INFO(audit.summary());
  CHECK(audit.ok());
  CHECK(audit.archives_checked > 0);
}

TEST_CASE("a shared availability window confines work to its hours") {
  auto cfg = fast_cfg();
  cfg.days = 2;
  cfg.initial_hosts = 3;
  cfg.compute_secs_by_class = {600, 600, 600, 600, 600};
  cfg.availability_window_hours = 12;
  cfg.single_window = true;  // everyone works 00:00-12:00

  const sim::SimResult r = sim::run_sim_full(cfg);
  REQUIRE(r.hourly_assimilated.size() >= 48);

  std::uint64_t in_hours = 0, off_hours = 0;
  for (std::uint32_t day = 0; day < 2; ++day) {
    for (std::uint32_t h = 0; h < 24; ++h) {
      // Hour 12 can catch the spillover of a result landing at the closing
      // edge; 13..23 must be silent.
      if (h >= 13) off_hours += r.hourly_assimilated[day * 24 + h];
      else if (h < 12) in_hours += r.hourly_assimilated[day * 24 + h];
    }
  }
  CHECK(in_hours > 0);
  CHECK(off_hours == 0);
}

TEST_CASE("population growth lands in the trace and matches the stored records") {
  sim::ResultCache cache;
  std::uint64_t poisson_users = 0;
  std::uint64_t poisson_hosts = 0;
  const std::uint32_t kRuns = 6;

  for (std::uint32_t i = 0; i < kRuns; ++i) {
    sim::SimConfig cfg;
    cfg.seed = 100 + i;
    cfg.days = 10;
    cfg.users_per_day = 1.5;
    cfg.hosts_per_day = 2.0;
    cfg.initial_users = 1;
    cfg.initial_hosts = 0;
    // Glacial hosts: growth accounting is the point, not compute.
    cfg.compute_secs_by_class = {432'000, 432'000, 432'000, 432'000, 432'000};
    cfg.unit_width_evens = 1'000;
    cfg.unsent_buffer_target = 16;
    cfg.shared_cache = &cache;

    const sim::SimResult r = sim::run_sim_full(cfg);
    poisson_users += r.poisson_user_arrivals;
    poisson_hosts += r.poisson_host_arrivals;
    REQUIRE(r.trace.days.size() == 10);

    // The seed population shows up on day 0 of the trace...
    std::uint64_t trace_users = 0;
    for (const auto& row : r.trace.days) trace_users += row.new_users;
    CHECK(trace_users >= r.poisson_user_arrivals + cfg.initial_users);

    // ...and day by day the trace equals what the store's timestamps say.
    core::with_txn(*r.store, [&](core::Txn& t) {
      const auto growth = stats::daily_growth(t);
      for (std::uint32_t d = 0; d < 10; ++d) {
        const std::uint32_t gu = d < growth.size() ? growth[d].new_users : 0;
        const std::uint32_t gh = d < growth.size() ? growth[d].new_hosts : 0;
        CHECK(r.trace.days[d].new_users == gu);
        CHECK(r.trace.days[d].new_hosts == gh);
      }
      return 0;
    });
  }

  // Arrivals are Poisson; over 6 runs x 10 days the totals should sit in a
  // generous band around the mean (90 users, 120 hosts).
  CHECK(poisson_users > 40);
  CHECK(poisson_users < 170);
  CHECK(poisson_hosts > 60);
  CHECK(poisson_hosts < 210);
}

TEST_CASE("short retention purges settled units without touching the science") {
  auto cfg = fast_cfg();
  cfg.days = 1;
  cfg.initial_hosts = 4;
  cfg.compute_secs_by_class = {600, 600, 600, 600, 600};
  cfg.retention_secs = 600;
  cfg.record_history = true;

  const sim::SimResult r = sim::run_sim_full(cfg);
  CHECK(r.units_purged > 0);

  core::with_txn(*r.store, [&](core::Txn& t) {
    CHECK(t.unit_count(core::WuState::Purged) == r.units_purged);
    CHECK(t.archive_rows() >= r.units_purged);  // purge never drops archives
    return 0;
  });

  const sim::AuditReport audit = sim::audit_run(r);
  INFO(audit.summary());
  CHECK(audit.ok());
}

TEST_CASE("saturation: stable below capacity, runaway past it") {
  sim::SimConfig cfg;
  cfg.seed = 5;
  cfg.server_capacity_rps = 50.0;

  const sim::SaturationReport calm = sim::saturate_server(cfg, 1.0, 600);
  const sim::SaturationReport busy = sim::saturate_server(cfg, 2.0, 600);
  const sim::SaturationReport melt = sim::saturate_server(cfg, 100.0, 600);

  // Work is conserved tick to tick.
  CHECK(calm.arrivals_total == calm.served_total + calm.queue_depth.back());

  // At 0.8x capacity the backlog stays small...
  const std::uint64_t calm_max =
      *std::max_element(calm.queue_depth.begin(), calm.queue_depth.end());
  CHECK(calm_max < 500);

  // ...past capacity it only climbs...
  for (std::size_t i = 1; i < melt.queue_depth.size(); ++i)
    CHECK(melt.queue_depth[i] >= melt.queue_depth[i - 1]);
  CHECK(melt.queue_depth.back() > 1'000'000);

  // ...and latency percentiles order with the overload factor.
  CHECK(busy.latency_percentile(50) >= calm.latency_percentile(50));
  CHECK(busy.latency_percentile(95) >= calm.latency_percentile(95));
  CHECK(melt.latency_percentile(50) > busy.latency_percentile(50));

  // Deterministic, and guarded against nonsense arguments.
  const sim::SaturationReport again = sim::saturate_server(cfg, 2.0, 600);
  CHECK(again.queue_depth == busy.queue_depth);
  CHECK(again.sorted_latencies == busy.sorted_latencies);
  CHECK_THROWS_AS(sim::saturate_server(cfg, 0.5, 600), core::InvalidArgumentError);
  CHECK_THROWS_AS(sim::saturate_server(cfg, 1.0, 0), core::InvalidArgumentError);
}

TEST_CASE("the trace CSV has the pinned header and one row per day") {
  auto cfg = fast_cfg();
  cfg.days = 1;
  cfg.initial_hosts = 2;
  const sim::SimTrace trace = sim::run_sim(cfg);
  const std::string csv = trace.to_csv();
  CHECK(csv.rfind("day,new_users,new_hosts,tasks_returned,units_assimilated,"
                  "est_flops,task_table_rows,archive_rows\r\n",
                  0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 2);  // header + one day
  CHECK(csv.find("\r\n") != std::string::npos);
}
