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

// Release gate for the platform. Each criterion below prints exactly one
// PASS/FAIL line; the process exit code is the number of failures. The
// checks range from pure math (range verification against a slow oracle)
// through statistical properties of seeded fleet simulations up to a live
// loopback deployment of the real server and worker binaries.
//
// Tolerances and budgets are pinned in code next to each criterion.

#include <fcntl.h>
#include <signal.h>
#include <sys/stat.h>
#include <sys/wait.h>
#include <unistd.h>

#include <httplib.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "goldpool/admin.hpp"
#include "goldpool/clock.hpp"
#include "goldpool/daemons.hpp"
#include "goldpool/goldbach.hpp"
#include "goldpool/log_store.hpp"
#include "goldpool/oracle.hpp"
#include "goldpool/rng.hpp"
#include "goldpool/scheduler.hpp"
#include "goldpool/sim.hpp"
#include "goldpool/stats.hpp"
#include "goldpool/store.hpp"
#include "goldpool/wire.hpp"

namespace {

using namespace goldpool;
namespace fs = std::filesystem;

struct Outcome {
  bool pass = false;
  std::string note;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

// ---------------------------------------------------------------------------
// C1: range verification is right, fast, and oracle-exact
// ---------------------------------------------------------------------------

Outcome c1_goldbach_correctness() {
  constexpr double kBudgetSecs = 10.0;
  const auto t0 = std::chrono::steady_clock::now();

  goldbach::PrimeTable table(1'000'000);
  goldbach::VerifyOptions opts;
  opts.primes = &table;

  const goldbach::GoldbachResult full =
      goldbach::verify_range({4, 1'000'000}, std::nullopt, opts);
  if (full.counterexample)
    return {false, "counterexample reported at " + std::to_string(*full.counterexample)};
  if (full.evens_checked != 499'999)
    return {false, "expected 499999 evens in [4,1e6], got " + std::to_string(full.evens_checked)};

  goldbach::TrialPrimality memo;
  const goldbach::GoldbachRange low{4, 10'000};
  if (!(goldbach::verify_range(low, std::nullopt, opts) == goldbach::oracle_verify_range(low, &memo)))
    return {false, "sieve and oracle disagree on [4,10000]"};

  sim::Rng rng(20'260'817);
  constexpr std::uint64_t kEvens = (1'000'000 - 4) / 2 + 1;
  for (int i = 0; i < 100; ++i) {
    const std::uint64_t width = 1 + rng.below(2'000);
    const std::uint64_t idx = rng.below(kEvens - width + 1);
    const goldbach::GoldbachRange r{4 + 2 * idx, 4 + 2 * (idx + width - 1)};
    if (!(goldbach::verify_range(r, std::nullopt, opts) == goldbach::oracle_verify_range(r, &memo)))
      return {false, "sieve and oracle disagree on [" + std::to_string(r.start) + "," +
                         std::to_string(r.end) + "]"};
  }

  const double secs = seconds_since(t0);
  if (secs >= kBudgetSecs) return {false, "took " + fmt(secs) + " s (budget 10 s)"};
  return {true, "[4,1e6] clean, oracle-exact on 101 ranges, " + fmt(secs) + " s"};
}

// ---------------------------------------------------------------------------
// C2: 50 seeded faulty fleets never archive a wrong or under-replicated result
// ---------------------------------------------------------------------------

Outcome c2_lifecycle_safety() {
  constexpr double kBudgetSecs = 60.0;
  const auto t0 = std::chrono::steady_clock::now();

  sim::ResultCache cache;
  goldbach::TrialPrimality memo;
  std::uint64_t archives = 0, quorum_units = 0, pairs = 0;

  for (std::uint32_t i = 0; i < 50; ++i) {
    sim::SimConfig cfg;
    cfg.seed = 1'000 + i;
    cfg.days = 10;
    cfg.dropout_frac = 0.1 * (i % 4);  // 0 .. 0.3
    cfg.cheater_frac = 0.1 * (i % 3);  // 0 .. 0.2
    cfg.compute_secs_by_class = {3'600, 3'600, 3'600, 3'600, 3'600};
    cfg.unit_width_evens = 200;
    cfg.retention_secs = 10'000'000;  // keep every row for the audit
    cfg.record_history = true;
    cfg.shared_cache = &cache;

    const sim::SimResult r = sim::run_sim_full(cfg);
    sim::AuditOptions ao;
    ao.shared_oracle = &memo;
    const sim::AuditReport audit = sim::audit_run(r, ao);
    if (!audit.ok())
      return {false, "seed " + std::to_string(cfg.seed) + ": " + audit.problems.front()};
    archives += audit.archives_checked;
    quorum_units += audit.units_quorum_checked;
    pairs += audit.replica_pairs_checked;
  }

  const double secs = seconds_since(t0);
  if (archives == 0 || quorum_units == 0 || pairs == 0)
    return {false, "audit exercised nothing (archives " + std::to_string(archives) + ")"};
  if (secs >= kBudgetSecs) return {false, "took " + fmt(secs) + " s (budget 60 s)"};
  return {true, std::to_string(archives) + " archives, " + std::to_string(quorum_units) +
                    " quorums, " + std::to_string(pairs) + " replica pairs clean, " + fmt(secs) +
                    " s"};
}

// ---------------------------------------------------------------------------
// C3: a vanished host costs a deadline, the unit recovers, the late report
//     bounces
// ---------------------------------------------------------------------------

Outcome c3_timeout_reissue() {
  core::MemStore store;
  core::VirtualClock clock(0);
  server::SchedulerConfig cfg;
  cfg.generator_range_width_evens = 100;
  cfg.unsent_buffer_target = 2;
  cfg.quorum = 2;
  cfg.target_replication = 2;
  cfg.deadline_delay_secs = 600;
  cfg.retention_after_assimilation_secs = 1'000'000;

  core::with_txn(store, [](core::Txn& t) {
    t.put_meta("frontier", 4);
    return 0;
  });

  core::HostSpec spec;
  spec.ram_bytes = 1ull << 30;
  spec.free_disk_bytes = 1ull << 30;
  spec.cpu_class = 3;
  const auto ghost = server::register_host(store, clock, "ghost", spec);
  const auto beth = server::register_host(store, clock, "beth", spec);
  const auto cora = server::register_host(store, clock, "cora", spec);

  server::run_daemon_pass(store, cfg, clock);  // generator fills the buffer

  const auto g_ghost = server::assign_work(store, clock, cfg, ghost.host_id, 1);
  const auto g_beth = server::assign_work(store, clock, cfg, beth.host_id, 1);
  if (g_ghost.size() != 1 || g_beth.size() != 1) return {false, "expected one grant per host"};
  if (!(g_ghost[0].range == g_beth[0].range)) return {false, "replicas should share a range"};

  const goldbach::GoldbachResult truth = goldbach::verify_range(g_beth[0].range);
  if (server::report_result(store, clock, g_beth[0].task_id, truth).status !=
      server::ReportStatus::Ok)
    return {false, "honest report rejected"};

  // The ghost never reports; cross its deadline.
  clock.advance_to(g_ghost[0].deadline);
  server::run_daemon_pass(store, cfg, clock);

  const auto timed_out = core::with_txn(
      store, [&](core::Txn& t) { return t.task_or_throw(g_ghost[0].task_id).state; });
  if (timed_out != core::TaskState::TimedOut) return {false, "ghost task did not time out"};

  const auto g_cora = server::assign_work(store, clock, cfg, cora.host_id, 1);
  if (g_cora.size() != 1 || !(g_cora[0].range == g_beth[0].range))
    return {false, "reissued instance did not reach the third host"};
  if (server::report_result(store, clock, g_cora[0].task_id, truth).status !=
      server::ReportStatus::Ok)
    return {false, "reissue report rejected"};

  server::run_daemon_pass(store, cfg, clock);  // flag -> validate -> assimilate

  const core::Id wu = core::with_txn(
      store, [&](core::Txn& t) { return t.task_or_throw(g_beth[0].task_id).wu_id; });
  const auto state =
      core::with_txn(store, [&](core::Txn& t) { return t.unit_or_throw(wu).state; });
  if (state != core::WuState::Assimilated) return {false, "unit never assimilated"};

  const bool archived_truth = core::with_txn(store, [&](core::Txn& t) {
    const auto rec = t.archive_of(wu);
    return rec && rec->result == truth;
  });
  if (!archived_truth) return {false, "archive missing or wrong"};

  const auto late = server::report_result(store, clock, g_ghost[0].task_id, truth);
  if (late.status != server::ReportStatus::Rejected || late.reason != "deadline expired")
    return {false, "late report was not rejected with 'deadline expired'"};

  const auto ghost_credit = core::with_txn(
      store, [&](core::Txn& t) { return t.task_or_throw(g_ghost[0].task_id).credit_granted; });
  if (ghost_credit != 0) return {false, "ghost earned credit for nothing"};

  return {true, "timeout -> reissue -> assimilated; late report bounced"};
}

// ---------------------------------------------------------------------------
// C4: credit is conserved exactly, and purging never moves a total
// ---------------------------------------------------------------------------

struct CreditLedger {
  std::vector<std::pair<std::string, std::uint64_t>> totals;  // by display name
  bool identity_holds = true;
  std::uint64_t purged_sum = 0;
};

CreditLedger ledger_of(core::Store& store) {
  CreditLedger led;
  core::with_txn(store, [&](core::Txn& t) {
    std::map<core::Id, core::Id> host_user;
    t.for_each_host([&](const core::HostRecord& h) { host_user[h.host_id] = h.user_id; });
    std::map<core::Id, std::uint64_t> valid_credit;
    t.for_each_task([&](const core::TaskInstance& row) {
      if (row.state == core::TaskState::Valid)
        valid_credit[host_user.at(row.host_id)] += row.credit_granted;
    });
    t.for_each_user([&](const core::UserRecord& u) {
      led.totals.emplace_back(u.display_name, u.credit_total);
      led.purged_sum += u.credit_purged;
      if (u.credit_total != valid_credit[u.user_id] + u.credit_purged) led.identity_holds = false;
    });
    return 0;
  });
  std::sort(led.totals.begin(), led.totals.end());
  return led;
}

Outcome c4_credit_conservation() {
  sim::ResultCache cache;
  for (std::uint64_t seed : {401, 402}) {
    sim::SimConfig cfg;
    cfg.seed = seed;
    cfg.days = 5;
    cfg.dropout_frac = 0.1;
    cfg.cheater_frac = 0.1;
    cfg.compute_secs_by_class = {1'800, 1'800, 1'800, 1'800, 1'800};
    cfg.unit_width_evens = 200;
    cfg.shared_cache = &cache;

    cfg.retention_secs = 600;  // aggressive purging
    const sim::SimResult purged = sim::run_sim_full(cfg);
    cfg.retention_secs = 10'000'000;  // twin run that never purges
    const sim::SimResult kept = sim::run_sim_full(cfg);

    if (purged.units_purged == 0)
      return {false, "seed " + std::to_string(seed) + ": purging never fired"};

    const CreditLedger a = ledger_of(*purged.store);
    const CreditLedger b = ledger_of(*kept.store);
    if (!a.identity_holds || !b.identity_holds)
      return {false, "seed " + std::to_string(seed) +
                         ": credit_total != valid credit + purged credit for some user"};
    if (b.purged_sum != 0)
      return {false, "seed " + std::to_string(seed) + ": no-purge run accrued purged credit"};
    if (a.totals != b.totals)
      return {false, "seed " + std::to_string(seed) + ": purging changed a user's credit total"};
  }
  return {true, "exact per-user conservation; purge-active and purge-free twins agree"};
}

// ---------------------------------------------------------------------------
// C5: task table stays bounded over 30 days while the archive only grows
// ---------------------------------------------------------------------------

Outcome c5_storage_bounded() {
  sim::SimConfig cfg;
  cfg.seed = 77;
  cfg.days = 30;
  cfg.dropout_frac = 0.1;
  cfg.cheater_frac = 0.1;
  cfg.compute_secs_by_class = {3'600, 3'600, 3'600, 3'600, 3'600};
  cfg.unit_width_evens = 100;
  cfg.retention_secs = 600;

  const sim::SimResult r = sim::run_sim_full(cfg);
  std::uint64_t cum_hosts = cfg.initial_hosts;
  std::uint64_t prev_archive = 0;
  std::uint64_t worst_rows = 0, worst_bound = 0;
  for (std::size_t d = 0; d < r.trace.days.size(); ++d) {
    const auto& row = r.trace.days[d];
    cum_hosts += row.new_hosts;
    if (row.archive_rows < prev_archive)
      return {false, "archive shrank on day " + std::to_string(d)};
    prev_archive = row.archive_rows;
    if (d < 2) continue;  // let the pipeline fill before holding it to the bound
    const std::uint64_t in_flight_capacity =
        cum_hosts * cfg.per_host_task_cap + cfg.unsent_buffer_target;
    const std::uint64_t bound = 3 * in_flight_capacity;
    if (row.task_table_rows > bound)
      return {false, "day " + std::to_string(d) + ": " + std::to_string(row.task_table_rows) +
                         " task rows exceed bound " + std::to_string(bound)};
    if (worst_bound == 0 || row.task_table_rows * worst_bound > worst_rows * bound) {
      worst_rows = row.task_table_rows;
      worst_bound = bound;
    }
  }
  if (prev_archive == 0) return {false, "nothing ever assimilated"};
  return {true, "worst day used " + std::to_string(worst_rows) + "/" +
                    std::to_string(worst_bound) + " rows; archive grew to " +
                    std::to_string(prev_archive)};
}

// ---------------------------------------------------------------------------
// C6: arrivals look like the configured Poisson process and the growth
//     report reproduces the simulator's own log exactly
// ---------------------------------------------------------------------------

Outcome c6_growth_statistics() {
  sim::ResultCache cache;
  std::uint64_t users = 0, hosts = 0;
  constexpr std::uint32_t kRuns = 100;
  constexpr std::uint32_t kDays = 30;

  for (std::uint32_t i = 0; i < kRuns; ++i) {
    sim::SimConfig cfg;
    cfg.seed = 9'000 + i;
    cfg.days = kDays;
    // Hosts that effectively never finish: this criterion is about arrivals.
    cfg.compute_secs_by_class = {432'000, 432'000, 432'000, 432'000, 432'000};
    cfg.unit_width_evens = 1'000;
    cfg.unsent_buffer_target = 16;
    cfg.shared_cache = &cache;

    const sim::SimResult r = sim::run_sim_full(cfg);
    users += r.poisson_user_arrivals;
    hosts += r.poisson_host_arrivals;

    const bool matches = core::with_txn(*r.store, [&](core::Txn& t) {
      const auto growth = stats::daily_growth(t);
      for (std::uint32_t d = 0; d < kDays; ++d) {
        const std::uint32_t gu = d < growth.size() ? growth[d].new_users : 0;
        const std::uint32_t gh = d < growth.size() ? growth[d].new_hosts : 0;
        if (r.trace.days[d].new_users != gu || r.trace.days[d].new_hosts != gh) return false;
      }
      return true;
    });
    if (!matches)
      return {false, "seed " + std::to_string(cfg.seed) + ": growth report != simulator log"};
  }

  const double user_mean = double(users) / (kRuns * kDays);
  const double host_mean = double(hosts) / (kRuns * kDays);
  if (user_mean < 1.3 || user_mean > 1.7)
    return {false, "mean daily user arrivals " + fmt(user_mean) + " outside [1.3,1.7]"};
  if (host_mean < 1.75 || host_mean > 2.25)
    return {false, "mean daily host arrivals " + fmt(host_mean) + " outside [1.75,2.25]"};
  return {true, "user mean " + fmt(user_mean) + ", host mean " + fmt(host_mean) +
                    ", growth reports exact in all 100 runs"};
}

// ---------------------------------------------------------------------------
// C7: staggered availability windows keep hourly throughput steady;
//     one shared window does not
// ---------------------------------------------------------------------------

double hourly_cov(const std::vector<std::uint64_t>& hourly, std::size_t from, std::size_t to) {
  double mean = 0;
  for (std::size_t h = from; h < to; ++h) mean += double(hourly[h]);
  mean /= double(to - from);
  if (mean == 0) return std::numeric_limits<double>::infinity();
  double var = 0;
  for (std::size_t h = from; h < to; ++h) {
    const double d = double(hourly[h]) - mean;
    var += d * d;
  }
  var /= double(to - from);
  return std::sqrt(var) / mean;
}

Outcome c7_steady_throughput() {
  constexpr double kThreshold = 0.15;  // coefficient of variation, days 2-5
  sim::ResultCache cache;

  sim::SimConfig cfg;
  cfg.seed = 7;
  cfg.days = 5;
  cfg.initial_users = 5;
  cfg.initial_hosts = 120;
  cfg.users_per_day = 0;
  cfg.hosts_per_day = 0;
  cfg.availability_window_hours = 12;
  cfg.compute_secs_by_class = {600, 600, 600, 600, 600};
  cfg.unit_width_evens = 100;
  cfg.retention_secs = 600;
  cfg.shared_cache = &cache;

  cfg.single_window = false;
  const sim::SimResult spread = sim::run_sim_full(cfg);
  cfg.single_window = true;
  const sim::SimResult lockstep = sim::run_sim_full(cfg);

  const double cov_spread = hourly_cov(spread.hourly_assimilated, 24, 120);
  const double cov_lockstep = hourly_cov(lockstep.hourly_assimilated, 24, 120);
  if (!(cov_spread < kThreshold))
    return {false, "staggered windows CoV " + fmt(cov_spread) + " not below 0.15"};
  if (!(cov_lockstep > kThreshold))
    return {false, "single-window control CoV " + fmt(cov_lockstep) + " not above 0.15"};
  return {true, "CoV staggered " + fmt(cov_spread) + " vs single-window " + fmt(cov_lockstep)};
}

// ---------------------------------------------------------------------------
// C8: the throughput estimator is exact on a known store, and the cost
//     model reproduces the intended full-scale order of magnitude
// ---------------------------------------------------------------------------

Outcome c8_estimator() {
  core::MemStore store;
  core::VirtualClock clock(0);

  // One user, one host, 25 validated tasks of 40000 evens each, received
  // inside a ten-minute window.
  core::with_txn(store, [&](core::Txn& t) {
    core::UserRecord u;
    u.display_name = "bench";
    const core::Id user = t.new_user(u);
    core::HostRecord h;
    h.user_id = user;
    h.ram_bytes = 1;
    h.free_disk_bytes = 1;
    h.cpu_class = 3;
    const core::Id host = t.new_host(h);

    for (int i = 0; i < 25; ++i) {
      core::WorkUnit wu;
      wu.range_start = 4;
      wu.range_end = 4 + 2 * (40'000 - 1);
      wu.deadline_delay_ms = 1'000;
      const core::Id id = t.new_unit(wu);
      core::TaskInstance ti;
      ti.wu_id = id;
      const core::Id task = t.new_task(ti);
      t.transition_task(task, core::TaskState::Unsent, core::TaskState::Sent,
                        [&](core::TaskInstance& row) {
                          row.host_id = host;
                          row.sent_at = 0;
                          row.deadline = 1'000'000;
                        });
      t.transition_unit(id, core::WuState::Generated, core::WuState::InProgress);
      goldbach::GoldbachResult payload;
      payload.evens_checked = 40'000;
      payload.max_min_p = 3;
      payload.argmax_n = wu.range_end;
      payload.checksum64 = 1;
      t.transition_task(task, core::TaskState::Sent, core::TaskState::Returned,
                        [&](core::TaskInstance& row) {
                          row.payload = payload;
                          row.received_at = 100'000 + i * 1'000;
                        });
      t.transition_task(task, core::TaskState::Returned, core::TaskState::Valid,
                        [&](core::TaskInstance& row) { row.credit_granted = 1; });
    }
    return 0;
  });

  const auto est = core::with_txn(store, [&](core::Txn& t) {
    return stats::estimate_throughput(t, 0, 600'000, 1'000.0);
  });
  const double hand = 25.0 * 40'000.0 * 1'000.0 / 600.0;  // evens x flops / seconds
  if (est.evens_validated != 25 * 40'000)
    return {false, "estimator counted " + std::to_string(est.evens_validated) + " evens"};
  if (std::abs(est.est_flops - hand) > 0.01 * hand)
    return {false, "estimate " + fmt(est.est_flops) + " not within 1% of " + fmt(hand)};

  // Documentation exercise, not a runtime claim: 15000 hosts each clearing
  // a million evens per second at 1000 flops per even sustain
  // 15000 x 1e6 x 1000 = 1.5e13 flops/s.
  const double full_scale = 15'000.0 * 1'000'000.0 * 1'000.0;
  if (full_scale < 1e13 || full_scale >= 1e14)
    return {false, "full-scale exercise " + fmt(full_scale) + " left [1e13,1e14)"};

  return {true, "exact at " + fmt(est.est_flops) + " flops; full-scale exercise " +
                    fmt(full_scale) + " flops"};
}

// ---------------------------------------------------------------------------
// C9: twenty random kill-points resume to bitwise-identical results
// ---------------------------------------------------------------------------

Outcome c9_checkpoint_transparency() {
  struct Kill {};
  const goldbach::GoldbachRange range{4, 60'000};
  goldbach::PrimeTable table(range.end);

  goldbach::VerifyOptions base;
  base.primes = &table;
  const goldbach::GoldbachResult straight = goldbach::verify_range(range, std::nullopt, base);
  const std::string want = goldbach::encode_result(straight);

  sim::Rng rng(9'283'741);
  for (int trial = 0; trial < 20; ++trial) {
    const std::uint64_t kill_at = 1 + rng.below(28);  // checkpoint ordinal to die on

    std::optional<goldbach::Checkpoint> last;
    goldbach::VerifyOptions opts;
    opts.primes = &table;
    opts.checkpoint_every = 997;
    std::uint64_t seen = 0;
    opts.on_checkpoint = [&](const goldbach::Checkpoint& cp) {
      last = cp;
      if (++seen == kill_at) throw Kill{};
    };

    bool killed = false;
    try {
      (void)goldbach::verify_range(range, std::nullopt, opts);
    } catch (const Kill&) {
      killed = true;
    }
    if (!killed || !last)
      return {false, "trial " + std::to_string(trial) + " never reached its kill-point"};

    const goldbach::GoldbachResult resumed = goldbach::verify_range(range, last, base);
    if (goldbach::encode_result(resumed) != want || !(resumed == straight))
      return {false, "trial " + std::to_string(trial) + " resumed to a different result"};
  }
  return {true, "20 kill/resume trials bitwise-identical"};
}

// ---------------------------------------------------------------------------
// C10: the real binaries, on loopback, verify [4, 2e6] to full assimilation
// ---------------------------------------------------------------------------

pid_t spawn_logged(const std::vector<std::string>& argv, const std::string& log_path) {
  const pid_t pid = ::fork();
  if (pid != 0) return pid;
  const int fd = ::open(log_path.c_str(), O_CREAT | O_WRONLY | O_APPEND, 0644);
  if (fd >= 0) {
    ::dup2(fd, 1);
    ::dup2(fd, 2);
    ::close(fd);
  }
  std::vector<char*> cargv;
  cargv.reserve(argv.size() + 1);
  for (const auto& s : argv) cargv.push_back(const_cast<char*>(s.c_str()));
  cargv.push_back(nullptr);
  ::execv(cargv[0], cargv.data());
  _exit(127);
}

void reap_all(std::vector<pid_t>& pids) {
  for (pid_t p : pids)
    if (p > 0) ::kill(p, SIGTERM);
  const auto deadline = std::chrono::steady_clock::now() + std::chrono::seconds(10);
  for (pid_t p : pids) {
    if (p <= 0) continue;
    for (;;) {
      int status = 0;
      const pid_t got = ::waitpid(p, &status, WNOHANG);
      if (got == p || got < 0) break;
      if (std::chrono::steady_clock::now() > deadline) {
        ::kill(p, SIGKILL);
        ::waitpid(p, &status, 0);
        break;
      }
      std::this_thread::sleep_for(std::chrono::milliseconds(50));
    }
  }
  pids.clear();
}

Outcome c10_live_end_to_end() {
  constexpr double kBudgetSecs = 120.0;
  const char* bin = std::getenv("GOLDPOOL_BIN");
  if (!bin || ::access(bin, X_OK) != 0)
    return {false, "GOLDPOOL_BIN is not set to an executable"};

  const fs::path root = fs::temp_directory_path() / ("goldpool_e2e_" + std::to_string(::getpid()));
  std::error_code ec;
  fs::remove_all(root, ec);
  fs::create_directories(root / "data");
  for (int i = 1; i <= 3; ++i) fs::create_directories(root / ("w" + std::to_string(i)));

  const int port = 18'000 + int(::getpid() % 2'000);
  const std::string port_s = std::to_string(port);
  const std::string url = "http://127.0.0.1:" + port_s;

  std::vector<pid_t> pids;
  const auto t0 = std::chrono::steady_clock::now();

  pids.push_back(spawn_logged(
      {bin, "server", "run", "--data-dir", (root / "data").string(), "--host", "127.0.0.1",
       "--port", port_s, "--quorum", "2", "--replication", "2", "--deadline-secs", "600",
       "--width-evens", "100000", "--buffer-target", "100", "--poll-ms", "200",
       "--frontier-limit", "2000004", "--retention-secs", "3600"},
      (root / "server.log").string()));

  httplib::Client probe("127.0.0.1", port);
  probe.set_connection_timeout(1, 0);
  probe.set_read_timeout(2, 0);

  const auto fail = [&](const std::string& why) -> Outcome {
    reap_all(pids);
    return {false, why + " (logs in " + root.string() + ")"};
  };

  bool up = false;
  while (seconds_since(t0) < 15.0) {
    if (auto res = probe.Get("/stats"); res && res->status == 200) {
      up = true;
      break;
    }
    std::this_thread::sleep_for(std::chrono::milliseconds(200));
  }
  if (!up) return fail("server never answered /stats on port " + port_s);

  for (int i = 1; i <= 3; ++i) {
    const std::string name = "w" + std::to_string(i);
    pids.push_back(spawn_logged({bin, "worker", "run", "--server", url, "--name", name,
                                 "--work-dir", (root / name).string(), "--cpu-class", "3",
                                 "--poll-ms", "300", "--checkpoint-every", "20000"},
                                (root / (name + ".log")).string()));
  }

  bool done = false;
  while (seconds_since(t0) < kBudgetSecs - 10.0) {
    std::this_thread::sleep_for(std::chrono::milliseconds(500));
    auto res = probe.Get("/stats");
    if (!res || res->status != 200) continue;
    const auto j = wire::json::parse(res->body, nullptr, false);
    if (j.is_discarded()) continue;
    if (j["units_by_state"].value("ASSIMILATED", 0) == 10 && j.value("archive_rows", 0) == 10) {
      done = true;
      break;
    }
  }
  if (!done) return fail("fleet never assimilated all 10 units in time");

  reap_all(pids);

  // Post-mortem on the store the server left behind.
  core::LogStore::Options ro;
  ro.read_only = true;
  core::LogStore store((root / "data").string(), ro);

  std::vector<core::ArchiveRecord> archive;
  std::int64_t frontier = 0;
  bool credit_exact = true;
  core::with_txn(store, [&](core::Txn& t) {
    t.for_each_archive([&](const core::ArchiveRecord& a) { archive.push_back(a); });
    frontier = t.meta("frontier", -1);

    std::map<core::Id, core::Id> host_user;
    t.for_each_host([&](const core::HostRecord& h) { host_user[h.host_id] = h.user_id; });
    std::map<core::Id, std::uint64_t> valid_credit;
    t.for_each_task([&](const core::TaskInstance& row) {
      if (row.state == core::TaskState::Valid)
        valid_credit[host_user.at(row.host_id)] += row.credit_granted;
    });
    t.for_each_user([&](const core::UserRecord& u) {
      if (u.credit_total != valid_credit[u.user_id] + u.credit_purged) credit_exact = false;
    });
    return 0;
  });

  if (archive.size() != 10)
    return {false, "expected 10 archive rows, found " + std::to_string(archive.size())};
  if (frontier != 2'000'004)
    return {false, "frontier stopped at " + std::to_string(frontier) + ", wanted 2000004"};

  std::sort(archive.begin(), archive.end(),
            [](const auto& a, const auto& b) { return a.range_start < b.range_start; });
  std::uint64_t expect_start = 4;
  for (const auto& rec : archive) {
    if (rec.range_start != expect_start)
      return {false, "archive gap: expected range starting at " + std::to_string(expect_start) +
                         ", found " + std::to_string(rec.range_start)};
    expect_start = rec.range_end + 2;
  }
  if (expect_start != 2'000'004) return {false, "archive does not tile up to the frontier"};

  goldbach::PrimeTable table(2'000'002);
  goldbach::VerifyOptions opts;
  opts.primes = &table;
  for (const auto& rec : archive)
    if (!(goldbach::verify_range(rec.range(), std::nullopt, opts) == rec.result))
      return {false, "archived result for [" + std::to_string(rec.range_start) + "," +
                         std::to_string(rec.range_end) + "] is wrong"};

  if (!credit_exact) return {false, "credit totals drifted from valid-task grants"};

  const double secs = seconds_since(t0);
  if (secs >= kBudgetSecs) return {false, "took " + fmt(secs) + " s (budget 120 s)"};

  fs::remove_all(root, ec);
  return {true, "3 workers verified [4,2e6] in " + fmt(secs) + " s; archive tiles, oracle-exact"};
}

}  // namespace

int main() {
  struct Criterion {
    const char* name;
    std::function<Outcome()> run;
  };
  const std::vector<Criterion> table = {
      {"C1 range-verification correctness", c1_goldbach_correctness},
      {"C2 lifecycle safety under faults", c2_lifecycle_safety},
      {"C3 timeout, reissue, late-report rejection", c3_timeout_reissue},
      {"C4 exact credit conservation", c4_credit_conservation},
      {"C5 bounded task table, growing archive", c5_storage_bounded},
      {"C6 growth statistics", c6_growth_statistics},
      {"C7 steady hourly throughput", c7_steady_throughput},
      {"C8 throughput estimator", c8_estimator},
      {"C9 checkpoint transparency", c9_checkpoint_transparency},
      {"C10 live end-to-end on loopback", c10_live_end_to_end},
  };

  int failures = 0;
  for (const auto& c : table) {
    Outcome out;
    try {
      out = c.run();
    } catch (const std::exception& e) {
      out = {false, std::string("unhandled exception: ") + e.what()};
    }
    std::printf("%s %s — %s\n", c.name, out.pass ? "PASS" : "FAIL", out.note.c_str());
    std::fflush(stdout);
    if (!out.pass) ++failures;
  }
  std::printf("ACCEPTANCE: %zu/%zu passed\n", table.size() - failures, table.size());
  return failures;
}
