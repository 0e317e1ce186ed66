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

// The goldpool umbrella binary: range verification, project server, worker
// agent, deterministic simulation, and the stats/admin surface — one
// subcommand tree over the header library.

#include <CLI11.hpp>

#include <atomic>
#include <chrono>
#include <cinttypes>
#include <csignal>
#include <cstdio>
#include <iostream>
#include <thread>

#include "goldpool/admin.hpp"
#include "goldpool/client.hpp"
#include "goldpool/daemons.hpp"
#include "goldpool/http_server.hpp"
#include "goldpool/log_store.hpp"
#include "goldpool/oracle.hpp"
#include "goldpool/sim.hpp"
#include "goldpool/stats.hpp"
#include "goldpool/wire.hpp"
#include "goldpool/worker.hpp"

namespace {

using namespace goldpool;

std::atomic<bool> g_stop{false};

void handle_signal(int) { g_stop.store(true); }

void install_signal_handlers() {
  std::signal(SIGINT, handle_signal);
  std::signal(SIGTERM, handle_signal);
}

// ---------------------------------------------------------------------------
// goldbach verify
// ---------------------------------------------------------------------------

struct VerifyArgs {
  std::uint64_t from = 4;
  std::uint64_t to = 4;
  bool oracle = false;
  std::uint64_t checkpoint_every = 100'000;
  std::string checkpoint_file;
};

int cmd_verify(const VerifyArgs& a) {
  const goldbach::GoldbachRange range{a.from, a.to};
  goldbach::GoldbachResult res;
  if (a.oracle) {
    res = goldpool::goldbach::oracle_verify_range(range);
  } else {
    goldbach::VerifyOptions opts;
    opts.checkpoint_every = a.checkpoint_every;
    std::optional<goldbach::Checkpoint> resume;
    if (!a.checkpoint_file.empty()) {
      resume = goldbach::read_checkpoint_file(a.checkpoint_file);
      opts.on_checkpoint = [&](const goldbach::Checkpoint& cp) {
        goldbach::write_checkpoint_file(a.checkpoint_file, cp);
      };
    }
    res = goldbach::verify_range(range, resume, opts);
    if (!a.checkpoint_file.empty()) std::remove(a.checkpoint_file.c_str());
  }
  goldpool::wire::json j = goldpool::wire::result_to_json(res);
  j["range_start"] = range.start;
  j["range_end"] = range.end;
  std::cout << j.dump() << "\n";
  return res.counterexample ? 2 : 0;
}

// ---------------------------------------------------------------------------
// server run
// ---------------------------------------------------------------------------

struct ServerArgs {
  std::string data_dir;
  std::string host = "0.0.0.0";
  int port = 8080;
  // Optional persisted-config overrides; only flags the user passed apply.
  std::int64_t quorum = 0, replication = 0, deadline_secs = 0, width_evens = 0;
  std::int64_t buffer_target = 0, poll_ms = 0, frontier_limit = -1, retention_secs = 0;
  std::int64_t per_host_cap = 0, max_instances = 0;
};

int cmd_server(const CLI::App& cmd, const ServerArgs& a) {
  goldpool::core::LogStore store(a.data_dir);
  goldpool::core::SystemClock clock;

  goldpool::core::with_txn(store, [&](goldpool::core::Txn& t) {
    if (t.meta("frontier", -1) < 0) t.put_meta("frontier", 4);  // fresh project
    auto apply = [&](const char* flag, const char* key, std::int64_t value) {
      if (cmd.count(flag)) goldpool::admin::set_config(t, key, value);
    };
    apply("--quorum", "quorum", a.quorum);
    apply("--replication", "replication", a.replication);
    apply("--deadline-secs", "deadline_secs", a.deadline_secs);
    apply("--width-evens", "width_evens", a.width_evens);
    apply("--buffer-target", "buffer_target", a.buffer_target);
    apply("--poll-ms", "poll_ms", a.poll_ms);
    apply("--frontier-limit", "frontier_limit", a.frontier_limit);
    apply("--retention-secs", "retention_secs", a.retention_secs);
    apply("--cap", "per_host_cap", a.per_host_cap);
    apply("--max-instances", "max_total_instances", a.max_instances);
    return 0;
  });
  const goldpool::server::SchedulerConfig cfg = goldpool::core::with_txn(
      store, [&](goldpool::core::Txn& t) { return goldpool::server::load_config(t); });

  goldpool::server::HttpApi api(store, cfg, clock);
  goldpool::server::DaemonRunner daemons(store, cfg, clock);
  daemons.start();

  const int port = api.server().bind_to_port(a.host, a.port) ? a.port : -1;
  if (port < 0) {
    std::cerr << "error: cannot bind " << a.host << ":" << a.port << "\n";
    return 1;
  }
  std::cout << "listening on " << a.host << ":" << port << " (data: " << a.data_dir << ")\n"
            << std::flush;

  std::thread watchdog([&] {
    while (!g_stop.load()) std::this_thread::sleep_for(std::chrono::milliseconds(100));
    api.stop();
  });
  api.listen_after_bind();  // blocks until stop()
  g_stop.store(true);
  watchdog.join();
  daemons.stop();
  store.snapshot_now();
  return 0;
}

// ---------------------------------------------------------------------------
// worker run
// ---------------------------------------------------------------------------

struct WorkerArgs {
  std::string server_url;
  std::string name = "anonymous";
  std::uint32_t cpu_class = 3;
  std::string work_dir = ".";
  std::int64_t poll_ms = 10'000;
  std::uint64_t checkpoint_every = 100'000;
  std::uint64_t ram_bytes = 4ull << 30;
  std::uint64_t disk_bytes = 64ull << 30;
  std::uint64_t cheat_delta = 0;
};

int cmd_worker(const WorkerArgs& a) {
  goldpool::worker::HttpSchedulerClient client(a.server_url);
  goldpool::worker::WorkerConfig cfg;
  cfg.user_name = a.name;
  cfg.cpu_class = a.cpu_class;
  cfg.work_dir = a.work_dir;
  cfg.idle_poll_ms = a.poll_ms;
  cfg.checkpoint_every = a.checkpoint_every;
  cfg.ram_bytes = a.ram_bytes;
  cfg.free_disk_bytes = a.disk_bytes;
  cfg.cheat_delta = a.cheat_delta;
  cfg.stop_requested = [] { return g_stop.load(); };
  goldpool::worker::Worker w(client, cfg);
  w.run();
  return 0;
}

// ---------------------------------------------------------------------------
// sim run / sim saturate
// ---------------------------------------------------------------------------

struct SimArgs {
  goldpool::sim::SimConfig cfg;
  std::string out;
  double multiplier = 1.0;
  std::uint32_t ticks = 600;
};

int cmd_sim_run(const SimArgs& a) {
  const goldpool::sim::SimResult r = goldpool::sim::run_sim_full(a.cfg);
  const std::string csv = r.trace.to_csv();
  if (a.out.empty()) {
    std::cout << csv;
  } else {
    goldpool::stats::export_csv(csv, a.out);
    std::cout << "trace written to " << a.out << "\n";
  }
  std::uint64_t archive = 0;
  goldpool::core::with_txn(*r.store, [&](goldpool::core::Txn& t) {
    archive = t.archive_rows();
    return 0;
  });
  std::fprintf(stdout,
               "days=%u hosts=%zu reports_ok=%" PRIu64 " archive_rows=%" PRIu64
               " purged=%" PRIu64 " errored=%" PRIu64 "\n",
               a.cfg.days, r.hosts.size(), r.reports_ok, archive, r.units_purged,
               r.units_errored);
  return 0;
}

int cmd_sim_saturate(const SimArgs& a) {
  const auto rep = goldpool::sim::saturate_server(a.cfg, a.multiplier, a.ticks);
  goldpool::wire::json j;
  j["multiplier"] = a.multiplier;
  j["ticks"] = a.ticks;
  j["arrivals"] = rep.arrivals_total;
  j["served"] = rep.served_total;
  j["final_queue"] = rep.queue_depth.empty() ? 0 : rep.queue_depth.back();
  j["max_queue"] = rep.queue_depth.empty()
                       ? 0
                       : *std::max_element(rep.queue_depth.begin(), rep.queue_depth.end());
  j["latency_p50_secs"] = rep.latency_percentile(50);
  j["latency_p95_secs"] = rep.latency_percentile(95);
  j["latency_p99_secs"] = rep.latency_percentile(99);
  std::cout << j.dump() << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// stats / admin (read the store directly)
// ---------------------------------------------------------------------------

struct StatsArgs {
  std::string data_dir;
  std::int64_t window_secs = 3'600;
  double flops_per_even = 1'000.0;
  std::string csv;
};

int cmd_stats_throughput(const StatsArgs& a) {
  goldpool::core::LogStore::Options opts;
  opts.read_only = true;
  goldpool::core::LogStore store(a.data_dir, opts);
  goldpool::core::SystemClock clock;
  const auto est = goldpool::core::with_txn(store, [&](goldpool::core::Txn& t) {
    const auto now = clock.now_ms();
    return goldpool::stats::estimate_throughput(
        t, now - a.window_secs * goldpool::core::kMsPerSec, now, a.flops_per_even);
  });
  if (!a.csv.empty()) {
    goldpool::stats::export_csv(goldpool::stats::throughput_to_csv({est}), a.csv);
    std::cout << "written to " << a.csv << "\n";
    return 0;
  }
  std::fprintf(stdout,
               "window_secs=%" PRId64 " tasks_validated=%" PRIu64 " evens_validated=%" PRIu64
               " est_flops=%.6g\n",
               a.window_secs, est.tasks_validated, est.evens_validated, est.est_flops);
  return 0;
}

int cmd_stats_growth(const StatsArgs& a) {
  goldpool::core::LogStore::Options opts;
  opts.read_only = true;
  goldpool::core::LogStore store(a.data_dir, opts);
  const auto rows = goldpool::core::with_txn(
      store, [&](goldpool::core::Txn& t) { return goldpool::stats::daily_growth(t); });
  const std::string csv = goldpool::stats::growth_to_csv(rows);
  if (!a.csv.empty()) {
    goldpool::stats::export_csv(csv, a.csv);
    std::cout << "written to " << a.csv << "\n";
  } else {
    std::cout << csv;
  }
  return 0;
}

struct AdminArgs {
  std::string data_dir;
  std::uint64_t wu_id = 0;
  std::string key, value;
};

int cmd_admin_init(const AdminArgs& a) {
  goldpool::admin::init_project(a.data_dir);
  std::cout << "initialized project store in " << a.data_dir << "\n";
  return 0;
}

int cmd_admin_status(const AdminArgs& a) {
  goldpool::core::LogStore::Options opts;
  opts.read_only = true;
  goldpool::core::LogStore store(a.data_dir, opts);
  const auto rep = goldpool::core::with_txn(
      store, [&](goldpool::core::Txn& t) { return goldpool::admin::status(t); });
  std::cout << rep.to_text();
  return 0;
}

int cmd_admin_cancel(const AdminArgs& a) {
  goldpool::core::LogStore store(a.data_dir);
  const auto out = goldpool::core::with_txn(store, [&](goldpool::core::Txn& t) {
    return goldpool::admin::cancel_workunit(t, a.wu_id);
  });
  std::fprintf(stdout,
               "cancelled_sent=%u invalidated_returned=%u deleted_unsent=%u unit_errored=%s\n",
               out.cancelled_sent, out.invalidated_returned, out.deleted_unsent,
               out.unit_errored ? "yes" : "no");
  return 0;
}

int cmd_admin_set_config(const AdminArgs& a) {
  goldpool::core::LogStore store(a.data_dir);
  const std::int64_t value = std::stoll(a.value);
  goldpool::core::with_txn(store, [&](goldpool::core::Txn& t) {
    goldpool::admin::set_config(t, a.key, value);
    return 0;
  });
  std::cout << a.key << " = " << value << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  install_signal_handlers();
  CLI::App app{"goldpool: volunteer-computing platform verifying Goldbach ranges"};
  app.require_subcommand(1);

  // goldbach verify
  auto* goldbach_cmd = app.add_subcommand("goldbach", "range verification math");
  goldbach_cmd->require_subcommand(1);
  VerifyArgs va;
  auto* verify = goldbach_cmd->add_subcommand("verify", "verify one even range, print JSON");
  verify->add_option("--from", va.from, "first even number (>= 4)")->required();
  verify->add_option("--to", va.to, "last even number")->required();
  verify->add_flag("--oracle", va.oracle, "use the slow trial-division oracle");
  verify->add_option("--checkpoint-every", va.checkpoint_every, "evens between checkpoints");
  verify->add_option("--checkpoint-file", va.checkpoint_file,
                     "checkpoint path (resumed if present)");

  // server run
  auto* server_cmd = app.add_subcommand("server", "project server");
  server_cmd->require_subcommand(1);
  ServerArgs sa;
  auto* srun = server_cmd->add_subcommand("run", "serve the scheduler API and run daemons");
  srun->add_option("--data-dir", sa.data_dir, "store directory")->required();
  srun->add_option("--port", sa.port, "listen port");
  srun->add_option("--host", sa.host, "bind address");
  srun->add_option("--quorum", sa.quorum, "agreeing results required");
  srun->add_option("--replication", sa.replication, "replicas issued per unit");
  srun->add_option("--deadline-secs", sa.deadline_secs, "per-task completion budget");
  srun->add_option("--width-evens", sa.width_evens, "evens per generated unit");
  srun->add_option("--buffer-target", sa.buffer_target, "assignable-instance low watermark");
  srun->add_option("--poll-ms", sa.poll_ms, "daemon poll interval");
  srun->add_option("--frontier-limit", sa.frontier_limit, "stop generating at this even");
  srun->add_option("--retention-secs", sa.retention_secs, "keep rows after assimilation");
  srun->add_option("--cap", sa.per_host_cap, "max tasks in flight per host");
  srun->add_option("--max-instances", sa.max_instances, "lifetime instance cap per unit");

  // worker run
  auto* worker_cmd = app.add_subcommand("worker", "volunteer agent");
  worker_cmd->require_subcommand(1);
  WorkerArgs wa;
  auto* wrun = worker_cmd->add_subcommand("run", "fetch, compute, checkpoint, report");
  wrun->add_option("--server", wa.server_url, "scheduler base URL")->required();
  wrun->add_option("--name", wa.name, "volunteer display name");
  wrun->add_option("--cpu-class", wa.cpu_class, "1..5; also concurrent slots");
  wrun->add_option("--work-dir", wa.work_dir, "checkpoint/identity directory");
  wrun->add_option("--poll-ms", wa.poll_ms, "idle poll interval");
  wrun->add_option("--checkpoint-every", wa.checkpoint_every, "evens between checkpoints");
  wrun->add_option("--ram-bytes", wa.ram_bytes, "advertised RAM");
  wrun->add_option("--disk-bytes", wa.disk_bytes, "advertised free disk");
  wrun->add_option("--cheat-delta", wa.cheat_delta,
                   "corrupt every checksum by this delta (validation drills)");

  // sim run / saturate
  auto* sim_cmd = app.add_subcommand("sim", "deterministic discrete-event simulation");
  sim_cmd->require_subcommand(1);
  SimArgs ma;
  auto* mrun = sim_cmd->add_subcommand("run", "simulate the platform, write a per-day trace");
  mrun->add_option("--seed", ma.cfg.seed, "RNG seed");
  mrun->add_option("--days", ma.cfg.days, "virtual days");
  mrun->add_option("--cheaters", ma.cfg.cheater_frac, "cheating host fraction");
  mrun->add_option("--dropouts", ma.cfg.dropout_frac, "vanishing host fraction");
  mrun->add_option("--slow", ma.cfg.slow_frac, "slow host fraction");
  mrun->add_option("--users-per-day", ma.cfg.users_per_day, "mean user arrivals/day");
  mrun->add_option("--hosts-per-day", ma.cfg.hosts_per_day, "mean host arrivals/day");
  mrun->add_option("--initial-hosts", ma.cfg.initial_hosts, "hosts present at t=0");
  mrun->add_option("--initial-users", ma.cfg.initial_users, "users present at t=0");
  mrun->add_option("--window-hours", ma.cfg.availability_window_hours,
                   "daily availability window (0 = always on)");
  mrun->add_flag("--single-window", ma.cfg.single_window, "all hosts share one window");
  mrun->add_option("--width-evens", ma.cfg.unit_width_evens, "evens per generated unit");
  mrun->add_option("--quorum", ma.cfg.quorum, "agreeing results required");
  mrun->add_option("--replication", ma.cfg.target_replication, "replicas issued per unit");
  mrun->add_option("--deadline-secs", ma.cfg.deadline_secs, "per-task completion budget");
  mrun->add_option("--retention-secs", ma.cfg.retention_secs, "keep rows after assimilation");
  mrun->add_option("--frontier-limit", ma.cfg.frontier_limit, "stop generating at this even");
  mrun->add_option("--out", ma.out, "trace CSV path (stdout when absent)");
  auto* msat = sim_cmd->add_subcommand("saturate", "open-loop scheduler saturation study");
  msat->add_option("--seed", ma.cfg.seed, "RNG seed");
  msat->add_option("--multiplier", ma.multiplier, "request-rate multiplier (>= 1)")->required();
  msat->add_option("--ticks", ma.ticks, "virtual seconds to run");
  msat->add_option("--capacity-rps", ma.cfg.server_capacity_rps, "requests served per second");

  // stats
  auto* stats_cmd = app.add_subcommand("stats", "project statistics");
  stats_cmd->require_subcommand(1);
  StatsArgs ta;
  auto* thr = stats_cmd->add_subcommand("throughput", "estimated flops over a recent window");
  thr->add_option("--data-dir", ta.data_dir, "store directory")->required();
  thr->add_option("--window-secs", ta.window_secs, "window length ending now");
  thr->add_option("--flops-per-even", ta.flops_per_even, "cost model per even checked");
  thr->add_option("--csv", ta.csv, "write CSV here instead of text");
  auto* gro = stats_cmd->add_subcommand("growth", "new users/hosts per day");
  gro->add_option("--data-dir", ta.data_dir, "store directory")->required();
  gro->add_option("--csv", ta.csv, "write CSV here instead of stdout");

  // admin
  auto* admin_cmd = app.add_subcommand("admin", "project administration");
  admin_cmd->require_subcommand(1);
  AdminArgs aa;
  auto* ainit = admin_cmd->add_subcommand("init", "create an empty project store");
  ainit->add_option("--data-dir", aa.data_dir, "store directory")->required();
  auto* astat = admin_cmd->add_subcommand("status", "table sizes and state counts");
  astat->add_option("--data-dir", aa.data_dir, "store directory")->required();
  auto* acan = admin_cmd->add_subcommand("cancel-wu", "withdraw a work unit");
  acan->add_option("--data-dir", aa.data_dir, "store directory")->required();
  acan->add_option("--wu", aa.wu_id, "work unit id")->required();
  auto* aset = admin_cmd->add_subcommand("set-config", "persist a scheduler config override");
  aset->add_option("--data-dir", aa.data_dir, "store directory")->required();
  aset->add_option("key", aa.key, "config key")->required();
  aset->add_option("value", aa.value, "integer value")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (verify->parsed()) return cmd_verify(va);
    if (srun->parsed()) return cmd_server(*srun, sa);
    if (wrun->parsed()) return cmd_worker(wa);
    if (mrun->parsed()) return cmd_sim_run(ma);
    if (msat->parsed()) return cmd_sim_saturate(ma);
    if (thr->parsed()) return cmd_stats_throughput(ta);
    if (gro->parsed()) return cmd_stats_growth(ta);
    if (ainit->parsed()) return cmd_admin_init(aa);
    if (astat->parsed()) return cmd_admin_status(aa);
    if (acan->parsed()) return cmd_admin_cancel(aa);
    if (aset->parsed()) return cmd_admin_set_config(aa);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
