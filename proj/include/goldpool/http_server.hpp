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

#include <httplib.h>

#include "goldpool/scheduler.hpp"
#include "goldpool/stats.hpp"
#include "goldpool/wire.hpp"

// JSON-over-HTTP front end for the scheduler. Thin by design: parse,
// call the store-backed operation, serialize. Daemons run elsewhere.

namespace goldpool::server {

class HttpApi {
 public:
  HttpApi(core::Store& store, const SchedulerConfig& cfg, const core::Clock& clock)
      : store_(store), cfg_(cfg), clock_(clock) {
    wire_routes();
  }

  httplib::Server& server() { return srv_; }

  // Blocking serve loop (CLI entry point).
  bool listen(const std::string& host, int port) { return srv_.listen(host, port); }

  // Bind an ephemeral port and return it; the caller then runs
  // listen_after_bind() on its own thread. Used by tests.
  int bind_any(const std::string& host) { return srv_.bind_to_any_port(host); }
  bool listen_after_bind() { return srv_.listen_after_bind(); }

  void stop() { srv_.stop(); }

 private:
  static void reply(httplib::Response& res, int code, const wire::json& body) {
    res.status = code;
    res.set_content(body.dump(), "application/json");
  }

  static void rejected(httplib::Response& res, int code, const std::string& reason) {
    reply(res, code, {{"status", "rejected"}, {"reason", reason}});
  }

  // One wrapper so every endpoint maps exceptions the same way.
  template <class F>
  void handle(const httplib::Request& req, httplib::Response& res, F&& fn) {
    try {
      wire::json body = req.body.empty() ? wire::json::object() : wire::json::parse(req.body);
      fn(body, res);
    } catch (const wire::json::parse_error&) {
      rejected(res, 400, "body is not valid JSON");
    } catch (const wire::InvalidPayloadError& e) {
      rejected(res, 400, e.what());
    } catch (const core::InvalidArgumentError& e) {
      rejected(res, 400, e.what());
    } catch (const goldbach::InvalidArgumentError& e) {
      rejected(res, 400, e.what());
    } catch (const core::NotFoundError& e) {
      rejected(res, 404, e.what());
    } catch (const std::exception& e) {
      rejected(res, 500, e.what());
    }
  }

  void wire_routes() {
    srv_.Post("/register_host", [this](const httplib::Request& req, httplib::Response& res) {
      handle(req, res, [this](const wire::json& body, httplib::Response& out) {
        const wire::RegisterRequest r = wire::register_request_from_json(body);
        const Registration reg = register_host(
            store_, clock_, r.user_name, {r.ram_bytes, r.free_disk_bytes, r.cpu_class});
        reply(out, 200, {{"host_id", reg.host_id}, {"user_id", reg.user_id}});
      });
    });

    srv_.Post("/request_work", [this](const httplib::Request& req, httplib::Response& res) {
      handle(req, res, [this](const wire::json& body, httplib::Response& out) {
        const Id host_id = wire::parse_u64_field(body, "host_id");
        std::uint32_t max_tasks = UINT32_MAX;
        if (body.contains("max_tasks"))
          max_tasks = (std::uint32_t)wire::parse_u64_field(body, "max_tasks");
        wire::json tasks = wire::json::array();
        for (const TaskGrant& g : assign_work(store_, clock_, cfg_, host_id, max_tasks)) {
          tasks.push_back(wire::to_json(wire::TaskGrantWire{
              g.task_id, g.range.start, g.range.end, g.deadline / core::kMsPerSec}));
        }
        reply(out, 200, {{"tasks", tasks}});
      });
    });

    srv_.Post("/report_result", [this](const httplib::Request& req, httplib::Response& res) {
      handle(req, res, [this](const wire::json& body, httplib::Response& out) {
        const Id task_id = wire::parse_u64_field(body, "task_id");
        const goldbach::GoldbachResult payload = wire::result_from_json(body);
        const ReportOutcome r = report_result(store_, clock_, task_id, payload);
        if (r.status == ReportStatus::Ok) reply(out, 200, {{"status", "ok"}});
        else reply(out, 200, {{"status", "rejected"}, {"reason", r.reason}});
      });
    });

    srv_.Get("/stats", [this](const httplib::Request& req, httplib::Response& res) {
      handle(req, res, [this](const wire::json&, httplib::Response& out) {
        const core::TimeMs now = clock_.now_ms();
        wire::json j = core::with_txn(store_, [&](core::Txn& t) {
          wire::json units, tasks;
          for (int s = 0; s < 6; ++s)
            units[core::to_string((core::WuState)s)] = t.unit_count((core::WuState)s);
          for (int s = 0; s < 7; ++s)
            tasks[core::to_string((core::TaskState)s)] = t.task_count((core::TaskState)s);
          const stats::ThroughputEstimate e = stats::estimate_throughput(
              t, now - cfg_.stats_window_secs * core::kMsPerSec, now, cfg_.flops_per_even);
          return wire::json{{"users_total", t.user_rows()},
                            {"hosts_total", t.host_rows()},
                            {"units_by_state", units},
                            {"tasks_by_state", tasks},
                            {"archive_rows", t.archive_rows()},
                            {"est_flops_last_window", e.est_flops}};
        });
        reply(out, 200, j);
      });
    });
  }

  core::Store& store_;
  SchedulerConfig cfg_;
  const core::Clock& clock_;
  httplib::Server srv_;
};

}  // namespace goldpool::server
