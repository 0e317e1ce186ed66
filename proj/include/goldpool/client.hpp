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

#include <memory>
#include <string>
#include <vector>

#include "goldpool/wire.hpp"

// The worker's view of the scheduler. Abstract so tests can splice in an
// in-process fake and the fault-injection harness can drop connections.

namespace goldpool::worker {

class NetworkError : public std::runtime_error {
 public:
  explicit NetworkError(const std::string& what) : std::runtime_error(what) {}
};

// Server said no (4xx/validation); retrying the same call is pointless.
class RequestRejectedError : public std::runtime_error {
 public:
  explicit RequestRejectedError(const std::string& what) : std::runtime_error(what) {}
};

struct RegisterOutcome {
  std::uint64_t host_id = 0;
  std::uint64_t user_id = 0;
};

struct ReportAck {
  bool accepted = false;
  std::string reason;
};

class SchedulerClient {
 public:
  virtual ~SchedulerClient() = default;
  virtual RegisterOutcome register_host(const wire::RegisterRequest& req) = 0;
  virtual std::vector<wire::TaskGrantWire> request_work(std::uint64_t host_id,
                                                        std::uint32_t max_tasks) = 0;
  virtual ReportAck report(std::uint64_t task_id, const goldbach::GoldbachResult& result) = 0;
};

class HttpSchedulerClient final : public SchedulerClient {
 public:
  explicit HttpSchedulerClient(const std::string& base_url) : cli_(base_url.c_str()) {
    cli_.set_connection_timeout(5, 0);
    cli_.set_read_timeout(30, 0);
  }

  RegisterOutcome register_host(const wire::RegisterRequest& req) override {
    const wire::json j = post("/register_host", wire::to_json(req));
    return {wire::parse_u64_field(j, "host_id"), wire::parse_u64_field(j, "user_id")};
  }

  std::vector<wire::TaskGrantWire> request_work(std::uint64_t host_id,
                                                std::uint32_t max_tasks) override {
    const wire::json j = post("/request_work", {{"host_id", host_id}, {"max_tasks", max_tasks}});
    if (!j.contains("tasks") || !j["tasks"].is_array())
      throw wire::InvalidPayloadError("work reply lacks tasks array");
    std::vector<wire::TaskGrantWire> out;
    for (const auto& item : j["tasks"]) out.push_back(wire::task_grant_from_json(item));
    return out;
  }

  ReportAck report(std::uint64_t task_id, const goldbach::GoldbachResult& result) override {
    wire::json body = wire::result_to_json(result);
    body["task_id"] = task_id;
    const wire::json j = post("/report_result", body);
    ReportAck ack;
    ack.accepted = j.value("status", "") == "ok";
    ack.reason = j.value("reason", "");
    return ack;
  }

 private:
  wire::json post(const std::string& path, const wire::json& body) {
    httplib::Result res = cli_.Post(path.c_str(), body.dump(), "application/json");
    if (!res) throw NetworkError("no response from server: " + path);
    wire::json j;
    try {
      j = wire::json::parse(res->body);
    } catch (const wire::json::parse_error&) {
      throw NetworkError("malformed reply from server: " + path);
    }
    if (res->status >= 400)
      throw RequestRejectedError(j.value("reason", "request rejected (" +
                                                       std::to_string(res->status) + ")"));
    return j;
  }

  httplib::Client cli_;
};

}  // namespace goldpool::worker
