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

#include <atomic>
#include <charconv>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <future>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "goldpool/client.hpp"
#include "goldpool/clock.hpp"
#include "goldpool/goldbach.hpp"
#include "goldpool/types.hpp"

// The volunteer agent: registers once (identity persisted on disk), pulls
// range-verification tasks, computes them with periodic atomic checkpoints,
// and reports results back.  A killed worker resumes from the last checkpoint
// file and produces a byte-identical result.

namespace goldpool::worker {

struct WorkerConfig {
  std::string user_name = "anonymous";
  std::uint64_t ram_bytes = 4ull << 30;
  std::uint64_t free_disk_bytes = 64ull << 30;
  std::uint32_t cpu_class = 3;  // 1..5; also the number of concurrent slots
  std::string work_dir = ".";
  std::uint64_t checkpoint_every = 100'000;
  core::TimeMs idle_poll_ms = 10'000;
  core::TimeMs backoff_base_ms = 1'000;
  core::TimeMs backoff_cap_ms = 300'000;
  // Nonzero skews every reported checksum; exists so a live deployment of the
  // validation pipeline can be exercised against a deliberately bad host.
  std::uint64_t cheat_delta = 0;

  // Injectable for tests; defaults sleep for real and never stop.
  std::function<void(core::TimeMs)> sleep_fn;
  std::function<bool()> stop_requested;

  void validate() const {
    if (cpu_class < 1 || cpu_class > 5)
      throw core::InvalidArgumentError("cpu_class must be in 1..5");
    if (work_dir.empty()) throw core::InvalidArgumentError("work_dir must not be empty");
    if (checkpoint_every == 0)
      throw core::InvalidArgumentError("checkpoint_every must be positive");
    if (idle_poll_ms <= 0 || backoff_base_ms <= 0 || backoff_cap_ms < backoff_base_ms)
      throw core::InvalidArgumentError("poll/backoff intervals must be positive");
  }
};

enum class TaskRun : std::uint8_t {
  kReported,  // result delivered and acknowledged (accepted or rejected)
  kAborted,   // stop requested; checkpoint left on disk for a future resume
};

class Worker {
 public:
  Worker(SchedulerClient& client, WorkerConfig cfg) : client_(client), cfg_(std::move(cfg)) {
    cfg_.validate();
    if (!cfg_.sleep_fn)
      cfg_.sleep_fn = [](core::TimeMs ms) {
        std::this_thread::sleep_for(std::chrono::milliseconds(ms));
      };
    if (!cfg_.stop_requested) cfg_.stop_requested = [] { return false; };
    std::filesystem::create_directories(cfg_.work_dir);
  }

  std::filesystem::path host_id_path() const {
    return std::filesystem::path(cfg_.work_dir) / "host_id";
  }

  std::filesystem::path checkpoint_path(core::Id task_id) const {
    return std::filesystem::path(cfg_.work_dir) / ("task_" + std::to_string(task_id) + ".ckpt");
  }

  // Reuses the host identity stored in <work_dir>/host_id when present;
  // otherwise registers with the scheduler under exponential backoff
  // (base doubling per failure, capped) and persists the assigned id.
  core::Id ensure_registered() {
    if (host_id_ != core::kNoId) return host_id_;
    if (auto stored = read_stored_host_id()) {
      host_id_ = *stored;
      return host_id_;
    }
    wire::RegisterRequest req;
    req.user_name = cfg_.user_name;
    req.ram_bytes = cfg_.ram_bytes;
    req.free_disk_bytes = cfg_.free_disk_bytes;
    req.cpu_class = cfg_.cpu_class;
    core::TimeMs delay = cfg_.backoff_base_ms;
    for (;;) {
      if (cfg_.stop_requested()) throw core::InvalidArgumentError("stopped before registration");
      try {
        const RegisterOutcome out = client_.register_host(req);
        host_id_ = out.host_id;
        store_host_id(host_id_);
        return host_id_;
      } catch (const NetworkError&) {
        cfg_.sleep_fn(delay);
        delay = std::min<core::TimeMs>(delay * 2, cfg_.backoff_cap_ms);
      }
    }
  }

  // Tasks whose checkpoint files survived a previous process: the filename
  // carries the task id and the checkpoint itself carries the range.
  std::vector<std::pair<core::Id, goldbach::Checkpoint>> pending_checkpoints() const {
    std::vector<std::pair<core::Id, goldbach::Checkpoint>> out;
    std::error_code ec;
    for (const auto& entry : std::filesystem::directory_iterator(cfg_.work_dir, ec)) {
      const std::string name = entry.path().filename().string();
      if (name.size() <= 10 || name.rfind("task_", 0) != 0 ||
          name.substr(name.size() - 5) != ".ckpt")
        continue;
      const std::string digits = name.substr(5, name.size() - 10);
      core::Id task_id = 0;
      const auto [ptr, err] =
          std::from_chars(digits.data(), digits.data() + digits.size(), task_id);
      if (err != std::errc() || ptr != digits.data() + digits.size() || task_id == core::kNoId)
        continue;
      if (auto cp = goldbach::read_checkpoint_file(entry.path().string()))
        out.emplace_back(task_id, *cp);
    }
    std::sort(out.begin(), out.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
    return out;
  }

  // Computes one task, checkpointing as it goes, and reports the result.
  // Returns kAborted (checkpoint kept) if a stop arrives mid-compute or while
  // the report cannot reach the server.
  TaskRun process_task(core::Id task_id, const goldbach::GoldbachRange& range) {
    const std::string ckpt = checkpoint_path(task_id).string();
    std::optional<goldbach::Checkpoint> resume = goldbach::read_checkpoint_file(ckpt);
    if (resume && !(resume->range == range)) {
      // Stale file from an unrelated grant; start over.
      std::filesystem::remove(ckpt);
      resume.reset();
    }

    const goldbach::PrimeTable primes(range.end);
    goldbach::VerifyOptions opts;
    opts.checkpoint_every = cfg_.checkpoint_every;
    opts.primes = &primes;
    opts.on_checkpoint = [&](const goldbach::Checkpoint& cp) {
      goldbach::write_checkpoint_file(ckpt, cp);
      if (cfg_.stop_requested()) throw AbortSignal{};
    };

    goldbach::GoldbachResult result;
    try {
      result = goldbach::verify_range(range, resume, opts);
    } catch (const AbortSignal&) {
      return TaskRun::kAborted;
    }
    if (cfg_.cheat_delta != 0) result.checksum64 += cfg_.cheat_delta;

    if (!deliver_report(task_id, result)) return TaskRun::kAborted;
    std::filesystem::remove(ckpt);
    return TaskRun::kReported;
  }

  // The main loop: resume leftovers, then poll for work with up to cpu_class
  // tasks in flight, idling between empty polls.  Returns when
  // stop_requested() turns true.
  void run() {
    ensure_registered();
    for (const auto& [task_id, cp] : pending_checkpoints()) {
      if (cfg_.stop_requested()) return;
      process_task(task_id, cp.range);
    }
    std::vector<std::future<void>> slots;
    const auto reap = [&](bool wait_all) {
      for (auto it = slots.begin(); it != slots.end();) {
        if (wait_all ||
            it->wait_for(std::chrono::seconds(0)) == std::future_status::ready) {
          it->get();
          it = slots.erase(it);
        } else {
          ++it;
        }
      }
    };
    while (!cfg_.stop_requested()) {
      reap(false);
      const std::uint32_t free_slots =
          cfg_.cpu_class > slots.size() ? cfg_.cpu_class - static_cast<std::uint32_t>(slots.size())
                                        : 0;
      std::vector<wire::TaskGrantWire> grants;
      if (free_slots > 0) {
        try {
          grants = fetch_work(free_slots);
        } catch (const NetworkError&) {
          // Server unreachable; idle and retry.
        } catch (const RequestRejectedError&) {
          // Host unknown or request malformed; re-register next pass.
        }
      }
      for (const auto& g : grants) {
        goldbach::GoldbachRange range{g.range_start, g.range_end};
        slots.push_back(std::async(std::launch::async, [this, g, range] {
          process_task(g.task_id, range);
        }));
      }
      if (grants.empty()) {
        if (slots.empty()) {
          cfg_.sleep_fn(cfg_.idle_poll_ms);
        } else {
          cfg_.sleep_fn(std::min<core::TimeMs>(cfg_.idle_poll_ms, 250));
        }
      }
    }
    reap(true);
  }

 private:
  struct AbortSignal {};

  std::optional<core::Id> read_stored_host_id() const {
    std::ifstream in(host_id_path());
    if (!in) return std::nullopt;
    std::string text;
    in >> text;
    core::Id id = 0;
    const auto [ptr, err] = std::from_chars(text.data(), text.data() + text.size(), id);
    if (err != std::errc() || ptr != text.data() + text.size() || id == core::kNoId)
      return std::nullopt;
    return id;
  }

  void store_host_id(core::Id id) const {
    const std::filesystem::path path = host_id_path();
    const std::filesystem::path tmp = path.string() + ".tmp";
    {
      std::ofstream out(tmp, std::ios::trunc);
      out << id << '\n';
    }
    std::filesystem::rename(tmp, path);
  }

  std::vector<wire::TaskGrantWire> fetch_work(std::uint32_t max_tasks) {
    std::lock_guard<std::mutex> lk(client_mu_);
    return client_.request_work(host_id_, max_tasks);
  }

  // Retries transport failures with backoff until acknowledged or stopped.
  // Both "ok" and "rejected" acks are final server decisions.
  bool deliver_report(core::Id task_id, const goldbach::GoldbachResult& result) {
    core::TimeMs delay = cfg_.backoff_base_ms;
    for (;;) {
      if (cfg_.stop_requested()) return false;
      try {
        std::lock_guard<std::mutex> lk(client_mu_);
        client_.report(task_id, result);
        return true;
      } catch (const NetworkError&) {
        cfg_.sleep_fn(delay);
        delay = std::min<core::TimeMs>(delay * 2, cfg_.backoff_cap_ms);
      } catch (const RequestRejectedError&) {
        return true;  // server refused it outright; nothing more to do
      }
    }
  }

  SchedulerClient& client_;
  WorkerConfig cfg_;
  core::Id host_id_ = core::kNoId;
  std::mutex client_mu_;
};

}  // namespace goldpool::worker
