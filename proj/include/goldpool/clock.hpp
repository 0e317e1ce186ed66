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

#include <chrono>
#include <cstdint>

namespace goldpool::core {

// Every timestamp in the system is a TimeMs. Under the real clock that is
// milliseconds since the Unix epoch; under the virtual clock it is
// milliseconds since simulation start. Nothing downstream cares which.
using TimeMs = std::int64_t;

constexpr TimeMs kMsPerSec = 1000;
constexpr TimeMs kMsPerHour = 3'600'000;
constexpr TimeMs kMsPerDay = 86'400'000;

class Clock {
 public:
  virtual ~Clock() = default;
  virtual TimeMs now_ms() const = 0;
};

class SystemClock final : public Clock {
 public:
  TimeMs now_ms() const override {
    using namespace std::chrono;
    return duration_cast<milliseconds>(system_clock::now().time_since_epoch()).count();
  }
};

// Advanced manually by the simulation event loop (and by unit tests that
// want to fast-forward deadlines). Never goes backwards.
class VirtualClock final : public Clock {
 public:
  explicit VirtualClock(TimeMs start = 0) : now_(start) {}

  TimeMs now_ms() const override { return now_; }

  void advance_to(TimeMs t) {
    if (t > now_) now_ = t;
  }
  void advance_by(TimeMs dt) { advance_to(now_ + dt); }

 private:
  TimeMs now_;
};

}  // namespace goldpool::core
