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

#include <charconv>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "goldpool/goldbach.hpp"

// JSON shapes shared by the HTTP server, the worker client, and the CLI.
// checksum64 travels as a decimal string: it is a full-width uint64 and
// several JSON stacks mangle integers past 2^53.

namespace goldpool::wire {

using json = nlohmann::json;

class InvalidPayloadError : public std::runtime_error {
 public:
  explicit InvalidPayloadError(const std::string& what) : std::runtime_error(what) {}
};

inline std::uint64_t parse_u64_field(const json& j, const char* key) {
  if (!j.contains(key) || !j[key].is_number_unsigned())
    throw InvalidPayloadError(std::string("missing or non-integer field: ") + key);
  return j[key].get<std::uint64_t>();
}

inline std::string parse_string_field(const json& j, const char* key) {
  if (!j.contains(key) || !j[key].is_string())
    throw InvalidPayloadError(std::string("missing or non-string field: ") + key);
  return j[key].get<std::string>();
}

inline std::uint64_t parse_decimal_u64(const std::string& s, const char* what) {
  std::uint64_t v = 0;
  const char* first = s.data();
  const char* last = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(first, last, v, 10);
  if (ec != std::errc{} || ptr != last || s.empty())
    throw InvalidPayloadError(std::string("not a decimal integer: ") + what);
  return v;
}

inline json result_to_json(const goldbach::GoldbachResult& r) {
  json j{{"evens_checked", r.evens_checked},
         {"max_min_p", r.max_min_p},
         {"argmax_n", r.argmax_n},
         {"checksum64", std::to_string(r.checksum64)}};
  if (r.counterexample) j["counterexample"] = *r.counterexample;
  return j;
}

inline goldbach::GoldbachResult result_from_json(const json& j) {
  goldbach::GoldbachResult r;
  r.evens_checked = parse_u64_field(j, "evens_checked");
  r.max_min_p = parse_u64_field(j, "max_min_p");
  r.argmax_n = parse_u64_field(j, "argmax_n");
  r.checksum64 = parse_decimal_u64(parse_string_field(j, "checksum64"), "checksum64");
  if (j.contains("counterexample")) {
    if (!j["counterexample"].is_number_unsigned())
      throw InvalidPayloadError("counterexample must be an unsigned integer");
    r.counterexample = j["counterexample"].get<std::uint64_t>();
  }
  return r;
}

struct RegisterRequest {
  std::string user_name;
  std::uint64_t ram_bytes = 0;
  std::uint64_t free_disk_bytes = 0;
  std::uint32_t cpu_class = 3;
};

inline json to_json(const RegisterRequest& r) {
  return {{"user_name", r.user_name},
          {"ram_bytes", r.ram_bytes},
          {"free_disk_bytes", r.free_disk_bytes},
          {"cpu_class", r.cpu_class}};
}

inline RegisterRequest register_request_from_json(const json& j) {
  RegisterRequest r;
  r.user_name = parse_string_field(j, "user_name");
  r.ram_bytes = parse_u64_field(j, "ram_bytes");
  r.free_disk_bytes = parse_u64_field(j, "free_disk_bytes");
  r.cpu_class = (std::uint32_t)parse_u64_field(j, "cpu_class");
  return r;
}

struct TaskGrantWire {
  std::uint64_t task_id = 0;
  std::uint64_t range_start = 4;
  std::uint64_t range_end = 4;
  std::int64_t deadline_unix = 0;  // seconds
};

inline json to_json(const TaskGrantWire& g) {
  return {{"task_id", g.task_id},
          {"range_start", g.range_start},
          {"range_end", g.range_end},
          {"deadline_unix", g.deadline_unix}};
}

inline TaskGrantWire task_grant_from_json(const json& j) {
  TaskGrantWire g;
  g.task_id = parse_u64_field(j, "task_id");
  g.range_start = parse_u64_field(j, "range_start");
  g.range_end = parse_u64_field(j, "range_end");
  if (!j.contains("deadline_unix") || !j["deadline_unix"].is_number())
    throw InvalidPayloadError("missing field: deadline_unix");
  g.deadline_unix = j["deadline_unix"].get<std::int64_t>();
  return g;
}

}  // namespace goldpool::wire
