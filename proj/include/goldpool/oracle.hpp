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

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "goldpool/goldbach.hpp"  // only for the range/result value types

// Brute-force cross-check for the sieve-based scanner. Deliberately shares
// no sieve machinery with it: primality is memoized trial division, the
// witness scan is written from scratch. Slow on purpose, hence the hard cap
// on range size.

namespace goldpool::goldbach {

constexpr std::uint64_t kOracleMaxEnd = 1'000'000;

class OracleRangeTooLargeError : public std::runtime_error {
 public:
  explicit OracleRangeTooLargeError(const std::string& what) : std::runtime_error(what) {}
};

class TrialPrimality {
 public:
  bool is_prime(std::uint64_t n) {
    if (n < 2) return false;
    if (n >= memo_.size()) memo_.resize(n + 1, Unknown);
    if (memo_[n] == Unknown) memo_[n] = divides_cleanly(n) ? Composite : Prime;
    return memo_[n] == Prime;
  }

 private:
  enum Mark : std::uint8_t { Unknown = 0, Prime = 1, Composite = 2 };

  static bool divides_cleanly(std::uint64_t n) {
    if (n % 2 == 0) return n != 2;
    for (std::uint64_t d = 3; d * d <= n; d += 2)
      if (n % d == 0) return true;
    return false;
  }

  std::vector<std::uint8_t> memo_;
};

inline GoldbachResult oracle_verify_range(const GoldbachRange& range,
                                          TrialPrimality* shared = nullptr) {
  validate_range(range);
  if (range.end > kOracleMaxEnd)
    throw OracleRangeTooLargeError("oracle refuses ranges past " + std::to_string(kOracleMaxEnd));

  TrialPrimality local;
  TrialPrimality& pr = shared ? *shared : local;

  GoldbachResult out;
  for (std::uint64_t n = range.start; n <= range.end; n += 2) {
    std::uint64_t found = 0;
    for (std::uint64_t p = 2; p <= n / 2; p = (p == 2 ? 3 : p + 2)) {
      if (pr.is_prime(p) && pr.is_prime(n - p)) {
        found = p;
        break;
      }
    }
    ++out.evens_checked;
    if (found == 0) {
      out.counterexample = n;
      return out;
    }
    out.checksum64 += found;
    if (found >= out.max_min_p) {
      out.max_min_p = found;
      out.argmax_n = n;
    }
  }
  return out;
}

}  // namespace goldpool::goldbach
