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
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "goldpool/codec.hpp"

// The science payload: verify that every even number in [start, end] is a
// sum of two primes. A work unit's answer is deliberately tiny — a count,
// the extremal minimal witness, and a checksum — so that result upload cost
// stays flat no matter how wide the range is.

namespace goldpool::goldbach {

class InvalidArgumentError : public std::invalid_argument {
 public:
  explicit InvalidArgumentError(const std::string& what) : std::invalid_argument(what) {}
};

class CheckpointMismatchError : public std::runtime_error {
 public:
  explicit CheckpointMismatchError(const std::string& what) : std::runtime_error(what) {}
};

struct GoldbachRange {
  std::uint64_t start = 4;
  std::uint64_t end = 4;  // inclusive

  std::uint64_t evens() const { return (end - start) / 2 + 1; }

  friend bool operator==(const GoldbachRange&, const GoldbachRange&) = default;
};

inline void validate_range(const GoldbachRange& r) {
  if (r.start % 2 != 0 || r.end % 2 != 0)
    throw InvalidArgumentError("range endpoints must be even");
  if (r.start < 4) throw InvalidArgumentError("range must start at 4 or above");
  if (r.end < r.start) throw InvalidArgumentError("range end precedes start");
}

struct GoldbachResult {
  std::uint64_t evens_checked = 0;
  std::uint64_t max_min_p = 0;   // largest minimal witness seen in the range
  std::uint64_t argmax_n = 0;    // the even n it was seen at (last one on ties)
  std::uint64_t checksum64 = 0;  // sum of all minimal witnesses, mod 2^64
  std::optional<std::uint64_t> counterexample;

  friend bool operator==(const GoldbachResult&, const GoldbachResult&) = default;
};

// Wire/disk encoding of a result: 8 + 4*8 + 1 + 8 = 41 bytes worst case,
// comfortably inside the 64-byte payload budget.
inline std::string encode_result(const GoldbachResult& r) {
  codec::ByteWriter w;
  w.u64(r.evens_checked);
  w.u64(r.max_min_p);
  w.u64(r.argmax_n);
  w.u64(r.checksum64);
  w.u8(r.counterexample ? 1 : 0);
  if (r.counterexample) w.u64(*r.counterexample);
  return w.take();
}

inline GoldbachResult decode_result(std::string_view bytes) {
  codec::ByteReader rd(bytes);
  GoldbachResult r;
  r.evens_checked = rd.u64();
  r.max_min_p = rd.u64();
  r.argmax_n = rd.u64();
  r.checksum64 = rd.u64();
  if (rd.u8()) r.counterexample = rd.u64();
  if (!rd.done()) throw codec::DecodeError("trailing bytes after result");
  return r;
}

// Prime membership over [2, limit]. Built by a segmented sieve of
// Eratosthenes over odd numbers only: one bit per odd, crossed off segment
// by segment so the working set per step stays cache-sized. The finished
// table is immutable and safe to share across threads.
class PrimeTable {
 public:
  explicit PrimeTable(std::uint64_t limit, std::uint64_t segment_odds = 1u << 20)
      : limit_(limit) {
    if (limit < 2) throw InvalidArgumentError("sieve limit must be at least 2");
    if (segment_odds == 0) throw InvalidArgumentError("segment size must be positive");

    const std::uint64_t n_odds = limit / 2 + 1;  // odds 1,3,5,... <= limit
    bits_.assign((n_odds + 63) / 64, ~0ull);
    clear_bit(0);  // 1 is not prime

    // Base primes up to sqrt(limit), found by a plain scan over the table
    // as it gets built (the first segment always covers sqrt(limit) for
    // any realistic segment size; handle the general case anyway).
    std::uint64_t root = 1;
    while ((root + 1) * (root + 1) <= limit) ++root;

    std::vector<std::uint64_t> base;  // odd primes <= root, discovered lazily
    std::uint64_t base_scan = 3;      // next odd to consider as a base prime

    for (std::uint64_t seg_lo = 1; seg_lo <= n_odds - 1;) {
      const std::uint64_t seg_hi = std::min(n_odds - 1, seg_lo + segment_odds - 1);
      const std::uint64_t hi_num = 2 * seg_hi + 1;

      // Extend the base prime list far enough for this segment.
      for (; base_scan * base_scan <= hi_num && base_scan <= root; base_scan += 2)
        if (test_bit(base_scan / 2)) base.push_back(base_scan);

      for (std::uint64_t p : base) {
        std::uint64_t first = p * p;
        const std::uint64_t lo_num = 2 * seg_lo + 1;
        if (first < lo_num) {
          first = ((lo_num + p - 1) / p) * p;  // first multiple of p >= lo_num
          if (first % 2 == 0) first += p;      // only odd multiples live here
        }
        for (std::uint64_t m = first; m <= hi_num; m += 2 * p) clear_bit(m / 2);
      }
      seg_lo = seg_hi + 1;
    }
  }

  bool is_prime(std::uint64_t n) const {
    if (n > limit_) throw InvalidArgumentError("query beyond sieve limit");
    if (n == 2) return true;
    if (n < 2 || n % 2 == 0) return false;
    return test_bit(n / 2);
  }

  std::uint64_t limit() const { return limit_; }

  std::uint64_t count_primes() const {
    std::uint64_t c = limit_ >= 2 ? 1 : 0;  // the lone even prime
    for (std::uint64_t i = 1; 2 * i + 1 <= limit_; ++i) c += test_bit(i);
    return c;
  }

 private:
  bool test_bit(std::uint64_t i) const { return (bits_[i >> 6] >> (i & 63)) & 1; }
  void clear_bit(std::uint64_t i) { bits_[i >> 6] &= ~(1ull << (i & 63)); }

  std::uint64_t limit_;
  std::vector<std::uint64_t> bits_;
};

// Smallest prime p such that n - p is prime; nullopt if no decomposition
// exists (which would be a Goldbach counterexample).
inline std::optional<std::uint64_t> min_witness(std::uint64_t n, const PrimeTable& primes) {
  if (n < 4 || n % 2 != 0) throw InvalidArgumentError("witness query needs an even n >= 4");
  if (primes.limit() < n) throw InvalidArgumentError("prime table does not cover n");
  if (primes.is_prime(n - 2)) return 2;
  for (std::uint64_t p = 3; p <= n / 2; p += 2)
    if (primes.is_prime(p) && primes.is_prime(n - p)) return p;
  return std::nullopt;
}

struct Checkpoint {
  GoldbachRange range;
  std::uint64_t next_n = 0;  // first even not yet checked; end + 2 when complete
  std::uint64_t partial_checksum = 0;
  std::uint64_t partial_max_min_p = 0;
  std::uint64_t partial_argmax_n = 0;
  std::uint64_t evens_done = 0;

  friend bool operator==(const Checkpoint&, const Checkpoint&) = default;
};

struct VerifyOptions {
  std::uint64_t checkpoint_every = 100'000;  // in evens
  const PrimeTable* primes = nullptr;        // optional shared table covering range.end
  std::function<void(const Checkpoint&)> on_checkpoint;
};

// Scan the range ascending, accumulating the checksum and the extremal
// witness. On ties for max_min_p the later n wins. Stops at the first
// counterexample (that would be front-page news; finishing the range adds
// nothing). Resuming from a checkpoint is bit-identical to a straight run.
inline GoldbachResult verify_range(const GoldbachRange& range,
                                   const std::optional<Checkpoint>& resume = std::nullopt,
                                   const VerifyOptions& opts = {}) {
  validate_range(range);
  if (opts.checkpoint_every == 0) throw InvalidArgumentError("checkpoint_every must be positive");
  if (resume && resume->range != range)
    throw CheckpointMismatchError("checkpoint belongs to a different range");

  std::optional<PrimeTable> own;
  const PrimeTable* table = opts.primes;
  if (table == nullptr) {
    own.emplace(range.end);
    table = &*own;
  } else if (table->limit() < range.end) {
    throw InvalidArgumentError("supplied prime table does not cover range");
  }

  GoldbachResult r;
  std::uint64_t n = range.start;
  if (resume) {
    n = resume->next_n;
    r.checksum64 = resume->partial_checksum;
    r.max_min_p = resume->partial_max_min_p;
    r.argmax_n = resume->partial_argmax_n;
    r.evens_checked = resume->evens_done;
  }

  for (; n <= range.end; n += 2) {
    std::optional<std::uint64_t> p = min_witness(n, *table);
    if (!p) {
      r.counterexample = n;
      ++r.evens_checked;
      return r;
    }
    r.checksum64 += *p;  // unsigned wraparound is the intended mod 2^64
    if (*p >= r.max_min_p) {
      r.max_min_p = *p;
      r.argmax_n = n;
    }
    ++r.evens_checked;
    if (opts.on_checkpoint && r.evens_checked % opts.checkpoint_every == 0) {
      opts.on_checkpoint(Checkpoint{range, n + 2, r.checksum64, r.max_min_p,
                                    r.argmax_n, r.evens_checked});
    }
  }
  return r;
}

// ---- checkpoint files ----
// Seven u64 fields, little-endian, in declaration order. Written to a
// temp file and renamed into place so a kill mid-write leaves either the
// old checkpoint or the new one, never a torn half.

constexpr std::size_t kCheckpointFileSize = 7 * 8;

inline std::string encode_checkpoint(const Checkpoint& c) {
  codec::ByteWriter w;
  w.u64(c.range.start);
  w.u64(c.range.end);
  w.u64(c.next_n);
  w.u64(c.partial_checksum);
  w.u64(c.partial_max_min_p);
  w.u64(c.partial_argmax_n);
  w.u64(c.evens_done);
  return w.take();
}

inline Checkpoint decode_checkpoint(std::string_view bytes) {
  if (bytes.size() != kCheckpointFileSize) throw codec::DecodeError("bad checkpoint size");
  codec::ByteReader rd(bytes);
  Checkpoint c;
  c.range.start = rd.u64();
  c.range.end = rd.u64();
  c.next_n = rd.u64();
  c.partial_checksum = rd.u64();
  c.partial_max_min_p = rd.u64();
  c.partial_argmax_n = rd.u64();
  c.evens_done = rd.u64();
  return c;
}

inline void write_checkpoint_file(const std::filesystem::path& path, const Checkpoint& c) {
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open checkpoint temp file: " + tmp.string());
    const std::string bytes = encode_checkpoint(c);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    out.flush();
    if (!out) throw std::runtime_error("checkpoint write failed: " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

// Missing or truncated file reads as "no checkpoint": the worker just
// starts the range over.
inline std::optional<Checkpoint> read_checkpoint_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return std::nullopt;
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (bytes.size() != kCheckpointFileSize) return std::nullopt;
  return decode_checkpoint(bytes);
}

}  // namespace goldpool::goldbach
