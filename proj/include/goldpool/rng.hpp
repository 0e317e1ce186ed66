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

#include <cmath>
#include <cstdint>
#include <random>

namespace goldpool::sim {

// mt19937_64 with hand-rolled variate transforms. The standard
// distributions (uniform_real_distribution etc.) are implementation-defined,
// so two stdlibs given the same seed can disagree; the simulation promises
// bit-identical traces for a seed, hence the explicit transforms here.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : eng_(seed), seed_mix_(seed ^ 0x243f6a8885a308d3ull) {}

  std::uint64_t u64() { return eng_(); }

  // [0, 1) with 53 random bits, the usual double-from-uint64 construction.
  double unit() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * unit(); }

  // [0, n); modulo bias is < 2^-53 for every n this project uses.
  std::uint64_t below(std::uint64_t n) { return n ? eng_() % n : 0; }

  // Exponential with the given mean (not rate). log(1-u) never sees u=1.
  double exponential(double mean) { return -mean * std::log1p(-unit()); }

  bool chance(double p) { return unit() < p; }

  // Derived generator for an independent stream. Tag-splitting keeps the
  // arrival processes decoupled from per-event draws, so reordering event
  // handling cannot perturb arrivals.
  Rng fork(std::uint64_t tag) const {
    std::uint64_t x = seed_mix_ ^ (0x9e3779b97f4a7c15ull * (tag + 1));
    // splitmix64 finalizer
    x ^= x >> 30;
    x *= 0xbf58476d1ce4e5b9ull;
    x ^= x >> 27;
    x *= 0x94d049bb133111ebull;
    x ^= x >> 31;
    return Rng(x, x);
  }

 private:
  Rng(std::uint64_t seed, std::uint64_t mix) : eng_(seed), seed_mix_(mix) {}

  std::mt19937_64 eng_;
  std::uint64_t seed_mix_;
};

}  // namespace goldpool::sim
