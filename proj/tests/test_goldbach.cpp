// Range verification math: prime table, minimal witnesses, range scans,
// result codec, checkpoint files, and agreement with the independent
// trial-division reference implementation.

#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <filesystem>
#include <unistd.h>

#include "goldpool/goldbach.hpp"
#include "goldpool/oracle.hpp"
#include "goldpool/rng.hpp"

using namespace goldpool;
using goldbach::GoldbachRange;
using goldbach::GoldbachResult;

namespace {

std::string temp_path(const char* tag) {
  static int n = 0;
  return (std::filesystem::temp_directory_path() /
          ("goldpool_gb_" + std::to_string(::getpid()) + "_" + tag + std::to_string(n++)))
      .string();
}

}  // namespace

TEST_CASE("prime table matches known prime counts and memberships") {
  goldbach::PrimeTable t(1'000'000);
  CHECK(t.limit() >= 1'000'000);
  CHECK(t.count_primes() == 78498);  // pi(10^6)

  CHECK_FALSE(t.is_prime(0));
  CHECK_FALSE(t.is_prime(1));
  CHECK(t.is_prime(2));
  CHECK(t.is_prime(3));
  CHECK_FALSE(t.is_prime(4));
  CHECK(t.is_prime(5));
  CHECK_FALSE(t.is_prime(121));   // 11*11
  CHECK(t.is_prime(999'983));     // largest prime below 10^6
  CHECK_FALSE(t.is_prime(999'999));
  CHECK_THROWS_AS(t.is_prime(1'000'001), goldbach::InvalidArgumentError);
}

TEST_CASE("minimal witness search") {
  goldbach::PrimeTable t(1 << 12);
  CHECK(goldbach::min_witness(4, t).value() == 2);
  CHECK(goldbach::min_witness(6, t).value() == 3);
  CHECK(goldbach::min_witness(10, t).value() == 3);
  CHECK(goldbach::min_witness(128, t).value() == 19);
  CHECK(goldbach::min_witness(12, t).value() == 5);  // 12-2=10, 12-3=9, 12-5=7 prime
}

TEST_CASE("range validation rejects malformed ranges") {
  CHECK_THROWS_AS(goldbach::validate_range({5, 10}), goldbach::InvalidArgumentError);
  CHECK_THROWS_AS(goldbach::validate_range({4, 9}), goldbach::InvalidArgumentError);
  CHECK_THROWS_AS(goldbach::validate_range({2, 10}), goldbach::InvalidArgumentError);
  CHECK_THROWS_AS(goldbach::validate_range({10, 4}), goldbach::InvalidArgumentError);
  CHECK_NOTHROW(goldbach::validate_range({4, 4}));
}

TEST_CASE("verify_range reproduces hand-frozen results") {
  SECTION("[4,10]") {
    const GoldbachResult r = goldbach::verify_range({4, 10});
    CHECK(r.evens_checked == 4);
    CHECK(r.max_min_p == 3);
    CHECK(r.argmax_n == 10);  // ties broken toward the latest n
    CHECK(r.checksum64 == 11);
    CHECK_FALSE(r.counterexample.has_value());
  }
  SECTION("[4,4]") {
    const GoldbachResult r = goldbach::verify_range({4, 4});
    CHECK(r.evens_checked == 1);
    CHECK(r.max_min_p == 2);
    CHECK(r.argmax_n == 4);
    CHECK(r.checksum64 == 2);
  }
  SECTION("[4,100]") {
    const GoldbachResult r = goldbach::verify_range({4, 100});
    CHECK(r.evens_checked == 49);
    CHECK(r.max_min_p == 19);
    CHECK(r.argmax_n == 98);
    CHECK(r.checksum64 == 224);
  }
  SECTION("[1000,2000]") {
    const GoldbachResult r = goldbach::verify_range({1000, 2000});
    CHECK(r.evens_checked == 501);
    CHECK(r.max_min_p == 67);
    CHECK(r.argmax_n == 1856);
    CHECK(r.checksum64 == 4815);
  }
  SECTION("[4,10000]") {
    const GoldbachResult r = goldbach::verify_range({4, 10'000});
    CHECK(r.evens_checked == 4999);
    CHECK(r.max_min_p == 173);
    CHECK(r.argmax_n == 7426);
    CHECK(r.checksum64 == 54212);
  }
}

TEST_CASE("verify_range agrees with the trial-division reference field for field") {
  goldbach::TrialPrimality memo;
  SECTION("exhaustive small range") {
    const GoldbachResult fast = goldbach::verify_range({4, 10'000});
    const GoldbachResult slow = goldbach::oracle_verify_range({4, 10'000}, &memo);
    CHECK(fast == slow);
  }
  SECTION("seeded random subranges") {
    sim::Rng rng(20260817);
    for (int i = 0; i < 12; ++i) {
      const std::uint64_t start = 4 + 2 * rng.below(400'000);
      const std::uint64_t end = start + 2 * rng.below(500);
      const GoldbachRange r{start, end};
      CHECK(goldbach::verify_range(r) == goldbach::oracle_verify_range(r, &memo));
    }
  }
}

TEST_CASE("result codec round-trips and stays small") {
  GoldbachResult r;
  r.evens_checked = 0x0102030405060708ull;
  r.max_min_p = 9973;
  r.argmax_n = 0xfffffffffffffffeull;
  r.checksum64 = 0xdeadbeefcafebabeull;
  SECTION("without counterexample") {
    const auto bytes = goldbach::encode_result(r);
    CHECK(bytes.size() <= 64);
    CHECK(goldbach::decode_result(bytes) == r);
  }
  SECTION("with counterexample") {
    r.counterexample = 123'456;
    const auto bytes = goldbach::encode_result(r);
    CHECK(bytes.size() <= 64);
    CHECK(goldbach::decode_result(bytes) == r);
  }
  SECTION("junk rejected") {
    CHECK_THROWS_AS(goldbach::decode_result(std::string_view("\x01\x02\x03", 3)),
                    codec::DecodeError);
  }
}

TEST_CASE("checkpoint files are fixed-size, atomic, and resumable") {
  const GoldbachRange range{4, 40'000};
  goldbach::PrimeTable primes(range.end);

  SECTION("encode/decode round trip") {
    goldbach::Checkpoint cp;
    cp.range = range;
    cp.next_n = 1234;
    cp.partial_checksum = 99;
    cp.partial_max_min_p = 7;
    cp.partial_argmax_n = 1200;
    cp.evens_done = 615;
    const auto bytes = goldbach::encode_checkpoint(cp);
    CHECK(bytes.size() == goldbach::kCheckpointFileSize);
    const auto back = goldbach::decode_checkpoint(bytes);
    CHECK(back.range == cp.range);
    CHECK(back.next_n == cp.next_n);
    CHECK(back.partial_checksum == cp.partial_checksum);
    CHECK(back.partial_max_min_p == cp.partial_max_min_p);
    CHECK(back.partial_argmax_n == cp.partial_argmax_n);
    CHECK(back.evens_done == cp.evens_done);
  }

  SECTION("file round trip; missing and truncated files read as absent") {
    const std::string path = temp_path("ck");
    CHECK_FALSE(goldbach::read_checkpoint_file(path).has_value());
    goldbach::Checkpoint cp;
    cp.range = range;
    cp.next_n = 2048;
    goldbach::write_checkpoint_file(path, cp);
    auto back = goldbach::read_checkpoint_file(path);
    REQUIRE(back.has_value());
    CHECK(back->next_n == 2048);
    {
      std::FILE* f = std::fopen(path.c_str(), "wb");
      std::fputs("short", f);
      std::fclose(f);
    }
    CHECK_FALSE(goldbach::read_checkpoint_file(path).has_value());
    std::filesystem::remove(path);
  }

  SECTION("resume from every checkpoint reproduces the uninterrupted result") {
    goldbach::VerifyOptions opts;
    opts.checkpoint_every = 1000;
    opts.primes = &primes;
    const GoldbachResult whole = goldbach::verify_range(range, std::nullopt, opts);

    std::vector<goldbach::Checkpoint> cps;
    opts.on_checkpoint = [&](const goldbach::Checkpoint& cp) { cps.push_back(cp); };
    goldbach::verify_range(range, std::nullopt, opts);
    REQUIRE(cps.size() >= 10);

    goldbach::VerifyOptions resume_opts;
    resume_opts.primes = &primes;
    for (const auto& cp : cps) {
      const GoldbachResult resumed = goldbach::verify_range(range, cp, resume_opts);
      CHECK(goldbach::encode_result(resumed) == goldbach::encode_result(whole));
    }
  }

  SECTION("checkpoint for a different range is refused") {
    goldbach::Checkpoint cp;
    cp.range = {4, 100};
    CHECK_THROWS_AS(goldbach::verify_range({4, 200}, cp, {}), goldbach::CheckpointMismatchError);
  }
}

TEST_CASE("oracle bounds") {
  CHECK_THROWS_AS(goldbach::oracle_verify_range({4, goldbach::kOracleMaxEnd + 2}),
                  goldbach::OracleRangeTooLargeError);
}
