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

#include <filesystem>
#include <fstream>
#include <mutex>
#include <optional>
#include <string>

#include "goldpool/store.hpp"

// Durable store: the in-memory store plus an append-only commit log and a
// periodic snapshot.
//
//   <data_dir>/log.bin       "GPLOG1\0\0" + u64 generation, then records
//                            [u32 len][u32 crc32][write set bytes]
//   <data_dir>/snapshot.bin  u64 generation + serialized store image
//
// A snapshot bumps the generation, is written tmp-then-rename, and the log
// is restarted with the new generation. Recovery loads the snapshot, then
// replays the log only when the generations match — a crash between the two
// steps leaves a stale log that is correctly ignored. A torn record tail
// (killed mid-append) is detected by length/CRC and dropped.

namespace goldpool::core {

class LogStore final : public Store {
 public:
  struct Options {
    bool read_only = false;
    std::uint64_t snapshot_every_commits = 1024;
  };

  explicit LogStore(const std::filesystem::path& dir) : LogStore(dir, Options()) {}

  LogStore(const std::filesystem::path& dir, Options opts) : dir_(dir), opts_(opts) {
    namespace fs = std::filesystem;
    if (!opts_.read_only) fs::create_directories(dir_);

    const fs::path snap = snapshot_path();
    if (fs::exists(snap)) {
      std::string bytes = slurp(snap);
      codec::ByteReader rd(bytes);
      generation_ = rd.u64();
      mem_.load_snapshot(std::string_view(bytes).substr(8));
    }

    recover_log();
    mem_.mark_live_units_dirty();

    if (!opts_.read_only) {
      log_out_.open(log_path(), std::ios::binary | std::ios::app);
      if (!log_out_) throw std::runtime_error("cannot open log for append: " + log_path().string());
    }
  }

  void transact(const std::function<void(Txn&)>& fn) override {
    std::lock_guard<std::mutex> lk(log_mu_);
    WriteSet ws;
    mem_.transact_capture(fn, ws, opts_.read_only);
    const std::string payload = encode_writeset(ws);
    // A read-only transaction (or one that only acknowledged triggers)
    // encodes zero ops; nothing to persist.
    if (ws_op_count(payload) == 0) return;
    append_record(payload);
    if (++commits_since_snapshot_ >= opts_.snapshot_every_commits) snapshot_locked();
  }

  void snapshot_now() {
    std::lock_guard<std::mutex> lk(log_mu_);
    if (opts_.read_only) throw std::logic_error("snapshot on a read-only store");
    snapshot_locked();
  }

  MemStore& mem() { return mem_; }
  std::uint64_t generation() const { return generation_; }
  std::filesystem::path log_path() const { return dir_ / "log.bin"; }
  std::filesystem::path snapshot_path() const { return dir_ / "snapshot.bin"; }

 private:
  static constexpr std::string_view kLogMagic{"GPLOG1\0\0", 8};

  static std::uint32_t ws_op_count(const std::string& payload) {
    codec::ByteReader rd(payload);
    return rd.u32();
  }

  static std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read " + p.string());
    return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  }

  void recover_log() {
    namespace fs = std::filesystem;
    if (!fs::exists(log_path())) {
      if (!opts_.read_only) start_fresh_log();
      return;
    }
    std::string bytes = slurp(log_path());
    bool stale = bytes.size() < 16 || std::string_view(bytes).substr(0, 8) != kLogMagic;
    std::size_t good = 16;
    if (!stale) {
      codec::ByteReader hdr(std::string_view(bytes).substr(8, 8));
      stale = hdr.u64() != generation_;
    }
    if (stale) {
      if (!opts_.read_only) start_fresh_log();
      return;
    }
    std::size_t pos = 16;
    while (bytes.size() - pos >= 8) {
      codec::ByteReader rd(std::string_view(bytes).substr(pos, 8));
      const std::uint32_t len = rd.u32();
      const std::uint32_t crc = rd.u32();
      if (bytes.size() - pos - 8 < len) break;  // torn tail
      const std::string_view payload = std::string_view(bytes).substr(pos + 8, len);
      if (codec::crc32(payload) != crc) break;  // torn/corrupt tail
      WriteSet ws;
      try {
        ws = decode_writeset(payload);
      } catch (const codec::DecodeError&) {
        break;
      }
      mem_.replay(ws);
      pos += 8 + len;
      good = pos;
    }
    if (!opts_.read_only && good < bytes.size())
      fs::resize_file(log_path(), good);
  }

  void start_fresh_log() {
    std::ofstream out(log_path(), std::ios::binary | std::ios::trunc);
    out.write(kLogMagic.data(), 8);
    codec::ByteWriter w;
    w.u64(generation_);
    out.write(w.bytes().data(), 8);
    out.flush();
    if (!out) throw std::runtime_error("cannot start log: " + log_path().string());
  }

  void append_record(const std::string& payload) {
    codec::ByteWriter w;
    w.u32(static_cast<std::uint32_t>(payload.size()));
    w.u32(codec::crc32(payload));
    w.raw(payload);
    log_out_.write(w.bytes().data(), static_cast<std::streamsize>(w.size()));
    log_out_.flush();
    if (!log_out_) throw std::runtime_error("log append failed");
  }

  void snapshot_locked() {
    namespace fs = std::filesystem;
    ++generation_;
    codec::ByteWriter w;
    w.u64(generation_);
    w.raw(mem_.serialize_snapshot());
    const fs::path tmp = snapshot_path().string() + ".tmp";
    {
      std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
      out.write(w.bytes().data(), static_cast<std::streamsize>(w.size()));
      out.flush();
      if (!out) throw std::runtime_error("snapshot write failed");
    }
    fs::rename(tmp, snapshot_path());
    log_out_.close();
    start_fresh_log();
    log_out_.open(log_path(), std::ios::binary | std::ios::app);
    commits_since_snapshot_ = 0;
  }

  std::filesystem::path dir_;
  Options opts_;
  MemStore mem_;
  std::mutex log_mu_;
  std::ofstream log_out_;
  std::uint64_t generation_ = 0;
  std::uint64_t commits_since_snapshot_ = 0;
};

}  // namespace goldpool::core
