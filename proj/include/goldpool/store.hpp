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

#include <algorithm>
#include <cstdint>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <type_traits>
#include <variant>
#include <vector>

#include "goldpool/codec.hpp"
#include "goldpool/types.hpp"

// Transactional row store for the scheduler state. A transaction stages a
// write set against a locked snapshot and applies it atomically on commit;
// an exception unwinds with nothing applied. State changes for units and
// tasks go through compare-and-set helpers that reject illegal lifecycle
// edges outright, and the store keeps a handful of derived indexes so the
// daemons can ask "what needs me?" without table scans.

namespace goldpool::core {

// ---- write set ----

struct PutUserOp { UserRecord row; };
struct PutHostOp { HostRecord row; };
struct PutUnitOp { WorkUnit row; };
struct PutTaskOp { TaskInstance row; };
struct DelTaskOp { Id task_id = kNoId; };
struct PutArchiveOp { ArchiveRecord row; };
struct PutMetaOp { std::string key; std::int64_t value = 0; };
// Acknowledges transitioner triggers. Kept out of the on-disk log: the
// dirty set is rebuilt conservatively on recovery anyway.
struct ClearDirtyOp { std::vector<Id> unit_ids; };

using WriteOp = std::variant<PutUserOp, PutHostOp, PutUnitOp, PutTaskOp, DelTaskOp,
                             PutArchiveOp, PutMetaOp, ClearDirtyOp>;

struct WriteSet {
  std::vector<WriteOp> ops;
  bool empty() const { return ops.empty(); }
};

// One entry per lifecycle change, for post-hoc legality audits. A row's
// creation is recorded with from == to.
struct TransitionRecord {
  char entity = '?';  // 'W' unit, 'T' task
  Id id = kNoId;
  std::uint8_t from = 0;
  std::uint8_t to = 0;
};

class MemStore;

// ---- transaction handle ----
//
// Row getters see this transaction's staged writes layered over the
// committed tables. The index/query methods deliberately see only the
// committed snapshot — daemon steps collect their worklist first, then
// stage changes, so a step never chases its own writes.

class Txn {
 public:
  // -- reads --
  std::optional<UserRecord> user(Id id) const;
  std::optional<HostRecord> host(Id id) const;
  std::optional<WorkUnit> unit(Id id) const;
  std::optional<TaskInstance> task(Id id) const;
  std::optional<ArchiveRecord> archive_of(Id wu_id) const;

  UserRecord user_or_throw(Id id) const;
  HostRecord host_or_throw(Id id) const;
  WorkUnit unit_or_throw(Id id) const;
  TaskInstance task_or_throw(Id id) const;

  Id find_user(const std::string& display_name) const;  // kNoId when absent
  std::int64_t meta(const std::string& key, std::int64_t fallback) const;

  // -- staging --
  Id new_user(UserRecord row);
  Id new_host(HostRecord row);
  Id new_unit(WorkUnit row);
  Id new_task(TaskInstance row);

  // State-preserving updates: a put may change any field except `state`.
  void put_user(const UserRecord& row);
  void put_host(const HostRecord& row);
  void put_unit(const WorkUnit& row);
  void put_task(const TaskInstance& row);

  // Compare-and-set lifecycle moves. Returns false when the row is no
  // longer in `expect` (somebody got there first); throws on an edge the
  // lifecycle does not allow. `mutate` runs on the row after the state
  // flips so dependent fields (payload, credit) land in the same write.
  bool transition_unit(Id id, WuState expect, WuState to,
                       const std::function<void(WorkUnit&)>& mutate = nullptr);
  bool transition_task(Id id, TaskState expect, TaskState to,
                       const std::function<void(TaskInstance&)>& mutate = nullptr);

  void delete_task(Id id);
  bool put_archive(const ArchiveRecord& row);  // false if unit already archived
  void put_meta(const std::string& key, std::int64_t value);
  void clear_dirty(const std::vector<Id>& unit_ids);

  // -- committed-snapshot queries --
  std::vector<Id> unsent_tasks(std::size_t limit = SIZE_MAX) const;
  std::vector<Id> open_units(std::size_t limit = SIZE_MAX) const;  // can take more instances
  std::vector<Id> due_sent_tasks(TimeMs now) const;                // SENT, deadline <= now
  std::vector<Id> dirty_units() const;
  std::vector<Id> units_needing_validation() const;
  std::vector<Id> validated_units() const;
  std::vector<Id> purgeable_units(TimeMs assimilated_cutoff) const;
  std::vector<Id> tasks_of(Id wu_id) const;
  std::optional<TimeMs> earliest_deadline() const;        // over committed SENT rows
  std::optional<TimeMs> earliest_assimilated_at() const;  // over committed ASSIMILATED rows

  std::uint64_t unit_count(WuState s) const;
  std::uint64_t task_count(TaskState s) const;
  std::uint64_t user_rows() const;
  std::uint64_t host_rows() const;
  std::uint64_t unit_rows() const;
  std::uint64_t task_rows() const;
  std::uint64_t archive_rows() const;
  double mean_cpu_class() const;  // 0 when no hosts registered

  // credit_total recomputed from first principles: live VALID tasks owned
  // by the user's hosts plus the user's purged-credit carryover.
  std::uint64_t audit_credit(Id user_id) const;

  void for_each_user(const std::function<void(const UserRecord&)>& fn) const;
  void for_each_host(const std::function<void(const HostRecord&)>& fn) const;
  void for_each_unit(const std::function<void(const WorkUnit&)>& fn) const;
  void for_each_task(const std::function<void(const TaskInstance&)>& fn) const;
  void for_each_archive(const std::function<void(const ArchiveRecord&)>& fn) const;

 private:
  friend class MemStore;
  explicit Txn(MemStore& store);

  void stage_user(const UserRecord& row);
  void stage_host(const HostRecord& row);
  void stage_unit(const WorkUnit& row);
  void stage_task(const TaskInstance& row);

  MemStore& store_;
  WriteSet ws_;
  std::map<Id, UserRecord> staged_users_;
  std::map<Id, HostRecord> staged_hosts_;
  std::map<Id, WorkUnit> staged_units_;
  std::map<Id, TaskInstance> staged_tasks_;
  std::map<Id, ArchiveRecord> staged_archives_;
  std::map<std::string, std::int64_t> staged_meta_;
  std::set<Id> deleted_tasks_;
  Id next_user_, next_host_, next_unit_, next_task_;
};

class Store {
 public:
  virtual ~Store() = default;
  virtual void transact(const std::function<void(Txn&)>& fn) = 0;
};

// Convenience for value-returning transactions.
template <class F>
auto with_txn(Store& s, F&& fn) {
  using R = std::invoke_result_t<F, Txn&>;
  if constexpr (std::is_void_v<R>) {
    s.transact(std::forward<F>(fn));
  } else {
    R out{};
    s.transact([&](Txn& t) { out = fn(t); });
    return out;
  }
}

// ---- in-memory implementation ----

class MemStore final : public Store {
 public:
  MemStore() = default;
  MemStore(const MemStore&) = delete;
  MemStore& operator=(const MemStore&) = delete;

  void transact(const std::function<void(Txn&)>& fn) override {
    WriteSet discard;
    transact_capture(fn, discard);
  }

  // Same, but hands the committed write set to the caller (the file store
  // appends it to its log). With reject_writes set, a transaction staging
  // anything persistable throws before any of it is applied.
  void transact_capture(const std::function<void(Txn&)>& fn, WriteSet& out,
                        bool reject_writes = false) {
    std::lock_guard<std::mutex> lk(mu_);
    Txn t(*this);
    fn(t);
    if (reject_writes) {
      for (const WriteOp& op : t.ws_.ops)
        if (!std::holds_alternative<ClearDirtyOp>(op))
          throw std::logic_error("write transaction against a read-only store");
    }
    apply(t.ws_);
    next_user_ = t.next_user_;
    next_host_ = t.next_host_;
    next_unit_ = t.next_unit_;
    next_task_ = t.next_task_;
    out = std::move(t.ws_);
  }

  // Recovery hook: anything still live gets revisited by the transitioner;
  // redundant visits are no-ops.
  void mark_live_units_dirty() {
    std::lock_guard<std::mutex> lk(mu_);
    for (const auto& [id, row] : units_)
      if (row.state == WuState::InProgress) dirty_units_.insert(id);
  }

  // Recovery path: apply a previously committed write set verbatim.
  void replay(const WriteSet& ws) {
    std::lock_guard<std::mutex> lk(mu_);
    apply(ws);
  }

  void record_history(bool on) {
    std::lock_guard<std::mutex> lk(mu_);
    history_on_ = on;
  }

  std::vector<TransitionRecord> history() const {
    std::lock_guard<std::mutex> lk(mu_);
    return history_;
  }

  std::string serialize_snapshot() const;
  void load_snapshot(std::string_view bytes);

 private:
  friend class Txn;

  void apply(const WriteSet& ws) {
    for (const WriteOp& op : ws.ops) std::visit([this](const auto& o) { apply_op(o); }, op);
  }

  void apply_op(const PutUserOp& op) { users_[op.row.user_id] = op.row; users_by_name_[op.row.display_name] = op.row.user_id; bump(next_user_, op.row.user_id); }

  void apply_op(const PutHostOp& op) {
    HostRecord row = op.row;
    auto it = hosts_.find(row.host_id);
    // tasks_in_progress is derived from task state changes below; a host
    // put never overwrites it.
    row.tasks_in_progress = it != hosts_.end() ? it->second.tasks_in_progress : 0;
    if (it == hosts_.end()) cpu_class_sum_ += row.cpu_class;
    else cpu_class_sum_ += row.cpu_class - it->second.cpu_class;
    hosts_[row.host_id] = row;
    bump(next_host_, row.host_id);
  }

  void apply_op(const PutUnitOp& op) {
    const WorkUnit& row = op.row;
    auto it = units_.find(row.wu_id);
    if (it == units_.end()) {
      note_transition('W', row.wu_id, (std::uint8_t)row.state, (std::uint8_t)row.state);
      ++unit_counts_[(int)row.state];
    } else if (it->second.state != row.state) {
      note_transition('W', row.wu_id, (std::uint8_t)it->second.state, (std::uint8_t)row.state);
      --unit_counts_[(int)it->second.state];
      ++unit_counts_[(int)row.state];
    }
    // index upkeep
    if (it != units_.end() && it->second.state == WuState::Assimilated)
      purge_queue_.erase({it->second.assimilated_at, row.wu_id});
    if (row.state == WuState::Assimilated) purge_queue_.insert({row.assimilated_at, row.wu_id});
    if (row.state == WuState::InProgress && row.needs_validation) validation_set_.insert(row.wu_id);
    else validation_set_.erase(row.wu_id);
    if (row.state == WuState::Validated) validated_set_.insert(row.wu_id);
    else validated_set_.erase(row.wu_id);
    const bool newly_pending =
        row.pending_disagreement && (it == units_.end() || !it->second.pending_disagreement);
    if (newly_pending) dirty_units_.insert(row.wu_id);
    units_[row.wu_id] = row;
    refresh_open(row.wu_id);
    bump(next_unit_, row.wu_id);
  }

  void apply_op(const PutTaskOp& op) {
    const TaskInstance& row = op.row;
    auto it = tasks_.find(row.task_id);
    const TaskState old = it != tasks_.end() ? it->second.state : row.state;
    if (it == tasks_.end()) {
      note_transition('T', row.task_id, (std::uint8_t)row.state, (std::uint8_t)row.state);
      ++task_counts_[(int)row.state];
      unit_tasks_[row.wu_id].push_back(row.task_id);
    } else if (old != row.state) {
      note_transition('T', row.task_id, (std::uint8_t)old, (std::uint8_t)row.state);
      --task_counts_[(int)old];
      ++task_counts_[(int)row.state];
    }
    // unsent pool
    if (row.state == TaskState::Unsent) unsent_set_.insert(row.task_id);
    else unsent_set_.erase(row.task_id);
    // deadline index + host in-flight counter
    if (it != tasks_.end() && old == TaskState::Sent)
      deadline_set_.erase({it->second.deadline, row.task_id});
    if (row.state == TaskState::Sent) deadline_set_.insert({row.deadline, row.task_id});
    if (old != TaskState::Sent && row.state == TaskState::Sent) host_inflight(row.host_id, +1);
    if (it != tasks_.end() && old == TaskState::Sent && row.state != TaskState::Sent)
      host_inflight(it->second.host_id, -1);
    // transitioner triggers
    if (row.state == TaskState::Returned || row.state == TaskState::Cancelled)
      dirty_units_.insert(row.wu_id);
    tasks_[row.task_id] = row;
    refresh_open(row.wu_id);
    bump(next_task_, row.task_id);
  }

  void apply_op(const DelTaskOp& op) {
    auto it = tasks_.find(op.task_id);
    if (it == tasks_.end()) return;
    const TaskInstance& row = it->second;
    --task_counts_[(int)row.state];
    unsent_set_.erase(op.task_id);
    if (row.state == TaskState::Sent) {
      deadline_set_.erase({row.deadline, op.task_id});
      host_inflight(row.host_id, -1);
    }
    auto& sibs = unit_tasks_[row.wu_id];
    std::erase(sibs, op.task_id);
    const Id wu = row.wu_id;
    tasks_.erase(it);
    refresh_open(wu);
  }

  void apply_op(const PutArchiveOp& op) { archives_[op.row.wu_id] = op.row; }
  void apply_op(const PutMetaOp& op) { meta_[op.key] = op.value; }
  void apply_op(const ClearDirtyOp& op) {
    for (Id id : op.unit_ids) dirty_units_.erase(id);
  }

  void host_inflight(Id host_id, int delta) {
    auto it = hosts_.find(host_id);
    if (it == hosts_.end()) return;
    it->second.tasks_in_progress =
        static_cast<std::uint32_t>(static_cast<int>(it->second.tasks_in_progress) + delta);
  }

  void refresh_open(Id wu_id) {
    auto it = units_.find(wu_id);
    if (it == units_.end()) {
      open_units_.erase(wu_id);
      return;
    }
    const WorkUnit& u = it->second;
    const bool assignable = u.state == WuState::Generated || u.state == WuState::InProgress;
    auto tt = unit_tasks_.find(wu_id);
    const std::size_t total = tt != unit_tasks_.end() ? tt->second.size() : 0;
    if (assignable && total < u.target_replication) open_units_.insert(wu_id);
    else open_units_.erase(wu_id);
  }

  void note_transition(char entity, Id id, std::uint8_t from, std::uint8_t to) {
    if (history_on_) history_.push_back({entity, id, from, to});
  }

  static void bump(Id& counter, Id seen) {
    if (seen >= counter) counter = seen + 1;
  }

  // Rebuild every derived index from the base tables (after snapshot load).
  void rebuild_indexes();

  mutable std::mutex mu_;
  std::map<Id, UserRecord> users_;
  std::map<Id, HostRecord> hosts_;
  std::map<Id, WorkUnit> units_;
  std::map<Id, TaskInstance> tasks_;
  std::map<Id, ArchiveRecord> archives_;  // keyed by wu_id
  std::map<std::string, std::int64_t> meta_;
  std::map<std::string, Id> users_by_name_;

  Id next_user_ = 1, next_host_ = 1, next_unit_ = 1, next_task_ = 1;

  std::set<Id> unsent_set_;
  std::set<Id> open_units_;
  std::set<Id> dirty_units_;
  std::set<Id> validation_set_;
  std::set<Id> validated_set_;
  std::set<std::pair<TimeMs, Id>> deadline_set_;  // (deadline, task) for SENT rows
  std::set<std::pair<TimeMs, Id>> purge_queue_;   // (assimilated_at, unit)
  std::map<Id, std::vector<Id>> unit_tasks_;
  std::uint64_t unit_counts_[6] = {};
  std::uint64_t task_counts_[7] = {};
  std::uint64_t cpu_class_sum_ = 0;

  bool history_on_ = false;
  std::vector<TransitionRecord> history_;
};

// ---- Txn implementation ----

inline Txn::Txn(MemStore& store)
    : store_(store),
      next_user_(store.next_user_),
      next_host_(store.next_host_),
      next_unit_(store.next_unit_),
      next_task_(store.next_task_) {}

inline std::optional<UserRecord> Txn::user(Id id) const {
  if (auto it = staged_users_.find(id); it != staged_users_.end()) return it->second;
  if (auto it = store_.users_.find(id); it != store_.users_.end()) return it->second;
  return std::nullopt;
}

inline std::optional<HostRecord> Txn::host(Id id) const {
  if (auto it = staged_hosts_.find(id); it != staged_hosts_.end()) return it->second;
  if (auto it = store_.hosts_.find(id); it != store_.hosts_.end()) return it->second;
  return std::nullopt;
}

inline std::optional<WorkUnit> Txn::unit(Id id) const {
  if (auto it = staged_units_.find(id); it != staged_units_.end()) return it->second;
  if (auto it = store_.units_.find(id); it != store_.units_.end()) return it->second;
  return std::nullopt;
}

inline std::optional<TaskInstance> Txn::task(Id id) const {
  if (deleted_tasks_.count(id)) return std::nullopt;
  if (auto it = staged_tasks_.find(id); it != staged_tasks_.end()) return it->second;
  if (auto it = store_.tasks_.find(id); it != store_.tasks_.end()) return it->second;
  return std::nullopt;
}

inline std::optional<ArchiveRecord> Txn::archive_of(Id wu_id) const {
  if (auto it = staged_archives_.find(wu_id); it != staged_archives_.end()) return it->second;
  if (auto it = store_.archives_.find(wu_id); it != store_.archives_.end()) return it->second;
  return std::nullopt;
}

inline UserRecord Txn::user_or_throw(Id id) const {
  auto r = user(id);
  if (!r) throw NotFoundError("no such user: " + std::to_string(id));
  return *r;
}
inline HostRecord Txn::host_or_throw(Id id) const {
  auto r = host(id);
  if (!r) throw NotFoundError("no such host: " + std::to_string(id));
  return *r;
}
inline WorkUnit Txn::unit_or_throw(Id id) const {
  auto r = unit(id);
  if (!r) throw NotFoundError("no such work unit: " + std::to_string(id));
  return *r;
}
inline TaskInstance Txn::task_or_throw(Id id) const {
  auto r = task(id);
  if (!r) throw NotFoundError("no such task: " + std::to_string(id));
  return *r;
}

inline Id Txn::find_user(const std::string& display_name) const {
  for (const auto& [id, row] : staged_users_)
    if (row.display_name == display_name) return id;
  if (auto it = store_.users_by_name_.find(display_name); it != store_.users_by_name_.end())
    return it->second;
  return kNoId;
}

inline std::int64_t Txn::meta(const std::string& key, std::int64_t fallback) const {
  if (auto it = staged_meta_.find(key); it != staged_meta_.end()) return it->second;
  if (auto it = store_.meta_.find(key); it != store_.meta_.end()) return it->second;
  return fallback;
}

inline void Txn::stage_user(const UserRecord& row) {
  if (row.user_id == kNoId) throw InvalidArgumentError("user row without id");
  if (row.display_name.empty()) throw InvalidArgumentError("user needs a display name");
  staged_users_[row.user_id] = row;
  ws_.ops.push_back(PutUserOp{row});
}

inline void Txn::stage_host(const HostRecord& row) {
  if (row.host_id == kNoId) throw InvalidArgumentError("host row without id");
  validate_host_spec({row.ram_bytes, row.free_disk_bytes, row.cpu_class});
  if (!user(row.user_id)) throw NotFoundError("host references missing user");
  staged_hosts_[row.host_id] = row;
  ws_.ops.push_back(PutHostOp{row});
}

inline void Txn::stage_unit(const WorkUnit& row) {
  if (row.wu_id == kNoId) throw InvalidArgumentError("unit row without id");
  goldbach::validate_range(row.range());
  if (row.quorum < 1 || row.target_replication < row.quorum ||
      row.max_total_instances < row.target_replication)
    throw InvalidArgumentError("unit policy must satisfy 1 <= quorum <= replication <= max");
  if (row.deadline_delay_ms <= 0) throw InvalidArgumentError("unit needs a positive deadline delay");
  if (row.needs_validation && row.state != WuState::InProgress)
    throw InvalidArgumentError("needs_validation only applies in progress");
  if (row.canonical_result_id != kNoId && row.state != WuState::Validated &&
      row.state != WuState::Assimilated && row.state != WuState::Purged)
    throw InvalidArgumentError("canonical result set before validation");
  staged_units_[row.wu_id] = row;
  ws_.ops.push_back(PutUnitOp{row});
}

inline void Txn::stage_task(const TaskInstance& row) {
  if (row.task_id == kNoId) throw InvalidArgumentError("task row without id");
  if (!unit(row.wu_id)) throw NotFoundError("task references missing unit");
  const bool wants_payload = row.state == TaskState::Returned ||
                             row.state == TaskState::Valid || row.state == TaskState::Invalid;
  if (row.payload.has_value() != wants_payload)
    throw InvalidArgumentError("payload must be present exactly for returned results");
  if (row.received_at.has_value() != wants_payload)
    throw InvalidArgumentError("received_at must accompany a returned result");
  if (row.credit_granted != 0 && row.state != TaskState::Valid)
    throw InvalidArgumentError("credit attaches to VALID tasks only");
  if (row.state == TaskState::Unsent && (row.host_id != kNoId || row.sent_at != 0))
    throw InvalidArgumentError("unsent task cannot reference a host");
  if (row.state != TaskState::Unsent && row.host_id == kNoId)
    throw InvalidArgumentError("sent task needs a host");
  staged_tasks_[row.task_id] = row;
  deleted_tasks_.erase(row.task_id);
  ws_.ops.push_back(PutTaskOp{row});
}

inline Id Txn::new_user(UserRecord row) {
  row.user_id = next_user_++;
  if (find_user(row.display_name) != kNoId)
    throw InvalidArgumentError("display name already registered: " + row.display_name);
  stage_user(row);
  return row.user_id;
}

inline Id Txn::new_host(HostRecord row) {
  row.host_id = next_host_++;
  row.tasks_in_progress = 0;
  stage_host(row);
  return row.host_id;
}

inline Id Txn::new_unit(WorkUnit row) {
  if (row.state != WuState::Generated)
    throw InvalidArgumentError("new units start in GENERATED");
  row.wu_id = next_unit_++;
  stage_unit(row);
  return row.wu_id;
}

inline Id Txn::new_task(TaskInstance row) {
  if (row.state != TaskState::Unsent)
    throw InvalidArgumentError("new tasks start in UNSENT");
  row.task_id = next_task_++;
  stage_task(row);
  return row.task_id;
}

inline void Txn::put_user(const UserRecord& row) {
  auto cur = user(row.user_id);
  if (!cur) throw NotFoundError("update of missing user");
  stage_user(row);
}

inline void Txn::put_host(const HostRecord& row) {
  auto cur = host(row.host_id);
  if (!cur) throw NotFoundError("update of missing host");
  stage_host(row);
}

inline void Txn::put_unit(const WorkUnit& row) {
  auto cur = unit(row.wu_id);
  if (!cur) throw NotFoundError("update of missing unit");
  if (cur->state != row.state)
    throw InvalidArgumentError("unit state changes go through transition_unit");
  stage_unit(row);
}

inline void Txn::put_task(const TaskInstance& row) {
  auto cur = task(row.task_id);
  if (!cur) throw NotFoundError("update of missing task");
  if (cur->state != row.state)
    throw InvalidArgumentError("task state changes go through transition_task");
  stage_task(row);
}

inline bool Txn::transition_unit(Id id, WuState expect, WuState to,
                                 const std::function<void(WorkUnit&)>& mutate) {
  WorkUnit row = unit_or_throw(id);
  if (row.state != expect) return false;
  if (!wu_transition_legal(expect, to))
    throw InvalidArgumentError(std::string("illegal unit transition ") + to_string(expect) +
                               " -> " + to_string(to));
  row.state = to;
  if (mutate) mutate(row);
  if (row.state != to) throw InvalidArgumentError("transition mutator may not change state");
  stage_unit(row);
  return true;
}

inline bool Txn::transition_task(Id id, TaskState expect, TaskState to,
                                 const std::function<void(TaskInstance&)>& mutate) {
  TaskInstance row = task_or_throw(id);
  if (row.state != expect) return false;
  if (!task_transition_legal(expect, to))
    throw InvalidArgumentError(std::string("illegal task transition ") + to_string(expect) +
                               " -> " + to_string(to));
  row.state = to;
  if (mutate) mutate(row);
  if (row.state != to) throw InvalidArgumentError("transition mutator may not change state");
  stage_task(row);
  return true;
}

inline void Txn::delete_task(Id id) {
  if (!task(id)) throw NotFoundError("delete of missing task");
  deleted_tasks_.insert(id);
  staged_tasks_.erase(id);
  ws_.ops.push_back(DelTaskOp{id});
}

inline bool Txn::put_archive(const ArchiveRecord& row) {
  if (archive_of(row.wu_id)) return false;
  goldbach::validate_range(row.range());
  staged_archives_[row.wu_id] = row;
  ws_.ops.push_back(PutArchiveOp{row});
  return true;
}

inline void Txn::put_meta(const std::string& key, std::int64_t value) {
  staged_meta_[key] = value;
  ws_.ops.push_back(PutMetaOp{key, value});
}

inline void Txn::clear_dirty(const std::vector<Id>& unit_ids) {
  ws_.ops.push_back(ClearDirtyOp{unit_ids});
}

inline std::vector<Id> Txn::unsent_tasks(std::size_t limit) const {
  std::vector<Id> out;
  for (Id id : store_.unsent_set_) {
    if (out.size() >= limit) break;
    out.push_back(id);
  }
  return out;
}

inline std::vector<Id> Txn::open_units(std::size_t limit) const {
  std::vector<Id> out;
  for (Id id : store_.open_units_) {
    if (out.size() >= limit) break;
    out.push_back(id);
  }
  return out;
}

inline std::vector<Id> Txn::due_sent_tasks(TimeMs now) const {
  std::vector<Id> out;
  for (const auto& [deadline, id] : store_.deadline_set_) {
    if (deadline > now) break;
    out.push_back(id);
  }
  return out;
}

inline std::vector<Id> Txn::dirty_units() const {
  return {store_.dirty_units_.begin(), store_.dirty_units_.end()};
}

inline std::vector<Id> Txn::units_needing_validation() const {
  return {store_.validation_set_.begin(), store_.validation_set_.end()};
}

inline std::vector<Id> Txn::validated_units() const {
  return {store_.validated_set_.begin(), store_.validated_set_.end()};
}

inline std::vector<Id> Txn::purgeable_units(TimeMs assimilated_cutoff) const {
  std::vector<Id> out;
  for (const auto& [at, id] : store_.purge_queue_) {
    if (at > assimilated_cutoff) break;
    out.push_back(id);
  }
  return out;
}

inline std::optional<TimeMs> Txn::earliest_deadline() const {
  if (store_.deadline_set_.empty()) return std::nullopt;
  return store_.deadline_set_.begin()->first;
}

inline std::optional<TimeMs> Txn::earliest_assimilated_at() const {
  if (store_.purge_queue_.empty()) return std::nullopt;
  return store_.purge_queue_.begin()->first;
}

inline std::vector<Id> Txn::tasks_of(Id wu_id) const {
  auto it = store_.unit_tasks_.find(wu_id);
  std::vector<Id> out = it != store_.unit_tasks_.end() ? it->second : std::vector<Id>{};
  for (const auto& [id, row] : staged_tasks_)
    if (row.wu_id == wu_id && std::find(out.begin(), out.end(), id) == out.end())
      out.push_back(id);
  for (Id id : deleted_tasks_) std::erase(out, id);
  return out;
}

inline std::uint64_t Txn::unit_count(WuState s) const { return store_.unit_counts_[(int)s]; }
inline std::uint64_t Txn::task_count(TaskState s) const { return store_.task_counts_[(int)s]; }
inline std::uint64_t Txn::user_rows() const { return store_.users_.size(); }
inline std::uint64_t Txn::host_rows() const { return store_.hosts_.size(); }
inline std::uint64_t Txn::unit_rows() const { return store_.units_.size(); }
inline std::uint64_t Txn::task_rows() const { return store_.tasks_.size(); }
inline std::uint64_t Txn::archive_rows() const { return store_.archives_.size(); }

inline double Txn::mean_cpu_class() const {
  if (store_.hosts_.empty()) return 0.0;
  return static_cast<double>(store_.cpu_class_sum_) / static_cast<double>(store_.hosts_.size());
}

inline std::uint64_t Txn::audit_credit(Id user_id) const {
  const UserRecord u = user_or_throw(user_id);
  std::uint64_t total = u.credit_purged;
  for (const auto& [tid, row] : store_.tasks_) {
    if (row.state != TaskState::Valid || row.credit_granted == 0) continue;
    auto h = store_.hosts_.find(row.host_id);
    if (h != store_.hosts_.end() && h->second.user_id == user_id) total += row.credit_granted;
  }
  return total;
}

inline void Txn::for_each_user(const std::function<void(const UserRecord&)>& fn) const {
  for (const auto& [id, row] : store_.users_) fn(row);
}
inline void Txn::for_each_host(const std::function<void(const HostRecord&)>& fn) const {
  for (const auto& [id, row] : store_.hosts_) fn(row);
}
inline void Txn::for_each_unit(const std::function<void(const WorkUnit&)>& fn) const {
  for (const auto& [id, row] : store_.units_) fn(row);
}
inline void Txn::for_each_task(const std::function<void(const TaskInstance&)>& fn) const {
  for (const auto& [id, row] : store_.tasks_) fn(row);
}
inline void Txn::for_each_archive(const std::function<void(const ArchiveRecord&)>& fn) const {
  for (const auto& [id, row] : store_.archives_) fn(row);
}

// ---- snapshot serialization ----

namespace detail {

inline void write_user(codec::ByteWriter& w, const UserRecord& r) {
  w.u64(r.user_id);
  w.str(r.display_name);
  w.i64(r.registered_at);
  w.u64(r.credit_total);
  w.u64(r.credit_purged);
}
inline UserRecord read_user(codec::ByteReader& rd) {
  UserRecord r;
  r.user_id = rd.u64();
  r.display_name = rd.str();
  r.registered_at = rd.i64();
  r.credit_total = rd.u64();
  r.credit_purged = rd.u64();
  return r;
}

inline void write_host(codec::ByteWriter& w, const HostRecord& r) {
  w.u64(r.host_id);
  w.u64(r.user_id);
  w.u64(r.ram_bytes);
  w.u64(r.free_disk_bytes);
  w.u32(r.cpu_class);
  w.i64(r.registered_at);
  w.u32(r.tasks_in_progress);
}
inline HostRecord read_host(codec::ByteReader& rd) {
  HostRecord r;
  r.host_id = rd.u64();
  r.user_id = rd.u64();
  r.ram_bytes = rd.u64();
  r.free_disk_bytes = rd.u64();
  r.cpu_class = rd.u32();
  r.registered_at = rd.i64();
  r.tasks_in_progress = rd.u32();
  return r;
}

inline void write_unit(codec::ByteWriter& w, const WorkUnit& r) {
  w.u64(r.wu_id);
  w.u64(r.range_start);
  w.u64(r.range_end);
  w.u32(r.target_replication);
  w.u32(r.quorum);
  w.u32(r.max_total_instances);
  w.i64(r.deadline_delay_ms);
  w.u8(static_cast<std::uint8_t>(r.state));
  w.i64(r.created_at);
  w.u64(r.canonical_result_id);
  w.u8(r.needs_validation ? 1 : 0);
  w.u8(r.pending_disagreement ? 1 : 0);
  w.u32(r.returned_at_last_validation);
  w.i64(r.validated_at);
  w.i64(r.assimilated_at);
}
inline WorkUnit read_unit(codec::ByteReader& rd) {
  WorkUnit r;
  r.wu_id = rd.u64();
  r.range_start = rd.u64();
  r.range_end = rd.u64();
  r.target_replication = rd.u32();
  r.quorum = rd.u32();
  r.max_total_instances = rd.u32();
  r.deadline_delay_ms = rd.i64();
  r.state = static_cast<WuState>(rd.u8());
  r.created_at = rd.i64();
  r.canonical_result_id = rd.u64();
  r.needs_validation = rd.u8() != 0;
  r.pending_disagreement = rd.u8() != 0;
  r.returned_at_last_validation = rd.u32();
  r.validated_at = rd.i64();
  r.assimilated_at = rd.i64();
  return r;
}

inline void write_task(codec::ByteWriter& w, const TaskInstance& r) {
  w.u64(r.task_id);
  w.u64(r.wu_id);
  w.u64(r.host_id);
  w.u8(static_cast<std::uint8_t>(r.state));
  w.i64(r.sent_at);
  w.i64(r.deadline);
  w.u8(r.received_at ? 1 : 0);
  if (r.received_at) w.i64(*r.received_at);
  w.u8(r.payload ? 1 : 0);
  if (r.payload) w.str(goldbach::encode_result(*r.payload));
  w.u64(r.credit_granted);
}
inline TaskInstance read_task(codec::ByteReader& rd) {
  TaskInstance r;
  r.task_id = rd.u64();
  r.wu_id = rd.u64();
  r.host_id = rd.u64();
  r.state = static_cast<TaskState>(rd.u8());
  r.sent_at = rd.i64();
  r.deadline = rd.i64();
  if (rd.u8()) r.received_at = rd.i64();
  if (rd.u8()) r.payload = goldbach::decode_result(rd.str());
  r.credit_granted = rd.u64();
  return r;
}

inline void write_archive(codec::ByteWriter& w, const ArchiveRecord& r) {
  w.u64(r.wu_id);
  w.u64(r.range_start);
  w.u64(r.range_end);
  w.str(goldbach::encode_result(r.result));
  w.i64(r.validated_at);
}
inline ArchiveRecord read_archive(codec::ByteReader& rd) {
  ArchiveRecord r;
  r.wu_id = rd.u64();
  r.range_start = rd.u64();
  r.range_end = rd.u64();
  r.result = goldbach::decode_result(rd.str());
  r.validated_at = rd.i64();
  return r;
}

}  // namespace detail

inline std::string MemStore::serialize_snapshot() const {
  std::lock_guard<std::mutex> lk(mu_);
  codec::ByteWriter w;
  w.raw(std::string_view("GPSNAP1\0", 8));
  w.u64(next_user_);
  w.u64(next_host_);
  w.u64(next_unit_);
  w.u64(next_task_);
  w.u64(users_.size());
  for (const auto& [id, r] : users_) detail::write_user(w, r);
  w.u64(hosts_.size());
  for (const auto& [id, r] : hosts_) detail::write_host(w, r);
  w.u64(units_.size());
  for (const auto& [id, r] : units_) detail::write_unit(w, r);
  w.u64(tasks_.size());
  for (const auto& [id, r] : tasks_) detail::write_task(w, r);
  w.u64(archives_.size());
  for (const auto& [id, r] : archives_) detail::write_archive(w, r);
  w.u64(meta_.size());
  for (const auto& [k, v] : meta_) {
    w.str(k);
    w.i64(v);
  }
  return w.take();
}

inline void MemStore::load_snapshot(std::string_view bytes) {
  std::lock_guard<std::mutex> lk(mu_);
  codec::ByteReader rd(bytes);
  if (rd.raw(8) != std::string_view("GPSNAP1\0", 8))
    throw codec::DecodeError("bad snapshot magic");
  users_.clear();
  hosts_.clear();
  units_.clear();
  tasks_.clear();
  archives_.clear();
  meta_.clear();
  next_user_ = rd.u64();
  next_host_ = rd.u64();
  next_unit_ = rd.u64();
  next_task_ = rd.u64();
  for (std::uint64_t i = 0, n = rd.u64(); i < n; ++i) {
    UserRecord r = detail::read_user(rd);
    users_[r.user_id] = r;
  }
  for (std::uint64_t i = 0, n = rd.u64(); i < n; ++i) {
    HostRecord r = detail::read_host(rd);
    hosts_[r.host_id] = r;
  }
  for (std::uint64_t i = 0, n = rd.u64(); i < n; ++i) {
    WorkUnit r = detail::read_unit(rd);
    units_[r.wu_id] = r;
  }
  for (std::uint64_t i = 0, n = rd.u64(); i < n; ++i) {
    TaskInstance r = detail::read_task(rd);
    tasks_[r.task_id] = r;
  }
  for (std::uint64_t i = 0, n = rd.u64(); i < n; ++i) {
    ArchiveRecord r = detail::read_archive(rd);
    archives_[r.wu_id] = r;
  }
  for (std::uint64_t i = 0, n = rd.u64(); i < n; ++i) {
    std::string k = rd.str();
    meta_[k] = rd.i64();
  }
  if (!rd.done()) throw codec::DecodeError("trailing bytes after snapshot");
  rebuild_indexes();
}

inline void MemStore::rebuild_indexes() {
  unsent_set_.clear();
  open_units_.clear();
  dirty_units_.clear();
  validation_set_.clear();
  validated_set_.clear();
  deadline_set_.clear();
  purge_queue_.clear();
  unit_tasks_.clear();
  users_by_name_.clear();
  for (auto& c : unit_counts_) c = 0;
  for (auto& c : task_counts_) c = 0;
  cpu_class_sum_ = 0;

  for (const auto& [id, r] : users_) users_by_name_[r.display_name] = id;
  for (const auto& [id, r] : hosts_) cpu_class_sum_ += r.cpu_class;
  for (const auto& [id, r] : tasks_) {
    ++task_counts_[(int)r.state];
    unit_tasks_[r.wu_id].push_back(id);
    if (r.state == TaskState::Unsent) unsent_set_.insert(id);
    if (r.state == TaskState::Sent) deadline_set_.insert({r.deadline, id});
  }
  for (const auto& [id, r] : units_) {
    ++unit_counts_[(int)r.state];
    if (r.state == WuState::InProgress) {
      // Conservative: anything live gets revisited by the transitioner
      // after recovery. Extra visits are no-ops.
      dirty_units_.insert(id);
      if (r.needs_validation) validation_set_.insert(id);
    }
    if (r.state == WuState::Validated) validated_set_.insert(id);
    if (r.state == WuState::Assimilated) purge_queue_.insert({r.assimilated_at, id});
    refresh_open(id);
  }
}

// ---- write-set log encoding (ClearDirty excluded: in-memory only) ----

inline std::string encode_writeset(const WriteSet& ws) {
  codec::ByteWriter body;
  std::uint32_t count = 0;
  for (const WriteOp& op : ws.ops) {
    if (std::holds_alternative<ClearDirtyOp>(op)) continue;
    ++count;
  }
  body.u32(count);
  for (const WriteOp& op : ws.ops) {
    std::visit(
        [&](const auto& o) {
          using T = std::decay_t<decltype(o)>;
          if constexpr (std::is_same_v<T, PutUserOp>) {
            body.u8(1);
            detail::write_user(body, o.row);
          } else if constexpr (std::is_same_v<T, PutHostOp>) {
            body.u8(2);
            detail::write_host(body, o.row);
          } else if constexpr (std::is_same_v<T, PutUnitOp>) {
            body.u8(3);
            detail::write_unit(body, o.row);
          } else if constexpr (std::is_same_v<T, PutTaskOp>) {
            body.u8(4);
            detail::write_task(body, o.row);
          } else if constexpr (std::is_same_v<T, DelTaskOp>) {
            body.u8(5);
            body.u64(o.task_id);
          } else if constexpr (std::is_same_v<T, PutArchiveOp>) {
            body.u8(6);
            detail::write_archive(body, o.row);
          } else if constexpr (std::is_same_v<T, PutMetaOp>) {
            body.u8(7);
            body.str(o.key);
            body.i64(o.value);
          }
          // ClearDirtyOp: skipped
        },
        op);
  }
  return body.take();
}

inline WriteSet decode_writeset(std::string_view bytes) {
  codec::ByteReader rd(bytes);
  WriteSet ws;
  const std::uint32_t count = rd.u32();
  for (std::uint32_t i = 0; i < count; ++i) {
    switch (rd.u8()) {
      case 1: ws.ops.push_back(PutUserOp{detail::read_user(rd)}); break;
      case 2: ws.ops.push_back(PutHostOp{detail::read_host(rd)}); break;
      case 3: ws.ops.push_back(PutUnitOp{detail::read_unit(rd)}); break;
      case 4: ws.ops.push_back(PutTaskOp{detail::read_task(rd)}); break;
      case 5: ws.ops.push_back(DelTaskOp{rd.u64()}); break;
      case 6: ws.ops.push_back(PutArchiveOp{detail::read_archive(rd)}); break;
      case 7: {
        std::string k = rd.str();
        std::int64_t v = rd.i64();
        ws.ops.push_back(PutMetaOp{k, v});
        break;
      }
      default: throw codec::DecodeError("unknown write op tag");
    }
  }
  if (!rd.done()) throw codec::DecodeError("trailing bytes after write set");
  return ws;
}

}  // namespace goldpool::core
