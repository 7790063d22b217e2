// Copyright 2026 The hetcomm Authors
// SPDX-License-Identifier: Apache-2.0

#include "hetcomm/adaptors.h"

#include <algorithm>
#include <condition_variable>
#include <cstring>
#include <deque>
#include <map>
#include <mutex>

namespace hetcomm {

std::string_view memory_space_name(MemorySpace space) {
  switch (space) {
    case MemorySpace::kDevice: return "device";
    case MemorySpace::kHost: return "host";
    case MemorySpace::kChunk: return "chunk";
  }
  return "unknown";
}

namespace detail {

BufferStorage::~BufferStorage() {
  if (account) account->used.fetch_sub(bytes.size());
}

}  // namespace detail

DeviceBuffer DeviceBuffer::wrap(int owner_rank, MemorySpace space, Bytes bytes) {
  auto storage = std::make_shared<detail::BufferStorage>();
  storage->owner_rank = owner_rank;
  storage->space = space;
  storage->bytes = std::move(bytes);
  return DeviceBuffer(std::move(storage));
}

DeviceBuffer DeviceBuffer::clone() const {
  return wrap(owner_rank(), space(), storage_->bytes);
}

// ---------------------------------------------------------------------------
// CompletionEvent

struct CompletionEvent::State {
  std::uint64_t id = 0;
  mutable std::mutex mu;
  mutable std::condition_variable cv;
  bool complete = false;
  double t_us = 0.0;
  std::optional<ErrorCode> error;
  std::string message;
};

namespace {
std::atomic<std::uint64_t> g_next_event_id{1};
}  // namespace

CompletionEvent::CompletionEvent() : state_(std::make_shared<State>()) {
  state_->id = g_next_event_id.fetch_add(1);
}

std::uint64_t CompletionEvent::id() const noexcept { return state_->id; }

bool CompletionEvent::is_complete() const {
  std::lock_guard lock(state_->mu);
  return state_->complete;
}

double CompletionEvent::completion_time_us() const {
  std::lock_guard lock(state_->mu);
  return state_->t_us;
}

std::optional<ErrorCode> CompletionEvent::error() const {
  std::lock_guard lock(state_->mu);
  return state_->error;
}

bool CompletionEvent::wait_for(std::chrono::milliseconds timeout) const {
  std::unique_lock lock(state_->mu);
  return state_->cv.wait_for(lock, timeout, [&] { return state_->complete; });
}

void CompletionEvent::wait() const {
  std::unique_lock lock(state_->mu);
  state_->cv.wait(lock, [&] { return state_->complete; });
  if (state_->error) raise(*state_->error, state_->message);
}

void CompletionEvent::complete(double t_us) {
  {
    std::lock_guard lock(state_->mu);
    if (state_->complete) return;
    state_->complete = true;
    state_->t_us = t_us;
  }
  state_->cv.notify_all();
}

void CompletionEvent::fail(ErrorCode code, std::string message) {
  {
    std::lock_guard lock(state_->mu);
    if (state_->complete) return;
    state_->complete = true;
    state_->error = code;
    state_->message = std::move(message);
  }
  state_->cv.notify_all();
}

// ---------------------------------------------------------------------------
// Data types and reductions

std::size_t data_type_size(DataType type) {
  switch (type) {
    case DataType::kUint8: return 1;
    case DataType::kInt32: return 4;
    case DataType::kInt64: return 8;
    case DataType::kFloat32: return 4;
    case DataType::kFloat64: return 8;
  }
  return 1;
}

std::string_view data_type_name(DataType type) {
  switch (type) {
    case DataType::kUint8: return "uint8";
    case DataType::kInt32: return "int32";
    case DataType::kInt64: return "int64";
    case DataType::kFloat32: return "float32";
    case DataType::kFloat64: return "float64";
  }
  return "unknown";
}

std::string_view collective_op_name(CollectiveOp op) {
  switch (op) {
    case CollectiveOp::kAllReduceSum: return "allreduce_sum";
    case CollectiveOp::kAllGather: return "allgather";
    case CollectiveOp::kReduceScatterSum: return "reducescatter_sum";
    case CollectiveOp::kBroadcast: return "broadcast";
  }
  return "unknown";
}

namespace {

template <typename T, typename Wide = T>
void sum_into(std::span<std::byte> acc, std::span<const std::byte> in) {
  const std::size_t n = acc.size() / sizeof(T);
  for (std::size_t i = 0; i < n; ++i) {
    T a;
    T b;
    std::memcpy(&a, acc.data() + i * sizeof(T), sizeof(T));
    std::memcpy(&b, in.data() + i * sizeof(T), sizeof(T));
    const T r = static_cast<T>(static_cast<Wide>(a) + static_cast<Wide>(b));
    std::memcpy(acc.data() + i * sizeof(T), &r, sizeof(T));
  }
}

}  // namespace

void reduce_sum_into(DataType type, std::span<std::byte> acc,
                     std::span<const std::byte> in) {
  if (acc.size() != in.size()) {
    raise(ErrorCode::kSizeMismatch, "reduction operands differ in size");
  }
  switch (type) {
    case DataType::kUint8: sum_into<std::uint8_t, std::uint32_t>(acc, in); break;
    case DataType::kInt32: sum_into<std::int32_t, std::uint32_t>(acc, in); break;
    case DataType::kInt64: sum_into<std::int64_t, std::uint64_t>(acc, in); break;
    case DataType::kFloat32: sum_into<float>(acc, in); break;
    case DataType::kFloat64: sum_into<double>(acc, in); break;
  }
}

double ring_collective_time(CollectiveOp op, int k, std::uint64_t size_bytes,
                            const LinkSpec& link) {
  if (k <= 1) return 0.0;
  const double steps = static_cast<double>(k - 1);
  const double bytes = static_cast<double>(size_bytes);
  double volume = 0.0;
  switch (op) {
    case CollectiveOp::kAllReduceSum: volume = 2.0 * steps / k * bytes; break;
    case CollectiveOp::kAllGather:
    case CollectiveOp::kReduceScatterSum: volume = steps / k * bytes; break;
    case CollectiveOp::kBroadcast: volume = bytes; break;
  }
  return volume / (link.bandwidth_gbps * 1e3) + steps * link.latency_us;
}

double sim_copy_duration(const ClusterTopology& topology, int rank, MemorySpace from,
                         MemorySpace to, std::size_t size_bytes) {
  if (size_bytes == 0) return 0.0;
  const bool from_host = from == MemorySpace::kHost;
  const bool to_host = to == MemorySpace::kHost;
  if (from_host != to_host) return wire_time(topology.host_link(rank), size_bytes);
  return copy_time(topology.device_of_rank(rank).mem_bandwidth_gbps, size_bytes);
}

LinkSpec ring_link(const ClusterTopology& topology, std::span<const int> group) {
  LinkSpec link = topology.link_between(group.front(), group.front());
  for (int r : group) {
    for (const LinkSpec& l : {topology.link_between(group.front(), r), topology.link_between(r, r)}) {
      if (l.bandwidth_gbps < link.bandwidth_gbps) {
        link.bandwidth_gbps = l.bandwidth_gbps;
        link.kind = l.kind;
      }
      link.latency_us = std::max(link.latency_us, l.latency_us);
    }
  }
  return link;
}

// ---------------------------------------------------------------------------
// Simulated Device adaptor

class SimDeviceAdaptor final : public DeviceAdaptor {
 public:
  SimDeviceAdaptor(VendorId vendor, std::shared_ptr<const ClusterTopology> topology)
      : vendor_(std::move(vendor)), topology_(std::move(topology)) {}

  const VendorId& vendor() const override { return vendor_; }

  DeviceBuffer dev_alloc(int rank, std::size_t size_bytes, MemorySpace space) override {
    auto account = account_for(rank);
    std::size_t used = account->used.load();
    do {
      if (size_bytes > account->cap || used > account->cap - size_bytes) {
        raise(ErrorCode::kAllocError,
              "rank " + std::to_string(rank) + ": allocating " +
                  std::to_string(size_bytes) + " bytes exceeds cap of " +
                  std::to_string(account->cap));
      }
    } while (!account->used.compare_exchange_weak(used, used + size_bytes));

    auto storage = std::make_shared<detail::BufferStorage>();
    storage->owner_rank = rank;
    storage->space = space;
    storage->bytes.assign(size_bytes, std::byte{0});
    storage->account = std::move(account);
    return DeviceBuffer(std::move(storage));
  }

  CopyResult dev_copy(const DeviceBuffer& src, std::size_t src_offset, DeviceBuffer& dst,
                      std::size_t dst_offset, std::size_t size_bytes) override {
    if (src.owner_rank() != dst.owner_rank()) {
      raise(ErrorCode::kCrossRankCopy, "dev_copy from rank " +
                                           std::to_string(src.owner_rank()) + " to rank " +
                                           std::to_string(dst.owner_rank()));
    }
    if (src_offset + size_bytes > src.size() || dst_offset + size_bytes > dst.size()) {
      raise(ErrorCode::kSizeMismatch, "dev_copy of " + std::to_string(size_bytes) +
                                          " bytes exceeds a buffer");
    }
    if (size_bytes > 0) {
      std::memmove(dst.bytes().data() + dst_offset, src.bytes().data() + src_offset,
                   size_bytes);
    }
    CopyResult result;
    result.duration_us = copy_duration(src.owner_rank(), src.space(), dst.space(), size_bytes);
    result.event.complete(result.duration_us);
    return result;
  }

  double copy_duration(int rank, MemorySpace from, MemorySpace to,
                       std::size_t size_bytes) const override {
    return sim_copy_duration(*topology_, rank, from, to, size_bytes);
  }

  CompletionEvent create_event() override { return CompletionEvent(); }

  void stream_synchronize(int) override {}

  void set_memory_cap(int rank, std::size_t cap_bytes) override {
    account_for(rank)->cap = cap_bytes;
  }

  std::size_t memory_in_use(int rank) const override {
    std::lock_guard lock(mu_);
    auto it = accounts_.find(rank);
    return it == accounts_.end() ? 0 : it->second->used.load();
  }

 private:
  std::shared_ptr<detail::MemoryAccount> account_for(int rank) {
    std::lock_guard lock(mu_);
    auto& slot = accounts_[rank];
    if (!slot) slot = std::make_shared<detail::MemoryAccount>();
    return slot;
  }

  VendorId vendor_;
  std::shared_ptr<const ClusterTopology> topology_;
  mutable std::mutex mu_;
  std::map<int, std::shared_ptr<detail::MemoryAccount>> accounts_;
};

// ---------------------------------------------------------------------------
// Queue pairs

std::size_t MrHandle::size() const {
  auto locked = buffer_.lock();
  return locked ? locked->bytes.size() : 0;
}

namespace {

struct WorkRequest {
  MrHandle mr;
  std::size_t size = 0;
  double t_post_us = 0.0;
  CompletionEvent event;
};

struct Direction {
  std::deque<WorkRequest> sends;  // posted by the sending endpoint
  std::deque<WorkRequest> recvs;  // posted by the receiving endpoint
  double busy_until_us = 0.0;
};

}  // namespace

struct QueuePair::Shared {
  mutable std::mutex mu;
  bool open = true;
  int rank_a = 0;
  int rank_b = 0;
  LinkSpec link;
  Direction to_b;  // a -> b
  Direction to_a;  // b -> a

  Direction& outgoing(int local) { return local == rank_a ? to_b : to_a; }
  Direction& incoming(int local) { return local == rank_a ? to_a : to_b; }
  const Direction& outgoing(int local) const { return local == rank_a ? to_b : to_a; }
  const Direction& incoming(int local) const { return local == rank_a ? to_a : to_b; }
};

bool QueuePair::is_open() const {
  if (!shared_) return false;
  std::lock_guard lock(shared_->mu);
  return shared_->open;
}

void QueuePair::close() {
  if (!shared_) return;
  std::vector<CompletionEvent> orphans;
  {
    std::lock_guard lock(shared_->mu);
    shared_->open = false;
    for (Direction* d : {&shared_->to_a, &shared_->to_b}) {
      for (auto& wr : d->sends) orphans.push_back(wr.event);
      for (auto& wr : d->recvs) orphans.push_back(wr.event);
      d->sends.clear();
      d->recvs.clear();
    }
  }
  for (auto& ev : orphans) ev.fail(ErrorCode::kQpClosed, "queue pair closed");
}

std::size_t QueuePair::pending_sends() const {
  std::lock_guard lock(shared_->mu);
  return shared_->outgoing(local_).sends.size();
}

std::size_t QueuePair::pending_recvs() const {
  std::lock_guard lock(shared_->mu);
  return shared_->incoming(local_).recvs.size();
}

// ---------------------------------------------------------------------------
// Simulated Net-Plugin adaptor

class SimNetAdaptor final : public NetAdaptor {
 public:
  MrHandle net_register(const DeviceBuffer& buffer) override {
    if (!buffer.valid()) raise(ErrorCode::kWrongSpace, "cannot register an empty handle");
    if (buffer.space() != MemorySpace::kChunk) {
      raise(ErrorCode::kWrongSpace, std::string("only chunk-space buffers can be registered, got ") +
                                        std::string(memory_space_name(buffer.space())));
    }
    MrHandle mr;
    mr.buffer_ = buffer.storage_;
    mr.rank_ = buffer.owner_rank();
    std::lock_guard lock(mu_);
    mr.key_ = ++next_key_[mr.rank_];
    return mr;
  }

  std::pair<QueuePair, QueuePair> connect(int rank_a, int rank_b,
                                          const LinkSpec& link) override {
    auto shared = std::make_shared<QueuePair::Shared>();
    shared->rank_a = rank_a;
    shared->rank_b = rank_b;
    shared->link = link;
    return {QueuePair(rank_a, rank_b, shared), QueuePair(rank_b, rank_a, shared)};
  }

  CompletionEvent net_post_send(QueuePair& qp, const MrHandle& mr, std::size_t size_bytes,
                                double t_post_us) override {
    return post(qp, mr, size_bytes, t_post_us, /*is_send=*/true);
  }

  CompletionEvent net_post_recv(QueuePair& qp, const MrHandle& mr, std::size_t size_bytes,
                                double t_post_us) override {
    return post(qp, mr, size_bytes, t_post_us, /*is_send=*/false);
  }

 private:
  static CompletionEvent post(QueuePair& qp, const MrHandle& mr, std::size_t size_bytes,
                              double t_post_us, bool is_send) {
    if (!qp.shared_) raise(ErrorCode::kQpClosed, "queue pair not connected");
    if (!mr.valid()) raise(ErrorCode::kValidationError, "memory region no longer valid");
    if (mr.rank() != qp.local_rank()) {
      raise(ErrorCode::kValidationError, "memory region belongs to another rank");
    }
    if (size_bytes > mr.size()) {
      raise(ErrorCode::kSizeMismatch, "post of " + std::to_string(size_bytes) +
                                          " bytes exceeds registered region of " +
                                          std::to_string(mr.size()));
    }
    WorkRequest wr{mr, size_bytes, t_post_us, CompletionEvent()};
    CompletionEvent handle = wr.event;

    auto& shared = *qp.shared_;
    std::vector<std::pair<CompletionEvent, double>> completed;
    std::optional<std::string> mismatch;
    {
      std::lock_guard lock(shared.mu);
      if (!shared.open) raise(ErrorCode::kQpClosed, "queue pair is closed");
      Direction& dir = is_send ? shared.outgoing(qp.local_rank()) : shared.incoming(qp.local_rank());
      (is_send ? dir.sends : dir.recvs).push_back(std::move(wr));

      while (!dir.sends.empty() && !dir.recvs.empty()) {
        WorkRequest s = std::move(dir.sends.front());
        WorkRequest r = std::move(dir.recvs.front());
        dir.sends.pop_front();
        dir.recvs.pop_front();
        if (s.size != r.size) {
          mismatch = "send of " + std::to_string(s.size) + " bytes matched recv of " +
                     std::to_string(r.size);
          s.event.fail(ErrorCode::kSizeMismatch, *mismatch);
          r.event.fail(ErrorCode::kSizeMismatch, *mismatch);
          continue;
        }
        auto src = s.mr.buffer_.lock();
        auto dst = r.mr.buffer_.lock();
        if (!src || !dst) {
          s.event.fail(ErrorCode::kValidationError, "memory region released in flight");
          r.event.fail(ErrorCode::kValidationError, "memory region released in flight");
          continue;
        }
        if (s.size > 0) std::memcpy(dst->bytes.data(), src->bytes.data(), s.size);
        const double start = std::max({s.t_post_us, r.t_post_us, dir.busy_until_us});
        const double done = start + wire_time(shared.link, s.size);
        dir.busy_until_us = done;
        completed.emplace_back(s.event, done);
        completed.emplace_back(r.event, done);
      }
    }
    for (auto& [ev, t] : completed) ev.complete(t);
    if (mismatch) raise(ErrorCode::kSizeMismatch, *mismatch);
    return handle;
  }

  std::mutex mu_;
  std::map<int, std::uint64_t> next_key_;
};

// ---------------------------------------------------------------------------
// Simulated CCL adaptor

class SimCclAdaptor final : public CclAdaptor {
 public:
  SimCclAdaptor(VendorId vendor, std::string name,
                std::shared_ptr<const ClusterTopology> topology, DeviceAdaptor& device)
      : vendor_(std::move(vendor)),
        name_(std::move(name)),
        topology_(std::move(topology)),
        device_(device) {}

  const VendorId& vendor() const override { return vendor_; }
  std::string_view library_name() const override { return name_; }

  CollectiveResult ccl_collective(std::span<const int> group, CollectiveOp op, DataType type,
                                  std::span<const DeviceBuffer> inputs, int root) override {
    if (group.empty()) raise(ErrorCode::kEmptyGroup, "collective over an empty group");
    check_vendor(group);
    if (inputs.size() != group.size()) {
      raise(ErrorCode::kShapeError, "expected one input per group member");
    }
    const std::size_t size = inputs.front().size();
    const std::size_t elem = data_type_size(type);
    for (const auto& in : inputs) {
      if (in.size() != size) raise(ErrorCode::kShapeError, "inputs differ in size");
    }
    if (size % elem != 0) {
      raise(ErrorCode::kShapeError, "payload is not a whole number of elements");
    }
    const auto k = group.size();

    CollectiveResult result;
    std::uint64_t cost_bytes = size;
    switch (op) {
      case CollectiveOp::kAllReduceSum: {
        const Bytes sum = reduce_in_order(type, inputs);
        for (std::size_t i = 0; i < k; ++i) result.outputs.push_back(alloc_with(group[i], sum));
        break;
      }
      case CollectiveOp::kAllGather: {
        Bytes all;
        all.reserve(size * k);
        for (const auto& in : inputs) all.insert(all.end(), in.bytes().begin(), in.bytes().end());
        for (std::size_t i = 0; i < k; ++i) result.outputs.push_back(alloc_with(group[i], all));
        cost_bytes = all.size();
        break;
      }
      case CollectiveOp::kReduceScatterSum: {
        if ((size / elem) % k != 0) {
          raise(ErrorCode::kShapeError, "reducescatter input of " + std::to_string(size / elem) +
                                            " elements is not divisible by " + std::to_string(k));
        }
        const Bytes sum = reduce_in_order(type, inputs);
        const std::size_t shard = size / k;
        for (std::size_t i = 0; i < k; ++i) {
          Bytes piece(sum.begin() + static_cast<std::ptrdiff_t>(i * shard),
                      sum.begin() + static_cast<std::ptrdiff_t>((i + 1) * shard));
          result.outputs.push_back(alloc_with(group[i], piece));
        }
        break;
      }
      case CollectiveOp::kBroadcast: {
        auto it = std::find(group.begin(), group.end(), root);
        if (it == group.end()) {
          raise(ErrorCode::kRootNotInGroup, "root " + std::to_string(root) + " not in group");
        }
        const auto& src = inputs[static_cast<std::size_t>(it - group.begin())];
        const Bytes payload(src.bytes().begin(), src.bytes().end());
        for (std::size_t i = 0; i < k; ++i) result.outputs.push_back(alloc_with(group[i], payload));
        break;
      }
    }
    result.duration_us = ring_collective_time(op, static_cast<int>(k), cost_bytes, group_link(group));
    return result;
  }

  P2pDelivery ccl_p2p(int send_rank, int recv_rank, const DeviceBuffer& payload,
                      double t_start_us) override {
    check_pair(send_rank, recv_rank, payload);
    P2pDelivery out;
    out.buffer = alloc_with(recv_rank, Bytes(payload.bytes().begin(), payload.bytes().end()));
    out.record = make_record(send_rank, recv_rank, payload.size(), t_start_us);
    return out;
  }

  TransferRecord ccl_send(Transport& transport, int send_rank, int recv_rank,
                          const DeviceBuffer& payload) override {
    check_pair(send_rank, recv_rank, payload);
    const double t0 = transport.clock(send_rank).now();
    transport.post(send_rank, recv_rank,
                   Message{tags::kCcl, Bytes(payload.bytes().begin(), payload.bytes().end()), t0});
    TransferRecord record = make_record(send_rank, recv_rank, payload.size(), t0);
    transport.clock(send_rank).advance_to(record.t_end_us);
    return record;
  }

  P2pDelivery ccl_recv(Transport& transport, int recv_rank, int send_rank,
                       std::size_t size_bytes) override {
    Message msg = transport.receive(recv_rank, send_rank, tags::kCcl);
    if (msg.bytes.size() != size_bytes) {
      raise(ErrorCode::kSizeMismatch, "ccl_recv expected " + std::to_string(size_bytes) +
                                          " bytes, got " + std::to_string(msg.bytes.size()));
    }
    const double t0 = std::max(msg.sent_at_us, transport.clock(recv_rank).now());
    P2pDelivery out;
    out.record = make_record(send_rank, recv_rank, size_bytes, t0);
    out.buffer = alloc_with(recv_rank, std::move(msg.bytes));
    transport.clock(recv_rank).advance_to(out.record.t_end_us);
    transport.trace().append(out.record);
    return out;
  }

 private:
  void check_vendor(std::span<const int> group) const {
    for (int rank : group) {
      const auto& v = topology_->vendor_of_rank(rank);
      if (v != vendor_) {
        raise(ErrorCode::kMixedVendorGroup,
              name_ + " cannot drive rank " + std::to_string(rank) + " of vendor '" +
                  v.name() + "'");
      }
    }
  }

  void check_pair(int send_rank, int recv_rank, const DeviceBuffer& payload) const {
    if (send_rank == recv_rank) raise(ErrorCode::kSelfSend, "ccl_p2p to self");
    const int pair[] = {send_rank, recv_rank};
    check_vendor(pair);
    if (payload.valid() && payload.owner_rank() != send_rank) {
      raise(ErrorCode::kValidationError, "payload is not owned by the sending rank");
    }
  }

  TransferRecord make_record(int send_rank, int recv_rank, std::size_t size,
                             double t_start_us) const {
    const LinkSpec link = topology_->link_between(send_rank, recv_rank);
    const double d = wire_time(link, size);
    TransferRecord r;
    r.src_rank = send_rank;
    r.dst_rank = recv_rank;
    r.path = RecordPath::kCcl;
    r.size_bytes = size;
    r.t_start_us = t_start_us;
    r.t_end_us = t_start_us + d;
    r.segments.push_back({segment_kind_for(link.kind), d});
    return r;
  }

  static Bytes reduce_in_order(DataType type, std::span<const DeviceBuffer> inputs) {
    Bytes acc(inputs.front().bytes().begin(), inputs.front().bytes().end());
    for (std::size_t i = 1; i < inputs.size(); ++i) reduce_sum_into(type, acc, inputs[i].bytes());
    return acc;
  }

  DeviceBuffer alloc_with(int rank, const Bytes& bytes) {
    DeviceBuffer out = device_.dev_alloc(rank, bytes.size(), MemorySpace::kDevice);
    if (!bytes.empty()) std::memcpy(out.bytes().data(), bytes.data(), bytes.size());
    return out;
  }

  // Bottleneck link spanning every member: the node fabric when the group
  // is on one node, otherwise the slowest of the fabrics and NIC links.
  LinkSpec group_link(std::span<const int> group) const { return ring_link(*topology_, group); }

  VendorId vendor_;
  std::string name_;
  std::shared_ptr<const ClusterTopology> topology_;
  DeviceAdaptor& device_;
};

VendorBackend make_sim_backend(const VendorId& vendor,
                               std::shared_ptr<const ClusterTopology> topology) {
  std::string name;
  if (vendor == nvidia_vendor()) {
    name = "nccl-sim";
  } else if (vendor == amd_vendor()) {
    name = "rccl-sim";
  } else {
    name = "ccl-sim(" + vendor.name() + ")";
  }
  VendorBackend backend;
  backend.device = std::make_unique<SimDeviceAdaptor>(vendor, topology);
  backend.net = std::make_unique<SimNetAdaptor>();
  backend.ccl = std::make_unique<SimCclAdaptor>(vendor, std::move(name), std::move(topology),
                                                *backend.device);
  return backend;
}

}  // namespace hetcomm
