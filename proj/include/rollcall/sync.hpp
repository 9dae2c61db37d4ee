#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <mutex>
#include <optional>
#include <stop_token>
#include <string>

#include "rollcall/central.hpp"
#include "rollcall/edge_store.hpp"
#include "rollcall/engine.hpp"
#include "rollcall/sync_batch.hpp"
#include "rollcall/time.hpp"

namespace rollcall {

/// Edge-side view of the central sync endpoints. Implementations throw
/// Error: kNetwork / kConnectionRefused when central is unreachable,
/// kAuthExpired for a stale token, and the central error codes otherwise.
class SyncTransport {
 public:
  virtual ~SyncTransport() = default;
  virtual std::string authenticate(const std::string& edge_node_id, const std::string& secret) = 0;
  virtual PushResult push(const std::string& token, const SyncBatch& batch) = 0;
  virtual RosterDelta pull(const std::string& token, std::uint64_t since) = 0;
};

/// In-process transport straight into a CentralService.
class DirectTransport final : public SyncTransport {
 public:
  explicit DirectTransport(CentralService& central) : central_(central) {}

  std::string authenticate(const std::string& edge_node_id, const std::string& secret) override;
  PushResult push(const std::string& token, const SyncBatch& batch) override;
  RosterDelta pull(const std::string& token, std::uint64_t since) override;

 private:
  CentralService& central_;
};

/// Wraps another transport with a switchable network partition. While
/// partitioned every call fails with kNetwork. `drop_replies` lets pushes
/// reach central but loses the response, which exercises replays.
class PartitionableTransport final : public SyncTransport {
 public:
  explicit PartitionableTransport(SyncTransport& inner) : inner_(inner) {}

  void set_partitioned(bool partitioned) { partitioned_ = partitioned; }
  bool partitioned() const { return partitioned_; }
  void set_drop_replies(bool drop) { drop_replies_ = drop; }
  std::uint64_t calls() const { return calls_; }
  std::uint64_t failed_calls() const { return failed_; }

  std::string authenticate(const std::string& edge_node_id, const std::string& secret) override;
  PushResult push(const std::string& token, const SyncBatch& batch) override;
  RosterDelta pull(const std::string& token, std::uint64_t since) override;

 private:
  void gate();
  void after_call();

  SyncTransport& inner_;
  std::atomic<bool> partitioned_{false};
  std::atomic<bool> drop_replies_{false};
  std::atomic<std::uint64_t> calls_{0};
  std::atomic<std::uint64_t> failed_{0};
};

struct SyncReport {
  std::uint64_t roster_version = 0;
  std::uint64_t batches = 0;
  std::uint64_t events_sent = 0;
  std::uint64_t duplicates = 0;
  std::uint64_t rewinds = 0;
  std::uint64_t reauthentications = 0;
};

struct SyncStatus {
  std::uint64_t cycles = 0;
  std::uint64_t consecutive_failures = 0;
  std::optional<Timestamp> last_success;
  std::string last_error;
  Duration next_delay{};
};

/// Duration to wait after `failures` consecutive failed cycles:
/// base * 2^(failures - 1), capped.
Duration backoff_delay(std::uint64_t failures, Duration base, Duration cap);

/// Pull-then-push loop for one edge node. The worker never touches the
/// scan path beyond the engine's own lock for roster and high-water
/// updates.
class SyncWorker {
 public:
  struct Options {
    std::string edge_node_id;
    std::string secret;
    Duration interval = std::chrono::seconds(30);
    std::size_t batch_size = kMaxBatchEvents;
    Duration backoff_base = std::chrono::seconds(5);
    Duration backoff_cap = std::chrono::minutes(5);
  };

  SyncWorker(AttendanceEngine& engine, SyncTransport& transport, Clock& clock, Options options);

  /// One cycle: pull the roster, then push until the log is drained.
  /// Throws the transport's error when the cycle cannot complete.
  SyncReport sync_once();

  /// Runs cycles every interval; failures back off exponentially and are
  /// logged, never thrown.
  void run(std::stop_token stop);

  SyncStatus status() const;

 private:
  template <typename F>
  auto with_token(F&& call);

  AttendanceEngine& engine_;
  SyncTransport& transport_;
  Clock& clock_;
  Options options_;
  std::string token_;
  std::uint64_t reauth_ = 0;

  mutable std::mutex status_mu_;
  SyncStatus status_;
};

}  // namespace rollcall
