#include "rollcall/sync.hpp"

#include <algorithm>

#include "rollcall/error.hpp"
#include "rollcall/log.hpp"

namespace rollcall {

std::string DirectTransport::authenticate(const std::string& edge_node_id, const std::string& secret) {
  return central_.issue_edge_token(edge_node_id, secret).token;
}

PushResult DirectTransport::push(const std::string& token, const SyncBatch& batch) {
  return central_.push_events(central_.authenticate(token), batch);
}

RosterDelta DirectTransport::pull(const std::string& token, std::uint64_t since) {
  return central_.pull_roster(central_.authenticate(token), since);
}

void PartitionableTransport::gate() {
  ++calls_;
  if (partitioned_) {
    ++failed_;
    throw Error(ErrorCode::kNetwork, "link partitioned");
  }
}

void PartitionableTransport::after_call() {
  if (drop_replies_) {
    ++failed_;
    throw Error(ErrorCode::kNetwork, "reply lost");
  }
}

std::string PartitionableTransport::authenticate(const std::string& edge_node_id, const std::string& secret) {
  gate();
  return inner_.authenticate(edge_node_id, secret);
}

PushResult PartitionableTransport::push(const std::string& token, const SyncBatch& batch) {
  gate();
  auto result = inner_.push(token, batch);
  after_call();
  return result;
}

RosterDelta PartitionableTransport::pull(const std::string& token, std::uint64_t since) {
  gate();
  return inner_.pull(token, since);
}

Duration backoff_delay(std::uint64_t failures, Duration base, Duration cap) {
  if (failures == 0) return Duration::zero();
  auto delay = base;
  for (std::uint64_t i = 1; i < failures && delay < cap; ++i) delay *= 2;
  return std::min(delay, cap);
}

SyncWorker::SyncWorker(AttendanceEngine& engine, SyncTransport& transport, Clock& clock, Options options)
    : engine_(engine), transport_(transport), clock_(clock), options_(std::move(options)) {
  if (options_.batch_size == 0 || options_.batch_size > kMaxBatchEvents) {
    throw Error(ErrorCode::kConfig, "sync batch size must be 1.." + std::to_string(kMaxBatchEvents));
  }
}

template <typename F>
auto SyncWorker::with_token(F&& call) {
  if (token_.empty()) token_ = transport_.authenticate(options_.edge_node_id, options_.secret);
  try {
    return call(token_);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::kAuthExpired) throw;
    token_.clear();
    ++reauth_;
    token_ = transport_.authenticate(options_.edge_node_id, options_.secret);
    return call(token_);
  }
}

SyncReport SyncWorker::sync_once() {
  SyncReport report;
  reauth_ = 0;
  auto& store = engine_.store();

  auto local_version = store.roster_version();
  auto delta = with_token([&](const std::string& t) { return transport_.pull(t, local_version); });
  bool changed = delta.version != local_version || !delta.students.empty() || !delta.cards.empty() ||
                 !delta.manual_events.empty() || (delta.policy && delta.policy != store.central_policy());
  if (changed) engine_.apply_roster(delta);
  report.roster_version = delta.version;

  // Each pass either advances the mark or rewinds it to central's; a
  // rewind can only happen once per cycle unless central loses data again.
  for (int rewinds_left = 3;;) {
    auto batch = store.pending_batch(options_.batch_size);
    if (batch.empty()) break;
    auto result = with_token([&](const std::string& t) { return transport_.push(t, batch); });
    if (result.sequence_gap) {
      if (rewinds_left-- == 0) throw Error(ErrorCode::kSequenceGap, "central keeps reporting a gap");
      log(LogLevel::kWarn, "sync",
          "central high-water " + std::to_string(result.accepted_high_water) + " is behind; rewinding");
      engine_.rewind_synced(result.accepted_high_water);
      ++report.rewinds;
      continue;
    }
    auto ack = std::min(result.accepted_high_water, batch.last_sequence);
    if (ack > store.high_water_synced()) engine_.mark_synced(ack);
    ++report.batches;
    report.events_sent += batch.events.size();
    report.duplicates += result.duplicates;
  }
  report.reauthentications = reauth_;
  return report;
}

void SyncWorker::run(std::stop_token stop) {
  while (!stop.stop_requested()) {
    Duration delay;
    try {
      auto report = sync_once();
      std::lock_guard lock(status_mu_);
      ++status_.cycles;
      if (status_.consecutive_failures > 0) {
        log(LogLevel::kInfo, "sync",
            "link restored after " + std::to_string(status_.consecutive_failures) + " failed cycles");
      }
      status_.consecutive_failures = 0;
      status_.last_success = clock_.now();
      status_.last_error.clear();
      delay = status_.next_delay = options_.interval;
      if (report.events_sent > 0) {
        log(LogLevel::kInfo, "sync", "pushed " + std::to_string(report.events_sent) + " events");
      }
    } catch (const std::exception& e) {
      std::lock_guard lock(status_mu_);
      ++status_.cycles;
      ++status_.consecutive_failures;
      bool repeat = status_.consecutive_failures > 1 && status_.last_error == e.what();
      status_.last_error = e.what();
      delay = status_.next_delay =
          backoff_delay(status_.consecutive_failures, options_.backoff_base, options_.backoff_cap);
      log(repeat ? LogLevel::kDebug : LogLevel::kWarn, "sync", std::string("cycle failed: ") + e.what());
    }
    clock_.sleep_for(delay, stop);
  }
}

SyncStatus SyncWorker::status() const {
  std::lock_guard lock(status_mu_);
  return status_;
}

}  // namespace rollcall
