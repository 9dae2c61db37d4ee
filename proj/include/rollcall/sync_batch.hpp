#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "rollcall/domain.hpp"
#include "rollcall/json_io.hpp"

namespace rollcall {

inline constexpr std::size_t kMaxBatchEvents = 500;

/// Sequence-numbered slice of an edge node's event log. An empty batch has
/// first_sequence = last_sequence + 1.
struct SyncBatch {
  std::string edge_node_id;
  std::uint64_t first_sequence = 1;
  std::uint64_t last_sequence = 0;
  std::vector<AttendanceEvent> events;
  std::uint32_t checksum = 0;

  bool empty() const { return events.empty(); }
};

/// Fixed-order, line-based UTF-8 rendering that the checksum covers.
/// Timestamps are RFC-3339 UTC with millisecond precision.
std::string canonical_serialization(const SyncBatch& batch);
std::uint32_t compute_checksum(const SyncBatch& batch);

/// Builds a sealed batch; `events` must carry contiguous edge sequences.
/// `after` is the high-water mark the batch continues from.
SyncBatch make_batch(std::string edge_node_id, std::uint64_t after,
                     std::vector<AttendanceEvent> events);

/// Throws kBatchTooLarge, kInvalidArgument (non-contiguous) or
/// kChecksumMismatch.
void verify_batch(const SyncBatch& batch);

void to_json(Json& j, const SyncBatch& b);
void from_json(const Json& j, SyncBatch& b);

}  // namespace rollcall
