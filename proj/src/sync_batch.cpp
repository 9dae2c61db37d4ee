#include "rollcall/sync_batch.hpp"

#include "rollcall/error.hpp"
#include "rollcall/journal.hpp"

namespace rollcall {

namespace {

void append_field(std::string& out, std::string_view field) {
  for (char c : field) {
    switch (c) {
      case '\\': out += "\\\\"; break;
      case '|': out += "\\|"; break;
      case '\n': out += "\\n"; break;
      default: out.push_back(c);
    }
  }
}

}  // namespace

std::string canonical_serialization(const SyncBatch& batch) {
  std::string out = "rollcall-batch/1\n";
  append_field(out, batch.edge_node_id);
  out += '\n';
  out += std::to_string(batch.first_sequence) + '\n';
  out += std::to_string(batch.last_sequence) + '\n';
  for (const auto& e : batch.events) {
    out += e.event_id.to_string();
    out += '|';
    append_field(out, e.student_code);
    out += '|';
    out += format_date(e.school_day);
    out += '|';
    out += to_string(e.status);
    out += '|';
    out += format_timestamp(e.recorded_at);
    out += '|';
    out += to_string(e.method);
    out += '|';
    if (e.recorded_by) append_field(out, *e.recorded_by);
    out += '|';
    out += std::to_string(e.edge_sequence);
    out += '|';
    out += std::to_string(e.revision);
    out += '\n';
  }
  return out;
}

std::uint32_t compute_checksum(const SyncBatch& batch) {
  return crc32_of(canonical_serialization(batch));
}

SyncBatch make_batch(std::string edge_node_id, std::uint64_t after,
                     std::vector<AttendanceEvent> events) {
  SyncBatch batch;
  batch.edge_node_id = std::move(edge_node_id);
  batch.first_sequence = after + 1;
  batch.last_sequence = after + events.size();
  batch.events = std::move(events);
  batch.checksum = compute_checksum(batch);
  return batch;
}

void verify_batch(const SyncBatch& batch) {
  if (batch.events.size() > kMaxBatchEvents) {
    throw Error(ErrorCode::kBatchTooLarge, std::to_string(batch.events.size()) + " events");
  }
  if (batch.last_sequence + 1 != batch.first_sequence + batch.events.size()) {
    throw Error(ErrorCode::kInvalidArgument, "sequence range does not match event count");
  }
  for (std::size_t i = 0; i < batch.events.size(); ++i) {
    if (batch.events[i].edge_sequence != batch.first_sequence + i) {
      throw Error(ErrorCode::kInvalidArgument, "non-contiguous edge sequences");
    }
  }
  if (compute_checksum(batch) != batch.checksum) throw Error(ErrorCode::kChecksumMismatch);
}

void to_json(Json& j, const SyncBatch& b) {
  j = Json{{"edge_node_id", b.edge_node_id},
           {"first_sequence", b.first_sequence},
           {"last_sequence", b.last_sequence},
           {"checksum", b.checksum},
           {"events", b.events}};
}

void from_json(const Json& j, SyncBatch& b) {
  b.edge_node_id = j.at("edge_node_id").get<std::string>();
  b.first_sequence = j.at("first_sequence").get<std::uint64_t>();
  b.last_sequence = j.at("last_sequence").get<std::uint64_t>();
  b.checksum = j.at("checksum").get<std::uint32_t>();
  b.events = j.at("events").get<std::vector<AttendanceEvent>>();
}

}  // namespace rollcall
