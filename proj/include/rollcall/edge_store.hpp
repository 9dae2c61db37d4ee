#pragma once

#include <cstdint>
#include <deque>
#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <ostream>
#include <set>
#include <shared_mutex>
#include <string>
#include <vector>

#include "rollcall/domain.hpp"
#include "rollcall/journal.hpp"
#include "rollcall/json_io.hpp"
#include "rollcall/sync_batch.hpp"

namespace rollcall {

/// Roster/card changes pulled from central.
struct RosterDelta {
  std::uint64_t version = 0;
  std::vector<StudentRecord> students;
  std::vector<RfidCard> cards;
  /// Manual marks made at central; kept on the edge as a read model only.
  std::vector<AttendanceEvent> manual_events;
  std::optional<Json> policy;
};

/// Durable edge-node state on top of a Journal: roster and card replica,
/// the append-only attendance log with gap-free edge sequences, the audit
/// trail, and the sync high-water mark.
///
/// All mutations are written to the journal (and flushed) before they become
/// visible in memory, so a reopened store reproduces exactly what callers
/// were told succeeded. Callers are expected to funnel writes through one
/// writer (the attendance engine); reads may come from any thread.
class EdgeStore {
 public:
  struct Options {
    std::string node_id = "edge";
    std::uint64_t max_bytes = 0;
    bool sync = true;
    /// Recorded once, when the journal is created.
    Timestamp created_at{};
  };

  EdgeStore(std::filesystem::path path, Options options);

  const std::string& node_id() const { return node_id_; }
  const std::filesystem::path& path() const { return journal_.path(); }

  // -- writes ---------------------------------------------------------------

  /// Throws kUniquenessViolation, kStorageFull, kEdgeStoreUnavailable.
  std::uint64_t append_event(AttendanceEvent event);
  /// One scan: its audit entry plus, when accepted, the new event.
  std::optional<std::uint64_t> record_scan(std::optional<AttendanceEvent> event,
                                           const AuditEntry& audit);
  /// Appends closure events and marks the day closed, atomically.
  std::vector<AttendanceEvent> record_closure(SchoolDay day, std::vector<AttendanceEvent> events);
  /// Superseding version of an existing lineage (same event_id, higher
  /// revision).
  std::uint64_t record_revision(AttendanceEvent revised, const AuditEntry& audit);
  void append_audit(const AuditEntry& audit);
  void apply_roster(const RosterDelta& delta);
  void upsert_student(const StudentRecord& student);
  void upsert_card(const RfidCard& card);
  /// Throws kRegressionRejected when below the current mark and
  /// kInvalidArgument when beyond the last sequence.
  void mark_synced(std::uint64_t high_water);
  /// Moves the mark back after central reports a lower high-water.
  void rewind_synced(std::uint64_t high_water);

  // -- reads ----------------------------------------------------------------

  SyncBatch pending_batch(std::size_t max_n) const;
  std::optional<AttendanceEvent> current_event(std::string_view student_code, SchoolDay day) const;
  /// Every stored version in sequence order.
  std::vector<AttendanceEvent> log() const;
  /// Latest version per (student, day).
  std::vector<AttendanceEvent> current_events() const;
  std::vector<AttendanceEvent> current_events_on(SchoolDay day) const;
  std::vector<AttendanceEvent> manual_events() const;

  Roster roster() const;
  CardTable cards() const;
  std::optional<RfidCard> card(const CardUid& uid) const;
  std::optional<StudentRecord> student(std::string_view code) const;
  std::vector<AuditEntry> audit() const;
  std::size_t audit_count(AuditAction action) const;
  std::optional<Json> central_policy() const;

  std::uint64_t last_sequence() const;
  std::uint64_t high_water_synced() const;
  std::uint64_t roster_version() const;
  bool is_closed(SchoolDay day) const;
  std::set<SchoolDay> closed_days() const;
  Timestamp created_at() const;
  std::uint64_t size_bytes() const;

  /// Raw event log as one JSON object per line, in sequence order.
  void export_event_log(std::ostream& out) const;

 private:
  using DayKey = std::pair<std::string, SchoolDay>;

  void commit(Json record);
  void apply(const Json& record);
  void apply_event(const AttendanceEvent& event);
  void check_append(const AttendanceEvent& event) const;

  mutable std::shared_mutex mu_;
  mutable std::mutex write_mu_;
  Journal journal_;
  std::string node_id_;
  Timestamp created_at_{};

  std::deque<AttendanceEvent> log_;
  std::map<DayKey, std::uint64_t> current_;
  std::set<SchoolDay> closed_;
  Roster roster_;
  CardTable cards_;
  std::map<EventId, AttendanceEvent> manual_;
  std::optional<Json> policy_;
  std::deque<AuditEntry> audit_;
  std::uint64_t high_water_ = 0;
  std::uint64_t roster_version_ = 0;
};

}  // namespace rollcall
