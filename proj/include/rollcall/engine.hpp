#pragma once

#include <mutex>
#include <optional>
#include <stop_token>
#include <string>
#include <string_view>
#include <vector>

#include "rollcall/domain.hpp"
#include "rollcall/edge_store.hpp"
#include "rollcall/policy.hpp"
#include "rollcall/time.hpp"

namespace rollcall {

enum class RejectReason {
  kBeforeWindow,
  kAfterClosure,
  kCardBlocked,
  kUnknownCard,
  kUnlinkedCard,
  kNonSchoolDay,
};

std::string_view to_string(RejectReason reason);

struct ScanOutcome {
  enum class Kind { kRecorded, kDuplicate, kRejected };

  Kind kind = Kind::kRejected;
  /// Recorded: the new status. Duplicate: the status already on file.
  AttendanceStatus status = AttendanceStatus::kPresent;
  RejectReason reason = RejectReason::kUnknownCard;
  std::optional<std::string> student_code;

  static ScanOutcome recorded(AttendanceStatus s, std::string code) {
    return {Kind::kRecorded, s, {}, std::move(code)};
  }
  static ScanOutcome duplicate(AttendanceStatus s, std::string code) {
    return {Kind::kDuplicate, s, {}, std::move(code)};
  }
  static ScanOutcome rejected(RejectReason r, std::optional<std::string> code = std::nullopt) {
    return {Kind::kRejected, {}, r, std::move(code)};
  }

  std::string describe() const;
  bool operator==(const ScanOutcome&) const = default;
};

/// Edge-side attendance rules over an EdgeStore. Every command takes the
/// same lock, which is the single writer for the day ledger; reads of the
/// store may happen concurrently from other threads.
class AttendanceEngine {
 public:
  AttendanceEngine(EdgeStore& store, TimeWindowPolicy policy, Clock& clock,
                   EventIdSource ids = &EventId::random);

  /// Resolves uid -> card -> student, checks card state, school day, window
  /// and daily uniqueness. Every call writes one Scan audit entry. Throws
  /// kEdgeStoreUnavailable when the store cannot persist the outcome.
  ScanOutcome process_scan(const CardUid& uid, Timestamp now,
                           std::string_view actor = "reader:local");

  /// Marks every active student without an event Absent at the closure
  /// instant. A second call for the same day returns an empty list.
  /// Throws kNonSchoolDay, kClosureNotDue.
  std::vector<AttendanceEvent> run_closure(SchoolDay day);

  /// Runs closure for every past school day since store creation that has
  /// reached its closure instant but was never closed.
  std::vector<AttendanceEvent> run_missed_closures();

  /// Absent -> Justified as a superseding Manual revision.
  /// Throws kForbidden, kNoEvent, kNotAbsent.
  AttendanceEvent justify(const std::string& student_code, SchoolDay day, const Actor& actor,
                          std::string_view note);

  /// Edge-local card state change (normally cards arrive from central).
  RfidCard set_card_state(const CardUid& uid, CardState state, const Actor& actor);

  void apply_roster(const RosterDelta& delta);
  void mark_synced(std::uint64_t high_water);
  void rewind_synced(std::uint64_t high_water);

  /// Sleeps on the clock until each closure instant and closes the day.
  void run_closure_scheduler(std::stop_token stop);
  /// Next closure instant strictly after `now` on a school day.
  Timestamp next_closure_after(Timestamp now) const;

  TimeWindowPolicy policy() const;
  void set_policy(TimeWindowPolicy policy);
  EdgeStore& store() { return store_; }
  const EdgeStore& store() const { return store_; }
  Clock& clock() { return clock_; }

 private:
  std::vector<AttendanceEvent> close_day_locked(SchoolDay day);

  mutable std::mutex mu_;
  EdgeStore& store_;
  TimeWindowPolicy policy_;
  Clock& clock_;
  EventIdSource ids_;
};

}  // namespace rollcall
