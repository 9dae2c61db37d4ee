#include "rollcall/engine.hpp"

#include "rollcall/error.hpp"

namespace rollcall {

namespace {

template <typename F>
auto guard_store(F&& f) {
  try {
    return f();
  } catch (const Error& e) {
    if (e.code() == ErrorCode::kStorageFull || e.code() == ErrorCode::kEdgeStoreUnavailable) {
      throw Error(ErrorCode::kEdgeStoreUnavailable, e.what());
    }
    throw;
  }
}

}  // namespace

std::string_view to_string(RejectReason reason) {
  switch (reason) {
    case RejectReason::kBeforeWindow: return "BeforeWindow";
    case RejectReason::kAfterClosure: return "AfterClosure";
    case RejectReason::kCardBlocked: return "CardBlocked";
    case RejectReason::kUnknownCard: return "UnknownCard";
    case RejectReason::kUnlinkedCard: return "UnlinkedCard";
    case RejectReason::kNonSchoolDay: return "NonSchoolDay";
  }
  return "Unknown";
}

std::string ScanOutcome::describe() const {
  std::string out;
  switch (kind) {
    case Kind::kRecorded: out = "recorded " + std::string(to_string(status)); break;
    case Kind::kDuplicate: out = "duplicate " + std::string(to_string(status)); break;
    case Kind::kRejected: out = "rejected " + std::string(to_string(reason)); break;
  }
  if (student_code) out += " " + *student_code;
  return out;
}

AttendanceEngine::AttendanceEngine(EdgeStore& store, TimeWindowPolicy policy, Clock& clock,
                                   EventIdSource ids)
    : store_(store), policy_(std::move(policy)), clock_(clock), ids_(std::move(ids)) {
  policy_.validate();
  // First draw seeds the CSPRNG; pay for it here rather than on the first tap.
  (void)EventId::random();
}

ScanOutcome AttendanceEngine::process_scan(const CardUid& uid, Timestamp now,
                                           std::string_view actor) {
  std::lock_guard lock(mu_);
  auto outcome = [&]() -> ScanOutcome {
    auto card = store_.card(uid);
    if (!card) return ScanOutcome::rejected(RejectReason::kUnknownCard);
    if (card->state == CardState::kBlocked) {
      return ScanOutcome::rejected(RejectReason::kCardBlocked, card->linked_student);
    }
    if (!card->linked_student) return ScanOutcome::rejected(RejectReason::kUnlinkedCard);
    // A card whose student left the roster has no usable linkage either.
    auto student = store_.student(*card->linked_student);
    if (!student || !student->active) {
      return ScanOutcome::rejected(RejectReason::kUnlinkedCard, card->linked_student);
    }
    auto local = policy_.timezone.to_local(now);
    if (!policy_.calendar.is_school_day(local.day)) {
      return ScanOutcome::rejected(RejectReason::kNonSchoolDay, student->student_code);
    }
    auto window = classify(policy_, local.time_of_day);
    if (window == WindowClass::kBeforeWindow) {
      return ScanOutcome::rejected(RejectReason::kBeforeWindow, student->student_code);
    }
    if (window == WindowClass::kAfterClosure) {
      return ScanOutcome::rejected(RejectReason::kAfterClosure, student->student_code);
    }
    if (auto existing = store_.current_event(student->student_code, local.day)) {
      return ScanOutcome::duplicate(existing->status, student->student_code);
    }
    return ScanOutcome::recorded(
        window == WindowClass::kPresent ? AttendanceStatus::kPresent : AttendanceStatus::kLate,
        student->student_code);
  }();

  std::optional<AttendanceEvent> event;
  if (outcome.kind == ScanOutcome::Kind::kRecorded) {
    event = AttendanceEvent{ids_(),
                            *outcome.student_code,
                            policy_.timezone.to_local(now).day,
                            outcome.status,
                            now,
                            CaptureMethod::kRfid,
                            std::nullopt,
                            0,
                            0};
  }
  AuditEntry audit{now, std::string(actor), AuditAction::kScan, uid.to_string(), outcome.describe()};
  guard_store([&] { return store_.record_scan(std::move(event), audit); });
  return outcome;
}

std::vector<AttendanceEvent> AttendanceEngine::close_day_locked(SchoolDay day) {
  if (!policy_.calendar.is_school_day(day)) throw Error(ErrorCode::kNonSchoolDay, format_date(day));
  if (store_.is_closed(day)) return {};  // closure already ran
  auto closure_at = policy_.closure_instant(day);
  if (clock_.now() < closure_at) {
    throw Error(ErrorCode::kClosureNotDue, format_date(day) + " closes at " + format_timestamp(closure_at));
  }
  std::vector<AttendanceEvent> absent;
  for (const auto& student : store_.roster().active_students()) {
    if (store_.current_event(student.student_code, day)) continue;
    absent.push_back(AttendanceEvent{ids_(), student.student_code, day, AttendanceStatus::kAbsent,
                                     closure_at, CaptureMethod::kSystemClosure, std::nullopt, 0, 0});
  }
  return guard_store([&] { return store_.record_closure(day, std::move(absent)); });
}

std::vector<AttendanceEvent> AttendanceEngine::run_closure(SchoolDay day) {
  std::lock_guard lock(mu_);
  return close_day_locked(day);
}

std::vector<AttendanceEvent> AttendanceEngine::run_missed_closures() {
  std::lock_guard lock(mu_);
  auto now = clock_.now();
  auto first = policy_.timezone.to_local(store_.created_at()).day;
  auto today = policy_.timezone.to_local(now).day;
  std::vector<AttendanceEvent> created;
  for (auto day = first; day <= today; day += std::chrono::days(1)) {
    if (!policy_.calendar.is_school_day(day) || store_.is_closed(day)) continue;
    if (policy_.closure_instant(day) > now) continue;
    auto events = close_day_locked(day);
    created.insert(created.end(), events.begin(), events.end());
  }
  return created;
}

AttendanceEvent AttendanceEngine::justify(const std::string& student_code, SchoolDay day,
                                          const Actor& actor, std::string_view note) {
  if (actor.role != Role::kAdmin && actor.role != Role::kAuxiliary) {
    throw Error(ErrorCode::kForbidden, "justify requires admin or auxiliary");
  }
  std::lock_guard lock(mu_);
  auto existing = store_.current_event(student_code, day);
  if (!existing) throw Error(ErrorCode::kNoEvent, student_code + " on " + format_date(day));
  if (existing->status != AttendanceStatus::kAbsent) {
    throw Error(ErrorCode::kNotAbsent, student_code + " is " + std::string(to_string(existing->status)));
  }
  AttendanceEvent revised = *existing;
  revised.status = AttendanceStatus::kJustified;
  revised.method = CaptureMethod::kManual;
  revised.recorded_by = actor.id;
  revised.recorded_at = clock_.now();
  revised.revision = existing->revision + 1;
  AuditEntry audit{revised.recorded_at, actor.id, AuditAction::kJustify, student_code,
                   "note=" + std::string(note) + "; supersedes " + Json(*existing).dump()};
  revised.edge_sequence = guard_store([&] { return store_.record_revision(revised, audit); });
  return revised;
}

RfidCard AttendanceEngine::set_card_state(const CardUid& uid, CardState state, const Actor& actor) {
  std::lock_guard lock(mu_);
  auto cards = store_.cards();
  auto change = cards.set_state(uid, state, actor, clock_.now());
  guard_store([&] {
    if (change.changed) store_.upsert_card(change.card);
    store_.append_audit(change.audit);
    return 0;
  });
  return change.card;
}

void AttendanceEngine::apply_roster(const RosterDelta& delta) {
  std::lock_guard lock(mu_);
  store_.apply_roster(delta);
  if (delta.policy) {
    auto policy = delta.policy->get<TimeWindowPolicy>();
    policy_ = std::move(policy);
  }
}

void AttendanceEngine::mark_synced(std::uint64_t high_water) {
  std::lock_guard lock(mu_);
  store_.mark_synced(high_water);
}

void AttendanceEngine::rewind_synced(std::uint64_t high_water) {
  std::lock_guard lock(mu_);
  store_.rewind_synced(high_water);
}

Timestamp AttendanceEngine::next_closure_after(Timestamp now) const {
  std::lock_guard lock(mu_);
  auto day = policy_.timezone.to_local(now).day;
  for (int i = 0; i < 400; ++i, day += std::chrono::days(1)) {
    if (!policy_.calendar.is_school_day(day)) continue;
    auto at = policy_.closure_instant(day);
    if (at > now) return at;
  }
  throw Error(ErrorCode::kConfig, "no school day within a year");
}

void AttendanceEngine::run_closure_scheduler(std::stop_token stop) {
  run_missed_closures();
  while (!stop.stop_requested()) {
    auto next = next_closure_after(clock_.now());
    if (!clock_.sleep_until(next, stop)) return;
    run_missed_closures();
  }
}

TimeWindowPolicy AttendanceEngine::policy() const {
  std::lock_guard lock(mu_);
  return policy_;
}

void AttendanceEngine::set_policy(TimeWindowPolicy policy) {
  policy.validate();
  std::lock_guard lock(mu_);
  policy_ = std::move(policy);
}

}  // namespace rollcall
