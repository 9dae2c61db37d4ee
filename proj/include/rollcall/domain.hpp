#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "rollcall/time.hpp"

namespace rollcall {

// ---------------------------------------------------------------------------
// Roles and actors
// ---------------------------------------------------------------------------

enum class Role { kAdmin, kAuxiliary, kTeacher, kStudent };

std::string_view to_string(Role role);
std::optional<Role> parse_role(std::string_view text);

struct Actor {
  std::string id;
  Role role = Role::kStudent;
};

// ---------------------------------------------------------------------------
// Student roster
// ---------------------------------------------------------------------------

struct StudentRecord {
  std::string student_code;
  std::string given_names;
  std::string family_names;
  int enrollment_year = 0;
  int grade = 1;
  char section = 'A';
  std::string emergency_contact;
  bool active = true;

  bool operator==(const StudentRecord&) const = default;
};

/// True when `code` has the `YYYY-GS-NNN` shape (grade 1-5, section A-Z).
bool is_valid_student_code(std::string_view code);

/// Smallest free sequential code for the (year, grade, section) prefix.
/// Throws kInvalidGradeOrSection or kCapacityExhausted.
std::string generate_student_code(int enrollment_year, int grade, char section,
                                  std::span<const std::string> roster);

class Roster {
 public:
  void upsert(StudentRecord student);
  const StudentRecord* find(std::string_view code) const;
  std::vector<std::string> codes() const;
  std::vector<StudentRecord> active_students() const;
  const std::map<std::string, StudentRecord, std::less<>>& all() const { return students_; }
  std::size_t size() const { return students_.size(); }

  /// Creates the record with a freshly generated code.
  const StudentRecord& enroll(StudentRecord draft);

 private:
  std::map<std::string, StudentRecord, std::less<>> students_;
};

// ---------------------------------------------------------------------------
// RFID cards
// ---------------------------------------------------------------------------

/// 4-byte card identifier; canonical text is 8 uppercase hex digits, most
/// significant byte first.
class CardUid {
 public:
  CardUid() = default;
  explicit CardUid(std::array<std::uint8_t, 4> bytes) : bytes_(bytes) {}

  /// Accepts upper or lower case hex with optional ':', '-' or ' ' between
  /// bytes; anything else yields nullopt.
  static std::optional<CardUid> parse(std::string_view text);

  std::string to_string() const;
  const std::array<std::uint8_t, 4>& bytes() const { return bytes_; }

  auto operator<=>(const CardUid&) const = default;

 private:
  std::array<std::uint8_t, 4> bytes_{};
};

enum class CardState { kActive, kBlocked };

std::string_view to_string(CardState state);
std::optional<CardState> parse_card_state(std::string_view text);

struct RfidCard {
  CardUid uid;
  CardState state = CardState::kActive;
  std::optional<std::string> linked_student;
  Timestamp issued_at{};

  bool operator==(const RfidCard&) const = default;
};

// ---------------------------------------------------------------------------
// Attendance events and audit
// ---------------------------------------------------------------------------

enum class AttendanceStatus { kPresent, kLate, kAbsent, kJustified };
enum class CaptureMethod { kRfid, kManual, kSystemClosure };

std::string_view to_string(AttendanceStatus status);
std::optional<AttendanceStatus> parse_status(std::string_view text);
std::string_view to_string(CaptureMethod method);
std::optional<CaptureMethod> parse_method(std::string_view text);

/// 128-bit random identifier, rendered as a lowercase RFC-4122 v4 UUID.
class EventId {
 public:
  EventId() = default;
  explicit EventId(std::array<std::uint8_t, 16> bytes) : bytes_(bytes) {}

  static EventId random();
  static EventId from_generator(std::mt19937_64& rng);
  static std::optional<EventId> parse(std::string_view text);

  std::string to_string() const;
  auto operator<=>(const EventId&) const = default;

 private:
  std::array<std::uint8_t, 16> bytes_{};
};

using EventIdSource = std::function<EventId()>;

struct AttendanceEvent {
  EventId event_id;
  std::string student_code;
  SchoolDay school_day{};
  AttendanceStatus status = AttendanceStatus::kPresent;
  Timestamp recorded_at{};
  CaptureMethod method = CaptureMethod::kRfid;
  std::optional<std::string> recorded_by;
  std::uint64_t edge_sequence = 0;
  /// 0 for the original record; justifications and manual corrections are
  /// stored as later revisions of the same event_id.
  std::uint32_t revision = 0;

  bool operator==(const AttendanceEvent&) const = default;
};

/// Throws kInvalidArgument when status and method disagree.
void validate_event(const AttendanceEvent& event);

enum class AuditAction {
  kScan,
  kEnroll,
  kBlock,
  kUnblock,
  kManualMark,
  kJustify,
  kSyncPush,
  kLoginFail,
  kStudentCreate,
  kUserCreate,
  kTeacherAssign,
  kDenied,
};

std::string_view to_string(AuditAction action);
std::optional<AuditAction> parse_audit_action(std::string_view text);

struct AuditEntry {
  Timestamp at{};
  std::string actor;
  AuditAction action = AuditAction::kScan;
  std::string subject;
  std::string detail;

  bool operator==(const AuditEntry&) const = default;
};

// ---------------------------------------------------------------------------
// Card table
// ---------------------------------------------------------------------------

/// Result of a card mutation. `changed` is false for idempotent no-ops.
struct CardChange {
  RfidCard card;
  std::optional<RfidCard> displaced;
  bool changed = false;
  AuditEntry audit;
};

class CardTable {
 public:
  const RfidCard* find(const CardUid& uid) const;
  const RfidCard* active_card_of(std::string_view student_code) const;
  const std::map<CardUid, RfidCard>& all() const { return cards_; }
  std::size_t size() const { return cards_.size(); }

  /// Replica update; no validation beyond keeping the one-active-card rule.
  void upsert(RfidCard card);

  /// Links `uid` to the student and activates it. A previously active card
  /// of that student is blocked. Throws kUnknownStudent, kDuplicateUid.
  CardChange enroll(const CardUid& uid, const std::string& student_code, const Roster& roster,
                    const Actor& actor, Timestamp at);

  /// Throws kForbidden (teacher, student), kUnknownCard.
  CardChange set_state(const CardUid& uid, CardState state, const Actor& actor, Timestamp at);

 private:
  std::map<CardUid, RfidCard> cards_;
};

bool can_manage_cards(Role role);

}  // namespace rollcall
