#include "rollcall/domain.hpp"

#include <openssl/rand.h>

#include <algorithm>
#include <bitset>
#include <cctype>
#include <cstdio>

#include "rollcall/error.hpp"

namespace rollcall {

namespace {

int hex_value(char c) {
  if (c >= '0' && c <= '9') return c - '0';
  if (c >= 'a' && c <= 'f') return c - 'a' + 10;
  if (c >= 'A' && c <= 'F') return c - 'A' + 10;
  return -1;
}

constexpr char kHexUpper[] = "0123456789ABCDEF";
constexpr char kHexLower[] = "0123456789abcdef";

}  // namespace

std::string_view to_string(Role role) {
  switch (role) {
    case Role::kAdmin: return "admin";
    case Role::kAuxiliary: return "auxiliary";
    case Role::kTeacher: return "teacher";
    case Role::kStudent: return "student";
  }
  return "unknown";
}

std::optional<Role> parse_role(std::string_view text) {
  if (text == "admin") return Role::kAdmin;
  if (text == "auxiliary") return Role::kAuxiliary;
  if (text == "teacher") return Role::kTeacher;
  if (text == "student") return Role::kStudent;
  return std::nullopt;
}

// ---------------------------------------------------------------------------

bool is_valid_student_code(std::string_view code) {
  // ^[0-9]{4}-[1-5][A-Z]-[0-9]{3}$
  if (code.size() != 11) return false;
  auto digit = [](char c) { return c >= '0' && c <= '9'; };
  for (int i = 0; i < 4; ++i) {
    if (!digit(code[i])) return false;
  }
  return code[4] == '-' && code[5] >= '1' && code[5] <= '5' && code[6] >= 'A' && code[6] <= 'Z' &&
         code[7] == '-' && digit(code[8]) && digit(code[9]) && digit(code[10]);
}

std::string generate_student_code(int enrollment_year, int grade, char section,
                                  std::span<const std::string> roster) {
  if (grade < 1 || grade > 5 || section < 'A' || section > 'Z' || enrollment_year < 0 ||
      enrollment_year > 9999) {
    throw Error(ErrorCode::kInvalidGradeOrSection);
  }
  char prefix[16];
  std::snprintf(prefix, sizeof prefix, "%04d-%d%c-", enrollment_year, grade, section);
  std::string_view prefix_view(prefix);

  std::bitset<1000> used;
  for (const auto& code : roster) {
    if (!is_valid_student_code(code) || code.compare(0, prefix_view.size(), prefix_view) != 0) {
      continue;
    }
    used.set(static_cast<std::size_t>(std::stoi(code.substr(8))));
  }
  for (std::size_t n = 1; n < used.size(); ++n) {
    if (!used.test(n)) {
      char out[16];
      std::snprintf(out, sizeof out, "%s%03zu", prefix, n);
      return out;
    }
  }
  throw Error(ErrorCode::kCapacityExhausted, std::string(prefix_view));
}

void Roster::upsert(StudentRecord student) {
  auto code = student.student_code;
  students_.insert_or_assign(std::move(code), std::move(student));
}

const StudentRecord* Roster::find(std::string_view code) const {
  auto it = students_.find(code);
  return it == students_.end() ? nullptr : &it->second;
}

std::vector<std::string> Roster::codes() const {
  std::vector<std::string> out;
  out.reserve(students_.size());
  for (const auto& [code, _] : students_) out.push_back(code);
  return out;
}

std::vector<StudentRecord> Roster::active_students() const {
  std::vector<StudentRecord> out;
  for (const auto& [_, s] : students_) {
    if (s.active) out.push_back(s);
  }
  return out;
}

const StudentRecord& Roster::enroll(StudentRecord draft) {
  auto existing = codes();
  draft.student_code =
      generate_student_code(draft.enrollment_year, draft.grade, draft.section, existing);
  auto code = draft.student_code;
  return students_.emplace(code, std::move(draft)).first->second;
}

// ---------------------------------------------------------------------------

std::optional<CardUid> CardUid::parse(std::string_view text) {
  std::array<std::uint8_t, 4> bytes{};
  std::size_t nibbles = 0;
  for (std::size_t i = 0; i < text.size(); ++i) {
    char c = text[i];
    if (c == ':' || c == '-' || c == ' ') {
      // Separators are only allowed on byte boundaries.
      if (nibbles == 0 || nibbles % 2 != 0 || nibbles == 8) return std::nullopt;
      continue;
    }
    int v = hex_value(c);
    if (v < 0 || nibbles == 8) return std::nullopt;
    bytes[nibbles / 2] = static_cast<std::uint8_t>((bytes[nibbles / 2] << 4) | v);
    ++nibbles;
  }
  if (nibbles != 8) return std::nullopt;
  return CardUid(bytes);
}

std::string CardUid::to_string() const {
  std::string out;
  out.reserve(8);
  for (auto b : bytes_) {
    out.push_back(kHexUpper[b >> 4]);
    out.push_back(kHexUpper[b & 0xF]);
  }
  return out;
}

std::string_view to_string(CardState state) {
  return state == CardState::kActive ? "active" : "blocked";
}

std::optional<CardState> parse_card_state(std::string_view text) {
  if (text == "active") return CardState::kActive;
  if (text == "blocked") return CardState::kBlocked;
  return std::nullopt;
}

// ---------------------------------------------------------------------------

std::string_view to_string(AttendanceStatus status) {
  switch (status) {
    case AttendanceStatus::kPresent: return "present";
    case AttendanceStatus::kLate: return "late";
    case AttendanceStatus::kAbsent: return "absent";
    case AttendanceStatus::kJustified: return "justified";
  }
  return "unknown";
}

std::optional<AttendanceStatus> parse_status(std::string_view text) {
  if (text == "present") return AttendanceStatus::kPresent;
  if (text == "late") return AttendanceStatus::kLate;
  if (text == "absent") return AttendanceStatus::kAbsent;
  if (text == "justified") return AttendanceStatus::kJustified;
  return std::nullopt;
}

std::string_view to_string(CaptureMethod method) {
  switch (method) {
    case CaptureMethod::kRfid: return "rfid";
    case CaptureMethod::kManual: return "manual";
    case CaptureMethod::kSystemClosure: return "system_closure";
  }
  return "unknown";
}

std::optional<CaptureMethod> parse_method(std::string_view text) {
  if (text == "rfid") return CaptureMethod::kRfid;
  if (text == "manual") return CaptureMethod::kManual;
  if (text == "system_closure") return CaptureMethod::kSystemClosure;
  return std::nullopt;
}

EventId EventId::random() {
  std::array<std::uint8_t, 16> bytes{};
  if (RAND_bytes(bytes.data(), static_cast<int>(bytes.size())) != 1) {
    std::random_device rd;
    for (auto& b : bytes) b = static_cast<std::uint8_t>(rd());
  }
  bytes[6] = static_cast<std::uint8_t>((bytes[6] & 0x0F) | 0x40);
  bytes[8] = static_cast<std::uint8_t>((bytes[8] & 0x3F) | 0x80);
  return EventId(bytes);
}

EventId EventId::from_generator(std::mt19937_64& rng) {
  std::array<std::uint8_t, 16> bytes{};
  for (int half = 0; half < 2; ++half) {
    auto word = rng();
    for (int i = 0; i < 8; ++i) bytes[half * 8 + i] = static_cast<std::uint8_t>(word >> (8 * i));
  }
  bytes[6] = static_cast<std::uint8_t>((bytes[6] & 0x0F) | 0x40);
  bytes[8] = static_cast<std::uint8_t>((bytes[8] & 0x3F) | 0x80);
  return EventId(bytes);
}

std::optional<EventId> EventId::parse(std::string_view text) {
  if (text.size() != 36) return std::nullopt;
  std::array<std::uint8_t, 16> bytes{};
  std::size_t nibble = 0;
  for (std::size_t i = 0; i < text.size(); ++i) {
    if (i == 8 || i == 13 || i == 18 || i == 23) {
      if (text[i] != '-') return std::nullopt;
      continue;
    }
    int v = hex_value(text[i]);
    if (v < 0) return std::nullopt;
    bytes[nibble / 2] = static_cast<std::uint8_t>((bytes[nibble / 2] << 4) | v);
    ++nibble;
  }
  return EventId(bytes);
}

std::string EventId::to_string() const {
  std::string out;
  out.reserve(36);
  for (std::size_t i = 0; i < bytes_.size(); ++i) {
    if (i == 4 || i == 6 || i == 8 || i == 10) out.push_back('-');
    out.push_back(kHexLower[bytes_[i] >> 4]);
    out.push_back(kHexLower[bytes_[i] & 0xF]);
  }
  return out;
}

void validate_event(const AttendanceEvent& event) {
  using S = AttendanceStatus;
  using M = CaptureMethod;
  bool ok = true;
  switch (event.method) {
    case M::kRfid: ok = event.status == S::kPresent || event.status == S::kLate; break;
    case M::kSystemClosure: ok = event.status == S::kAbsent; break;
    case M::kManual: ok = event.recorded_by.has_value() && !event.recorded_by->empty(); break;
  }
  if (event.status == S::kJustified && event.method != M::kManual) ok = false;
  if (!ok) {
    throw Error(ErrorCode::kInvalidArgument,
                "status " + std::string(to_string(event.status)) + " incompatible with method " +
                    std::string(to_string(event.method)));
  }
  if (!is_valid_student_code(event.student_code)) {
    throw Error(ErrorCode::kInvalidArgument, "bad student code '" + event.student_code + "'");
  }
}

std::string_view to_string(AuditAction action) {
  switch (action) {
    case AuditAction::kScan: return "scan";
    case AuditAction::kEnroll: return "enroll";
    case AuditAction::kBlock: return "block";
    case AuditAction::kUnblock: return "unblock";
    case AuditAction::kManualMark: return "manual_mark";
    case AuditAction::kJustify: return "justify";
    case AuditAction::kSyncPush: return "sync_push";
    case AuditAction::kLoginFail: return "login_fail";
    case AuditAction::kStudentCreate: return "student_create";
    case AuditAction::kUserCreate: return "user_create";
    case AuditAction::kTeacherAssign: return "teacher_assign";
    case AuditAction::kDenied: return "denied";
  }
  return "unknown";
}

std::optional<AuditAction> parse_audit_action(std::string_view text) {
  for (auto a : {AuditAction::kScan, AuditAction::kEnroll, AuditAction::kBlock,
                 AuditAction::kUnblock, AuditAction::kManualMark, AuditAction::kJustify,
                 AuditAction::kSyncPush, AuditAction::kLoginFail, AuditAction::kStudentCreate,
                 AuditAction::kUserCreate, AuditAction::kTeacherAssign, AuditAction::kDenied}) {
    if (to_string(a) == text) return a;
  }
  return std::nullopt;
}

// ---------------------------------------------------------------------------

bool can_manage_cards(Role role) { return role == Role::kAdmin || role == Role::kAuxiliary; }

const RfidCard* CardTable::find(const CardUid& uid) const {
  auto it = cards_.find(uid);
  return it == cards_.end() ? nullptr : &it->second;
}

const RfidCard* CardTable::active_card_of(std::string_view student_code) const {
  for (const auto& [_, card] : cards_) {
    if (card.state == CardState::kActive && card.linked_student == student_code) return &card;
  }
  return nullptr;
}

void CardTable::upsert(RfidCard card) {
  if (card.state == CardState::kActive && card.linked_student) {
    for (auto& [uid, other] : cards_) {
      if (uid != card.uid && other.state == CardState::kActive &&
          other.linked_student == card.linked_student) {
        other.state = CardState::kBlocked;
      }
    }
  }
  auto uid = card.uid;
  cards_.insert_or_assign(uid, std::move(card));
}

CardChange CardTable::enroll(const CardUid& uid, const std::string& student_code,
                             const Roster& roster, const Actor& actor, Timestamp at) {
  if (!can_manage_cards(actor.role)) {
    throw Error(ErrorCode::kForbidden, "role " + std::string(to_string(actor.role)));
  }
  const auto* student = roster.find(student_code);
  if (student == nullptr || !student->active) {
    throw Error(ErrorCode::kUnknownStudent, student_code);
  }

  CardChange change;
  change.audit = AuditEntry{at, actor.id, AuditAction::kEnroll, uid.to_string(), ""};

  if (const auto* existing = find(uid); existing != nullptr && existing->state == CardState::kActive) {
    if (existing->linked_student != student_code) {
      throw Error(ErrorCode::kDuplicateUid,
                  uid.to_string() + " is active for " + existing->linked_student.value_or("?"));
    }
    change.card = *existing;
    change.audit.detail = "already linked to " + student_code;
    return change;
  }

  if (const auto* previous = active_card_of(student_code); previous != nullptr) {
    RfidCard blocked = *previous;
    blocked.state = CardState::kBlocked;
    cards_[blocked.uid] = blocked;
    change.displaced = blocked;
  }

  RfidCard card{uid, CardState::kActive, student_code, at};
  cards_[uid] = card;
  change.card = card;
  change.changed = true;
  change.audit.detail = "linked to " + student_code;
  if (change.displaced) change.audit.detail += "; blocked " + change.displaced->uid.to_string();
  return change;
}

CardChange CardTable::set_state(const CardUid& uid, CardState state, const Actor& actor,
                                Timestamp at) {
  if (!can_manage_cards(actor.role)) {
    throw Error(ErrorCode::kForbidden, "role " + std::string(to_string(actor.role)));
  }
  auto it = cards_.find(uid);
  if (it == cards_.end()) throw Error(ErrorCode::kUnknownCard, uid.to_string());

  CardChange change;
  change.audit = AuditEntry{at, actor.id,
                            state == CardState::kBlocked ? AuditAction::kBlock : AuditAction::kUnblock,
                            uid.to_string(), ""};
  RfidCard& card = it->second;
  if (card.state == state) {
    change.card = card;
    change.audit.detail = "unchanged";
    return change;
  }
  if (state == CardState::kActive && card.linked_student) {
    if (const auto* other = active_card_of(*card.linked_student); other != nullptr) {
      throw Error(ErrorCode::kConflict, *card.linked_student + " already has active card " +
                                            other->uid.to_string());
    }
  }
  change.audit.detail = std::string(to_string(card.state)) + "->" + std::string(to_string(state));
  card.state = state;
  change.card = card;
  change.changed = true;
  return change;
}

}  // namespace rollcall
