#pragma once

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <functional>
#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <shared_mutex>
#include <string>
#include <vector>

#include "rollcall/domain.hpp"
#include "rollcall/edge_store.hpp"
#include "rollcall/journal.hpp"
#include "rollcall/json_io.hpp"
#include "rollcall/policy.hpp"
#include "rollcall/reports.hpp"
#include "rollcall/sync_batch.hpp"
#include "rollcall/time.hpp"

namespace rollcall {

// ---------------------------------------------------------------------------
// Authorization
// ---------------------------------------------------------------------------

enum class Permission {
  kStudentsList,
  kStudentsCreate,
  kStudentsUpdate,
  kCardsList,
  kCardsEnroll,
  kCardsSetState,
  kAttendanceQuery,
  kAttendanceMark,
  kAttendanceJustify,
  kAttendanceLive,
  kReportsSummary,
  kReportsExport,
  kUsersCreate,
  kUsersList,
  kTeachersAssign,
  kAuditList,
};

std::string_view to_string(Permission permission);
std::vector<Permission> all_permissions();

/// The declared role table. Anything not listed is denied.
const std::map<Permission, std::set<Role>>& permission_matrix();
bool is_allowed(Role role, Permission permission);

struct UserRecord {
  std::string username;
  Role role = Role::kStudent;
  std::string salt;  // hex
  std::string hash;  // hex, PBKDF2-HMAC-SHA256
  int iterations = 0;
  /// Links a Student login to its roster entry.
  std::optional<std::string> student_code;
};

struct Division {
  int grade = 0;
  char section = 'A';
  auto operator<=>(const Division&) const = default;
};

/// Who a bearer token speaks for: a human user or an edge node.
struct Principal {
  enum class Kind { kUser, kEdge };
  Kind kind = Kind::kUser;
  Actor actor;
  std::string edge_node_id;
};

struct TokenGrant {
  std::string token;
  Timestamp expires_at;
  Principal principal;
};

// ---------------------------------------------------------------------------
// Queries and feeds
// ---------------------------------------------------------------------------

struct AttendanceFilter {
  SchoolDay from{};
  SchoolDay to{};
  std::optional<int> grade;
  std::optional<char> section;
  std::optional<std::string> student_code;
  std::optional<AttendanceStatus> status;
};

struct PageRequest {
  std::size_t page = 1;
  std::size_t page_size = 100;
};

inline constexpr std::size_t kMaxPageSize = 1000;

struct AttendancePage {
  std::vector<AttendanceRow> rows;
  /// Per-status counts over the whole filtered set, not just this page.
  StatusCounts counts;
  std::size_t total = 0;
  std::size_t page = 1;
  std::size_t page_size = 0;
};

struct LiveBatch {
  std::uint64_t cursor = 0;
  std::vector<AttendanceRow> events;
  bool heartbeat = false;
  StatusCounts counts;
  std::uint64_t roster_size = 0;
  std::uint64_t pending = 0;
};

struct PushResult {
  std::uint64_t accepted_high_water = 0;
  std::uint64_t duplicates = 0;
  /// Central's high-water did not meet first_sequence; the edge rewinds to
  /// accepted_high_water.
  bool sequence_gap = false;
};

void to_json(Json& j, const AttendanceRow& r);
void to_json(Json& j, const AttendancePage& p);
void to_json(Json& j, const LiveBatch& b);
void to_json(Json& j, const PushResult& r);
void from_json(const Json& j, PushResult& r);
void to_json(Json& j, const RosterDelta& d);
void from_json(const Json& j, RosterDelta& d);

// ---------------------------------------------------------------------------
// Service
// ---------------------------------------------------------------------------

/// The authoritative roster, attendance ledger and user directory, persisted
/// in a journal. Every public mutator checks the caller's permission,
/// records exactly one audit entry on success, and is durable on return.
class CentralService {
 public:
  struct Options {
    TimeWindowPolicy policy;
    /// edge_node_id -> shared secret.
    std::map<std::string, std::string> edge_secrets;
    Duration token_ttl = std::chrono::hours(24);
    int pbkdf2_iterations = 100'000;
    bool sync = true;
    std::size_t live_retention = 100'000;
    int login_failures_per_minute = 5;
    EventIdSource ids = &EventId::random;
  };

  CentralService(std::filesystem::path store_path, Clock& clock, Options options);

  // -- authentication -------------------------------------------------------

  /// Throws kAuthFailed, kRateLimited.
  TokenGrant login(const std::string& username, const std::string& password);
  /// Throws kAuthFailed.
  TokenGrant issue_edge_token(const std::string& edge_node_id, const std::string& secret);
  /// Throws kAuthExpired for unknown or expired tokens.
  Principal authenticate(const std::string& token) const;
  /// Creates the user unless it exists; used to seed the first admin.
  bool ensure_user(const std::string& username, const std::string& password, Role role);

  /// Throws kForbidden (and audits the denial) unless allowed.
  void require(const Actor& actor, Permission permission);

  // -- users ----------------------------------------------------------------

  UserRecord create_user(const Actor& actor, const std::string& username, const std::string& password,
                         Role role, std::optional<std::string> student_code = std::nullopt);
  std::vector<UserRecord> list_users(const Actor& actor);
  void assign_teacher(const Actor& actor, const std::string& username, Division division);
  std::set<Division> assignments_of(const std::string& username) const;

  // -- roster and cards -----------------------------------------------------

  StudentRecord create_student(const Actor& actor, StudentRecord draft);
  StudentRecord update_student(const Actor& actor, const StudentRecord& updated);
  std::vector<StudentRecord> list_students(const Actor& actor, std::optional<int> grade = std::nullopt,
                                           std::optional<char> section = std::nullopt);
  CardChange enroll_card(const Actor& actor, const CardUid& uid, const std::string& student_code);
  CardChange set_card_state(const Actor& actor, const CardUid& uid, CardState state);
  std::vector<RfidCard> list_cards(const Actor& actor);

  // -- attendance -----------------------------------------------------------

  /// Throws kForbidden, kFutureDate, kNonSchoolDay, kUnknownStudent.
  AttendanceEvent manual_mark(const Actor& actor, const std::string& student_code, SchoolDay day,
                              AttendanceStatus status, const std::string& note);
  /// Throws kForbidden, kNoEvent, kNotAbsent.
  AttendanceEvent justify(const Actor& actor, const std::string& student_code, SchoolDay day,
                          const std::string& note);
  /// Stable (day, student_code) order. Throws kInvalidRange, kForbidden.
  AttendancePage query_attendance(const Actor& actor, const AttendanceFilter& filter, PageRequest page);
  /// Every row of the filtered set, for export.
  std::vector<AttendanceRow> export_rows(const Actor& actor, const AttendanceFilter& filter);
  /// Long poll: returns as soon as `day` has changes after `cursor`, or a
  /// heartbeat after `wait`. Throws kCursorExpired.
  /// Without a cursor the whole day is returned at once as a snapshot.
  LiveBatch live_feed(const Actor& actor, SchoolDay day, std::optional<std::uint64_t> cursor,
                      std::chrono::milliseconds wait);

  // -- reports --------------------------------------------------------------

  AttendanceSummary summary(const Actor& actor, const Scope& scope, const Period& period);
  std::vector<ChronicFlag> chronic(const Actor& actor, const Scope& scope, const Period& window,
                                   double threshold);

  // -- sync -----------------------------------------------------------------

  /// Throws kNodeMismatch, kBatchTooLarge, kChecksumMismatch, kInvalidArgument.
  PushResult push_events(const Principal& edge, const SyncBatch& batch);
  RosterDelta pull_roster(const Principal& edge, std::uint64_t since);

  // -- introspection (no permission checks; for tools and tests) -----------

  std::vector<AuditEntry> audit(const Actor& actor, std::size_t limit = 0);
  std::size_t audit_size() const;
  std::vector<AttendanceEvent> current_events() const;
  std::set<EventId> event_ids() const;
  std::uint64_t high_water(const std::string& edge_node_id) const;
  std::uint64_t roster_version() const;
  std::uint64_t live_head() const;
  bool is_day_closed(SchoolDay day) const;
  const TimeWindowPolicy& policy() const { return options_.policy; }
  Clock& clock() { return clock_; }

 private:
  struct Lineage {
    std::vector<AttendanceEvent> versions;  // ascending revision
    std::string origin;
    const AttendanceEvent& current() const { return versions.back(); }
    Timestamp first_recorded_at() const { return versions.front().recorded_at; }
  };
  using DayKey = std::pair<SchoolDay, std::string>;
  struct Change {
    std::uint64_t seq;
    AttendanceEvent event;
  };
  struct Session {
    Principal principal;
    Timestamp expires_at;
  };

  void commit(Json record);
  void apply(const Json& record);
  /// Returns true when a new (event_id, revision) was stored.
  bool apply_event(const AttendanceEvent& event, const std::string& origin, Json* losers);
  void note_change(const DayKey& key);
  std::uint64_t next_version() const { return roster_version_ + 1; }

  AuditEntry audit_entry(const Actor& actor, AuditAction action, std::string subject,
                         std::string detail) const;
  TokenGrant grant(Principal principal);
  std::function<bool(const StudentRecord&)> scope_filter(const Actor& actor,
                                                         const AttendanceFilter& filter);
  void require_scope(const Actor& actor, const Scope& scope);
  std::vector<AttendanceRow> filtered_rows(const AttendanceFilter& filter,
                                           const std::function<bool(const StudentRecord&)>& in_scope) const;
  LedgerView ledger_view(std::vector<StudentRecord>& students, std::vector<AttendanceEvent>& events) const;
  SchoolDay today() const;
  const AttendanceEvent* current_locked(const std::string& code, SchoolDay day) const;

  Clock& clock_;
  Options options_;

  mutable std::shared_mutex mu_;
  mutable std::mutex write_mu_;
  Journal journal_;

  Roster roster_;
  CardTable cards_;
  std::map<std::string, std::uint64_t, std::less<>> student_versions_;
  std::map<CardUid, std::uint64_t> card_versions_;
  std::map<EventId, std::uint64_t> manual_versions_;
  std::uint64_t roster_version_ = 0;

  std::map<EventId, Lineage> lineages_;
  std::map<DayKey, EventId> winners_;
  std::map<std::string, std::uint64_t> high_water_;

  std::map<std::string, UserRecord> users_;
  std::map<std::string, std::set<Division>> assignments_;
  std::vector<AuditEntry> audit_;

  std::deque<Change> changes_;
  std::uint64_t change_head_ = 0;

  // Not persisted: tokens and login throttling live only in memory.
  mutable std::mutex session_mu_;
  std::map<std::string, Session> sessions_;
  std::map<std::string, std::deque<Timestamp>> login_failures_;

  std::mutex live_mu_;
  std::condition_variable live_cv_;
  std::atomic<std::uint64_t> published_head_{0};
};

/// Policy and secrets for a central service from its config file.
CentralService::Options central_options_from_config(const Config& config);

}  // namespace rollcall
