#include "rollcall/central.hpp"

#include <openssl/crypto.h>
#include <openssl/evp.h>
#include <openssl/rand.h>

#include <algorithm>
#include <cctype>

#include "rollcall/error.hpp"

namespace rollcall {

// ---------------------------------------------------------------------------
// Permissions

std::string_view to_string(Permission permission) {
  switch (permission) {
    case Permission::kStudentsList: return "students.list";
    case Permission::kStudentsCreate: return "students.create";
    case Permission::kStudentsUpdate: return "students.update";
    case Permission::kCardsList: return "cards.list";
    case Permission::kCardsEnroll: return "cards.enroll";
    case Permission::kCardsSetState: return "cards.set_state";
    case Permission::kAttendanceQuery: return "attendance.query";
    case Permission::kAttendanceMark: return "attendance.mark";
    case Permission::kAttendanceJustify: return "attendance.justify";
    case Permission::kAttendanceLive: return "attendance.live";
    case Permission::kReportsSummary: return "reports.summary";
    case Permission::kReportsExport: return "reports.export";
    case Permission::kUsersCreate: return "users.create";
    case Permission::kUsersList: return "users.list";
    case Permission::kTeachersAssign: return "teachers.assign";
    case Permission::kAuditList: return "audit.list";
  }
  return "unknown";
}

std::vector<Permission> all_permissions() {
  std::vector<Permission> out;
  for (int i = 0; i <= static_cast<int>(Permission::kAuditList); ++i) out.push_back(static_cast<Permission>(i));
  return out;
}

const std::map<Permission, std::set<Role>>& permission_matrix() {
  using enum Role;
  static const std::map<Permission, std::set<Role>> matrix{
      {Permission::kStudentsList, {kAdmin, kAuxiliary, kTeacher}},
      {Permission::kStudentsCreate, {kAdmin}},
      {Permission::kStudentsUpdate, {kAdmin}},
      {Permission::kCardsList, {kAdmin, kAuxiliary}},
      {Permission::kCardsEnroll, {kAdmin, kAuxiliary}},
      {Permission::kCardsSetState, {kAdmin, kAuxiliary}},
      {Permission::kAttendanceQuery, {kAdmin, kAuxiliary, kTeacher, kStudent}},
      {Permission::kAttendanceMark, {kAdmin, kAuxiliary}},
      {Permission::kAttendanceJustify, {kAdmin, kAuxiliary}},
      {Permission::kAttendanceLive, {kAdmin, kAuxiliary, kTeacher}},
      {Permission::kReportsSummary, {kAdmin, kAuxiliary, kTeacher}},
      {Permission::kReportsExport, {kAdmin, kAuxiliary, kTeacher}},
      {Permission::kUsersCreate, {kAdmin}},
      {Permission::kUsersList, {kAdmin}},
      {Permission::kTeachersAssign, {kAdmin}},
      {Permission::kAuditList, {kAdmin}},
  };
  return matrix;
}

bool is_allowed(Role role, Permission permission) {
  const auto& matrix = permission_matrix();
  auto it = matrix.find(permission);
  return it != matrix.end() && it->second.contains(role);
}

// ---------------------------------------------------------------------------
// JSON

namespace {

Json user_to_json(const UserRecord& u, bool with_secret) {
  Json j{{"username", u.username},
         {"role", to_string(u.role)},
         {"student_code", u.student_code ? Json(*u.student_code) : Json(nullptr)}};
  if (with_secret) {
    j["salt"] = u.salt;
    j["hash"] = u.hash;
    j["iterations"] = u.iterations;
  }
  return j;
}

UserRecord user_from_json(const Json& j) {
  UserRecord u;
  u.username = j.at("username").get<std::string>();
  u.role = parse_role(j.at("role").get<std::string>()).value_or(Role::kStudent);
  u.salt = j.value("salt", "");
  u.hash = j.value("hash", "");
  u.iterations = j.value("iterations", 0);
  if (j.contains("student_code") && !j.at("student_code").is_null()) {
    u.student_code = j.at("student_code").get<std::string>();
  }
  return u;
}

std::string hex(const unsigned char* data, std::size_t n) {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string out;
  out.reserve(n * 2);
  for (std::size_t i = 0; i < n; ++i) {
    out += kDigits[data[i] >> 4];
    out += kDigits[data[i] & 0xF];
  }
  return out;
}

std::string random_hex(std::size_t bytes) {
  std::vector<unsigned char> buf(bytes);
  if (RAND_bytes(buf.data(), static_cast<int>(buf.size())) != 1) {
    throw Error(ErrorCode::kAuthFailed, "random source unavailable");
  }
  return hex(buf.data(), buf.size());
}

std::string derive_hash(const std::string& password, const std::string& salt, int iterations) {
  unsigned char out[32];
  if (PKCS5_PBKDF2_HMAC(password.data(), static_cast<int>(password.size()),
                        reinterpret_cast<const unsigned char*>(salt.data()), static_cast<int>(salt.size()),
                        iterations, EVP_sha256(), sizeof out, out) != 1) {
    throw Error(ErrorCode::kAuthFailed, "key derivation failed");
  }
  return hex(out, sizeof out);
}

bool constant_time_equal(const std::string& a, const std::string& b) {
  return a.size() == b.size() && CRYPTO_memcmp(a.data(), b.data(), a.size()) == 0;
}

bool valid_username(const std::string& name) {
  return !name.empty() && name.size() <= 64 && std::all_of(name.begin(), name.end(), [](unsigned char c) {
    return std::isalnum(c) || c == '.' || c == '_' || c == '-' || c == '@';
  });
}

std::string day_subject(const std::string& code, SchoolDay day) { return code + "@" + format_date(day); }

}  // namespace

void to_json(Json& j, const AttendanceRow& r) {
  j = r.event;
  j["given_names"] = r.student.given_names;
  j["family_names"] = r.student.family_names;
  j["grade"] = r.student.grade;
  j["section"] = std::string(1, r.student.section);
}

void to_json(Json& j, const AttendancePage& p) {
  j = Json{{"rows", p.rows}, {"counts", p.counts}, {"total", p.total}, {"page", p.page}, {"page_size", p.page_size}};
}

void to_json(Json& j, const LiveBatch& b) {
  j = Json{{"cursor", b.cursor},   {"events", b.events},           {"heartbeat", b.heartbeat},
           {"counts", b.counts},   {"roster_size", b.roster_size}, {"pending", b.pending}};
}

void to_json(Json& j, const PushResult& r) {
  j = Json{{"accepted_high_water", r.accepted_high_water}, {"duplicates", r.duplicates}};
}

void from_json(const Json& j, PushResult& r) {
  r.accepted_high_water = j.at("accepted_high_water").get<std::uint64_t>();
  r.duplicates = j.at("duplicates").get<std::uint64_t>();
}

void to_json(Json& j, const RosterDelta& d) {
  j = Json{{"version", d.version}, {"students", d.students}, {"cards", d.cards}, {"manual_events", d.manual_events}};
  if (d.policy) j["policy"] = *d.policy;
}

void from_json(const Json& j, RosterDelta& d) {
  d.version = j.at("version").get<std::uint64_t>();
  d.students = j.at("students").get<std::vector<StudentRecord>>();
  d.cards = j.at("cards").get<std::vector<RfidCard>>();
  d.manual_events = j.at("manual_events").get<std::vector<AttendanceEvent>>();
  if (j.contains("policy") && !j.at("policy").is_null()) d.policy = j.at("policy");
}

// ---------------------------------------------------------------------------
// Persistence

CentralService::CentralService(std::filesystem::path store_path, Clock& clock, Options options)
    : clock_(clock), options_(std::move(options)), journal_(std::move(store_path), Journal::Options{0, options_.sync}) {
  options_.policy.validate();
  if (!options_.ids) options_.ids = &EventId::random;
  for (const auto& payload : journal_.take_recovered()) {
    Json record;
    try {
      record = Json::parse(payload);
    } catch (const Json::exception& e) {
      throw Error(ErrorCode::kCorruptStore, e.what());
    }
    apply(record);
  }
  published_head_ = change_head_;
}

void CentralService::commit(Json record) {
  journal_.append(record.dump());
  {
    std::unique_lock lock(mu_);
    apply(record);
  }
  std::lock_guard live(live_mu_);
  published_head_ = change_head_;
  live_cv_.notify_all();
}

void CentralService::note_change(const DayKey& key) {
  auto it = winners_.find(key);
  if (it == winners_.end()) return;
  changes_.push_back({++change_head_, lineages_.at(it->second).current()});
  while (changes_.size() > options_.live_retention) changes_.pop_front();
}

bool CentralService::apply_event(const AttendanceEvent& event, const std::string& origin, Json* losers) {
  DayKey key{event.school_day, event.student_code};
  auto existing = lineages_.find(event.event_id);
  if (existing != lineages_.end()) {
    auto& versions = existing->second.versions;
    auto pos = std::lower_bound(versions.begin(), versions.end(), event.revision,
                                [](const AttendanceEvent& e, std::uint32_t r) { return e.revision < r; });
    if (pos != versions.end() && pos->revision == event.revision) return false;
    bool newest = pos == versions.end();
    versions.insert(pos, event);
    auto w = winners_.find(key);
    if (newest && w != winners_.end() && w->second == event.event_id) note_change(key);
    return true;
  }

  auto& lineage = lineages_[event.event_id];
  lineage.versions.push_back(event);
  lineage.origin = origin;
  auto w = winners_.find(key);
  if (w == winners_.end()) {
    winners_.emplace(key, event.event_id);
    note_change(key);
    return true;
  }
  // Two lineages for one (student, day): the earlier recording wins.
  const auto& incumbent = lineages_.at(w->second);
  bool challenger_wins = std::pair(lineage.first_recorded_at(), event.event_id) <
                         std::pair(incumbent.first_recorded_at(), w->second);
  auto winner = challenger_wins ? event.event_id : w->second;
  auto loser = challenger_wins ? w->second : event.event_id;
  if (losers != nullptr) {
    losers->push_back({{"student_code", event.student_code},
                       {"school_day", format_date(event.school_day)},
                       {"winner", winner.to_string()},
                       {"loser", lineages_.at(loser).current()}});
  }
  if (challenger_wins) {
    w->second = event.event_id;
    note_change(key);
  }
  return true;
}

void CentralService::apply(const Json& record) {
  const auto type = record.at("t").get<std::string>();
  if (type == "user") {
    auto user = user_from_json(record.at("user"));
    users_[user.username] = user;
  } else if (type == "assign") {
    auto grade = record.at("grade").get<int>();
    auto section = record.at("section").get<std::string>().at(0);
    assignments_[record.at("username").get<std::string>()].insert(Division{grade, section});
  } else if (type == "student") {
    auto student = record.at("student").get<StudentRecord>();
    roster_version_ = record.at("version").get<std::uint64_t>();
    student_versions_[student.student_code] = roster_version_;
    roster_.upsert(std::move(student));
  } else if (type == "card") {
    roster_version_ = record.at("version").get<std::uint64_t>();
    for (const auto& j : record.at("cards")) {
      auto card = j.get<RfidCard>();
      card_versions_[card.uid] = roster_version_;
      cards_.upsert(std::move(card));
    }
  } else if (type == "manual") {
    auto event = record.at("event").get<AttendanceEvent>();
    roster_version_ = record.at("version").get<std::uint64_t>();
    manual_versions_[event.event_id] = roster_version_;
    apply_event(event, "central", nullptr);
  } else if (type == "push") {
    auto node = record.at("node").get<std::string>();
    Json losers = Json::array();
    std::uint64_t accepted = 0;
    for (const auto& j : record.at("events")) {
      if (apply_event(j.get<AttendanceEvent>(), node, &losers)) ++accepted;
    }
    auto& hw = high_water_[node];
    hw = std::max(hw, record.at("high_water").get<std::uint64_t>());
    Json detail{{"first_sequence", record.at("first")},
                {"last_sequence", record.at("last")},
                {"accepted", accepted},
                {"duplicates", record.at("duplicates")},
                {"high_water", hw},
                {"conflicts", losers}};
    audit_.push_back(AuditEntry{parse_timestamp(record.at("at").get<std::string>()), "edge:" + node,
                                AuditAction::kSyncPush, node, detail.dump()});
  } else if (type != "audit") {
    throw Error(ErrorCode::kCorruptStore, "unknown central record type '" + type + "'");
  }
  if (record.contains("audit")) audit_.push_back(record.at("audit").get<AuditEntry>());
}

// ---------------------------------------------------------------------------
// Authentication

AuditEntry CentralService::audit_entry(const Actor& actor, AuditAction action, std::string subject,
                                       std::string detail) const {
  return AuditEntry{clock_.now(), actor.id, action, std::move(subject), std::move(detail)};
}

TokenGrant CentralService::grant(Principal principal) {
  TokenGrant g{random_hex(32), clock_.now() + options_.token_ttl, std::move(principal)};
  std::lock_guard lock(session_mu_);
  // Drop expired sessions so the table does not grow without bound.
  std::erase_if(sessions_, [now = clock_.now()](const auto& kv) { return kv.second.expires_at <= now; });
  sessions_[g.token] = Session{g.principal, g.expires_at};
  return g;
}

TokenGrant CentralService::login(const std::string& username, const std::string& password) {
  auto now = clock_.now();
  bool throttled;
  {
    std::lock_guard lock(session_mu_);
    auto& failures = login_failures_[username];
    while (!failures.empty() && failures.front() <= now - std::chrono::minutes(1)) failures.pop_front();
    throttled = static_cast<int>(failures.size()) >= options_.login_failures_per_minute;
  }
  if (throttled) {
    std::lock_guard writer(write_mu_);
    commit({{"t", "audit"},
            {"audit", audit_entry(Actor{username, Role::kStudent}, AuditAction::kLoginFail, username, "rate limited")}});
    throw Error(ErrorCode::kRateLimited, "too many failed logins for " + username);
  }

  std::optional<UserRecord> user;
  {
    std::shared_lock lock(mu_);
    if (auto it = users_.find(username); it != users_.end()) user = it->second;
  }
  bool ok = user && constant_time_equal(derive_hash(password, user->salt, user->iterations), user->hash);
  if (!ok) {
    {
      std::lock_guard lock(session_mu_);
      login_failures_[username].push_back(now);
    }
    std::lock_guard writer(write_mu_);
    commit({{"t", "audit"},
            {"audit", audit_entry(Actor{username, Role::kStudent}, AuditAction::kLoginFail, username, "bad credentials")}});
    throw Error(ErrorCode::kAuthFailed, "invalid username or password");
  }
  return grant(Principal{Principal::Kind::kUser, Actor{user->username, user->role}, {}});
}

TokenGrant CentralService::issue_edge_token(const std::string& edge_node_id, const std::string& secret) {
  auto it = options_.edge_secrets.find(edge_node_id);
  if (it == options_.edge_secrets.end() || !constant_time_equal(it->second, secret)) {
    throw Error(ErrorCode::kAuthFailed, "unknown edge node or bad secret");
  }
  return grant(Principal{Principal::Kind::kEdge, Actor{"edge:" + edge_node_id, Role::kStudent}, edge_node_id});
}

Principal CentralService::authenticate(const std::string& token) const {
  std::lock_guard lock(session_mu_);
  auto it = sessions_.find(token);
  if (it == sessions_.end() || it->second.expires_at <= clock_.now()) {
    throw Error(ErrorCode::kAuthExpired, "token unknown or expired");
  }
  return it->second.principal;
}

void CentralService::require(const Actor& actor, Permission permission) {
  if (is_allowed(actor.role, permission)) return;
  std::lock_guard writer(write_mu_);
  commit({{"t", "audit"},
          {"audit", audit_entry(actor, AuditAction::kDenied, std::string(to_string(permission)),
                                "role " + std::string(to_string(actor.role)))}});
  throw Error(ErrorCode::kForbidden, std::string(to_string(actor.role)) + " may not " +
                                         std::string(to_string(permission)));
}

// ---------------------------------------------------------------------------
// Users

UserRecord CentralService::create_user(const Actor& actor, const std::string& username,
                                       const std::string& password, Role role,
                                       std::optional<std::string> student_code) {
  require(actor, Permission::kUsersCreate);
  if (!valid_username(username)) throw Error(ErrorCode::kInvalidArgument, "bad username '" + username + "'");
  if (password.empty()) throw Error(ErrorCode::kInvalidArgument, "empty password");
  UserRecord user{username, role, random_hex(16), {}, options_.pbkdf2_iterations, std::move(student_code)};
  user.hash = derive_hash(password, user.salt, user.iterations);

  std::lock_guard writer(write_mu_);
  if (users_.contains(username)) throw Error(ErrorCode::kConflict, "user " + username + " exists");
  if (role == Role::kStudent) {
    if (!user.student_code || roster_.find(*user.student_code) == nullptr) {
      throw Error(ErrorCode::kUnknownStudent, "student login needs a roster student_code");
    }
  } else {
    user.student_code.reset();
  }
  commit({{"t", "user"},
          {"user", user_to_json(user, true)},
          {"audit", audit_entry(actor, AuditAction::kUserCreate, username, std::string(to_string(role)))}});
  return user;
}

bool CentralService::ensure_user(const std::string& username, const std::string& password, Role role) {
  {
    std::shared_lock lock(mu_);
    if (users_.contains(username)) return false;
  }
  create_user(Actor{"system", Role::kAdmin}, username, password, role);
  return true;
}

std::vector<UserRecord> CentralService::list_users(const Actor& actor) {
  require(actor, Permission::kUsersList);
  std::shared_lock lock(mu_);
  std::vector<UserRecord> out;
  for (const auto& [name, user] : users_) {
    auto copy = user;
    copy.salt.clear();
    copy.hash.clear();
    out.push_back(std::move(copy));
  }
  return out;
}

void CentralService::assign_teacher(const Actor& actor, const std::string& username, Division division) {
  require(actor, Permission::kTeachersAssign);
  if (division.grade < 1 || division.grade > 5 || division.section < 'A' || division.section > 'Z') {
    throw Error(ErrorCode::kInvalidGradeOrSection,
                std::to_string(division.grade) + std::string(1, division.section));
  }
  std::lock_guard writer(write_mu_);
  auto it = users_.find(username);
  if (it == users_.end()) throw Error(ErrorCode::kNotFound, "no user " + username);
  if (it->second.role != Role::kTeacher) throw Error(ErrorCode::kInvalidArgument, username + " is not a teacher");
  commit({{"t", "assign"},
          {"username", username},
          {"grade", division.grade},
          {"section", std::string(1, division.section)},
          {"audit", audit_entry(actor, AuditAction::kTeacherAssign, username,
                                std::to_string(division.grade) + std::string(1, division.section))}});
}

std::set<Division> CentralService::assignments_of(const std::string& username) const {
  std::shared_lock lock(mu_);
  auto it = assignments_.find(username);
  return it == assignments_.end() ? std::set<Division>{} : it->second;
}

// ---------------------------------------------------------------------------
// Roster and cards

StudentRecord CentralService::create_student(const Actor& actor, StudentRecord draft) {
  require(actor, Permission::kStudentsCreate);
  if (draft.given_names.empty() || draft.family_names.empty()) {
    throw Error(ErrorCode::kInvalidArgument, "student names are required");
  }
  std::lock_guard writer(write_mu_);
  auto codes = roster_.codes();
  draft.student_code = generate_student_code(draft.enrollment_year, draft.grade, draft.section, codes);
  draft.active = true;
  commit({{"t", "student"},
          {"student", draft},
          {"version", next_version()},
          {"audit", audit_entry(actor, AuditAction::kStudentCreate, draft.student_code,
                                draft.family_names + ", " + draft.given_names)}});
  return draft;
}

StudentRecord CentralService::update_student(const Actor& actor, const StudentRecord& updated) {
  require(actor, Permission::kStudentsUpdate);
  std::lock_guard writer(write_mu_);
  const auto* current = roster_.find(updated.student_code);
  if (current == nullptr) throw Error(ErrorCode::kUnknownStudent, updated.student_code);
  if (updated.grade < 1 || updated.grade > 5 || updated.section < 'A' || updated.section > 'Z') {
    throw Error(ErrorCode::kInvalidGradeOrSection, updated.student_code);
  }
  Json before = *current;
  commit({{"t", "student"},
          {"student", updated},
          {"version", next_version()},
          {"audit", audit_entry(actor, AuditAction::kStudentCreate, updated.student_code,
                                Json{{"before", before}}.dump())}});
  return updated;
}

std::vector<StudentRecord> CentralService::list_students(const Actor& actor, std::optional<int> grade,
                                                         std::optional<char> section) {
  require(actor, Permission::kStudentsList);
  AttendanceFilter filter;
  filter.grade = grade;
  filter.section = section;
  auto in_scope = scope_filter(actor, filter);
  std::shared_lock lock(mu_);
  std::vector<StudentRecord> out;
  for (const auto& [code, s] : roster_.all()) {
    if (grade && s.grade != *grade) continue;
    if (section && s.section != *section) continue;
    if (in_scope(s)) out.push_back(s);
  }
  return out;
}

CardChange CentralService::enroll_card(const Actor& actor, const CardUid& uid, const std::string& student_code) {
  require(actor, Permission::kCardsEnroll);
  std::lock_guard writer(write_mu_);
  CardTable scratch = cards_;
  auto change = scratch.enroll(uid, student_code, roster_, actor, clock_.now());
  Json cards = Json::array();
  if (change.displaced) cards.push_back(*change.displaced);
  cards.push_back(change.card);
  commit({{"t", "card"}, {"cards", cards}, {"version", next_version()}, {"audit", change.audit}});
  return change;
}

CardChange CentralService::set_card_state(const Actor& actor, const CardUid& uid, CardState state) {
  require(actor, Permission::kCardsSetState);
  std::lock_guard writer(write_mu_);
  CardTable scratch = cards_;
  auto change = scratch.set_state(uid, state, actor, clock_.now());
  commit({{"t", "card"}, {"cards", Json::array({change.card})}, {"version", next_version()}, {"audit", change.audit}});
  return change;
}

std::vector<RfidCard> CentralService::list_cards(const Actor& actor) {
  require(actor, Permission::kCardsList);
  std::shared_lock lock(mu_);
  std::vector<RfidCard> out;
  for (const auto& [uid, card] : cards_.all()) out.push_back(card);
  return out;
}

// ---------------------------------------------------------------------------
// Attendance

SchoolDay CentralService::today() const { return options_.policy.timezone.to_local(clock_.now()).day; }

bool CentralService::is_day_closed(SchoolDay day) const {
  return clock_.now() >= options_.policy.closure_instant(day);
}

const AttendanceEvent* CentralService::current_locked(const std::string& code, SchoolDay day) const {
  auto it = winners_.find({day, code});
  return it == winners_.end() ? nullptr : &lineages_.at(it->second).current();
}

AttendanceEvent CentralService::manual_mark(const Actor& actor, const std::string& student_code, SchoolDay day,
                                            AttendanceStatus status, const std::string& note) {
  require(actor, Permission::kAttendanceMark);
  if (status == AttendanceStatus::kJustified) {
    throw Error(ErrorCode::kInvalidArgument, "use justify for justified absences");
  }
  if (day > today()) throw Error(ErrorCode::kFutureDate, format_date(day));
  if (!options_.policy.calendar.is_school_day(day)) throw Error(ErrorCode::kNonSchoolDay, format_date(day));

  std::lock_guard writer(write_mu_);
  if (roster_.find(student_code) == nullptr) throw Error(ErrorCode::kUnknownStudent, student_code);
  AttendanceEvent event;
  Json prior = nullptr;
  if (const auto* current = current_locked(student_code, day)) {
    prior = *current;
    event = *current;
    event.revision = lineages_.at(current->event_id).versions.back().revision + 1;
  } else {
    event.event_id = options_.ids();
    event.student_code = student_code;
    event.school_day = day;
  }
  event.status = status;
  event.method = CaptureMethod::kManual;
  event.recorded_by = actor.id;
  event.recorded_at = clock_.now();
  event.edge_sequence = 0;
  validate_event(event);
  commit({{"t", "manual"},
          {"event", event},
          {"version", next_version()},
          {"audit", audit_entry(actor, AuditAction::kManualMark, day_subject(student_code, day),
                                Json{{"note", note}, {"status", to_string(status)}, {"prior", prior}}.dump())}});
  return event;
}

AttendanceEvent CentralService::justify(const Actor& actor, const std::string& student_code, SchoolDay day,
                                        const std::string& note) {
  require(actor, Permission::kAttendanceJustify);
  std::lock_guard writer(write_mu_);
  const auto* current = current_locked(student_code, day);
  if (current == nullptr) throw Error(ErrorCode::kNoEvent, day_subject(student_code, day));
  if (current->status != AttendanceStatus::kAbsent) {
    throw Error(ErrorCode::kNotAbsent, day_subject(student_code, day) + " is " +
                                           std::string(to_string(current->status)));
  }
  Json prior = *current;
  AttendanceEvent event = *current;
  event.revision = lineages_.at(current->event_id).versions.back().revision + 1;
  event.status = AttendanceStatus::kJustified;
  event.method = CaptureMethod::kManual;
  event.recorded_by = actor.id;
  event.recorded_at = clock_.now();
  event.edge_sequence = 0;
  commit({{"t", "manual"},
          {"event", event},
          {"version", next_version()},
          {"audit", audit_entry(actor, AuditAction::kJustify, day_subject(student_code, day),
                                Json{{"note", note}, {"prior", prior}}.dump())}});
  return event;
}

std::function<bool(const StudentRecord&)> CentralService::scope_filter(const Actor& actor,
                                                                        const AttendanceFilter& filter) {
  auto deny = [&](const std::string& why) {
    std::lock_guard writer(write_mu_);
    commit({{"t", "audit"}, {"audit", audit_entry(actor, AuditAction::kDenied, "scope", why)}});
    throw Error(ErrorCode::kForbidden, why);
  };
  switch (actor.role) {
    case Role::kAdmin:
    case Role::kAuxiliary:
      return [](const StudentRecord&) { return true; };
    case Role::kTeacher: {
      auto assigned = assignments_of(actor.id);
      if (filter.student_code) {
        std::shared_lock lock(mu_);
        const auto* s = roster_.find(*filter.student_code);
        if (s != nullptr && !assigned.contains(Division{s->grade, s->section})) {
          lock.unlock();
          deny("student " + *filter.student_code + " is outside the teacher's divisions");
        }
      }
      if (filter.grade && filter.section && !assigned.contains(Division{*filter.grade, *filter.section})) {
        deny("division outside the teacher's assignments");
      }
      if (filter.grade && !filter.section &&
          std::none_of(assigned.begin(), assigned.end(), [&](const Division& d) { return d.grade == *filter.grade; })) {
        deny("grade outside the teacher's assignments");
      }
      return [assigned](const StudentRecord& s) { return assigned.contains(Division{s.grade, s.section}); };
    }
    case Role::kStudent: {
      std::optional<std::string> own;
      {
        std::shared_lock lock(mu_);
        if (auto it = users_.find(actor.id); it != users_.end()) own = it->second.student_code;
      }
      if (!own || (filter.student_code && *filter.student_code != *own)) {
        deny("students may only view their own attendance");
      }
      return [code = *own](const StudentRecord& s) { return s.student_code == code; };
    }
  }
  return [](const StudentRecord&) { return false; };
}

std::vector<AttendanceRow> CentralService::filtered_rows(
    const AttendanceFilter& filter, const std::function<bool(const StudentRecord&)>& in_scope) const {
  std::vector<AttendanceRow> rows;
  auto first = winners_.lower_bound(DayKey{filter.from, ""});
  auto last = winners_.lower_bound(DayKey{filter.to + std::chrono::days(1), ""});
  for (auto it = first; it != last; ++it) {
    const auto& event = lineages_.at(it->second).current();
    StudentRecord student;
    if (const auto* s = roster_.find(event.student_code)) {
      student = *s;
    } else {
      student.student_code = event.student_code;
      student.grade = 0;
      student.section = '?';
    }
    if (filter.grade && student.grade != *filter.grade) continue;
    if (filter.section && student.section != *filter.section) continue;
    if (filter.student_code && event.student_code != *filter.student_code) continue;
    if (filter.status && event.status != *filter.status) continue;
    if (!in_scope(student)) continue;
    rows.push_back(AttendanceRow{event, std::move(student)});
  }
  return rows;
}

AttendancePage CentralService::query_attendance(const Actor& actor, const AttendanceFilter& filter,
                                                PageRequest page) {
  require(actor, Permission::kAttendanceQuery);
  if (filter.from > filter.to) {
    throw Error(ErrorCode::kInvalidRange, format_date(filter.from) + " is after " + format_date(filter.to));
  }
  if (page.page < 1 || page.page_size < 1 || page.page_size > kMaxPageSize) {
    throw Error(ErrorCode::kInvalidArgument, "page >= 1 and 1 <= page_size <= " + std::to_string(kMaxPageSize));
  }
  auto in_scope = scope_filter(actor, filter);
  std::shared_lock lock(mu_);
  auto rows = filtered_rows(filter, in_scope);
  lock.unlock();

  AttendancePage result;
  result.page = page.page;
  result.page_size = page.page_size;
  result.total = rows.size();
  for (const auto& r : rows) result.counts.add(r.event.status);
  auto begin = std::min(rows.size(), (page.page - 1) * page.page_size);
  auto end = std::min(rows.size(), begin + page.page_size);
  result.rows.assign(std::make_move_iterator(rows.begin() + static_cast<std::ptrdiff_t>(begin)),
                     std::make_move_iterator(rows.begin() + static_cast<std::ptrdiff_t>(end)));
  return result;
}

std::vector<AttendanceRow> CentralService::export_rows(const Actor& actor, const AttendanceFilter& filter) {
  require(actor, Permission::kReportsExport);
  if (filter.from > filter.to) {
    throw Error(ErrorCode::kInvalidRange, format_date(filter.from) + " is after " + format_date(filter.to));
  }
  auto in_scope = scope_filter(actor, filter);
  std::shared_lock lock(mu_);
  return filtered_rows(filter, in_scope);
}

LiveBatch CentralService::live_feed(const Actor& actor, SchoolDay day, std::optional<std::uint64_t> cursor,
                                    std::chrono::milliseconds wait) {
  require(actor, Permission::kAttendanceLive);
  AttendanceFilter filter;
  filter.from = filter.to = day;
  auto in_scope = scope_filter(actor, filter);
  auto deadline = std::chrono::steady_clock::now() + std::min(wait, std::chrono::milliseconds(30'000));

  while (true) {
    LiveBatch batch;
    {
      std::shared_lock lock(mu_);
      batch.cursor = change_head_;
      if (!cursor) {
        batch.events = filtered_rows(filter, in_scope);
      } else {
        auto first_retained = changes_.empty() ? change_head_ + 1 : changes_.front().seq;
        if (*cursor > change_head_ || *cursor + 1 < first_retained) {
          throw Error(ErrorCode::kCursorExpired, "cursor " + std::to_string(*cursor) + " is no longer available");
        }
        for (auto it = changes_.rbegin(); it != changes_.rend() && it->seq > *cursor; ++it) {
          if (it->event.school_day != day) continue;
          const auto* s = roster_.find(it->event.student_code);
          StudentRecord student = s ? *s : StudentRecord{it->event.student_code, {}, {}, 0, 0, '?', {}, false};
          if (!in_scope(student)) continue;
          batch.events.push_back(AttendanceRow{it->event, std::move(student)});
        }
        std::reverse(batch.events.begin(), batch.events.end());
      }
      for (const auto& [code, s] : roster_.all()) {
        if (s.active && in_scope(s)) ++batch.roster_size;
      }
      for (const auto& row : filtered_rows(filter, in_scope)) {
        if (row.student.active) batch.counts.add(row.event.status);
      }
      batch.pending = batch.roster_size > batch.counts.total() ? batch.roster_size - batch.counts.total() : 0;
    }
    if (!cursor || !batch.events.empty() || std::chrono::steady_clock::now() >= deadline) {
      batch.heartbeat = batch.events.empty();
      return batch;
    }
    std::unique_lock live(live_mu_);
    live_cv_.wait_until(live, deadline, [&] { return published_head_ > batch.cursor; });
  }
}

// ---------------------------------------------------------------------------
// Reports

void CentralService::require_scope(const Actor& actor, const Scope& scope) {
  if (actor.role == Role::kAdmin || actor.role == Role::kAuxiliary) return;
  AttendanceFilter filter;
  switch (scope.kind) {
    case Scope::Kind::kInstitution:
      filter.grade = 0;  // matches no assignment
      filter.section = '?';
      break;
    case Scope::Kind::kGrade:
      filter.grade = scope.grade;
      filter.section = '?';
      break;
    case Scope::Kind::kSection:
      filter.grade = scope.grade;
      filter.section = scope.section;
      break;
    case Scope::Kind::kStudent:
      filter.student_code = scope.student_code;
      break;
  }
  scope_filter(actor, filter);
}

LedgerView CentralService::ledger_view(std::vector<StudentRecord>& students,
                                       std::vector<AttendanceEvent>& events) const {
  return LedgerView{students, events, options_.policy.calendar,
                    [this](SchoolDay d) { return is_day_closed(d); }};
}

AttendanceSummary CentralService::summary(const Actor& actor, const Scope& scope, const Period& period) {
  require(actor, Permission::kReportsSummary);
  require_scope(actor, scope);
  std::vector<StudentRecord> students;
  std::vector<AttendanceEvent> events;
  {
    std::shared_lock lock(mu_);
    for (const auto& [code, s] : roster_.all()) students.push_back(s);
    AttendanceFilter all{period.from, period.to, {}, {}, {}, {}};
    for (auto& row : filtered_rows(all, [](const StudentRecord&) { return true; })) {
      events.push_back(std::move(row.event));
    }
  }
  return summarize(scope, period, ledger_view(students, events));
}

std::vector<ChronicFlag> CentralService::chronic(const Actor& actor, const Scope& scope, const Period& window,
                                                 double threshold) {
  require(actor, Permission::kReportsSummary);
  require_scope(actor, scope);
  if (threshold < 0.0 || threshold > 1.0) throw Error(ErrorCode::kInvalidArgument, "threshold must be in [0, 1]");
  std::vector<StudentRecord> students;
  std::vector<AttendanceEvent> events;
  {
    std::shared_lock lock(mu_);
    for (const auto& [code, s] : roster_.all()) students.push_back(s);
    AttendanceFilter all{window.from, window.to, {}, {}, {}, {}};
    for (auto& row : filtered_rows(all, [](const StudentRecord&) { return true; })) {
      events.push_back(std::move(row.event));
    }
  }
  auto ledger = ledger_view(students, events);
  std::vector<ChronicFlag> flags;
  for (const auto& s : students) {
    if (!scope.contains(s) || (!s.active && scope.kind != Scope::Kind::kStudent)) continue;
    flags.push_back(flag_chronic_absenteeism(s.student_code, window, threshold, ledger));
  }
  return flags;
}

// ---------------------------------------------------------------------------
// Sync

PushResult CentralService::push_events(const Principal& edge, const SyncBatch& batch) {
  if (edge.kind != Principal::Kind::kEdge) throw Error(ErrorCode::kForbidden, "sync requires an edge token");
  if (batch.edge_node_id != edge.edge_node_id) {
    throw Error(ErrorCode::kNodeMismatch, "token for " + edge.edge_node_id + ", batch from " + batch.edge_node_id);
  }
  verify_batch(batch);
  for (const auto& e : batch.events) validate_event(e);

  std::lock_guard writer(write_mu_);
  auto hw_it = high_water_.find(batch.edge_node_id);
  std::uint64_t hw = hw_it == high_water_.end() ? 0 : hw_it->second;
  if (!batch.empty() && batch.first_sequence > hw + 1) return PushResult{hw, 0, true};

  Json fresh = Json::array();
  std::uint64_t duplicates = 0;
  std::set<std::pair<EventId, std::uint32_t>> seen;
  for (const auto& e : batch.events) {
    auto known = lineages_.find(e.event_id);
    bool stored = known != lineages_.end() &&
                  std::any_of(known->second.versions.begin(), known->second.versions.end(),
                              [&](const AttendanceEvent& v) { return v.revision == e.revision; });
    if (stored || !seen.insert({e.event_id, e.revision}).second) {
      ++duplicates;
    } else {
      fresh.push_back(e);
    }
  }
  auto new_hw = std::max(hw, batch.empty() ? hw : batch.last_sequence);
  commit({{"t", "push"},
          {"node", batch.edge_node_id},
          {"first", batch.first_sequence},
          {"last", batch.last_sequence},
          {"events", fresh},
          {"duplicates", duplicates},
          {"high_water", new_hw},
          {"at", format_timestamp(clock_.now())}});
  return PushResult{new_hw, duplicates, false};
}

RosterDelta CentralService::pull_roster(const Principal& edge, std::uint64_t since) {
  if (edge.kind != Principal::Kind::kEdge) throw Error(ErrorCode::kForbidden, "sync requires an edge token");
  std::shared_lock lock(mu_);
  if (since > roster_version_) since = 0;  // the edge is ahead of us: resend everything
  RosterDelta delta;
  delta.version = roster_version_;
  for (const auto& [code, v] : student_versions_) {
    if (v > since) delta.students.push_back(*roster_.find(code));
  }
  for (const auto& [uid, v] : card_versions_) {
    if (v > since) delta.cards.push_back(*cards_.find(uid));
  }
  for (const auto& [id, v] : manual_versions_) {
    if (v > since) delta.manual_events.push_back(lineages_.at(id).current());
  }
  delta.policy = Json(options_.policy);
  return delta;
}

// ---------------------------------------------------------------------------
// Introspection

std::vector<AuditEntry> CentralService::audit(const Actor& actor, std::size_t limit) {
  require(actor, Permission::kAuditList);
  std::shared_lock lock(mu_);
  if (limit == 0 || limit >= audit_.size()) return audit_;
  return {audit_.end() - static_cast<std::ptrdiff_t>(limit), audit_.end()};
}

std::size_t CentralService::audit_size() const {
  std::shared_lock lock(mu_);
  return audit_.size();
}

std::vector<AttendanceEvent> CentralService::current_events() const {
  std::shared_lock lock(mu_);
  std::vector<AttendanceEvent> out;
  for (const auto& [key, id] : winners_) out.push_back(lineages_.at(id).current());
  return out;
}

std::set<EventId> CentralService::event_ids() const {
  std::shared_lock lock(mu_);
  std::set<EventId> out;
  for (const auto& [id, lineage] : lineages_) out.insert(id);
  return out;
}

std::uint64_t CentralService::high_water(const std::string& edge_node_id) const {
  std::shared_lock lock(mu_);
  auto it = high_water_.find(edge_node_id);
  return it == high_water_.end() ? 0 : it->second;
}

std::uint64_t CentralService::roster_version() const {
  std::shared_lock lock(mu_);
  return roster_version_;
}

std::uint64_t CentralService::live_head() const {
  std::shared_lock lock(mu_);
  return change_head_;
}

CentralService::Options central_options_from_config(const Config& config) {
  CentralService::Options options;
  options.policy = TimeWindowPolicy::from_config(config);
  for (const auto& key : config.keys_with_prefix("edge_secret.")) {
    options.edge_secrets[key.substr(std::string_view("edge_secret.").size())] = *config.get(key);
  }
  options.token_ttl = std::chrono::hours(config.get_int("token_ttl_hours", 24));
  options.pbkdf2_iterations = static_cast<int>(config.get_int("pbkdf2_iterations", options.pbkdf2_iterations));
  options.sync = config.get_bool("store_sync", true);
  return options;
}

}  // namespace rollcall
