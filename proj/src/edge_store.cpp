#include "rollcall/edge_store.hpp"

#include <algorithm>

#include "rollcall/error.hpp"

namespace rollcall {

EdgeStore::EdgeStore(std::filesystem::path path, Options options)
    : journal_(std::move(path), Journal::Options{options.max_bytes, options.sync}),
      node_id_(options.node_id),
      created_at_(options.created_at) {
  auto records = journal_.take_recovered();
  for (const auto& payload : records) {
    Json record;
    try {
      record = Json::parse(payload);
    } catch (const Json::exception& e) {
      throw Error(ErrorCode::kCorruptStore, journal_.path().string() + ": " + e.what());
    }
    apply(record);
  }
  if (records.empty()) {
    commit(Json{{"t", "meta"},
                {"node_id", node_id_},
                {"created_at", format_timestamp(created_at_)}});
  }
}

// ---------------------------------------------------------------------------
// Replay / apply

void EdgeStore::apply_event(const AttendanceEvent& event) {
  if (event.edge_sequence != log_.size() + 1) {
    throw Error(ErrorCode::kCorruptStore,
                "sequence gap at " + std::to_string(event.edge_sequence));
  }
  log_.push_back(event);
  current_[{event.student_code, event.school_day}] = event.edge_sequence;
}

void EdgeStore::apply(const Json& record) {
  const auto type = record.at("t").get<std::string>();
  if (type == "meta") {
    node_id_ = record.at("node_id").get<std::string>();
    created_at_ = parse_timestamp(record.at("created_at").get<std::string>());
  } else if (type == "scan") {
    if (record.contains("event")) apply_event(record.at("event").get<AttendanceEvent>());
    audit_.push_back(record.at("audit").get<AuditEntry>());
  } else if (type == "event") {
    apply_event(record.at("event").get<AttendanceEvent>());
  } else if (type == "closure") {
    for (const auto& e : record.at("events")) apply_event(e.get<AttendanceEvent>());
    closed_.insert(parse_date(record.at("day").get<std::string>()));
  } else if (type == "revision") {
    apply_event(record.at("event").get<AttendanceEvent>());
    audit_.push_back(record.at("audit").get<AuditEntry>());
  } else if (type == "audit") {
    audit_.push_back(record.at("audit").get<AuditEntry>());
  } else if (type == "roster") {
    for (const auto& s : record.at("students")) roster_.upsert(s.get<StudentRecord>());
    for (const auto& c : record.at("cards")) cards_.upsert(c.get<RfidCard>());
    for (const auto& e : record.value("manual_events", Json::array())) {
      auto ev = e.get<AttendanceEvent>();
      manual_[ev.event_id] = ev;
    }
    if (record.contains("policy")) policy_ = record.at("policy");
    roster_version_ = std::max(roster_version_, record.at("version").get<std::uint64_t>());
  } else if (type == "synced" || type == "rewind") {
    high_water_ = record.at("high_water").get<std::uint64_t>();
  } else {
    throw Error(ErrorCode::kCorruptStore, "unknown record type '" + type + "'");
  }
}

void EdgeStore::commit(Json record) {
  journal_.append(record.dump());
  std::unique_lock lock(mu_);
  apply(record);
}

void EdgeStore::check_append(const AttendanceEvent& event) const {
  validate_event(event);
  auto it = current_.find({event.student_code, event.school_day});
  if (it == current_.end()) return;
  const auto& existing = log_[it->second - 1];
  if (existing.event_id != event.event_id || event.revision <= existing.revision) {
    throw Error(ErrorCode::kUniquenessViolation,
                event.student_code + " already has an event on " + format_date(event.school_day));
  }
}

// ---------------------------------------------------------------------------
// Writes

std::uint64_t EdgeStore::append_event(AttendanceEvent event) {
  std::lock_guard writer(write_mu_);
  check_append(event);
  event.edge_sequence = log_.size() + 1;
  commit(Json{{"t", "event"}, {"event", event}});
  return event.edge_sequence;
}

std::optional<std::uint64_t> EdgeStore::record_scan(std::optional<AttendanceEvent> event,
                                                    const AuditEntry& audit) {
  std::lock_guard writer(write_mu_);
  Json record{{"t", "scan"}, {"audit", audit}};
  std::optional<std::uint64_t> sequence;
  if (event) {
    check_append(*event);
    event->edge_sequence = log_.size() + 1;
    sequence = event->edge_sequence;
    record["event"] = *event;
  }
  commit(std::move(record));
  return sequence;
}

std::vector<AttendanceEvent> EdgeStore::record_closure(SchoolDay day,
                                                       std::vector<AttendanceEvent> events) {
  std::lock_guard writer(write_mu_);
  auto next = log_.size() + 1;
  std::set<std::string> seen;
  for (auto& e : events) {
    check_append(e);
    if (!seen.insert(e.student_code).second || e.school_day != day) {
      throw Error(ErrorCode::kUniquenessViolation, "closure batch repeats " + e.student_code);
    }
    e.edge_sequence = next++;
  }
  commit(Json{{"t", "closure"}, {"day", format_date(day)}, {"events", events}});
  return events;
}

std::uint64_t EdgeStore::record_revision(AttendanceEvent revised, const AuditEntry& audit) {
  std::lock_guard writer(write_mu_);
  auto it = current_.find({revised.student_code, revised.school_day});
  if (it == current_.end()) {
    throw Error(ErrorCode::kNoEvent, revised.student_code + " on " + format_date(revised.school_day));
  }
  check_append(revised);
  revised.edge_sequence = log_.size() + 1;
  commit(Json{{"t", "revision"}, {"event", revised}, {"audit", audit}});
  return revised.edge_sequence;
}

void EdgeStore::append_audit(const AuditEntry& audit) {
  std::lock_guard writer(write_mu_);
  commit(Json{{"t", "audit"}, {"audit", audit}});
}

void EdgeStore::apply_roster(const RosterDelta& delta) {
  std::lock_guard writer(write_mu_);
  Json record{{"t", "roster"},
              {"version", delta.version},
              {"students", delta.students},
              {"cards", delta.cards},
              {"manual_events", delta.manual_events}};
  if (delta.policy) record["policy"] = *delta.policy;
  commit(std::move(record));
}

void EdgeStore::upsert_student(const StudentRecord& student) {
  RosterDelta delta;
  delta.version = roster_version();
  delta.students.push_back(student);
  apply_roster(delta);
}

void EdgeStore::upsert_card(const RfidCard& card) {
  RosterDelta delta;
  delta.version = roster_version();
  delta.cards.push_back(card);
  apply_roster(delta);
}

void EdgeStore::mark_synced(std::uint64_t high_water) {
  std::lock_guard writer(write_mu_);
  if (high_water < high_water_) {
    throw Error(ErrorCode::kRegressionRejected,
                std::to_string(high_water) + " < " + std::to_string(high_water_));
  }
  if (high_water > log_.size()) {
    throw Error(ErrorCode::kInvalidArgument, "high-water beyond last sequence");
  }
  if (high_water == high_water_) return;
  commit(Json{{"t", "synced"}, {"high_water", high_water}});
}

void EdgeStore::rewind_synced(std::uint64_t high_water) {
  std::lock_guard writer(write_mu_);
  if (high_water >= high_water_) return;
  commit(Json{{"t", "rewind"}, {"high_water", high_water}});
}

// ---------------------------------------------------------------------------
// Reads

SyncBatch EdgeStore::pending_batch(std::size_t max_n) const {
  if (max_n == 0) throw Error(ErrorCode::kInvalidArgument, "max_n must be at least 1");
  max_n = std::min(max_n, kMaxBatchEvents);
  std::shared_lock lock(mu_);
  auto begin = std::min<std::size_t>(high_water_, log_.size());
  auto end = std::min(log_.size(), begin + max_n);
  std::vector<AttendanceEvent> events(log_.begin() + static_cast<std::ptrdiff_t>(begin),
                                      log_.begin() + static_cast<std::ptrdiff_t>(end));
  return make_batch(node_id_, high_water_, std::move(events));
}

std::optional<AttendanceEvent> EdgeStore::current_event(std::string_view student_code,
                                                        SchoolDay day) const {
  std::shared_lock lock(mu_);
  auto it = current_.find({std::string(student_code), day});
  if (it == current_.end()) return std::nullopt;
  return log_[it->second - 1];
}

std::vector<AttendanceEvent> EdgeStore::log() const {
  std::shared_lock lock(mu_);
  return {log_.begin(), log_.end()};
}

std::vector<AttendanceEvent> EdgeStore::current_events() const {
  std::shared_lock lock(mu_);
  std::vector<AttendanceEvent> out;
  out.reserve(current_.size());
  for (const auto& [_, seq] : current_) out.push_back(log_[seq - 1]);
  return out;
}

std::vector<AttendanceEvent> EdgeStore::current_events_on(SchoolDay day) const {
  std::shared_lock lock(mu_);
  std::vector<AttendanceEvent> out;
  for (const auto& [key, seq] : current_) {
    if (key.second == day) out.push_back(log_[seq - 1]);
  }
  return out;
}

std::vector<AttendanceEvent> EdgeStore::manual_events() const {
  std::shared_lock lock(mu_);
  std::vector<AttendanceEvent> out;
  for (const auto& [_, e] : manual_) out.push_back(e);
  return out;
}

Roster EdgeStore::roster() const {
  std::shared_lock lock(mu_);
  return roster_;
}

CardTable EdgeStore::cards() const {
  std::shared_lock lock(mu_);
  return cards_;
}

std::optional<RfidCard> EdgeStore::card(const CardUid& uid) const {
  std::shared_lock lock(mu_);
  const auto* c = cards_.find(uid);
  return c ? std::optional<RfidCard>(*c) : std::nullopt;
}

std::optional<StudentRecord> EdgeStore::student(std::string_view code) const {
  std::shared_lock lock(mu_);
  const auto* s = roster_.find(code);
  return s ? std::optional<StudentRecord>(*s) : std::nullopt;
}

std::vector<AuditEntry> EdgeStore::audit() const {
  std::shared_lock lock(mu_);
  return {audit_.begin(), audit_.end()};
}

std::size_t EdgeStore::audit_count(AuditAction action) const {
  std::shared_lock lock(mu_);
  return static_cast<std::size_t>(std::count_if(
      audit_.begin(), audit_.end(), [&](const AuditEntry& a) { return a.action == action; }));
}

std::optional<Json> EdgeStore::central_policy() const {
  std::shared_lock lock(mu_);
  return policy_;
}

std::uint64_t EdgeStore::last_sequence() const {
  std::shared_lock lock(mu_);
  return log_.size();
}

std::uint64_t EdgeStore::high_water_synced() const {
  std::shared_lock lock(mu_);
  return high_water_;
}

std::uint64_t EdgeStore::roster_version() const {
  std::shared_lock lock(mu_);
  return roster_version_;
}

bool EdgeStore::is_closed(SchoolDay day) const {
  std::shared_lock lock(mu_);
  return closed_.contains(day);
}

std::set<SchoolDay> EdgeStore::closed_days() const {
  std::shared_lock lock(mu_);
  return closed_;
}

Timestamp EdgeStore::created_at() const {
  std::shared_lock lock(mu_);
  return created_at_;
}

std::uint64_t EdgeStore::size_bytes() const {
  std::lock_guard writer(write_mu_);
  return journal_.size_bytes();
}

void EdgeStore::export_event_log(std::ostream& out) const {
  std::shared_lock lock(mu_);
  for (const auto& e : log_) out << Json(e).dump() << '\n';
}

}  // namespace rollcall
