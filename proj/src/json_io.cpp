#include "rollcall/json_io.hpp"

#include "rollcall/error.hpp"

namespace rollcall {

namespace {

template <typename T>
T require(std::optional<T> value, std::string_view what, const std::string& text) {
  if (!value) throw Error(ErrorCode::kInvalidArgument, std::string(what) + " '" + text + "'");
  return *value;
}

Json optional_string(const std::optional<std::string>& s) { return s ? Json(*s) : Json(nullptr); }

std::optional<std::string> read_optional_string(const Json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) return std::nullopt;
  return it->get<std::string>();
}

}  // namespace

void to_json(Json& j, const StudentRecord& s) {
  j = Json{{"student_code", s.student_code},
           {"given_names", s.given_names},
           {"family_names", s.family_names},
           {"enrollment_year", s.enrollment_year},
           {"grade", s.grade},
           {"section", std::string(1, s.section)},
           {"emergency_contact", s.emergency_contact},
           {"active", s.active}};
}

void from_json(const Json& j, StudentRecord& s) {
  s.student_code = j.at("student_code").get<std::string>();
  s.given_names = j.value("given_names", "");
  s.family_names = j.value("family_names", "");
  s.enrollment_year = j.at("enrollment_year").get<int>();
  s.grade = j.at("grade").get<int>();
  auto section = j.at("section").get<std::string>();
  if (section.size() != 1) throw Error(ErrorCode::kInvalidGradeOrSection, section);
  s.section = section[0];
  s.emergency_contact = j.value("emergency_contact", "");
  s.active = j.value("active", true);
}

void to_json(Json& j, const RfidCard& c) {
  j = Json{{"uid", c.uid.to_string()},
           {"state", to_string(c.state)},
           {"linked_student", optional_string(c.linked_student)},
           {"issued_at", format_timestamp(c.issued_at)}};
}

void from_json(const Json& j, RfidCard& c) {
  auto uid = j.at("uid").get<std::string>();
  c.uid = require(CardUid::parse(uid), "bad uid", uid);
  auto state = j.at("state").get<std::string>();
  c.state = require(parse_card_state(state), "bad card state", state);
  c.linked_student = read_optional_string(j, "linked_student");
  c.issued_at = parse_timestamp(j.at("issued_at").get<std::string>());
}

void to_json(Json& j, const AttendanceEvent& e) {
  j = Json{{"event_id", e.event_id.to_string()},
           {"student_code", e.student_code},
           {"school_day", format_date(e.school_day)},
           {"status", to_string(e.status)},
           {"recorded_at", format_timestamp(e.recorded_at)},
           {"method", to_string(e.method)},
           {"recorded_by", optional_string(e.recorded_by)},
           {"edge_sequence", e.edge_sequence},
           {"revision", e.revision}};
}

void from_json(const Json& j, AttendanceEvent& e) {
  auto id = j.at("event_id").get<std::string>();
  e.event_id = require(EventId::parse(id), "bad event_id", id);
  e.student_code = j.at("student_code").get<std::string>();
  e.school_day = parse_date(j.at("school_day").get<std::string>());
  auto status = j.at("status").get<std::string>();
  e.status = require(parse_status(status), "bad status", status);
  e.recorded_at = parse_timestamp(j.at("recorded_at").get<std::string>());
  auto method = j.at("method").get<std::string>();
  e.method = require(parse_method(method), "bad method", method);
  e.recorded_by = read_optional_string(j, "recorded_by");
  e.edge_sequence = j.value("edge_sequence", std::uint64_t{0});
  e.revision = j.value("revision", std::uint32_t{0});
}

void to_json(Json& j, const AuditEntry& a) {
  j = Json{{"at", format_timestamp(a.at)},
           {"actor", a.actor},
           {"action", to_string(a.action)},
           {"subject", a.subject},
           {"detail", a.detail}};
}

void from_json(const Json& j, AuditEntry& a) {
  a.at = parse_timestamp(j.at("at").get<std::string>());
  a.actor = j.at("actor").get<std::string>();
  auto action = j.at("action").get<std::string>();
  a.action = require(parse_audit_action(action), "bad audit action", action);
  a.subject = j.value("subject", "");
  a.detail = j.value("detail", "");
}

}  // namespace rollcall
