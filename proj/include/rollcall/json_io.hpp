#pragma once

// JSON encodings shared by the journal, the sync wire format and the HTTP
// API. Field names here are part of the public contract (docs/api.md).

#include <json.hpp>

#include "rollcall/domain.hpp"

namespace rollcall {

using Json = nlohmann::json;

void to_json(Json& j, const StudentRecord& s);
void from_json(const Json& j, StudentRecord& s);

void to_json(Json& j, const RfidCard& c);
void from_json(const Json& j, RfidCard& c);

void to_json(Json& j, const AttendanceEvent& e);
void from_json(const Json& j, AttendanceEvent& e);

void to_json(Json& j, const AuditEntry& a);
void from_json(const Json& j, AuditEntry& a);

}  // namespace rollcall
