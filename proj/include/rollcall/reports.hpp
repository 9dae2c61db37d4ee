#pragma once

#include <functional>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include "rollcall/domain.hpp"
#include "rollcall/json_io.hpp"
#include "rollcall/policy.hpp"

namespace rollcall {

struct StatusCounts {
  std::uint64_t present = 0;
  std::uint64_t late = 0;
  std::uint64_t absent = 0;
  std::uint64_t justified = 0;

  void add(AttendanceStatus status);
  std::uint64_t total() const { return present + late + absent + justified; }
  StatusCounts& operator+=(const StatusCounts& other);
  bool operator==(const StatusCounts&) const = default;
};

void to_json(Json& j, const StatusCounts& c);

/// Which students a summary covers.
struct Scope {
  enum class Kind { kInstitution, kGrade, kSection, kStudent };

  Kind kind = Kind::kInstitution;
  int grade = 0;
  char section = 0;
  std::string student_code;

  static Scope institution() { return {}; }
  static Scope of_grade(int g) { return {Kind::kGrade, g, 0, {}}; }
  static Scope of_section(int g, char s) { return {Kind::kSection, g, s, {}}; }
  static Scope of_student(std::string code) { return {Kind::kStudent, 0, 0, std::move(code)}; }

  bool contains(const StudentRecord& student) const;
  std::string label() const;
};

/// Inclusive calendar range with the granularity it was built from.
struct Period {
  enum class Kind { kDay, kWeek, kMonth, kRange };

  Kind kind = Kind::kRange;
  SchoolDay from{};
  SchoolDay to{};

  static Period day(SchoolDay d) { return {Kind::kDay, d, d}; }
  /// Monday-to-Sunday ISO week containing `d`.
  static Period iso_week(SchoolDay d);
  static Period month(SchoolDay d);
  /// Throws kInvalidRange when from > to.
  static Period range(SchoolDay from, SchoolDay to);

  std::string label() const;
};

std::string_view to_string(Scope::Kind kind);
std::string_view to_string(Period::Kind kind);

/// Read-only view of the attendance ledger that reports aggregate over.
/// `events` holds the current version per (student, day).
struct LedgerView {
  const std::vector<StudentRecord>& students;
  const std::vector<AttendanceEvent>& events;
  const SchoolCalendar& calendar;
  /// True once a day's closure instant has passed.
  std::function<bool(SchoolDay)> is_closed;
};

struct AttendanceSummary {
  Scope scope;
  Period period;
  StatusCounts counts;
  std::uint64_t students = 0;
  std::uint64_t school_days = 0;
  /// students x school days: records a fully closed period must contain.
  std::uint64_t expected_records = 0;
  double attendance_rate = 0.0;
  double tardiness_rate = 0.0;
  /// Some school day in the period has not closed yet.
  bool provisional = false;
};

void to_json(Json& j, const AttendanceSummary& s);

/// Active students in scope, their events inside the period. Rates are
/// (present + late) / expected_records and late / (present + late), zero
/// when the denominator is zero.
AttendanceSummary summarize(const Scope& scope, const Period& period, const LedgerView& ledger);

struct ChronicFlag {
  std::string student_code;
  bool flagged = false;
  std::uint64_t absent_days = 0;
  std::uint64_t closed_days = 0;
  double ratio = 0.0;
  std::vector<SchoolDay> evidence;
};

void to_json(Json& j, const ChronicFlag& f);

inline constexpr double kDefaultChronicThreshold = 0.10;
inline constexpr std::size_t kMinChronicWindowDays = 10;

/// Unjustified absences over closed school days in the window. Throws
/// kWindowTooShort below ten closed school days.
ChronicFlag flag_chronic_absenteeism(const std::string& student_code, const Period& window,
                                     double threshold, const LedgerView& ledger);

// -- CSV ----------------------------------------------------------------------

/// RFC 4180: fields quoted when they contain a comma, quote, CR or LF;
/// records end with CRLF.
void write_csv_record(std::ostream& out, const std::vector<std::string>& fields);

struct AttendanceRow {
  AttendanceEvent event;
  StudentRecord student;
};

inline const std::vector<std::string> kAttendanceCsvColumns{
    "school_day", "student_code", "family_names", "given_names", "grade", "section",
    "status",     "method",       "recorded_at",  "recorded_by", "event_id"};

void export_attendance_csv(std::ostream& out, const std::vector<AttendanceRow>& rows);

inline const std::vector<std::string> kSummaryCsvColumns{
    "scope",    "period_from",     "period_to",      "students",   "school_days",
    "expected", "present",         "late",           "absent",     "justified",
    "attendance_rate", "tardiness_rate", "provisional"};

void export_summary_csv(std::ostream& out, const std::vector<AttendanceSummary>& summaries);

}  // namespace rollcall
