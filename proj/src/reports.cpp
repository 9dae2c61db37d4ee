#include "rollcall/reports.hpp"

#include <algorithm>
#include <cstdio>
#include <set>

#include "rollcall/error.hpp"

namespace rollcall {

void StatusCounts::add(AttendanceStatus status) {
  switch (status) {
    case AttendanceStatus::kPresent: ++present; break;
    case AttendanceStatus::kLate: ++late; break;
    case AttendanceStatus::kAbsent: ++absent; break;
    case AttendanceStatus::kJustified: ++justified; break;
  }
}

StatusCounts& StatusCounts::operator+=(const StatusCounts& other) {
  present += other.present;
  late += other.late;
  absent += other.absent;
  justified += other.justified;
  return *this;
}

void to_json(Json& j, const StatusCounts& c) {
  j = Json{{"present", c.present}, {"late", c.late}, {"absent", c.absent}, {"justified", c.justified}};
}

bool Scope::contains(const StudentRecord& student) const {
  switch (kind) {
    case Kind::kInstitution: return true;
    case Kind::kGrade: return student.grade == grade;
    case Kind::kSection: return student.grade == grade && student.section == section;
    case Kind::kStudent: return student.student_code == student_code;
  }
  return false;
}

std::string Scope::label() const {
  switch (kind) {
    case Kind::kInstitution: return "institution";
    case Kind::kGrade: return "grade " + std::to_string(grade);
    case Kind::kSection: return "section " + std::to_string(grade) + section;
    case Kind::kStudent: return "student " + student_code;
  }
  return {};
}

std::string_view to_string(Scope::Kind kind) {
  switch (kind) {
    case Scope::Kind::kInstitution: return "institution";
    case Scope::Kind::kGrade: return "grade";
    case Scope::Kind::kSection: return "section";
    case Scope::Kind::kStudent: return "student";
  }
  return "institution";
}

std::string_view to_string(Period::Kind kind) {
  switch (kind) {
    case Period::Kind::kDay: return "day";
    case Period::Kind::kWeek: return "week";
    case Period::Kind::kMonth: return "month";
    case Period::Kind::kRange: return "range";
  }
  return "range";
}

Period Period::iso_week(SchoolDay d) {
  auto monday = d - std::chrono::days(iso_weekday(d) - 1);
  return {Kind::kWeek, monday, monday + std::chrono::days(6)};
}

Period Period::month(SchoolDay d) {
  std::chrono::year_month_day ymd{d};
  auto first = std::chrono::year_month_day{ymd.year(), ymd.month(), std::chrono::day(1)};
  auto last = std::chrono::year_month_day_last{ymd.year(), std::chrono::month_day_last{ymd.month()}};
  return {Kind::kMonth, SchoolDay(first), SchoolDay(last)};
}

Period Period::range(SchoolDay from, SchoolDay to) {
  if (from > to) {
    throw Error(ErrorCode::kInvalidRange, format_date(from) + " is after " + format_date(to));
  }
  return {Kind::kRange, from, to};
}

std::string Period::label() const {
  return from == to ? format_date(from) : format_date(from) + ".." + format_date(to);
}

namespace {

std::vector<const StudentRecord*> students_in(const Scope& scope, const LedgerView& ledger) {
  std::vector<const StudentRecord*> out;
  for (const auto& s : ledger.students) {
    // A single student's own history is reported even after deactivation.
    if (scope.contains(s) && (s.active || scope.kind == Scope::Kind::kStudent)) out.push_back(&s);
  }
  return out;
}

double ratio(std::uint64_t num, std::uint64_t den) {
  return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
}

}  // namespace

AttendanceSummary summarize(const Scope& scope, const Period& period, const LedgerView& ledger) {
  AttendanceSummary summary;
  summary.scope = scope;
  summary.period = period;

  auto members = students_in(scope, ledger);
  std::set<std::string_view> codes;
  for (const auto* s : members) codes.insert(s->student_code);
  summary.students = members.size();

  auto days = ledger.calendar.school_days(period.from, period.to);
  summary.school_days = days.size();
  std::uint64_t closed_days = 0;
  for (auto d : days) {
    if (ledger.is_closed(d)) ++closed_days;
  }
  summary.provisional = closed_days < days.size();
  summary.expected_records = summary.students * summary.school_days;

  for (const auto& e : ledger.events) {
    if (e.school_day < period.from || e.school_day > period.to) continue;
    if (!codes.contains(e.student_code)) continue;
    summary.counts.add(e.status);
  }

  // Open days only count the records they already have.
  auto denominator = std::max(summary.students * closed_days, summary.counts.total());
  summary.attendance_rate = ratio(summary.counts.present + summary.counts.late, denominator);
  summary.tardiness_rate = ratio(summary.counts.late, summary.counts.present + summary.counts.late);
  return summary;
}

void to_json(Json& j, const AttendanceSummary& s) {
  j = Json{{"scope", {{"kind", to_string(s.scope.kind)}, {"label", s.scope.label()}}},
           {"period",
            {{"kind", to_string(s.period.kind)},
             {"from", format_date(s.period.from)},
             {"to", format_date(s.period.to)}}},
           {"counts", s.counts},
           {"students", s.students},
           {"school_days", s.school_days},
           {"expected_records", s.expected_records},
           {"attendance_rate", s.attendance_rate},
           {"tardiness_rate", s.tardiness_rate},
           {"provisional", s.provisional}};
  if (s.scope.kind == Scope::Kind::kGrade || s.scope.kind == Scope::Kind::kSection) {
    j["scope"]["grade"] = s.scope.grade;
  }
  if (s.scope.kind == Scope::Kind::kSection) j["scope"]["section"] = std::string(1, s.scope.section);
  if (s.scope.kind == Scope::Kind::kStudent) j["scope"]["student_code"] = s.scope.student_code;
}

ChronicFlag flag_chronic_absenteeism(const std::string& student_code, const Period& window,
                                     double threshold, const LedgerView& ledger) {
  ChronicFlag flag;
  flag.student_code = student_code;
  std::set<SchoolDay> closed;
  for (auto d : ledger.calendar.school_days(window.from, window.to)) {
    if (ledger.is_closed(d)) closed.insert(d);
  }
  flag.closed_days = closed.size();
  if (closed.size() < kMinChronicWindowDays) {
    throw Error(ErrorCode::kWindowTooShort, std::to_string(closed.size()) + " closed school days in " +
                                                window.label() + ", need " +
                                                std::to_string(kMinChronicWindowDays));
  }
  for (const auto& e : ledger.events) {
    if (e.student_code != student_code || !closed.contains(e.school_day)) continue;
    if (e.status == AttendanceStatus::kAbsent) flag.evidence.push_back(e.school_day);
  }
  std::sort(flag.evidence.begin(), flag.evidence.end());
  flag.absent_days = flag.evidence.size();
  flag.ratio = ratio(flag.absent_days, flag.closed_days);
  flag.flagged = flag.ratio >= threshold;
  return flag;
}

void to_json(Json& j, const ChronicFlag& f) {
  Json days = Json::array();
  for (auto d : f.evidence) days.push_back(format_date(d));
  j = Json{{"student_code", f.student_code}, {"flagged", f.flagged},   {"absent_days", f.absent_days},
           {"closed_days", f.closed_days},   {"ratio", f.ratio},       {"evidence", days}};
}

void write_csv_record(std::ostream& out, const std::vector<std::string>& fields) {
  bool first = true;
  for (const auto& field : fields) {
    if (!first) out << ',';
    first = false;
    if (field.find_first_of(",\"\r\n") == std::string::npos) {
      out << field;
      continue;
    }
    out << '"';
    for (char c : field) {
      if (c == '"') out << '"';
      out << c;
    }
    out << '"';
  }
  out << "\r\n";
}

void export_attendance_csv(std::ostream& out, const std::vector<AttendanceRow>& rows) {
  write_csv_record(out, kAttendanceCsvColumns);
  for (const auto& row : rows) {
    const auto& e = row.event;
    write_csv_record(out, {format_date(e.school_day), e.student_code, row.student.family_names,
                           row.student.given_names, std::to_string(row.student.grade),
                           std::string(1, row.student.section), std::string(to_string(e.status)),
                           std::string(to_string(e.method)), format_timestamp(e.recorded_at),
                           e.recorded_by.value_or(""), e.event_id.to_string()});
  }
}

void export_summary_csv(std::ostream& out, const std::vector<AttendanceSummary>& summaries) {
  auto fixed = [](double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6f", v);
    return std::string(buf);
  };
  write_csv_record(out, kSummaryCsvColumns);
  for (const auto& s : summaries) {
    write_csv_record(out, {s.scope.label(), format_date(s.period.from), format_date(s.period.to),
                           std::to_string(s.students), std::to_string(s.school_days),
                           std::to_string(s.expected_records), std::to_string(s.counts.present),
                           std::to_string(s.counts.late), std::to_string(s.counts.absent),
                           std::to_string(s.counts.justified), fixed(s.attendance_rate),
                           fixed(s.tardiness_rate), s.provisional ? "true" : "false"});
  }
}

}  // namespace rollcall
