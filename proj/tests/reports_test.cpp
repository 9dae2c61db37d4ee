#include "rollcall/reports.hpp"

#include <gtest/gtest.h>

#include <chrono>
#include <random>
#include <sstream>

#include "rollcall/error.hpp"
#include "support.hpp"

namespace rollcall {
namespace {

using namespace std::chrono_literals;
using testing::make_population;
using testing::monday;

AttendanceEvent event_for(const std::string& code, SchoolDay day, AttendanceStatus status, std::mt19937_64& rng) {
  AttendanceEvent e;
  e.event_id = EventId::from_generator(rng);
  e.student_code = code;
  e.school_day = day;
  e.status = status;
  e.method = status == AttendanceStatus::kAbsent ? CaptureMethod::kSystemClosure
             : status == AttendanceStatus::kJustified ? CaptureMethod::kManual
                                                      : CaptureMethod::kRfid;
  if (e.method == CaptureMethod::kManual) e.recorded_by = "aux";
  return e;
}

struct Fixture {
  std::vector<StudentRecord> students;
  std::vector<AttendanceEvent> events;
  SchoolCalendar calendar;
  SchoolDay closed_through = monday() + std::chrono::days(1000);

  LedgerView view() const {
    return LedgerView{students, events, calendar, [this](SchoolDay d) { return d <= closed_through; }};
  }
};

TEST(ReportsTest, SingleStudentWeekRates) {
  std::mt19937_64 rng(1);
  Fixture f;
  f.students = make_population(1).students;
  const auto& code = f.students[0].student_code;
  using S = AttendanceStatus;
  const S week[] = {S::kPresent, S::kPresent, S::kLate, S::kAbsent, S::kJustified};
  for (int i = 0; i < 5; ++i) f.events.push_back(event_for(code, monday() + std::chrono::days(i), week[i], rng));

  auto s = summarize(Scope::of_student(code), Period::iso_week(monday()), f.view());
  EXPECT_EQ(s.counts, (StatusCounts{2, 1, 1, 1}));
  EXPECT_EQ(s.school_days, 5u);
  EXPECT_EQ(s.expected_records, 5u);
  EXPECT_DOUBLE_EQ(s.attendance_rate, 3.0 / 5.0);
  EXPECT_DOUBLE_EQ(s.tardiness_rate, 1.0 / 3.0);
  EXPECT_FALSE(s.provisional);
}

TEST(ReportsTest, EmptyDenominatorsAreZero) {
  Fixture f;
  auto s = summarize(Scope::institution(), Period::day(monday()), f.view());
  EXPECT_EQ(s.students, 0u);
  EXPECT_EQ(s.attendance_rate, 0.0);
  EXPECT_EQ(s.tardiness_rate, 0.0);
}

TEST(ReportsTest, PeriodsCoverCalendarGranularity) {
  auto week = Period::iso_week(parse_date("2025-03-13"));
  EXPECT_EQ(week.from, parse_date("2025-03-10"));
  EXPECT_EQ(week.to, parse_date("2025-03-16"));
  auto month = Period::month(parse_date("2024-02-14"));
  EXPECT_EQ(month.from, parse_date("2024-02-01"));
  EXPECT_EQ(month.to, parse_date("2024-02-29"));
  EXPECT_THROW(
      {
        try {
          Period::range(parse_date("2025-03-11"), parse_date("2025-03-10"));
        } catch (const Error& e) {
          EXPECT_EQ(e.code(), ErrorCode::kInvalidRange);
          throw;
        }
      },
      Error);
}

// Random ledger over four weeks, compared against a direct recount and
// checked for additivity across sections and days.
class RandomLedger : public ::testing::Test {
 protected:
  void SetUp() override {
    std::mt19937_64 rng(42);
    f_.students = make_population(60).students;
    f_.students[7].active = false;
    f_.calendar.add_holiday(monday() + std::chrono::days(9));
    std::uniform_int_distribution<int> status(0, 4);
    for (auto day : f_.calendar.school_days(monday(), monday() + std::chrono::days(27))) {
      for (const auto& s : f_.students) {
        int roll = status(rng);
        if (roll == 4) continue;  // no record yet
        f_.events.push_back(event_for(s.student_code, day, static_cast<AttendanceStatus>(roll), rng));
      }
    }
    f_.closed_through = monday() + std::chrono::days(20);
  }

  Fixture f_;
};

TEST_F(RandomLedger, MatchesDirectRecount) {
  auto period = Period::range(monday(), monday() + std::chrono::days(27));
  for (auto scope : {Scope::institution(), Scope::of_grade(3), Scope::of_section(2, 'B'),
                     Scope::of_student(f_.students[7].student_code)}) {
    std::uint64_t members = 0, p = 0, l = 0, a = 0, j = 0;
    for (const auto& s : f_.students) {
      bool in = scope.kind == Scope::Kind::kStudent ? s.student_code == scope.student_code
                : scope.kind == Scope::Kind::kGrade ? s.grade == scope.grade && s.active
                : scope.kind == Scope::Kind::kSection
                    ? s.grade == scope.grade && s.section == scope.section && s.active
                    : s.active;
      if (!in) continue;
      ++members;
      for (const auto& e : f_.events) {
        if (e.student_code != s.student_code) continue;
        p += e.status == AttendanceStatus::kPresent;
        l += e.status == AttendanceStatus::kLate;
        a += e.status == AttendanceStatus::kAbsent;
        j += e.status == AttendanceStatus::kJustified;
      }
    }
    std::uint64_t days = 0, closed = 0;
    for (auto d = period.from; d <= period.to; d += std::chrono::days(1)) {
      if (!f_.calendar.is_school_day(d)) continue;
      ++days;
      closed += d <= f_.closed_through;
    }
    auto s = summarize(scope, period, f_.view());
    SCOPED_TRACE(scope.label());
    EXPECT_EQ(s.students, members);
    EXPECT_EQ(s.counts, (StatusCounts{p, l, a, j}));
    EXPECT_EQ(s.school_days, days);
    EXPECT_TRUE(s.provisional);
    double denominator = std::max<double>(members * closed, p + l + a + j);
    EXPECT_DOUBLE_EQ(s.attendance_rate, denominator == 0 ? 0.0 : (p + l) / denominator);
    EXPECT_DOUBLE_EQ(s.tardiness_rate, p + l == 0 ? 0.0 : static_cast<double>(l) / (p + l));
  }
}

TEST_F(RandomLedger, CountsAddUpAcrossSectionsAndDays) {
  auto period = Period::range(monday(), monday() + std::chrono::days(27));
  auto whole = summarize(Scope::institution(), period, f_.view());
  StatusCounts by_section;
  std::uint64_t students = 0;
  for (int g = 1; g <= 5; ++g) {
    StatusCounts by_grade_sections;
    for (char sec : {'A', 'B'}) {
      auto s = summarize(Scope::of_section(g, sec), period, f_.view());
      by_section += s.counts;
      by_grade_sections += s.counts;
      students += s.students;
    }
    EXPECT_EQ(summarize(Scope::of_grade(g), period, f_.view()).counts, by_grade_sections);
  }
  EXPECT_EQ(whole.counts, by_section);
  EXPECT_EQ(whole.students, students);

  StatusCounts by_day;
  for (auto d = period.from; d <= period.to; d += std::chrono::days(1)) {
    by_day += summarize(Scope::institution(), Period::day(d), f_.view()).counts;
  }
  EXPECT_EQ(whole.counts, by_day);
}

TEST_F(RandomLedger, ChronicFlagMatchesRecountAndIsMonotone) {
  auto window = Period::range(monday(), monday() + std::chrono::days(27));
  for (const auto& s : f_.students) {
    std::vector<SchoolDay> absent;
    std::uint64_t closed = 0;
    for (auto d = window.from; d <= window.to; d += std::chrono::days(1)) {
      if (!f_.calendar.is_school_day(d) || d > f_.closed_through) continue;
      ++closed;
      for (const auto& e : f_.events) {
        if (e.student_code == s.student_code && e.school_day == d && e.status == AttendanceStatus::kAbsent) {
          absent.push_back(d);
        }
      }
    }
    auto flag = flag_chronic_absenteeism(s.student_code, window, kDefaultChronicThreshold, f_.view());
    EXPECT_EQ(flag.closed_days, closed);
    EXPECT_EQ(flag.evidence, absent);
    EXPECT_EQ(flag.flagged, static_cast<double>(absent.size()) / closed >= kDefaultChronicThreshold);

    bool previous = true;
    for (double t = 0.0; t <= 1.0; t += 0.05) {
      bool flagged = flag_chronic_absenteeism(s.student_code, window, t, f_.view()).flagged;
      EXPECT_TRUE(previous || !flagged) << "flag reappeared at threshold " << t;
      previous = flagged;
    }
  }
}

TEST_F(RandomLedger, ChronicNeedsTenClosedDays) {
  const auto& code = f_.students[0].student_code;
  auto nine = Period::range(monday(), monday() + std::chrono::days(11));  // 9 school days after the holiday
  try {
    flag_chronic_absenteeism(code, nine, 0.1, f_.view());
    FAIL() << "expected WindowTooShort";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kWindowTooShort);
  }
  auto ten = Period::range(monday(), monday() + std::chrono::days(14));
  EXPECT_NO_THROW(flag_chronic_absenteeism(code, ten, 0.1, f_.view()));
}

// Minimal RFC 4180 reader, written separately from the writer.
std::vector<std::vector<std::string>> parse_csv(const std::string& text) {
  std::vector<std::vector<std::string>> records;
  std::vector<std::string> record;
  std::string field;
  bool quoted = false;
  for (std::size_t i = 0; i < text.size(); ++i) {
    char c = text[i];
    if (quoted) {
      if (c == '"' && i + 1 < text.size() && text[i + 1] == '"') {
        field += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        field += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      record.push_back(std::move(field));
      field.clear();
    } else if (c == '\r' && i + 1 < text.size() && text[i + 1] == '\n') {
      record.push_back(std::move(field));
      field.clear();
      records.push_back(std::move(record));
      record.clear();
      ++i;
    } else {
      field += c;
    }
  }
  EXPECT_TRUE(field.empty() && record.empty()) << "unterminated record";
  return records;
}

TEST(CsvTest, QuotesOnlyWhenNeeded) {
  std::ostringstream out;
  write_csv_record(out, {"plain", "a,b", "say \"hi\"", "two\nlines", ""});
  EXPECT_EQ(out.str(), "plain,\"a,b\",\"say \"\"hi\"\"\",\"two\nlines\",\r\n");
}

TEST(CsvTest, AttendanceExportRoundTrips) {
  std::mt19937_64 rng(9);
  auto students = make_population(40).students;
  students[3].family_names = "O'Neil, \"Jr\"";
  students[4].given_names = "Ana\r\nMaría";
  std::vector<AttendanceRow> rows;
  for (const auto& s : students) {
    auto e = event_for(s.student_code, monday(), AttendanceStatus::kJustified, rng);
    e.recorded_by = "aux,1";
    e.recorded_at = Timestamp(std::chrono::milliseconds(1741608000123));
    rows.push_back({e, s});
  }
  std::ostringstream out;
  export_attendance_csv(out, rows);
  auto records = parse_csv(out.str());
  ASSERT_EQ(records.size(), rows.size() + 1);
  EXPECT_EQ(records[0], kAttendanceCsvColumns);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& r = records[i + 1];
    ASSERT_EQ(r.size(), kAttendanceCsvColumns.size());
    EXPECT_EQ(r[0], "2025-03-10");
    EXPECT_EQ(r[1], rows[i].student.student_code);
    EXPECT_EQ(r[2], rows[i].student.family_names);
    EXPECT_EQ(r[3], rows[i].student.given_names);
    EXPECT_EQ(r[4], std::to_string(rows[i].student.grade));
    EXPECT_EQ(r[5], std::string(1, rows[i].student.section));
    EXPECT_EQ(r[6], "justified");
    EXPECT_EQ(r[7], "manual");
    EXPECT_EQ(r[8], "2025-03-10T12:00:00.123Z");
    EXPECT_EQ(r[9], "aux,1");
    EXPECT_EQ(r[10], rows[i].event.event_id.to_string());
  }
}

TEST(CsvTest, ThousandRowExportIsFast) {
  std::mt19937_64 rng(3);
  auto students = make_population(1000).students;
  std::vector<AttendanceRow> rows;
  for (const auto& s : students) rows.push_back({event_for(s.student_code, monday(), AttendanceStatus::kPresent, rng), s});
  auto start = std::chrono::steady_clock::now();
  std::ostringstream out;
  export_attendance_csv(out, rows);
  auto elapsed = std::chrono::steady_clock::now() - start;
  EXPECT_LT(elapsed, 1s);
  EXPECT_EQ(parse_csv(out.str()).size(), 1001u);
}

TEST(CsvTest, SummaryExportHasOneLinePerSummary) {
  Fixture f;
  f.students = make_population(10).students;
  std::vector<AttendanceSummary> summaries{summarize(Scope::institution(), Period::day(monday()), f.view()),
                                           summarize(Scope::of_section(1, 'A'), Period::day(monday()), f.view())};
  std::ostringstream out;
  export_summary_csv(out, summaries);
  auto records = parse_csv(out.str());
  ASSERT_EQ(records.size(), 3u);
  EXPECT_EQ(records[0], kSummaryCsvColumns);
  EXPECT_EQ(records[1][0], "institution");
  EXPECT_EQ(records[1][3], "10");
  EXPECT_EQ(records[2][0], "section 1A");
  EXPECT_EQ(records[2][10], "0.000000");
}

}  // namespace
}  // namespace rollcall
