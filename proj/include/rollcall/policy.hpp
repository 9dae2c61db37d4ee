#pragma once

#include <array>
#include <set>
#include <vector>
#include <string_view>

#include "rollcall/config.hpp"
#include "rollcall/json_io.hpp"
#include "rollcall/time.hpp"

namespace rollcall {

/// Which calendar dates are school days: a weekday mask minus explicit
/// holidays.
class SchoolCalendar {
 public:
  SchoolCalendar();  // Monday to Friday, no holidays

  bool is_school_day(SchoolDay day) const;
  void set_weekday(unsigned iso_weekday, bool school);
  void add_holiday(SchoolDay day) { holidays_.insert(day); }
  const std::set<SchoolDay>& holidays() const { return holidays_; }
  bool weekday(unsigned iso_weekday) const { return weekdays_[iso_weekday % 8]; }

  /// School days in [from, to], inclusive.
  std::vector<SchoolDay> school_days(SchoolDay from, SchoolDay to) const;

 private:
  std::array<bool, 8> weekdays_{};
  std::set<SchoolDay> holidays_;
};

enum class WindowClass { kBeforeWindow, kPresent, kLate, kAfterClosure };

std::string_view to_string(WindowClass c);

struct TimeWindowPolicy {
  TimeOfDay present_start = std::chrono::hours(7);
  TimeOfDay late_start = std::chrono::hours(8) + std::chrono::minutes(1);
  TimeOfDay closure = std::chrono::hours(8) + std::chrono::minutes(31);
  TimeZone timezone;
  SchoolCalendar calendar;

  /// Throws kConfig unless present_start < late_start < closure < 24:00.
  void validate() const;

  Timestamp closure_instant(SchoolDay day) const { return timezone.from_local(day, closure); }

  /// Keys: timezone, present_start, late_start, closure, school_days
  /// (comma list of Mon..Sun), holiday (repeatable, YYYY-MM-DD).
  static TimeWindowPolicy from_config(const Config& config);
};

/// Present on [present_start, late_start), Late on [late_start, closure).
WindowClass classify(const TimeWindowPolicy& policy, TimeOfDay scan_time);

void to_json(Json& j, const TimeWindowPolicy& p);
void from_json(const Json& j, TimeWindowPolicy& p);

}  // namespace rollcall
