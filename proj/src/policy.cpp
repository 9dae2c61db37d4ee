#include "rollcall/policy.hpp"

#include <sstream>

#include "rollcall/error.hpp"

namespace rollcall {

namespace {

constexpr std::array<std::string_view, 8> kDayNames = {"", "Mon", "Tue", "Wed", "Thu",
                                                       "Fri", "Sat", "Sun"};

unsigned parse_day_name(std::string_view name) {
  for (unsigned i = 1; i < kDayNames.size(); ++i) {
    if (kDayNames[i] == name) return i;
  }
  throw Error(ErrorCode::kConfig, "unknown weekday '" + std::string(name) + "'");
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    auto b = item.find_first_not_of(' ');
    auto e = item.find_last_not_of(' ');
    if (b != std::string::npos) out.push_back(item.substr(b, e - b + 1));
  }
  return out;
}

}  // namespace

SchoolCalendar::SchoolCalendar() {
  for (unsigned d = 1; d <= 5; ++d) weekdays_[d] = true;
}

bool SchoolCalendar::is_school_day(SchoolDay day) const {
  return weekdays_[iso_weekday(day)] && !holidays_.contains(day);
}

void SchoolCalendar::set_weekday(unsigned iso, bool school) {
  if (iso < 1 || iso > 7) throw Error(ErrorCode::kInvalidArgument, "iso weekday out of range");
  weekdays_[iso] = school;
}

std::vector<SchoolDay> SchoolCalendar::school_days(SchoolDay from, SchoolDay to) const {
  std::vector<SchoolDay> out;
  for (auto d = from; d <= to; d += std::chrono::days(1)) {
    if (is_school_day(d)) out.push_back(d);
  }
  return out;
}

std::string_view to_string(WindowClass c) {
  switch (c) {
    case WindowClass::kBeforeWindow: return "BeforeWindow";
    case WindowClass::kPresent: return "Present";
    case WindowClass::kLate: return "Late";
    case WindowClass::kAfterClosure: return "AfterClosure";
  }
  return "Unknown";
}

void TimeWindowPolicy::validate() const {
  if (!(TimeOfDay::zero() <= present_start && present_start < late_start &&
        late_start < closure && closure < kDayLength)) {
    throw Error(ErrorCode::kConfig, "window times must satisfy present_start < late_start < closure");
  }
}

WindowClass classify(const TimeWindowPolicy& policy, TimeOfDay t) {
  if (t < policy.present_start) return WindowClass::kBeforeWindow;
  if (t < policy.late_start) return WindowClass::kPresent;
  if (t < policy.closure) return WindowClass::kLate;
  return WindowClass::kAfterClosure;
}

TimeWindowPolicy TimeWindowPolicy::from_config(const Config& config) {
  TimeWindowPolicy p;
  auto time_key = [&](std::string_view key, TimeOfDay& out) {
    if (auto v = config.get(key)) {
      try {
        out = parse_time_of_day(*v);
      } catch (const Error& e) {
        throw Error(ErrorCode::kConfig, config.where(key) + ": " + e.what());
      }
    }
  };
  time_key("present_start", p.present_start);
  time_key("late_start", p.late_start);
  time_key("closure", p.closure);
  if (auto tz = config.get("timezone")) {
    try {
      p.timezone = TimeZone::load(*tz);
    } catch (const Error& e) {
      throw Error(ErrorCode::kConfig, config.where("timezone") + ": " + e.what());
    }
  }
  if (auto days = config.get("school_days")) {
    for (unsigned d = 1; d <= 7; ++d) p.calendar.set_weekday(d, false);
    try {
      for (const auto& name : split_list(*days)) p.calendar.set_weekday(parse_day_name(name), true);
    } catch (const Error& e) {
      throw Error(ErrorCode::kConfig, config.where("school_days") + ": " + e.what());
    }
  }
  for (const auto& h : config.get_all("holiday")) {
    for (const auto& item : split_list(h)) {
      try {
        p.calendar.add_holiday(parse_date(item));
      } catch (const Error& e) {
        throw Error(ErrorCode::kConfig, config.where("holiday") + ": " + e.what());
      }
    }
  }
  try {
    p.validate();
  } catch (const Error& e) {
    throw Error(ErrorCode::kConfig, config.where("closure") + ": " + e.what());
  }
  return p;
}

void to_json(Json& j, const TimeWindowPolicy& p) {
  std::vector<std::string> days;
  for (unsigned d = 1; d <= 7; ++d) {
    if (p.calendar.weekday(d)) days.emplace_back(kDayNames[d]);
  }
  std::vector<std::string> holidays;
  for (auto h : p.calendar.holidays()) holidays.push_back(format_date(h));
  j = Json{{"timezone", p.timezone.name()},
           {"present_start", format_time_of_day(p.present_start)},
           {"late_start", format_time_of_day(p.late_start)},
           {"closure", format_time_of_day(p.closure)},
           {"school_days", days},
           {"holidays", holidays}};
}

void from_json(const Json& j, TimeWindowPolicy& p) {
  p.timezone = TimeZone::load(j.at("timezone").get<std::string>());
  p.present_start = parse_time_of_day(j.at("present_start").get<std::string>());
  p.late_start = parse_time_of_day(j.at("late_start").get<std::string>());
  p.closure = parse_time_of_day(j.at("closure").get<std::string>());
  p.calendar = SchoolCalendar();
  if (j.contains("school_days")) {
    for (unsigned d = 1; d <= 7; ++d) p.calendar.set_weekday(d, false);
    for (const auto& name : j.at("school_days")) {
      p.calendar.set_weekday(parse_day_name(name.get<std::string>()), true);
    }
  }
  for (const auto& h : j.value("holidays", std::vector<std::string>{})) {
    p.calendar.add_holiday(parse_date(h));
  }
  p.validate();
}

}  // namespace rollcall
