#pragma once

// Shared fixtures for the unit and acceptance suites.

#include <unistd.h>

#include <atomic>
#include <cstdio>
#include <filesystem>
#include <optional>
#include <ostream>
#include <random>
#include <string>

#include "rollcall/domain.hpp"
#include "rollcall/edge_store.hpp"
#include "rollcall/error.hpp"
#include "rollcall/json_io.hpp"
#include "rollcall/policy.hpp"
#include "rollcall/time.hpp"

namespace rollcall {

inline void PrintTo(const AttendanceEvent& e, std::ostream* os) { *os << Json(e).dump(); }

}  // namespace rollcall

namespace rollcall::testing {

class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("rollcall-test-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline TimeWindowPolicy lima_policy() {
  TimeWindowPolicy p;
  p.timezone = TimeZone::load("America/Lima");
  return p;
}

/// 2025-03-10 is a Monday.
inline SchoolDay monday() { return parse_date("2025-03-10"); }

inline Timestamp at(const TimeWindowPolicy& p, SchoolDay day, std::string_view hhmmss) {
  return p.timezone.from_local(day, parse_time_of_day(hhmmss));
}

inline Timestamp at_seconds(const TimeWindowPolicy& p, SchoolDay day, long long seconds) {
  return p.timezone.from_local(day, TimeOfDay(seconds));
}

inline const Actor kAdmin{"admin", Role::kAdmin};
inline const Actor kAuxiliary{"aux", Role::kAuxiliary};
inline const Actor kTeacher{"teacher", Role::kTeacher};

inline CardUid uid_for(int i) {
  return CardUid({0x04, static_cast<std::uint8_t>(i >> 16), static_cast<std::uint8_t>(i >> 8),
                  static_cast<std::uint8_t>(i)});
}

/// Roster of `n` active students spread over grades 1-5 and sections A-B,
/// each with one active card uid_for(i).
struct Population {
  std::vector<StudentRecord> students;
  std::vector<RfidCard> cards;
};

inline Population make_population(int n, int year = 2025) {
  Population pop;
  Roster roster;
  for (int i = 0; i < n; ++i) {
    StudentRecord draft;
    draft.given_names = "Given" + std::to_string(i);
    draft.family_names = "Family" + std::to_string(i);
    draft.enrollment_year = year;
    draft.grade = 1 + i % 5;
    draft.section = static_cast<char>('A' + (i / 5) % 2);
    pop.students.push_back(roster.enroll(draft));
    pop.cards.push_back(RfidCard{uid_for(i), CardState::kActive, pop.students.back().student_code,
                                 Timestamp{}});
  }
  return pop;
}

inline void seed_store(EdgeStore& store, const Population& pop) {
  RosterDelta delta;
  delta.version = 1;
  delta.students = pop.students;
  delta.cards = pop.cards;
  store.apply_roster(delta);
}

/// Runs `fn` and returns the code of the Error it throws, or nullopt.
template <typename Fn>
std::optional<ErrorCode> error_code_of(Fn&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  return std::nullopt;
}

}  // namespace rollcall::testing
