#pragma once

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <stop_token>
#include <string>
#include <string_view>

namespace rollcall {

/// Instants are UTC milliseconds; calendar days and times of day are always
/// local to the policy timezone.
using Timestamp = std::chrono::sys_time<std::chrono::milliseconds>;
using SchoolDay = std::chrono::sys_days;
using TimeOfDay = std::chrono::seconds;
using Duration = std::chrono::milliseconds;

inline constexpr TimeOfDay kDayLength = std::chrono::hours(24);

/// `2025-03-10T12:10:00.000Z`. This is the canonical form used in checksums.
std::string format_timestamp(Timestamp t);
/// Accepts any RFC-3339 instant (`Z` or numeric offset, optional fraction).
Timestamp parse_timestamp(std::string_view text);

std::string format_date(SchoolDay day);
SchoolDay parse_date(std::string_view text);

std::string format_time_of_day(TimeOfDay tod);
/// `HH:MM` or `HH:MM:SS`.
TimeOfDay parse_time_of_day(std::string_view text);

/// ISO weekday, Monday = 1 .. Sunday = 7.
unsigned iso_weekday(SchoolDay day);

struct LocalTime {
  SchoolDay day;
  TimeOfDay time_of_day;

  bool operator==(const LocalTime&) const = default;
};

/// IANA zone loaded from the system zoneinfo database.
class TimeZone {
 public:
  TimeZone();  // UTC
  static TimeZone load(std::string_view name);

  const std::string& name() const { return name_; }
  LocalTime to_local(Timestamp t) const;
  /// For times inside a DST gap the instant after the gap is returned.
  Timestamp from_local(SchoolDay day, TimeOfDay tod) const;

 private:
  struct Impl;
  std::shared_ptr<const Impl> impl_;
  std::string name_;
};

/// Injectable time source. Every time-dependent operation reads through one
/// of these so tests and the simulator can drive a virtual morning.
class Clock {
 public:
  virtual ~Clock() = default;
  virtual Timestamp now() const = 0;
  /// Returns false when `stop` was requested before the deadline.
  virtual bool sleep_until(Timestamp deadline, std::stop_token stop = {}) = 0;

  bool sleep_for(Duration d, std::stop_token stop = {}) {
    return sleep_until(now() + d, std::move(stop));
  }
};

class SystemClock final : public Clock {
 public:
  Timestamp now() const override;
  bool sleep_until(Timestamp deadline, std::stop_token stop = {}) override;
};

/// Wall clock re-anchored at `start` and running `speed` times faster.
class ScaledClock final : public Clock {
 public:
  ScaledClock(Timestamp start, double speed);
  Timestamp now() const override;
  bool sleep_until(Timestamp deadline, std::stop_token stop = {}) override;

 private:
  Timestamp start_;
  double speed_;
  std::chrono::steady_clock::time_point anchor_;
};

/// Discrete-event clock. Threads that drive the simulation join as
/// participants; time only moves when every participant is blocked in
/// sleep_until, and then jumps to the earliest pending deadline. A nonzero
/// `speed` paces those jumps against the wall clock.
class VirtualClock final : public Clock {
 public:
  explicit VirtualClock(Timestamp start, double speed = 0.0);

  Timestamp now() const override;
  bool sleep_until(Timestamp deadline, std::stop_token stop = {}) override;

  /// Direct manipulation for tests that do not use participants.
  void set(Timestamp t);
  void advance(Duration d) { set(now() + d); }

  class Participant {
   public:
    Participant() = default;
    explicit Participant(VirtualClock* clock);
    Participant(Participant&& other) noexcept;
    Participant& operator=(Participant&& other) noexcept;
    Participant(const Participant&) = delete;
    Participant& operator=(const Participant&) = delete;
    ~Participant();
    void leave();

   private:
    VirtualClock* clock_ = nullptr;
  };

  [[nodiscard]] Participant join() { return Participant(this); }

 private:
  void maybe_advance(std::unique_lock<std::mutex>& lock);

  mutable std::mutex mu_;
  std::condition_variable_any cv_;
  Timestamp now_;
  Timestamp paced_;
  double speed_;
  int participants_ = 0;
  std::multimap<Timestamp, int> sleepers_;
  int next_sleeper_ = 0;
  bool advancing_ = false;
};

}  // namespace rollcall
