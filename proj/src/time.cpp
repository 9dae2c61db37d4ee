#include "rollcall/time.hpp"

#include <absl/time/civil_time.h>
#include <absl/time/time.h>

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <thread>

#include "rollcall/error.hpp"

namespace rollcall {

namespace {

absl::Time to_absl(Timestamp t) {
  return absl::FromUnixMillis(t.time_since_epoch().count());
}

Timestamp from_absl(absl::Time t) {
  return Timestamp(Duration(absl::ToUnixMillis(t)));
}

int parse_fixed(std::string_view text, std::size_t pos, std::size_t width) {
  if (pos + width > text.size()) {
    throw Error(ErrorCode::kInvalidArgument, "truncated field in '" + std::string(text) + "'");
  }
  int value = 0;
  auto first = text.data() + pos;
  auto [ptr, ec] = std::from_chars(first, first + width, value);
  if (ec != std::errc() || ptr != first + width) {
    throw Error(ErrorCode::kInvalidArgument, "bad number in '" + std::string(text) + "'");
  }
  return value;
}

}  // namespace

std::string format_timestamp(Timestamp t) {
  return absl::FormatTime("%Y-%m-%dT%H:%M:%E3SZ", to_absl(t), absl::UTCTimeZone());
}

Timestamp parse_timestamp(std::string_view text) {
  absl::Time t;
  std::string err;
  if (!absl::ParseTime(absl::RFC3339_full, std::string(text), &t, &err)) {
    throw Error(ErrorCode::kInvalidArgument, "bad timestamp '" + std::string(text) + "': " + err);
  }
  return from_absl(t);
}

std::string format_date(SchoolDay day) {
  std::chrono::year_month_day ymd{day};
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(ymd.year()),
                static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()));
  return buf;
}

SchoolDay parse_date(std::string_view text) {
  if (text.size() != 10 || text[4] != '-' || text[7] != '-') {
    throw Error(ErrorCode::kInvalidArgument, "bad date '" + std::string(text) + "'");
  }
  std::chrono::year_month_day ymd{std::chrono::year(parse_fixed(text, 0, 4)),
                                  std::chrono::month(parse_fixed(text, 5, 2)),
                                  std::chrono::day(parse_fixed(text, 8, 2))};
  if (!ymd.ok()) {
    throw Error(ErrorCode::kInvalidArgument, "bad date '" + std::string(text) + "'");
  }
  return SchoolDay(ymd);
}

std::string format_time_of_day(TimeOfDay tod) {
  auto s = tod.count();
  char buf[32];
  std::snprintf(buf, sizeof buf, "%02lld:%02lld:%02lld", static_cast<long long>(s / 3600),
                static_cast<long long>(s / 60 % 60), static_cast<long long>(s % 60));
  return buf;
}

TimeOfDay parse_time_of_day(std::string_view text) {
  if ((text.size() != 5 && text.size() != 8) || text[2] != ':' ||
      (text.size() == 8 && text[5] != ':')) {
    throw Error(ErrorCode::kInvalidArgument, "bad time of day '" + std::string(text) + "'");
  }
  int h = parse_fixed(text, 0, 2);
  int m = parse_fixed(text, 3, 2);
  int s = text.size() == 8 ? parse_fixed(text, 6, 2) : 0;
  if (h > 23 || m > 59 || s > 59) {
    throw Error(ErrorCode::kInvalidArgument, "time of day out of range '" + std::string(text) + "'");
  }
  return TimeOfDay(h * 3600 + m * 60 + s);
}

unsigned iso_weekday(SchoolDay day) {
  return std::chrono::weekday(day).iso_encoding();
}

struct TimeZone::Impl {
  absl::TimeZone zone;
};

TimeZone::TimeZone() : impl_(std::make_shared<Impl>(Impl{absl::UTCTimeZone()})), name_("UTC") {}

TimeZone TimeZone::load(std::string_view name) {
  absl::TimeZone zone;
  if (!absl::LoadTimeZone(std::string(name), &zone)) {
    throw Error(ErrorCode::kConfig, "unknown timezone '" + std::string(name) + "'");
  }
  TimeZone tz;
  tz.impl_ = std::make_shared<Impl>(Impl{zone});
  tz.name_ = std::string(name);
  return tz;
}

LocalTime TimeZone::to_local(Timestamp t) const {
  auto cs = absl::ToCivilSecond(to_absl(t), impl_->zone);
  std::chrono::year_month_day ymd{std::chrono::year(static_cast<int>(cs.year())),
                                  std::chrono::month(static_cast<unsigned>(cs.month())),
                                  std::chrono::day(static_cast<unsigned>(cs.day()))};
  return LocalTime{SchoolDay(ymd), TimeOfDay(cs.hour() * 3600 + cs.minute() * 60 + cs.second())};
}

Timestamp TimeZone::from_local(SchoolDay day, TimeOfDay tod) const {
  std::chrono::year_month_day ymd{day};
  auto s = tod.count();
  absl::CivilSecond cs(static_cast<int>(ymd.year()), static_cast<unsigned>(ymd.month()),
                       static_cast<unsigned>(ymd.day()), s / 3600, s / 60 % 60, s % 60);
  return from_absl(absl::FromCivil(cs, impl_->zone));
}

Timestamp SystemClock::now() const {
  return std::chrono::time_point_cast<Duration>(std::chrono::system_clock::now());
}

bool SystemClock::sleep_until(Timestamp deadline, std::stop_token stop) {
  std::mutex mu;
  std::condition_variable_any cv;
  std::unique_lock lock(mu);
  cv.wait_until(lock, stop, std::chrono::system_clock::time_point(deadline), [] { return false; });
  return !stop.stop_requested();
}

ScaledClock::ScaledClock(Timestamp start, double speed)
    : start_(start), speed_(speed > 0 ? speed : 1.0), anchor_(std::chrono::steady_clock::now()) {}

Timestamp ScaledClock::now() const {
  auto elapsed = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - anchor_);
  return start_ + Duration(static_cast<Duration::rep>(elapsed.count() * speed_));
}

bool ScaledClock::sleep_until(Timestamp deadline, std::stop_token stop) {
  auto remaining = deadline - now();
  if (remaining <= Duration::zero()) return !stop.stop_requested();
  auto wall = std::chrono::duration<double, std::milli>(remaining.count() / speed_);
  std::mutex mu;
  std::condition_variable_any cv;
  std::unique_lock lock(mu);
  cv.wait_for(lock, stop, std::chrono::duration_cast<std::chrono::microseconds>(wall),
              [] { return false; });
  return !stop.stop_requested();
}

VirtualClock::VirtualClock(Timestamp start, double speed)
    : now_(start), paced_(start), speed_(speed) {}

Timestamp VirtualClock::now() const {
  std::lock_guard lock(mu_);
  return now_;
}

void VirtualClock::set(Timestamp t) {
  std::unique_lock lock(mu_);
  now_ = std::max(now_, t);
  paced_ = std::max(paced_, now_);
  sleepers_.erase(sleepers_.begin(), sleepers_.upper_bound(now_));
  cv_.notify_all();
}

bool VirtualClock::sleep_until(Timestamp deadline, std::stop_token stop) {
  std::unique_lock lock(mu_);
  if (deadline <= now_) return !stop.stop_requested();
  auto entry = sleepers_.emplace(deadline, next_sleeper_++);
  maybe_advance(lock);
  if (cv_.wait(lock, stop, [&] { return now_ >= deadline; })) return true;
  // Stopped while still pending: our entry has not been consumed.
  sleepers_.erase(entry);
  maybe_advance(lock);
  return false;
}

void VirtualClock::maybe_advance(std::unique_lock<std::mutex>& lock) {
  while (!advancing_ && participants_ > 0 && !sleepers_.empty() &&
         static_cast<int>(sleepers_.size()) >= participants_) {
    auto target = sleepers_.begin()->first;
    if (speed_ > 0 && target > paced_) {
      // Pay the wall-clock cost of the jump first, then re-check: a sleeper
      // may have been stopped meanwhile.
      advancing_ = true;
      auto from = std::max(now_, paced_);
      auto wall = std::chrono::duration<double, std::milli>((target - from).count() / speed_);
      lock.unlock();
      std::this_thread::sleep_for(wall);
      lock.lock();
      advancing_ = false;
      paced_ = std::max(paced_, target);
      continue;
    }
    now_ = std::max(now_, target);
    sleepers_.erase(sleepers_.begin(), sleepers_.upper_bound(now_));
    cv_.notify_all();
  }
}

VirtualClock::Participant::Participant(VirtualClock* clock) : clock_(clock) {
  std::lock_guard lock(clock_->mu_);
  ++clock_->participants_;
}

VirtualClock::Participant::Participant(Participant&& other) noexcept
    : clock_(std::exchange(other.clock_, nullptr)) {}

VirtualClock::Participant& VirtualClock::Participant::operator=(Participant&& other) noexcept {
  if (this != &other) {
    leave();
    clock_ = std::exchange(other.clock_, nullptr);
  }
  return *this;
}

VirtualClock::Participant::~Participant() { leave(); }

void VirtualClock::Participant::leave() {
  if (clock_ == nullptr) return;
  std::unique_lock lock(clock_->mu_);
  --clock_->participants_;
  clock_->maybe_advance(lock);
  clock_ = nullptr;
}

}  // namespace rollcall
