#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "rollcall/domain.hpp"
#include "rollcall/policy.hpp"
#include "rollcall/reports.hpp"
#include "rollcall/time.hpp"

namespace rollcall::sim {

/// One school morning end to end: emulated readers feed an edge node over
/// in-process links, the edge syncs to a central service, and the result is
/// compared against a sequential replay of the same arrivals.
struct Options {
  int students = 250;
  int readers = 1;
  SchoolDay day = parse_date("2025-03-10");
  std::uint64_t seed = 1;
  /// Virtual-to-wall ratio; 0 runs as fast as the machine allows.
  double speed = 0.0;
  TimeWindowPolicy policy;
  /// First and last possible arrival, local time. Defaults to five minutes
  /// either side of [present_start, closure).
  std::optional<TimeOfDay> arrivals_from;
  std::optional<TimeOfDay> arrivals_to;
  /// Sync link down on [from, to), local time.
  std::optional<std::pair<TimeOfDay, TimeOfDay>> partition;

  double no_show_rate = 0.06;
  double repeat_rate = 0.05;
  double early_rate = 0.03;
  double blocked_rate = 0.02;
  double inactive_rate = 0.02;
  /// Share of closure absences justified at central afterwards.
  double justify_rate = 0.2;
  /// Scans of cards nobody enrolled, per 100 students.
  double stray_per_hundred = 1.0;

  Duration sync_interval = std::chrono::seconds(30);
  std::size_t batch_size = 500;
  /// Journals go here; a fresh temporary directory when empty.
  std::filesystem::path work_dir;
  bool fsync = false;
};

/// What one emulated card tap should produce.
struct PlannedScan {
  Timestamp at;
  CardUid uid;
  int reader = 0;
  std::string expected_reply;  // e.g. "ACK P", "NAK BLK"
};

/// The scenario drawn from a seed, plus the sequential oracle's verdict.
/// Students are addressed by roster index; central assigns the codes.
struct Plan {
  std::vector<StudentRecord> students;
  std::vector<CardUid> cards;  // parallel to students
  std::vector<bool> blocked;
  std::vector<PlannedScan> scans;  // ascending, distinct instants
  Timestamp start;
  Timestamp end;
  /// Final status and recorded_at per roster index, justifications applied.
  std::map<int, AttendanceStatus> ledger;
  std::map<int, Timestamp> recorded_at;
  std::vector<int> justified;
};

struct Result {
  bool conformant = false;
  std::vector<std::string> mismatches;
  /// Deterministic for a given seed and options, timings excluded.
  std::string report;

  StatusCounts central_counts;
  StatusCounts oracle_counts;
  std::uint64_t active_roster = 0;
  std::uint64_t central_events = 0;
  std::uint64_t edge_log_size = 0;
  std::uint64_t scans = 0;

  /// UID frame -> reply round trips, wall clock, in global scan order.
  std::vector<std::chrono::nanoseconds> round_trips;
  std::chrono::nanoseconds wall_time{0};
};

/// Draws the scenario and runs the sequential oracle. Student codes are
/// assigned later by central; the oracle keys on roster index until then.
Plan draw_plan(const Options& options);

Result run(const Options& options);

/// `HH:MM..HH:MM`.
std::pair<TimeOfDay, TimeOfDay> parse_window(std::string_view text);

/// Percentile over round trips, `q` in [0, 1], nearest rank.
std::chrono::nanoseconds percentile(std::vector<std::chrono::nanoseconds> samples, double q);

}  // namespace rollcall::sim
