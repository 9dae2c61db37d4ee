#include "rollcall/simulator.hpp"

#include <unistd.h>
#include <zlib.h>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <iomanip>
#include <mutex>
#include <random>
#include <set>
#include <sstream>
#include <thread>

#include "rollcall/central.hpp"
#include "rollcall/edge_store.hpp"
#include "rollcall/engine.hpp"
#include "rollcall/error.hpp"
#include "rollcall/reader_link.hpp"
#include "rollcall/sync.hpp"

namespace rollcall::sim {

using namespace std::chrono_literals;

namespace {

constexpr const char* kEdgeNode = "edge-sim";
constexpr const char* kEdgeSecret = "sim-secret";

CardUid card_for(int i) {
  return CardUid({0x5A, static_cast<std::uint8_t>(i >> 16), static_cast<std::uint8_t>(i >> 8),
                  static_cast<std::uint8_t>(i)});
}

CardUid stray_card(int i) {
  return CardUid({0xEE, static_cast<std::uint8_t>(i >> 16), static_cast<std::uint8_t>(i >> 8),
                  static_cast<std::uint8_t>(i)});
}

/// Removes a directory it created, unless told to keep a caller's.
class WorkDir {
 public:
  explicit WorkDir(std::filesystem::path requested) {
    if (!requested.empty()) {
      path_ = std::move(requested);
      std::filesystem::create_directories(path_);
      return;
    }
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("rollcall-sim-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
    owned_ = true;
  }
  ~WorkDir() {
    std::error_code ec;
    if (owned_) std::filesystem::remove_all(path_, ec);
  }
  WorkDir(const WorkDir&) = delete;
  WorkDir& operator=(const WorkDir&) = delete;

  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
  bool owned_ = false;
};

std::string reply_text(const reader::EdgeMessage& m) {
  auto line = reader::encode(m);
  if (!line.empty() && line.back() == '\n') line.pop_back();
  return line;
}

std::string fixed(double v, int digits) {
  std::ostringstream out;
  out << std::fixed << std::setprecision(digits) << v;
  return out.str();
}

}  // namespace

std::pair<TimeOfDay, TimeOfDay> parse_window(std::string_view text) {
  auto dots = text.find("..");
  if (dots == std::string_view::npos) {
    throw Error(ErrorCode::kInvalidArgument, "window must look like HH:MM..HH:MM");
  }
  auto from = parse_time_of_day(text.substr(0, dots));
  auto to = parse_time_of_day(text.substr(dots + 2));
  if (to <= from) throw Error(ErrorCode::kInvalidRange, std::string(text));
  return {from, to};
}

std::chrono::nanoseconds percentile(std::vector<std::chrono::nanoseconds> samples, double q) {
  if (samples.empty()) return {};
  std::sort(samples.begin(), samples.end());
  auto rank = static_cast<std::size_t>(std::ceil(q * static_cast<double>(samples.size())));
  return samples[std::clamp<std::size_t>(rank, 1, samples.size()) - 1];
}

Plan draw_plan(const Options& o) {
  const auto& policy = o.policy;
  std::mt19937_64 rng(o.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto chance = [&](double p) { return unit(rng) < p; };

  Plan plan;
  auto year = static_cast<int>(std::chrono::year_month_day(o.day).year());
  for (int i = 0; i < o.students; ++i) {
    StudentRecord s;
    s.given_names = "Student" + std::to_string(i);
    s.family_names = "Family" + std::to_string(i % 37) + ", Line" + std::to_string(i % 5);
    s.enrollment_year = year;
    s.grade = 1 + static_cast<int>(rng() % 5);
    s.section = static_cast<char>('A' + rng() % 3);
    bool blocked = chance(o.blocked_rate);
    s.active = blocked || !chance(o.inactive_rate);
    plan.students.push_back(s);
    plan.cards.push_back(card_for(i));
    plan.blocked.push_back(blocked);
  }

  auto from = o.arrivals_from.value_or(policy.present_start - 5min);
  auto to = o.arrivals_to.value_or(policy.closure + 5min);
  if (to <= from) throw Error(ErrorCode::kInvalidRange, "arrival window is empty");
  auto span_ms = std::chrono::duration_cast<Duration>(to - from).count();

  // Distinct instants keep the arrival order total, so concurrent readers
  // cannot race on the same virtual millisecond.
  std::set<Timestamp> used;
  struct Tap {
    Timestamp at;
    int card;  // roster index, or -1 - n for stray card n
  };
  std::vector<Tap> taps;
  auto take = [&](TimeOfDay base, long long offset_ms) {
    auto t = policy.timezone.from_local(o.day, std::chrono::duration_cast<TimeOfDay>(base)) + Duration(offset_ms);
    while (!used.insert(t).second) t += 1ms;
    return t;
  };
  for (int i = 0; i < o.students; ++i) {
    if (chance(o.no_show_rate)) continue;
    long long offset = static_cast<long long>(rng() % static_cast<std::uint64_t>(span_ms));
    if (chance(o.early_rate)) {
      auto early = static_cast<long long>(rng() % (10 * 60 * 1000));
      taps.push_back({take(policy.present_start - 10min, early), i});
    }
    auto arrival = take(from, offset);
    taps.push_back({arrival, i});
    if (chance(o.repeat_rate)) {
      auto gap = 2000 + static_cast<long long>(rng() % (10 * 60 * 1000));
      taps.push_back({take(from, offset + gap), i});
    }
  }
  auto strays = static_cast<int>(o.stray_per_hundred * o.students / 100.0);
  for (int n = 0; n < strays; ++n) {
    taps.push_back({take(from, static_cast<long long>(rng() % static_cast<std::uint64_t>(span_ms))), -1 - n});
  }
  std::sort(taps.begin(), taps.end(), [](const Tap& a, const Tap& b) { return a.at < b.at; });

  // Sequential oracle: the earliest in-window tap of an enrolled, active,
  // unblocked card decides the day.
  bool school_day = policy.calendar.is_school_day(o.day);
  for (const auto& tap : taps) {
    PlannedScan scan{tap.at, tap.card >= 0 ? plan.cards[tap.card] : stray_card(-1 - tap.card),
                     static_cast<int>(rng() % static_cast<std::uint64_t>(std::max(o.readers, 1))), {}};
    auto local = policy.timezone.to_local(tap.at);
    if (tap.card < 0) {
      scan.expected_reply = "NAK UNK";
    } else if (plan.blocked[tap.card]) {
      scan.expected_reply = "NAK BLK";
    } else if (!plan.students[tap.card].active) {
      scan.expected_reply = "NAK UNK";
    } else if (!school_day) {
      scan.expected_reply = "NAK DAY";
    } else if (local.time_of_day < policy.present_start) {
      scan.expected_reply = "NAK WIN";
    } else if (local.time_of_day >= policy.closure) {
      scan.expected_reply = "NAK CLO";
    } else if (plan.ledger.contains(tap.card)) {
      scan.expected_reply = "ACK D";
    } else {
      bool late = local.time_of_day >= policy.late_start;
      plan.ledger[tap.card] = late ? AttendanceStatus::kLate : AttendanceStatus::kPresent;
      plan.recorded_at[tap.card] = tap.at;
      scan.expected_reply = late ? "ACK L" : "ACK P";
    }
    plan.scans.push_back(scan);
  }

  auto earliest = std::min(from, policy.present_start - 10min);
  if (o.partition) earliest = std::min(earliest, o.partition->first);
  earliest = std::max(earliest - 1min, TimeOfDay::zero());
  plan.start = policy.timezone.from_local(o.day, earliest);
  auto last = plan.scans.empty() ? plan.start : plan.scans.back().at;
  plan.end = std::max(policy.closure_instant(o.day), last) + 1min;

  if (school_day) {
    for (int i = 0; i < o.students; ++i) {
      if (!plan.students[i].active || plan.ledger.contains(i)) continue;
      plan.ledger[i] = AttendanceStatus::kAbsent;
      plan.recorded_at[i] = policy.closure_instant(o.day);
      if (chance(o.justify_rate)) {
        plan.justified.push_back(i);
        plan.ledger[i] = AttendanceStatus::kJustified;
        plan.recorded_at[i] = plan.end;
      }
    }
  }
  return plan;
}

Result run(const Options& o) {
  auto wall_start = std::chrono::steady_clock::now();
  auto plan = draw_plan(o);
  const auto& policy = o.policy;
  WorkDir dir(o.work_dir);
  VirtualClock clock(plan.start, o.speed);

  CentralService::Options central_options;
  central_options.policy = policy;
  central_options.edge_secrets = {{kEdgeNode, kEdgeSecret}};
  central_options.pbkdf2_iterations = 1000;
  central_options.sync = o.fsync;
  CentralService central(dir.path() / "central.journal", clock, central_options);
  const Actor admin{"sim-admin", Role::kAdmin};

  std::vector<std::string> codes;
  for (std::size_t i = 0; i < plan.students.size(); ++i) {
    auto draft = plan.students[i];
    draft.active = true;
    auto created = central.create_student(admin, draft);
    codes.push_back(created.student_code);
    central.enroll_card(admin, plan.cards[i], created.student_code);
    if (plan.blocked[i]) central.set_card_state(admin, plan.cards[i], CardState::kBlocked);
    if (!plan.students[i].active) {
      created.active = false;
      central.update_student(admin, created);
    }
  }

  EdgeStore store(dir.path() / "edge.journal", EdgeStore::Options{kEdgeNode, 0, o.fsync, plan.start});
  std::mutex ids_mu;
  std::mt19937_64 ids_rng(o.seed ^ 0x9E3779B97F4A7C15ULL);
  AttendanceEngine engine(store, policy, clock, [&] {
    std::lock_guard lock(ids_mu);
    return EventId::from_generator(ids_rng);
  });
  DirectTransport direct(central);
  PartitionableTransport link(direct);
  SyncWorker worker(engine, link, clock,
                    SyncWorker::Options{kEdgeNode, kEdgeSecret, o.sync_interval, o.batch_size, 5s, 5min});
  // Provisioning: the edge holds the roster before the morning starts.
  worker.sync_once();

  reader::ReaderServer server(engine);
  auto readers = std::max(o.readers, 1);
  std::vector<std::vector<reader::ScriptStep>> scripts(readers);
  std::vector<std::vector<std::size_t>> script_index(readers);
  std::vector<Timestamp> cursor(readers, plan.start);
  for (std::size_t i = 0; i < plan.scans.size(); ++i) {
    const auto& s = plan.scans[i];
    scripts[s.reader].push_back(reader::ScriptStep::scan(s.at - cursor[s.reader], s.uid));
    script_index[s.reader].push_back(i);
    cursor[s.reader] = s.at;
  }

  std::vector<reader::Transcript> transcripts(readers);
  {
    std::stop_source background;
    auto driver = clock.join();
    std::jthread sync_thread([&, p = clock.join()]() mutable {
      worker.run(background.get_token());
      p.leave();
    });
    std::jthread closure_thread([&, p = clock.join()]() mutable {
      engine.run_closure_scheduler(background.get_token());
      p.leave();
    });
    std::vector<std::jthread> emulators;
    for (int r = 0; r < readers; ++r) {
      emulators.emplace_back([&, r, p = clock.join()]() mutable {
        reader::ReaderEmulator::Options options;
        options.node_id = "door-" + std::to_string(r + 1);
        reader::ReaderEmulator emu(
            [&] {
              auto [edge, door] = make_stream_pair();
              server.serve(std::move(edge));
              return std::move(door);
            },
            clock, options);
        transcripts[r] = emu.run(scripts[r]);
        p.leave();
      });
    }
    if (o.partition) {
      auto down = policy.timezone.from_local(o.day, o.partition->first);
      auto up = policy.timezone.from_local(o.day, o.partition->second);
      clock.sleep_until(down);
      link.set_partitioned(true);
      if (up < plan.end) {
        clock.sleep_until(up);
        link.set_partitioned(false);
      }
    }
    clock.sleep_until(plan.end);
    for (auto& t : emulators) t.join();
    // The driver stays joined until the loops are gone; leaving first would
    // let the clock run on to a stopping sleeper's deadline.
    background.request_stop();
    sync_thread.join();
    closure_thread.join();
    driver.leave();
  }
  server.stop();

  // Reconnect and drain whatever the loop left behind.
  link.set_partitioned(false);
  for (int i = 0; i < 64 && store.high_water_synced() < store.last_sequence(); ++i) worker.sync_once();

  Result result;
  auto mismatch = [&](std::string m) {
    if (result.mismatches.size() < 20) result.mismatches.push_back(std::move(m));
    else if (result.mismatches.size() == 20) result.mismatches.push_back("...");
  };
  std::size_t mismatch_count = 0;

  for (int i : plan.justified) {
    try {
      central.justify(admin, codes[i], o.day, "note from guardian");
    } catch (const Error& e) {
      ++mismatch_count;
      mismatch("justify " + codes[i] + ": " + e.what());
    }
  }
  worker.sync_once();

  // Replies, tap by tap.
  std::map<std::string, std::uint64_t> observed_replies;
  result.round_trips.assign(plan.scans.size(), {});
  for (int r = 0; r < readers; ++r) {
    const auto& tr = transcripts[r];
    for (std::size_t k = 0; k < script_index[r].size(); ++k) {
      auto i = script_index[r][k];
      std::string got = k < tr.scan_replies.size() ? reply_text(tr.scan_replies[k]) : "<none>";
      if (k < tr.round_trips.size()) result.round_trips[i] = tr.round_trips[k];
      ++observed_replies[got];
      if (got != plan.scans[i].expected_reply) {
        ++mismatch_count;
        mismatch("scan " + std::to_string(i) + " " + plan.scans[i].uid.to_string() + " at " +
                 format_timestamp(plan.scans[i].at) + ": expected " + plan.scans[i].expected_reply + ", got " + got);
      }
    }
  }

  // Final ledger at central against the oracle.
  std::map<std::string, int> index_of;
  for (std::size_t i = 0; i < codes.size(); ++i) index_of[codes[i]] = static_cast<int>(i);
  std::vector<AttendanceEvent> day_events;
  for (const auto& e : central.current_events()) {
    if (e.school_day == o.day) day_events.push_back(e);
  }
  std::set<int> seen;
  uLong digest = crc32(0L, Z_NULL, 0);
  for (const auto& e : day_events) {
    result.central_counts.add(e.status);
    auto line = e.student_code + "," + std::string(to_string(e.status)) + "," + std::string(to_string(e.method)) +
                "," + format_timestamp(e.recorded_at) + "\n";
    digest = crc32(digest, reinterpret_cast<const Bytef*>(line.data()), static_cast<uInt>(line.size()));
    auto it = index_of.find(e.student_code);
    if (it == index_of.end() || !plan.ledger.contains(it->second)) {
      ++mismatch_count;
      mismatch("unexpected event for " + e.student_code + ": " + std::string(to_string(e.status)));
      continue;
    }
    seen.insert(it->second);
    auto want = plan.ledger.at(it->second);
    if (e.status != want || e.recorded_at != plan.recorded_at.at(it->second)) {
      ++mismatch_count;
      mismatch(e.student_code + ": expected " + std::string(to_string(want)) + " at " +
               format_timestamp(plan.recorded_at.at(it->second)) + ", got " + std::string(to_string(e.status)) +
               " at " + format_timestamp(e.recorded_at));
    }
  }
  for (const auto& [i, status] : plan.ledger) {
    result.oracle_counts.add(status);
    if (!seen.contains(i)) {
      ++mismatch_count;
      mismatch(codes[i] + ": expected " + std::string(to_string(status)) + ", missing at central");
    }
  }

  for (const auto& s : plan.students) result.active_roster += s.active ? 1 : 0;
  bool school_day = policy.calendar.is_school_day(o.day);
  auto expected_total = school_day ? result.active_roster : 0;
  bool conserved = result.central_counts.total() == expected_total;
  if (!conserved) {
    ++mismatch_count;
    mismatch("conservation: " + std::to_string(result.central_counts.total()) + " records for " +
             std::to_string(expected_total) + " active students");
  }

  std::set<EventId> edge_ids;
  auto log = store.log();
  for (const auto& e : log) edge_ids.insert(e.event_id);
  auto central_ids = central.event_ids();
  bool exactly_once = central_ids == edge_ids && central.high_water(kEdgeNode) == store.last_sequence();
  if (!exactly_once) {
    ++mismatch_count;
    mismatch("exactly-once: central holds " + std::to_string(central_ids.size()) + " event ids, edge log " +
             std::to_string(edge_ids.size()) + ", high-water " + std::to_string(central.high_water(kEdgeNode)) +
             "/" + std::to_string(store.last_sequence()));
  }

  result.central_events = central_ids.size();
  result.edge_log_size = log.size();
  result.scans = plan.scans.size();
  result.conformant = mismatch_count == 0;

  std::ostringstream out;
  auto row = [&](std::string_view label, const std::string& value) {
    out << "  " << std::left << std::setw(16) << label << value << "\n";
  };
  out << "simulation\n";
  row("day", format_date(o.day) + (school_day ? " (school day)" : " (no school)"));
  row("seed", std::to_string(o.seed));
  row("students", std::to_string(plan.students.size()) + " (" + std::to_string(result.active_roster) +
                      " active, " + std::to_string(std::count(plan.blocked.begin(), plan.blocked.end(), true)) +
                      " blocked cards)");
  row("readers", std::to_string(readers));
  row("window", format_time_of_day(policy.present_start) + " / " + format_time_of_day(policy.late_start) +
                    " / " + format_time_of_day(policy.closure) + " " + policy.timezone.name());
  row("partition", o.partition ? format_time_of_day(o.partition->first) + ".." +
                                     format_time_of_day(o.partition->second)
                               : std::string("none"));
  out << "scans\n";
  row("taps", std::to_string(plan.scans.size()));
  for (const auto& [reply, n] : observed_replies) row(reply, std::to_string(n));
  out << "ledger            central   oracle\n";
  auto line = [&](std::string_view label, std::uint64_t c, std::uint64_t e) {
    out << "  " << std::left << std::setw(16) << label << std::right << std::setw(7) << c << std::setw(9) << e
        << "\n";
  };
  line("present", result.central_counts.present, result.oracle_counts.present);
  line("late", result.central_counts.late, result.oracle_counts.late);
  line("absent", result.central_counts.absent, result.oracle_counts.absent);
  line("justified", result.central_counts.justified, result.oracle_counts.justified);
  line("total", result.central_counts.total(), result.oracle_counts.total());
  out << "checks\n";
  row("conservation", std::to_string(result.central_counts.total()) + " = " + std::to_string(expected_total) +
                          (conserved ? " ok" : " FAIL"));
  row("exactly-once", std::to_string(central_ids.size()) + " central / " + std::to_string(edge_ids.size()) +
                          " edge" + (exactly_once ? " ok" : " FAIL"));
  std::ostringstream hex;
  hex << std::hex << std::setw(8) << std::setfill('0') << digest;
  row("ledger digest", hex.str());
  if (expected_total > 0) {
    auto attended = result.central_counts.present + result.central_counts.late;
    row("attendance", fixed(100.0 * static_cast<double>(attended) / static_cast<double>(expected_total), 1) + "%");
  }
  out << "verdict           " << (result.conformant ? "CONFORMANT" : "MISMATCH (" + std::to_string(mismatch_count) + ")")
      << "\n";
  for (const auto& m : result.mismatches) out << "  - " << m << "\n";
  result.report = out.str();
  result.wall_time = std::chrono::steady_clock::now() - wall_start;
  return result;
}

}  // namespace rollcall::sim
