// Acceptance suite. Prints one PASS/FAIL line per criterion and exits
// nonzero when any criterion fails.

#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <future>
#include <iostream>
#include <map>
#include <mutex>
#include <optional>
#include <random>
#include <regex>
#include <set>
#include <sstream>
#include <system_error>
#include <thread>

#include "rollcall/central.hpp"
#include "rollcall/central_http.hpp"
#include "rollcall/edge_store.hpp"
#include "rollcall/engine.hpp"
#include "rollcall/error.hpp"
#include "rollcall/http_client.hpp"
#include "rollcall/reader_link.hpp"
#include "rollcall/simulator.hpp"
#include "rollcall/sync.hpp"
#include "support.hpp"

namespace rollcall {
namespace {

using namespace std::chrono_literals;
using testing::at;
using testing::kAdmin;
using testing::lima_policy;
using testing::make_population;
using testing::monday;
using testing::seed_store;
using testing::TempDir;
using testing::uid_for;
using Nanos = std::chrono::nanoseconds;

struct Verdict {
  bool pass = false;
  std::string detail;
};

std::string num(double v, int digits = 2) {
  std::ostringstream out;
  out.setf(std::ios::fixed);
  out.precision(digits);
  out << v;
  return out.str();
}

double millis(Nanos d) { return static_cast<double>(d.count()) / 1e6; }

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

Nanos median(std::vector<Nanos> v) { return sim::percentile(std::move(v), 0.5); }

// ---------------------------------------------------------------------------

std::string hms(long long s) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%02lld:%02lld:%02lld", s / 3600, s / 60 % 60, s % 60);
  return buf;
}

/// Boundary comparison on zero-padded clock strings, sharing nothing with
/// the chrono arithmetic under test.
WindowClass classify_oracle(const std::string& t, const std::string& present, const std::string& late,
                            const std::string& closure) {
  if (t < present) return WindowClass::kBeforeWindow;
  if (t < late) return WindowClass::kPresent;
  if (t < closure) return WindowClass::kLate;
  return WindowClass::kAfterClosure;
}

Verdict classification_exactness() {
  auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 rng(2024);

  std::vector<TimeWindowPolicy> policies{TimeWindowPolicy{}};
  for (int i = 0; i < 20; ++i) {
    TimeWindowPolicy p;
    auto ps = 5 * 3600 + static_cast<long long>(rng() % (4 * 3600));
    auto ls = ps + 1 + static_cast<long long>(rng() % 7200);
    auto cl = ls + 1 + static_cast<long long>(rng() % 7200);
    p.present_start = TimeOfDay(ps);
    p.late_start = TimeOfDay(ls);
    p.closure = TimeOfDay(cl);
    policies.push_back(p);
  }
  std::size_t swept = 0, sweep_wrong = 0;
  for (const auto& p : policies) {
    auto ps = hms(p.present_start.count()), ls = hms(p.late_start.count()), cl = hms(p.closure.count());
    for (long long s = 0; s < 86'400; ++s) {
      ++swept;
      if (classify(p, TimeOfDay(s)) != classify_oracle(hms(s), ps, ls, cl)) ++sweep_wrong;
    }
  }

  // 10,000 (student, day) replays: earliest in-window tap wins, later ones
  // are duplicates, the rest are rejected by window.
  TempDir dir;
  auto policy = lima_policy();
  auto pop = make_population(200);
  std::vector<SchoolDay> days;
  for (auto d = parse_date("2025-03-03"); days.size() < 50; d += std::chrono::days(1)) {
    if (policy.calendar.is_school_day(d)) days.push_back(d);
  }
  EdgeStore store(dir / "edge.journal", EdgeStore::Options{"edge-1", 0, false, at(policy, days.front(), "00:00")});
  seed_store(store, pop);
  VirtualClock clock(at(policy, days.front(), "00:00"));
  AttendanceEngine engine(store, policy, clock);

  struct Tap {
    Timestamp at;
    int student;
    int day;
  };
  std::vector<Tap> taps;
  std::set<Timestamp> used;
  for (int s = 0; s < 200; ++s) {
    for (int d = 0; d < 50; ++d) {
      auto n = 1 + static_cast<int>(rng() % 4);
      for (int k = 0; k < n; ++k) {
        auto ms = 6LL * 3600'000 + 1800'000 + static_cast<long long>(rng() % (150 * 60'000));
        auto t = policy.timezone.from_local(days[d], TimeOfDay(0)) + Duration(ms);
        while (!used.insert(t).second) t += 1ms;
        taps.push_back({t, s, d});
      }
    }
  }
  std::sort(taps.begin(), taps.end(), [](const Tap& a, const Tap& b) { return a.at < b.at; });

  std::map<std::pair<int, int>, AttendanceStatus> oracle;
  std::size_t replay_wrong = 0;
  for (const auto& tap : taps) {
    auto tod = std::chrono::duration_cast<TimeOfDay>(tap.at - policy.timezone.from_local(days[tap.day], TimeOfDay(0)));
    auto t = hms(tod.count());
    auto window = classify_oracle(t, "07:00:00", "08:01:00", "08:31:00");
    ScanOutcome expected;
    auto key = std::pair(tap.student, tap.day);
    const auto& code = pop.students[tap.student].student_code;
    if (window == WindowClass::kBeforeWindow) {
      expected = ScanOutcome::rejected(RejectReason::kBeforeWindow, code);
    } else if (window == WindowClass::kAfterClosure) {
      expected = ScanOutcome::rejected(RejectReason::kAfterClosure, code);
    } else if (auto it = oracle.find(key); it != oracle.end()) {
      expected = ScanOutcome::duplicate(it->second, code);
    } else {
      auto status = window == WindowClass::kPresent ? AttendanceStatus::kPresent : AttendanceStatus::kLate;
      oracle[key] = status;
      expected = ScanOutcome::recorded(status, code);
    }
    if (engine.process_scan(uid_for(tap.student), tap.at) != expected) ++replay_wrong;
  }
  std::map<std::pair<int, int>, AttendanceStatus> ledger;
  std::map<std::string, int> index_of;
  for (int s = 0; s < 200; ++s) index_of[pop.students[s].student_code] = s;
  for (const auto& e : store.current_events()) {
    auto d = static_cast<int>(std::find(days.begin(), days.end(), e.school_day) - days.begin());
    ledger[{index_of.at(e.student_code), d}] = e.status;
  }
  if (ledger != oracle) ++replay_wrong;

  auto elapsed = seconds_since(t0);
  bool pass = sweep_wrong == 0 && replay_wrong == 0 && elapsed < 10.0;
  return {pass, std::to_string(swept) + " offsets over " + std::to_string(policies.size()) + " policies, " +
                    std::to_string(sweep_wrong) + " disagreements; " + std::to_string(taps.size()) +
                    " taps in 10000 replays, " + std::to_string(replay_wrong) + " disagreements; " +
                    num(elapsed, 1) + " s (limit 10 s)"};
}

// ---------------------------------------------------------------------------

Verdict scan_latency() {
  auto t0 = std::chrono::steady_clock::now();
  TempDir dir;
  auto policy = lima_policy();
  auto pop = make_population(1000);
  EdgeStore store(dir / "edge.journal", EdgeStore::Options{"edge-1", 0, true, at(policy, monday(), "06:00")});
  seed_store(store, pop);
  VirtualClock clock(at(policy, monday(), "07:00"));
  AttendanceEngine engine(store, policy, clock);
  reader::ReaderServer server(engine);
  TcpListener listener("127.0.0.1", 0);
  std::jthread acceptor([&] { server.listen(listener); });

  std::vector<reader::ScriptStep> script;
  for (int i = 0; i < 1000; ++i) script.push_back(reader::ScriptStep::scan(1s, uid_for(i)));
  reader::Transcript transcript;
  {
    auto participant = clock.join();
    reader::ReaderEmulator emu([&] { return tcp_connect("127.0.0.1", listener.port()); }, clock, {});
    transcript = emu.run(script);
  }
  server.stop();
  listener.close();

  std::size_t acked = 0;
  for (const auto& r : transcript.scan_replies) acked += r == reader::EdgeMessage{reader::Ack{reader::AckCode::kPresent}};
  auto p50 = sim::percentile(transcript.round_trips, 0.50);
  auto p99 = sim::percentile(transcript.round_trips, 0.99);
  auto elapsed = seconds_since(t0);
  bool pass = acked == 1000 && transcript.round_trips.size() == 1000 && p99 <= 30ms && elapsed < 60.0;
  return {pass, std::to_string(acked) + "/1000 ACK P over TCP with fsync; p50 " + num(millis(p50), 3) +
                    " ms, p99 " + num(millis(p99), 3) + " ms (limit 30 ms); " + num(elapsed, 1) + " s"};
}

// ---------------------------------------------------------------------------

Verdict morning_throughput() {
  sim::Options o;
  o.students = 250;
  o.readers = 1;
  o.seed = 7;
  o.speed = 60;
  o.policy = lima_policy();
  o.arrivals_from = 7h;
  o.arrivals_to = 8h;
  o.early_rate = 0;
  o.blocked_rate = 0;
  o.inactive_rate = 0;
  o.stray_per_hundred = 0;
  auto r = sim::run(o);
  auto worst = sim::percentile(r.round_trips, 1.0);
  auto wall = std::chrono::duration<double>(r.wall_time).count();
  bool replied = r.round_trips.size() == r.scans &&
                 std::none_of(r.round_trips.begin(), r.round_trips.end(), [](Nanos d) { return d == Nanos::zero(); });
  bool pass = r.conformant && replied && worst <= 3s && wall < 120.0;
  return {pass, std::to_string(r.scans) + " taps in 60 virtual minutes, slowest ACK " + num(millis(worst), 3) +
                    " ms (budget 3000 ms); central " + std::to_string(r.central_counts.total()) + " records, " +
                    (r.conformant ? "matches oracle" : "ORACLE MISMATCH") + "; wall " + num(wall, 1) +
                    " s at speed 60 (limit 120 s)"};
}

// ---------------------------------------------------------------------------

Verdict daily_capacity() {
  TempDir dir;
  auto policy = lima_policy();
  auto pop = make_population(1100);
  EdgeStore store(dir / "edge.journal", EdgeStore::Options{"edge-1", 0, true, at(policy, monday(), "06:00")});
  seed_store(store, pop);
  VirtualClock clock(at(policy, monday(), "07:00"));
  AttendanceEngine engine(store, policy, clock);

  std::vector<Nanos> latencies;
  std::size_t recorded = 0;
  for (int i = 0; i < 1000; ++i) {
    clock.advance(3s);
    auto t0 = std::chrono::steady_clock::now();
    auto outcome = engine.process_scan(uid_for(i), clock.now());
    latencies.push_back(std::chrono::steady_clock::now() - t0);
    recorded += outcome.kind == ScanOutcome::Kind::kRecorded;
  }
  clock.set(policy.closure_instant(monday()));
  auto absents = engine.run_closure(monday());

  StatusCounts counts;
  for (const auto& e : store.current_events_on(monday())) counts.add(e.status);
  auto med = median(latencies);
  auto worst = sim::percentile(latencies, 1.0);
  std::size_t over = std::count_if(latencies.begin(), latencies.end(), [&](Nanos d) { return d > 2 * med; });
  bool conserved = counts.total() == pop.students.size();
  bool pass = recorded == 1000 && over == 0 && conserved;
  return {pass, std::to_string(recorded) + " appends, median " + num(millis(med), 3) + " ms, max " +
                    num(millis(worst), 3) + " ms, " + std::to_string(over) + " above 2x median; closure added " +
                    std::to_string(absents.size()) + " absences, " + std::to_string(counts.total()) + " = " +
                    std::to_string(pop.students.size()) + " roster"};
}

// ---------------------------------------------------------------------------

Verdict concurrent_api_clients() {
  TempDir dir;
  auto policy = lima_policy();
  SystemClock wall;
  CentralService::Options co;
  co.policy = policy;
  co.edge_secrets = {{"edge-1", "secret-1"}};
  co.pbkdf2_iterations = 1000;
  CentralService central(dir / "central.journal", wall, co);
  central.ensure_user("admin", "admin-pw", Role::kAdmin);
  constexpr int kStudents = 600;
  for (int i = 0; i < kStudents; ++i) {
    StudentRecord draft{{}, "Given" + std::to_string(i), "Family" + std::to_string(i), 2025, 1 + i % 5,
                        static_cast<char>('A' + i % 3), {}, true};
    central.enroll_card(kAdmin, uid_for(i), central.create_student(kAdmin, draft).student_code);
  }
  CentralHttpServer server(central, {});
  server.start();
  auto url = "http://127.0.0.1:" + std::to_string(server.port());

  EdgeStore store(dir / "edge.journal", EdgeStore::Options{"edge-1", 0, true, at(policy, monday(), "06:00")});
  VirtualClock clock(at(policy, monday(), "07:00"));
  AttendanceEngine engine(store, policy, clock);
  HttpSyncTransport transport(url);
  SyncWorker worker(engine, transport, clock, SyncWorker::Options{"edge-1", "secret-1", 30s, 100, 5s, 5min});
  worker.sync_once();
  for (int i = 0; i < kStudents / 2; ++i) {
    clock.advance(2s);
    engine.process_scan(uid_for(i), clock.now());
  }
  worker.sync_once();

  std::atomic<int> errors{0};
  // A user looks at the result before asking again.
  auto user = [&](std::uint64_t seed, int queries) {
    std::mt19937_64 rng(seed);
    std::vector<Nanos> samples;
    try {
      ApiClient client(url);
      client.login("admin", "admin-pw");
      for (int q = 0; q < queries; ++q) {
        std::this_thread::sleep_for(std::chrono::milliseconds(50 + rng() % 200));
        auto t0 = std::chrono::steady_clock::now();
        auto r = client.get("/api/v1/attendance",
                            {{"from", "2025-03-10"}, {"to", "2025-03-10"}, {"page_size", "100"},
                             {"page", std::to_string(1 + q % 3)}});
        samples.push_back(std::chrono::steady_clock::now() - t0);
        if (r.status != 200) ++errors;
      }
    } catch (const std::exception&) {
      ++errors;
    }
    return samples;
  };

  auto idle = user(1, 100);
  auto idle_p95 = sim::percentile(idle, 0.95);

  std::atomic<bool> busy{true};
  std::atomic<int> scanned{0};
  std::jthread scanner([&] {
    for (int i = kStudents / 2; i < kStudents && busy; ++i) {
      clock.advance(2s);
      engine.process_scan(uid_for(i), clock.now());
      ++scanned;
      if (i % 10 == 0) {
        try {
          worker.sync_once();
        } catch (const Error&) {
          ++errors;
        }
      }
      std::this_thread::sleep_for(40ms);
    }
  });
  std::vector<std::future<std::vector<Nanos>>> clients;
  for (int c = 0; c < 10; ++c) clients.push_back(std::async(std::launch::async, user, 100 + c, 100));
  std::vector<Nanos> loaded;
  for (auto& f : clients) {
    auto s = f.get();
    loaded.insert(loaded.end(), s.begin(), s.end());
  }
  busy = false;
  scanner.join();
  server.stop();

  auto loaded_p95 = sim::percentile(loaded, 0.95);
  bool pass = errors == 0 && loaded.size() == 1000 && loaded_p95 <= 2 * idle_p95;
  return {pass, "idle p95 " + num(millis(idle_p95), 3) + " ms; 10 clients x 100 queries with " +
                    std::to_string(scanned.load()) + " scans syncing: p95 " + num(millis(loaded_p95), 3) +
                    " ms (limit " + num(2 * millis(idle_p95), 3) + " ms), " + std::to_string(errors.load()) +
                    " errors"};
}

// ---------------------------------------------------------------------------

Verdict partition_continuity() {
  sim::Options o;
  o.students = 300;
  o.readers = 1;
  o.seed = 21;
  o.policy = lima_policy();
  o.no_show_rate = 0;
  o.repeat_rate = 0;
  o.early_rate = 0;
  o.blocked_rate = 0;
  o.inactive_rate = 0;
  o.stray_per_hundred = 0;
  o.fsync = true;
  auto cut_options = o;
  cut_options.partition = sim::parse_window("06:00..12:00");

  // Interleaved runs so drift in machine load hits both sides alike.
  std::vector<Nanos> plain_p50, cut_p50;
  sim::Result plain, cut;
  for (int round = 0; round < 3; ++round) {
    plain = sim::run(o);
    cut = sim::run(cut_options);
    plain_p50.push_back(sim::percentile(plain.round_trips, 0.5));
    cut_p50.push_back(sim::percentile(cut.round_trips, 0.5));
  }
  auto a = millis(median(plain_p50)), b = millis(median(cut_p50));
  auto change = b / a - 1.0;
  bool same_ledger = plain.central_counts == cut.central_counts && cut.central_events == cut.edge_log_size;
  bool pass = cut.conformant && plain.conformant && same_ledger && cut.scans == 300 && std::abs(change) <= 0.20;
  return {pass, "300 taps with the link down all morning; median ACK " + num(a, 3) + " ms connected vs " +
                    num(b, 3) + " ms partitioned (" + (change >= 0 ? "+" : "") + num(100 * change, 1) +
                    "%, limit 20%); after reconnect central holds " + std::to_string(cut.central_events) +
                    " event ids = edge log " + std::to_string(cut.edge_log_size) +
                    (cut.conformant ? ", exactly once" : ", MISMATCH")};
}

// ---------------------------------------------------------------------------

struct EdgeProcess {
  pid_t pid = 0;
  std::uint16_t port = 0;
};

[[noreturn]] void edge_process_main(const std::filesystem::path& journal, int fd, int incarnation) {
  try {
    auto policy = lima_policy();
    EdgeStore store(journal, EdgeStore::Options{"edge-1", 0, true, at(policy, monday(), "06:00")});
    ScaledClock clock(at(policy, monday(), "07:05") + std::chrono::seconds(10 * incarnation), 1.0);
    AttendanceEngine engine(store, policy, clock);
    reader::ReaderServer server(engine);
    TcpListener listener("127.0.0.1", 0);
    auto port = listener.port();
    if (::write(fd, &port, sizeof port) != sizeof port) ::_exit(3);
    ::close(fd);
    server.listen(listener);
  } catch (...) {
  }
  ::_exit(3);
}

EdgeProcess spawn_edge(const std::filesystem::path& journal, int incarnation) {
  int fds[2];
  if (::pipe(fds) != 0) throw std::system_error(errno, std::generic_category(), "pipe");
  pid_t pid = ::fork();
  if (pid == 0) {
    ::close(fds[0]);
    edge_process_main(journal, fds[1], incarnation);
  }
  ::close(fds[1]);
  std::uint16_t port = 0;
  auto n = ::read(fds[0], &port, sizeof port);
  ::close(fds[0]);
  return {pid, n == sizeof port ? port : std::uint16_t{0}};
}

/// Minimal reader side of the line protocol, for driving a process we kill.
class ReaderLine {
 public:
  explicit ReaderLine(std::uint16_t port) : stream_(tcp_connect("127.0.0.1", port)) {
    auto welcome = exchange(reader::encode(reader::Hello{"door-1", "crash-test"}));
    if (!welcome || welcome->rfind("WELCOME", 0) != 0) throw Error(ErrorCode::kNetwork, "no welcome");
  }

  std::optional<std::string> exchange(const std::string& frame) {
    stream_->write_all(frame);
    auto deadline = std::chrono::steady_clock::now() + 3s;
    while (lines_.empty()) {
      if (std::chrono::steady_clock::now() > deadline) return std::nullopt;
      char buf[256];
      auto n = stream_->read(buf, 100ms);
      if (!n) continue;
      if (*n == 0) return std::nullopt;
      for (auto& line : framer_.feed(std::string_view(buf, *n))) {
        if (line) lines_.push_back(*line);
      }
    }
    auto line = lines_.front();
    lines_.erase(lines_.begin());
    return line;
  }

 private:
  std::unique_ptr<ByteStream> stream_;
  reader::LineFramer framer_;
  std::vector<std::string> lines_;
};

Verdict durability() {
  constexpr int kScans = 500;
  TempDir dir;
  auto journal = dir / "edge.journal";
  auto policy = lima_policy();
  auto pop = make_population(kScans);
  {
    EdgeStore store(journal, EdgeStore::Options{"edge-1", 0, true, at(policy, monday(), "06:00")});
    seed_store(store, pop);
  }

  int incarnation = 0;
  auto edge = spawn_edge(journal, incarnation);
  std::atomic<pid_t> live{edge.pid};
  std::atomic<bool> done{false};
  std::atomic<int> kills{0};
  // The driver arms a kill just before sending a frame so it lands somewhere
  // between the write, the durable append and the reply.
  std::mutex arm_mu;
  std::condition_variable arm_cv;
  std::optional<std::chrono::steady_clock::time_point> armed;
  std::jthread killer([&] {
    std::unique_lock lock(arm_mu);
    while (!done) {
      arm_cv.wait(lock, [&] { return armed.has_value() || done; });
      if (done) break;
      auto when = *armed;
      armed.reset();
      lock.unlock();
      std::this_thread::sleep_until(when);
      auto pid = live.load();
      if (pid > 0 && ::kill(pid, SIGKILL) == 0) ++kills;
      lock.lock();
    }
  });
  std::mt19937 rng(77);
  std::vector<bool> acked(kScans, false);
  int naks = 0;
  std::unique_ptr<ReaderLine> link;
  for (int next = 0; next < kScans;) {
    try {
      if (!link) {
        if (edge.port == 0) throw Error(ErrorCode::kNetwork, "edge died during start");
        link = std::make_unique<ReaderLine>(edge.port);
      }
      if (rng() % 20 == 0) {
        std::lock_guard lock(arm_mu);
        armed = std::chrono::steady_clock::now() + std::chrono::microseconds(rng() % 500);
        arm_cv.notify_one();
      }
      auto reply = link->exchange(reader::encode(reader::UidFrame{uid_for(next)}));
      if (!reply) throw Error(ErrorCode::kNetwork, "no reply");
      if (reply->rfind("ACK", 0) == 0) acked[next] = true;
      else ++naks;
      ++next;
    } catch (const Error&) {
      // The edge is gone or going: reap it and start the next incarnation.
      link.reset();
      auto pid = live.exchange(0);
      ::kill(pid, SIGKILL);
      ::waitpid(pid, nullptr, 0);
      edge = spawn_edge(journal, ++incarnation);
      live = edge.pid;
    }
  }
  {
    std::lock_guard lock(arm_mu);
    done = true;
  }
  arm_cv.notify_one();
  killer.join();
  link.reset();
  auto pid = live.exchange(0);
  ::kill(pid, SIGKILL);
  ::waitpid(pid, nullptr, 0);

  EdgeStore store(journal, EdgeStore::Options{"edge-1", 0, true, at(policy, monday(), "06:00")});
  std::size_t lost = 0;
  for (int i = 0; i < kScans; ++i) {
    if (acked[i] && !store.current_event(pop.students[i].student_code, monday())) ++lost;
  }
  std::map<std::pair<SchoolDay, std::string>, std::set<EventId>> lineages;
  for (const auto& e : store.log()) lineages[{e.school_day, e.student_code}].insert(e.event_id);
  auto duplicates = std::count_if(lineages.begin(), lineages.end(), [](const auto& kv) { return kv.second.size() > 1; });
  auto acked_n = std::count(acked.begin(), acked.end(), true);
  bool pass = kills > 0 && acked_n == kScans && lost == 0 && duplicates == 0 && naks == 0 &&
              lineages.size() == static_cast<std::size_t>(kScans);
  return {pass, std::to_string(kills.load()) + " SIGKILLs, " + std::to_string(incarnation) + " restarts; " +
                    std::to_string(acked_n) + "/" + std::to_string(kScans) + " ACKed, " + std::to_string(lost) +
                    " lost, " + std::to_string(duplicates) + " duplicate (student, day) records, " +
                    std::to_string(naks) + " NAKs"};
}

// ---------------------------------------------------------------------------

Verdict conservation() {
  auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 rng(4242);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const char* zones[] = {"UTC", "America/Lima", "America/Santiago", "Europe/Madrid"};
  int scenarios = 0, closed_days = 0, failures = 0;
  std::string first_failure;
  for (int k = 0; k < 100; ++k) {
    sim::Options o;
    o.students = static_cast<int>(rng() % 151);
    o.readers = 1 + static_cast<int>(rng() % 3);
    o.seed = rng();
    o.day = parse_date("2025-03-03") + std::chrono::days(rng() % 28);
    o.policy.timezone = TimeZone::load(zones[rng() % 4]);
    o.policy.present_start = 6h + std::chrono::minutes(30 + rng() % 60);
    o.policy.late_start = o.policy.present_start + std::chrono::minutes(20 + rng() % 40);
    o.policy.closure = o.policy.late_start + std::chrono::minutes(10 + rng() % 30);
    if (unit(rng) < 0.1) o.policy.calendar.add_holiday(o.day);
    o.no_show_rate = 0.3 * unit(rng);
    o.repeat_rate = 0.2 * unit(rng);
    o.blocked_rate = 0.05 * unit(rng);
    o.inactive_rate = 0.05 * unit(rng);
    o.justify_rate = 0.5 * unit(rng);
    auto r = sim::run(o);
    ++scenarios;
    bool school = o.policy.calendar.is_school_day(o.day);
    closed_days += school;
    auto expected = school ? r.active_roster : 0;
    if (!r.conformant || r.central_counts.total() != expected) {
      ++failures;
      if (first_failure.empty()) first_failure = "; first failure seed " + std::to_string(o.seed) + ":\n" + r.report;
    }
  }
  return {failures == 0, std::to_string(scenarios) + " scenarios (" + std::to_string(closed_days) +
                             " closed school days), " + std::to_string(failures) + " violations; " +
                             num(seconds_since(t0), 1) + " s" + first_failure};
}

// ---------------------------------------------------------------------------

std::string format_code(int year, int grade, char section, int n) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%04d-%d%c-%03d", year, grade, section, n);
  return buf;
}

Verdict code_generation() {
  std::mt19937_64 rng(10'000);
  const std::regex pattern(R"(^\d{4}-[1-5][A-Z]-\d{3}$)");
  Roster roster;
  std::set<std::string> taken;
  int insertions = 0, wrong = 0, legacy = 0;
  while (insertions < 10'000) {
    int year = 2019 + static_cast<int>(rng() % 8);
    int grade = 1 + static_cast<int>(rng() % 5);
    char section = static_cast<char>('A' + rng() % 4);
    if (rng() % 4 == 0) {
      // A record imported with its existing code leaves holes behind it.
      auto code = format_code(year, grade, section, 1 + static_cast<int>(rng() % 150));
      if (taken.insert(code).second) {
        roster.upsert(StudentRecord{code, "Legacy", "Import", year, grade, section, {}, true});
        ++legacy;
      }
      continue;
    }
    int n = 1;
    while (taken.contains(format_code(year, grade, section, n))) ++n;
    auto expected = format_code(year, grade, section, n);
    const auto& created = roster.enroll(StudentRecord{{}, "New", "Student", year, grade, section, {}, true});
    ++insertions;
    bool fresh = taken.insert(created.student_code).second;
    if (!fresh || created.student_code != expected || !std::regex_match(created.student_code, pattern)) ++wrong;
  }
  return {wrong == 0 && roster.size() == taken.size(),
          std::to_string(insertions) + " insertions among " + std::to_string(legacy) + " imported codes, " +
              std::to_string(wrong) + " differ from the min-free oracle or the pattern; " +
              std::to_string(roster.size()) + " unique codes"};
}

}  // namespace
}  // namespace rollcall

int main(int argc, char** argv) {
  using namespace rollcall;
  struct Criterion {
    const char* name;
    std::function<Verdict()> run;
  };
  const Criterion criteria[] = {
      {"classification exactness", classification_exactness},
      {"scan latency", scan_latency},
      {"morning throughput", morning_throughput},
      {"daily-record capacity", daily_capacity},
      {"concurrent API clients", concurrent_api_clients},
      {"partition continuity", partition_continuity},
      {"durability under kill -9", durability},
      {"conservation", conservation},
      {"code generation", code_generation},
  };
  // Optional filter: run only criteria whose name contains argv[1].
  std::string only = argc > 1 ? argv[1] : "";
  int failed = 0;
  for (const auto& c : criteria) {
    if (!only.empty() && std::string(c.name).find(only) == std::string::npos) continue;
    Verdict v;
    try {
      v = c.run();
    } catch (const std::exception& e) {
      v = {false, std::string("threw: ") + e.what()};
    }
    failed += !v.pass;
    std::cout << (v.pass ? "PASS" : "FAIL") << "  " << c.name << ": " << v.detail << std::endl;
  }
  std::cout << (failed == 0 ? "all criteria passed" : std::to_string(failed) + " criteria failed") << std::endl;
  return failed == 0 ? 0 : 1;
}
