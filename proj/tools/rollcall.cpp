// rollcall: run an edge node or the central service, drive the simulator,
// administer the roster and pull reports.
//
// Exit codes: 0 success, 1 failure (including simulator oracle mismatch),
// 2 usage or configuration error.

#include <CLI11.hpp>

#include <csignal>
#include <fstream>
#include <iostream>
#include <thread>

#include "rollcall/central.hpp"
#include "rollcall/central_http.hpp"
#include "rollcall/config.hpp"
#include "rollcall/edge_store.hpp"
#include "rollcall/engine.hpp"
#include "rollcall/error.hpp"
#include "rollcall/http_client.hpp"
#include "rollcall/log.hpp"
#include "rollcall/reader_link.hpp"
#include "rollcall/simulator.hpp"
#include "rollcall/sync.hpp"

namespace {

using namespace rollcall;

constexpr int kOk = 0;
constexpr int kFailure = 1;
constexpr int kUsage = 2;

constexpr std::string_view kPolicyKeys[] = {"timezone", "present_start", "late_start", "closure", "school_days"};

constexpr std::string_view kEdgeKeys[] = {
    "node_id",       "secret",       "central_url",    "store_path",      "store_max_bytes",
    "store_sync",    "reader_listen", "serial_device", "serial_baud",     "sync_interval_seconds",
    "sync_batch_size", "log_level",  "timezone",       "present_start",   "late_start",
    "closure",       "school_days"};

constexpr std::string_view kCentralKeys[] = {
    "store_path",    "listen",       "http_threads",   "cors_origin",     "admin_user",
    "admin_password", "token_ttl_hours", "pbkdf2_iterations", "store_sync", "log_level",
    "timezone",      "present_start", "late_start",    "closure",         "school_days"};

Config load_config(const std::string& path, std::span<const std::string_view> keys) {
  auto config = Config::load(path);
  config.apply_env(keys);
  return config;
}

void apply_log_level(const Config& config) {
  auto level = config.get_or("log_level", "warn");
  if (level == "quiet") log_level() = LogLevel::kQuiet;
  else if (level == "warn") log_level() = LogLevel::kWarn;
  else if (level == "info") log_level() = LogLevel::kInfo;
  else if (level == "debug") log_level() = LogLevel::kDebug;
  else throw Error(ErrorCode::kConfig, config.where("log_level") + ": unknown log level '" + level + "'");
}

/// Blocks SIGINT and SIGTERM for every thread started afterwards; the main
/// thread collects them with wait_for_signal().
sigset_t block_signals() {
  sigset_t set;
  sigemptyset(&set);
  sigaddset(&set, SIGINT);
  sigaddset(&set, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &set, nullptr);
  return set;
}

int wait_for_signal(const sigset_t& set) {
  int sig = 0;
  sigwait(&set, &sig);
  return sig;
}

// -- edge ---------------------------------------------------------------------

int run_edge(const std::string& config_path) {
  auto config = load_config(config_path, kEdgeKeys);
  apply_log_level(config);
  auto policy = TimeWindowPolicy::from_config(config);
  auto node_id = config.require("node_id");
  auto central_url = config.require("central_url");

  auto signals = block_signals();
  SystemClock clock;
  EdgeStore store(config.get_or("store_path", "edge.journal"),
                  EdgeStore::Options{node_id, static_cast<std::uint64_t>(config.get_int("store_max_bytes", 0)),
                                     config.get_bool("store_sync", true), clock.now()});
  AttendanceEngine engine(store, policy, clock);
  HttpSyncTransport transport(central_url);
  SyncWorker::Options sync_options;
  sync_options.edge_node_id = node_id;
  sync_options.secret = config.require("secret");
  sync_options.interval = std::chrono::seconds(config.get_int("sync_interval_seconds", 30));
  sync_options.batch_size = static_cast<std::size_t>(config.get_int("sync_batch_size", 500));
  SyncWorker worker(engine, transport, clock, sync_options);

  reader::ReaderServer readers(engine);
  auto [host, port] = parse_host_port(config.get_or("reader_listen", "0.0.0.0:7070"));
  TcpListener listener(host, port);
  log(LogLevel::kWarn, "edge",
      node_id + " listening for readers on " + host + ":" + std::to_string(listener.port()) + ", central " +
          central_url);

  std::stop_source stop;
  std::vector<std::jthread> threads;
  threads.emplace_back([&] { readers.listen(listener); });
  auto baud = static_cast<int>(config.get_int("serial_baud", 9600));
  for (const auto& device : config.get_all("serial_device")) {
    threads.emplace_back([&readers, device, baud] {
      try {
        readers.serve_serial(device, baud);
      } catch (const Error& e) {
        log(LogLevel::kWarn, "edge", "serial " + device + ": " + e.what());
      }
    });
  }
  threads.emplace_back([&] { engine.run_closure_scheduler(stop.get_token()); });
  threads.emplace_back([&] { worker.run(stop.get_token()); });

  auto sig = wait_for_signal(signals);
  log(LogLevel::kWarn, "edge", "signal " + std::to_string(sig) + ", shutting down");
  stop.request_stop();
  readers.stop();
  listener.close();
  threads.clear();
  return kOk;
}

// -- central ------------------------------------------------------------------

int run_central(const std::string& config_path) {
  auto config = load_config(config_path, kCentralKeys);
  apply_log_level(config);
  auto options = central_options_from_config(config);

  auto signals = block_signals();
  SystemClock clock;
  CentralService central(config.get_or("store_path", "central.journal"), clock, options);
  if (auto user = config.get("admin_user")) {
    if (central.ensure_user(*user, config.require("admin_password"), Role::kAdmin)) {
      log(LogLevel::kWarn, "central", "created admin user '" + *user + "'");
    }
  }

  CentralHttpServer::Options http;
  auto [host, port] = parse_host_port(config.get_or("listen", "127.0.0.1:8080"));
  http.host = host;
  http.port = port;
  http.threads = static_cast<int>(config.get_int("http_threads", 32));
  http.cors_origin = config.get_or("cors_origin", "*");
  CentralHttpServer server(central, http);
  server.start();
  log(LogLevel::kWarn, "central", "serving on http://" + host + ":" + std::to_string(server.port()));

  auto sig = wait_for_signal(signals);
  log(LogLevel::kWarn, "central", "signal " + std::to_string(sig) + ", shutting down");
  server.stop();
  return kOk;
}

// -- simulate -----------------------------------------------------------------

struct SimulateArgs {
  int students = 250;
  int readers = 1;
  std::string day = "2025-03-10";
  std::uint64_t seed = 1;
  double speed = 0.0;
  std::string partition;
  std::string arrivals;
  std::string config;
  std::string work_dir;
  bool timings = false;
};

int run_simulate(const SimulateArgs& args) {
  sim::Options o;
  o.students = args.students;
  o.readers = args.readers;
  o.day = parse_date(args.day);
  o.seed = args.seed;
  o.speed = args.speed;
  if (!args.config.empty()) {
    auto config = load_config(args.config, kPolicyKeys);
    o.policy = TimeWindowPolicy::from_config(config);
  }
  if (!args.partition.empty()) o.partition = sim::parse_window(args.partition);
  if (!args.arrivals.empty()) {
    auto [from, to] = sim::parse_window(args.arrivals);
    o.arrivals_from = from;
    o.arrivals_to = to;
  }
  o.work_dir = args.work_dir;

  auto result = sim::run(o);
  std::cout << result.report;
  if (args.timings) {
    auto ms = [](std::chrono::nanoseconds d) { return std::to_string(d.count() / 1000) + " us"; };
    std::cerr << "round trip p50 " << ms(sim::percentile(result.round_trips, 0.50)) << ", p99 "
              << ms(sim::percentile(result.round_trips, 0.99)) << ", max "
              << ms(sim::percentile(result.round_trips, 1.0)) << "; wall "
              << std::chrono::duration_cast<std::chrono::milliseconds>(result.wall_time).count() << " ms\n";
  }
  return result.conformant ? kOk : kFailure;
}

// -- admin and report ---------------------------------------------------------

struct ApiArgs {
  std::string url = "http://127.0.0.1:8080";
  std::string user = "admin";
  std::string password;
};

ApiClient connect(const ApiArgs& api) {
  ApiClient client(api.url);
  client.login(api.user, api.password);
  return client;
}

void print(const Json& j) { std::cout << j.dump(2) << "\n"; }

void write_output(const std::string& path, const std::string& body) {
  if (path.empty() || path == "-") {
    std::cout << body;
    return;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::kInvalidArgument, "cannot write '" + path + "'");
  out << body;
}

/// Lets the API options appear after the leaf subcommand too.
void fall_through(CLI::App& cmd) {
  for (auto* sub : cmd.get_subcommands({})) {
    sub->fallthrough();
    fall_through(*sub);
  }
}

void add_api_options(CLI::App& cmd, ApiArgs& api) {
  cmd.add_option("--url", api.url, "Central base URL")->envname("ROLLCALL_URL")->capture_default_str();
  cmd.add_option("--user", api.user, "Login name")->envname("ROLLCALL_USER")->capture_default_str();
  cmd.add_option("--password", api.password, "Login password")->envname("ROLLCALL_PASSWORD");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"School attendance: edge node, central service, simulator and tools"};
  app.require_subcommand(1);

  std::string config_path;
  auto* edge = app.add_subcommand("edge", "Run an edge node: reader listener, closure, sync loop");
  edge->add_option("--config", config_path, "key = value configuration file")->required();
  auto* central = app.add_subcommand("central", "Run the central service and its HTTP API");
  central->add_option("--config", config_path, "key = value configuration file")->required();

  SimulateArgs sim_args;
  auto* simulate = app.add_subcommand("simulate", "Run a virtual school morning and check it against the oracle");
  simulate->add_option("--students", sim_args.students, "Roster size")->capture_default_str()->check(CLI::NonNegativeNumber);
  simulate->add_option("--readers", sim_args.readers, "Emulated reader nodes")->capture_default_str()->check(CLI::PositiveNumber);
  simulate->add_option("--day", sim_args.day, "School day, YYYY-MM-DD")->capture_default_str();
  simulate->add_option("--seed", sim_args.seed, "Scenario seed")->capture_default_str();
  simulate->add_option("--speed", sim_args.speed, "Virtual seconds per wall second; 0 is unpaced")
      ->capture_default_str()
      ->check(CLI::NonNegativeNumber);
  simulate->add_option("--partition", sim_args.partition, "Sync link down on HH:MM..HH:MM");
  simulate->add_option("--arrivals", sim_args.arrivals, "Arrival window HH:MM..HH:MM");
  simulate->add_option("--config", sim_args.config, "Policy keys (timezone, present_start, ...)");
  simulate->add_option("--work-dir", sim_args.work_dir, "Keep the journals here");
  simulate->add_flag("--timings", sim_args.timings, "Print round-trip latencies to stderr");

  ApiArgs api;
  auto* admin = app.add_subcommand("admin", "Manage users, cards and students through the central API");
  admin->require_subcommand(1);
  add_api_options(*admin, api);

  std::function<int()> action;

  auto* user = admin->add_subcommand("user", "Users")->require_subcommand(1);
  struct {
    std::string name, password, role = "teacher", student;
    int grade = 0;
    std::string section;
  } u;
  auto* user_create = user->add_subcommand("create", "Create a user");
  user_create->add_option("username", u.name)->required();
  user_create->add_option("--new-password", u.password, "Password for the new user")->required();
  user_create->add_option("--role", u.role, "admin|teacher|auxiliary|student")->capture_default_str();
  user_create->add_option("--student", u.student, "Student code, for student logins");
  user_create->callback([&] {
    action = [&] {
      Json body{{"username", u.name}, {"password", u.password}, {"role", u.role}};
      if (!u.student.empty()) body["student_code"] = u.student;
      print(connect(api).post_json("/api/v1/users", body));
      return kOk;
    };
  });
  user->add_subcommand("list", "List users")->callback([&] {
    action = [&] {
      print(connect(api).get_json("/api/v1/users"));
      return kOk;
    };
  });
  auto* user_assign = user->add_subcommand("assign", "Assign a teacher to a grade and section");
  user_assign->add_option("username", u.name)->required();
  user_assign->add_option("--grade", u.grade)->required();
  user_assign->add_option("--section", u.section)->required();
  user_assign->callback([&] {
    action = [&] {
      auto client = connect(api);
      auto r = client.post("/api/v1/teachers/" + u.name + "/assignments", {{"grade", u.grade}, {"section", u.section}});
      if (r.status >= 400) throw_api_error(r);
      return kOk;
    };
  });

  auto* card = admin->add_subcommand("card", "RFID cards")->require_subcommand(1);
  std::string card_uid, card_student;
  auto* card_enroll = card->add_subcommand("enroll", "Link a card to a student");
  card_enroll->add_option("uid", card_uid)->required();
  card_enroll->add_option("student", card_student)->required();
  card_enroll->callback([&] {
    action = [&] {
      print(connect(api).post_json("/api/v1/cards", {{"uid", card_uid}, {"student_code", card_student}}));
      return kOk;
    };
  });
  for (std::string verb : {"block", "unblock"}) {
    auto* cmd = card->add_subcommand(verb, verb == "block" ? "Block a card" : "Unblock a card");
    cmd->add_option("uid", card_uid)->required();
    cmd->callback([&, verb] {
      action = [&, verb] {
        print(connect(api).post_json("/api/v1/cards/" + card_uid + "/" + verb, Json::object()));
        return kOk;
      };
    });
  }
  card->add_subcommand("list", "List cards")->callback([&] {
    action = [&] {
      print(connect(api).get_json("/api/v1/cards"));
      return kOk;
    };
  });

  auto* student = admin->add_subcommand("student", "Roster")->require_subcommand(1);
  struct {
    std::string given, family, section, contact;
    int year = 0, grade = 0;
  } s;
  auto* student_add = student->add_subcommand("add", "Enroll a student; prints the generated code");
  student_add->add_option("--given", s.given)->required();
  student_add->add_option("--family", s.family)->required();
  student_add->add_option("--year", s.year)->required();
  student_add->add_option("--grade", s.grade)->required();
  student_add->add_option("--section", s.section)->required();
  student_add->add_option("--contact", s.contact);
  student_add->callback([&] {
    action = [&] {
      print(connect(api).post_json("/api/v1/students", {{"given_names", s.given},
                                                        {"family_names", s.family},
                                                        {"enrollment_year", s.year},
                                                        {"grade", s.grade},
                                                        {"section", s.section},
                                                        {"emergency_contact", s.contact}}));
      return kOk;
    };
  });
  auto* student_list = student->add_subcommand("list", "List students");
  student_list->add_option("--grade", s.grade);
  student_list->add_option("--section", s.section);
  student_list->callback([&] {
    action = [&] {
      ApiClient::Params params;
      if (s.grade > 0) params.emplace("grade", std::to_string(s.grade));
      if (!s.section.empty()) params.emplace("section", s.section);
      print(connect(api).get_json("/api/v1/students", params));
      return kOk;
    };
  });

  auto* report = app.add_subcommand("report", "Attendance summaries and CSV export from the central API");
  report->require_subcommand(1);
  add_api_options(*report, api);
  struct {
    std::string scope = "institution", grade, section, student, period = "day", date, from, to, out, format = "json";
  } r;
  auto* summary = report->add_subcommand("summary", "Counts and rates for a scope and period");
  summary->add_option("--scope", r.scope, "institution|grade|section|student")->capture_default_str();
  summary->add_option("--grade", r.grade);
  summary->add_option("--section", r.section);
  summary->add_option("--student", r.student);
  summary->add_option("--period", r.period, "day|week|month|range")->capture_default_str();
  summary->add_option("--date", r.date, "Day inside the period (default today)");
  summary->add_option("--from", r.from);
  summary->add_option("--to", r.to);
  summary->add_option("--out", r.out, "Write here instead of stdout");
  summary->callback([&] {
    action = [&] {
      ApiClient::Params params{{"scope", r.scope}, {"period", r.period}};
      for (auto [key, value] : {std::pair{"grade", &r.grade}, {"section", &r.section}, {"student_code", &r.student},
                                {"date", &r.date}, {"from", &r.from}, {"to", &r.to}}) {
        if (!value->empty()) params.emplace(key, *value);
      }
      write_output(r.out, connect(api).get_json("/api/v1/reports/summary", params).dump(2) + "\n");
      return kOk;
    };
  });
  auto* export_cmd = report->add_subcommand("export", "Attendance rows as CSV");
  export_cmd->add_option("--from", r.from, "First day (default today)");
  export_cmd->add_option("--to", r.to, "Last day (default --from)");
  export_cmd->add_option("--grade", r.grade);
  export_cmd->add_option("--section", r.section);
  export_cmd->add_option("--student", r.student);
  export_cmd->add_option("--out", r.out, "Write here instead of stdout");
  export_cmd->callback([&] {
    action = [&] {
      ApiClient::Params params;
      for (auto [key, value] : {std::pair{"from", &r.from}, {"to", &r.to}, {"grade", &r.grade},
                                {"section", &r.section}, {"student_code", &r.student}}) {
        if (!value->empty()) params.emplace(key, *value);
      }
      auto client = connect(api);
      auto response = client.get("/api/v1/reports/export.csv", params);
      if (response.status >= 400) throw_api_error(response);
      write_output(r.out, response.body);
      return kOk;
    };
  });

  fall_through(*admin);
  fall_through(*report);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    auto code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*edge) return run_edge(config_path);
    if (*central) return run_central(config_path);
    if (*simulate) return run_simulate(sim_args);
    if (action) return action();
    std::cerr << app.help();
    return kUsage;
  } catch (const Error& e) {
    switch (e.code()) {
      case ErrorCode::kConnectionRefused:
      case ErrorCode::kNetwork:
        std::cerr << "rollcall: cannot reach " << api.url << ": " << e.what() << "\n";
        return kFailure;
      case ErrorCode::kConfig:
      case ErrorCode::kInvalidArgument:
      case ErrorCode::kInvalidRange:
        std::cerr << "rollcall: " << e.what() << "\n";
        return kUsage;
      default:
        std::cerr << "rollcall: " << e.what() << "\n";
        return kFailure;
    }
  } catch (const std::exception& e) {
    std::cerr << "rollcall: " << e.what() << "\n";
    return kFailure;
  }
}
