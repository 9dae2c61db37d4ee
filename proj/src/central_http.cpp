#include "rollcall/central_http.hpp"

#include <httplib.h>

#include <sstream>

#include "rollcall/error.hpp"
#include "rollcall/log.hpp"

namespace rollcall {

namespace {

using httplib::Request;
using httplib::Response;
using Handler = std::function<void(const Request&, Response&)>;

constexpr std::size_t kMaxBodyBytes = 8 * 1024 * 1024;

std::string bare_message(const Error& e) {
  std::string what = e.what();
  auto prefix = std::string(to_string(e.code())) + ": ";
  return what.rfind(prefix, 0) == 0 ? what.substr(prefix.size()) : what;
}

void send_json(Response& res, const Json& body, int status = 200) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void send_error(Response& res, ErrorCode code, const std::string& message, Json extra = Json::object()) {
  extra["error"] = to_string(code);
  extra["message"] = message;
  send_json(res, extra, http_status(code));
}

Handler guarded(Handler handler) {
  return [handler = std::move(handler)](const Request& req, Response& res) {
    try {
      handler(req, res);
    } catch (const Error& e) {
      send_error(res, e.code(), bare_message(e));
    } catch (const Json::exception& e) {
      send_error(res, ErrorCode::kInvalidArgument, e.what());
    } catch (const std::exception& e) {
      log(LogLevel::kWarn, "http", req.method + " " + req.path + ": " + e.what());
      res.status = 500;
      res.set_content(Json{{"error", "Internal"}, {"message", e.what()}}.dump(), "application/json");
    }
  };
}

Json body_of(const Request& req) {
  if (req.body.empty()) return Json::object();
  try {
    return Json::parse(req.body);
  } catch (const Json::exception& e) {
    throw Error(ErrorCode::kInvalidArgument, std::string("malformed JSON body: ") + e.what());
  }
}

std::string required(const Json& body, const char* key) {
  if (!body.contains(key) || !body.at(key).is_string()) {
    throw Error(ErrorCode::kInvalidArgument, std::string("missing string field '") + key + "'");
  }
  return body.at(key).get<std::string>();
}

std::optional<std::string> param(const Request& req, const char* key) {
  if (!req.has_param(key)) return std::nullopt;
  auto value = req.get_param_value(key);
  if (value.empty()) return std::nullopt;
  return value;
}

long long int_param(const std::string& text, const char* key) {
  try {
    std::size_t used = 0;
    auto v = std::stoll(text, &used);
    if (used == text.size()) return v;
  } catch (const std::exception&) {
  }
  throw Error(ErrorCode::kInvalidArgument, std::string("'") + key + "' must be an integer");
}

std::optional<int> grade_param(const Request& req) {
  auto v = param(req, "grade");
  if (!v) return std::nullopt;
  return static_cast<int>(int_param(*v, "grade"));
}

char section_from(const std::string& text) {
  if (text.size() != 1 || text[0] < 'A' || text[0] > 'Z') {
    throw Error(ErrorCode::kInvalidGradeOrSection, "section must be one letter A-Z");
  }
  return text[0];
}

std::optional<char> section_param(const Request& req) {
  auto v = param(req, "section");
  if (!v) return std::nullopt;
  return section_from(*v);
}

AttendanceStatus status_from(const std::string& text) {
  auto s = parse_status(text);
  if (!s) throw Error(ErrorCode::kInvalidArgument, "unknown status '" + text + "'");
  return *s;
}

CardUid uid_from(const std::string& text) {
  auto uid = CardUid::parse(text);
  if (!uid) throw Error(ErrorCode::kInvalidArgument, "bad card uid '" + text + "'");
  return *uid;
}

Json user_json(const UserRecord& u) {
  return Json{{"username", u.username},
              {"role", to_string(u.role)},
              {"student_code", u.student_code ? Json(*u.student_code) : Json(nullptr)}};
}

Json card_change_json(const CardChange& change) {
  return Json{{"card", change.card},
              {"displaced", change.displaced ? Json(*change.displaced) : Json(nullptr)},
              {"changed", change.changed}};
}

}  // namespace

struct CentralHttpServer::Impl {
  httplib::Server server;
};

CentralHttpServer::CentralHttpServer(CentralService& central, Options options)
    : central_(central), options_(std::move(options)), impl_(std::make_unique<Impl>()) {
  auto& svr = impl_->server;
  auto& c = central_;
  svr.new_task_queue = [n = options_.threads] { return new httplib::ThreadPool(static_cast<size_t>(n)); };
  svr.set_payload_max_length(kMaxBodyBytes);
  svr.set_keep_alive_max_count(1000);
  svr.set_tcp_nodelay(true);

  if (!options_.cors_origin.empty()) {
    svr.set_default_headers({{"Access-Control-Allow-Origin", options_.cors_origin},
                             {"Access-Control-Allow-Headers", "Authorization, Content-Type"},
                             {"Access-Control-Allow-Methods", "GET, POST, PUT, OPTIONS"}});
    svr.Options(R"(/api/v1/.*)", [](const Request&, Response& res) { res.status = 204; });
  }

  auto bearer = [&c](const Request& req) {
    auto header = req.get_header_value("Authorization");
    constexpr std::string_view kPrefix = "Bearer ";
    if (header.rfind(kPrefix, 0) != 0) throw Error(ErrorCode::kAuthExpired, "missing bearer token");
    return c.authenticate(header.substr(kPrefix.size()));
  };
  auto user = [bearer](const Request& req) {
    auto p = bearer(req);
    if (p.kind != Principal::Kind::kUser) throw Error(ErrorCode::kForbidden, "edge tokens only reach sync routes");
    return p.actor;
  };
  auto edge = [bearer](const Request& req) {
    auto p = bearer(req);
    if (p.kind != Principal::Kind::kEdge) throw Error(ErrorCode::kForbidden, "sync routes need an edge token");
    return p;
  };
  auto today = [&c] { return c.policy().timezone.to_local(c.clock().now()).day; };
  auto filter_of = [today](const Request& req) {
    AttendanceFilter f;
    f.from = param(req, "from") ? parse_date(*param(req, "from")) : today();
    f.to = param(req, "to") ? parse_date(*param(req, "to")) : f.from;
    f.grade = grade_param(req);
    f.section = section_param(req);
    f.student_code = param(req, "student_code");
    if (auto s = param(req, "status")) f.status = status_from(*s);
    return f;
  };
  auto scope_of = [](const Request& req) {
    auto kind = param(req, "scope").value_or("institution");
    if (kind == "institution") return Scope::institution();
    if (kind == "grade") {
      auto g = grade_param(req);
      if (!g) throw Error(ErrorCode::kInvalidArgument, "grade scope needs 'grade'");
      return Scope::of_grade(*g);
    }
    if (kind == "section") {
      auto g = grade_param(req);
      auto s = section_param(req);
      if (!g || !s) throw Error(ErrorCode::kInvalidArgument, "section scope needs 'grade' and 'section'");
      return Scope::of_section(*g, *s);
    }
    if (kind == "student") {
      auto code = param(req, "student_code");
      if (!code) throw Error(ErrorCode::kInvalidArgument, "student scope needs 'student_code'");
      return Scope::of_student(*code);
    }
    throw Error(ErrorCode::kInvalidArgument, "unknown scope '" + kind + "'");
  };
  auto period_of = [today](const Request& req) {
    auto kind = param(req, "period").value_or("day");
    auto date = param(req, "date") ? parse_date(*param(req, "date")) : today();
    if (kind == "day") return Period::day(date);
    if (kind == "week") return Period::iso_week(date);
    if (kind == "month") return Period::month(date);
    if (kind == "range") {
      auto from = param(req, "from");
      auto to = param(req, "to");
      if (!from || !to) throw Error(ErrorCode::kInvalidArgument, "range period needs 'from' and 'to'");
      return Period::range(parse_date(*from), parse_date(*to));
    }
    throw Error(ErrorCode::kInvalidArgument, "unknown period '" + kind + "'");
  };

  svr.Get("/api/v1/health", guarded([&c](const Request&, Response& res) {
            send_json(res, {{"status", "ok"}, {"time", format_timestamp(c.clock().now())}});
          }));

  // -- auth ------------------------------------------------------------------

  svr.Post("/api/v1/auth/login", guarded([&c](const Request& req, Response& res) {
             auto body = body_of(req);
             auto grant = c.login(required(body, "username"), required(body, "password"));
             send_json(res, {{"token", grant.token},
                             {"expires_at", format_timestamp(grant.expires_at)},
                             {"username", grant.principal.actor.id},
                             {"role", to_string(grant.principal.actor.role)}});
           }));

  svr.Post("/api/v1/auth/token", guarded([&c](const Request& req, Response& res) {
             auto body = body_of(req);
             auto grant = c.issue_edge_token(required(body, "edge_node_id"), required(body, "secret"));
             send_json(res, {{"token", grant.token},
                             {"expires_at", format_timestamp(grant.expires_at)},
                             {"edge_node_id", grant.principal.edge_node_id}});
           }));

  // -- sync ------------------------------------------------------------------

  svr.Post("/api/v1/sync/events", guarded([&c, edge](const Request& req, Response& res) {
             auto principal = edge(req);
             auto batch = body_of(req).get<SyncBatch>();
             auto result = c.push_events(principal, batch);
             if (result.sequence_gap) {
               send_error(res, ErrorCode::kSequenceGap,
                          "expected first_sequence " + std::to_string(result.accepted_high_water + 1),
                          {{"high_water", result.accepted_high_water}});
               return;
             }
             send_json(res, result);
           }));

  svr.Get("/api/v1/sync/roster", guarded([&c, edge](const Request& req, Response& res) {
            auto principal = edge(req);
            auto since = param(req, "since");
            send_json(res, c.pull_roster(principal, since ? static_cast<std::uint64_t>(int_param(*since, "since")) : 0));
          }));

  // -- students and cards -----------------------------------------------------

  svr.Get("/api/v1/students", guarded([&c, user](const Request& req, Response& res) {
            auto actor = user(req);
            send_json(res, {{"students", c.list_students(actor, grade_param(req), section_param(req))}});
          }));

  svr.Post("/api/v1/students", guarded([&c, user](const Request& req, Response& res) {
             auto actor = user(req);
             auto body = body_of(req);
             StudentRecord draft;
             draft.given_names = required(body, "given_names");
             draft.family_names = required(body, "family_names");
             draft.enrollment_year = body.at("enrollment_year").get<int>();
             draft.grade = body.at("grade").get<int>();
             draft.section = section_from(required(body, "section"));
             draft.emergency_contact = body.value("emergency_contact", "");
             send_json(res, c.create_student(actor, draft), 201);
           }));

  svr.Put("/api/v1/students/:code", guarded([&c, user](const Request& req, Response& res) {
            auto actor = user(req);
            auto body = body_of(req);
            body["student_code"] = req.path_params.at("code");
            send_json(res, c.update_student(actor, body.get<StudentRecord>()));
          }));

  svr.Get("/api/v1/cards", guarded([&c, user](const Request& req, Response& res) {
            send_json(res, {{"cards", c.list_cards(user(req))}});
          }));

  svr.Post("/api/v1/cards", guarded([&c, user](const Request& req, Response& res) {
             auto actor = user(req);
             auto body = body_of(req);
             auto change = c.enroll_card(actor, uid_from(required(body, "uid")), required(body, "student_code"));
             send_json(res, card_change_json(change), 201);
           }));

  for (auto [suffix, state] : {std::pair{"block", CardState::kBlocked}, std::pair{"unblock", CardState::kActive}}) {
    svr.Post(std::string("/api/v1/cards/:uid/") + suffix,
             guarded([&c, user, state = state](const Request& req, Response& res) {
               auto actor = user(req);
               send_json(res, card_change_json(c.set_card_state(actor, uid_from(req.path_params.at("uid")), state)));
             }));
  }

  // -- attendance ------------------------------------------------------------

  svr.Get("/api/v1/attendance", guarded([&c, user, filter_of](const Request& req, Response& res) {
            auto actor = user(req);
            PageRequest page;
            if (auto p = param(req, "page")) page.page = static_cast<std::size_t>(std::max(0LL, int_param(*p, "page")));
            if (auto p = param(req, "page_size")) {
              page.page_size = static_cast<std::size_t>(std::max(0LL, int_param(*p, "page_size")));
            }
            send_json(res, c.query_attendance(actor, filter_of(req), page));
          }));

  svr.Post("/api/v1/attendance/mark", guarded([&c, user](const Request& req, Response& res) {
             auto actor = user(req);
             auto body = body_of(req);
             auto event = c.manual_mark(actor, required(body, "student_code"), parse_date(required(body, "school_day")),
                                        status_from(required(body, "status")), body.value("note", ""));
             send_json(res, event, 201);
           }));

  svr.Post("/api/v1/attendance/justify", guarded([&c, user](const Request& req, Response& res) {
             auto actor = user(req);
             auto body = body_of(req);
             auto event = c.justify(actor, required(body, "student_code"), parse_date(required(body, "school_day")),
                                    body.value("note", ""));
             send_json(res, event, 201);
           }));

  svr.Get("/api/v1/attendance/live", guarded([&c, user, today](const Request& req, Response& res) {
            auto actor = user(req);
            auto day = param(req, "day") ? parse_date(*param(req, "day")) : today();
            std::optional<std::uint64_t> cursor;
            if (auto v = param(req, "cursor")) cursor = static_cast<std::uint64_t>(int_param(*v, "cursor"));
            auto wait = param(req, "wait_ms") ? int_param(*param(req, "wait_ms"), "wait_ms") : 0;
            wait = std::clamp(wait, 0LL, 30'000LL);
            send_json(res, c.live_feed(actor, day, cursor, std::chrono::milliseconds(wait)));
          }));

  // -- reports ---------------------------------------------------------------

  svr.Get("/api/v1/reports/summary", guarded([&c, user, scope_of, period_of](const Request& req, Response& res) {
            auto actor = user(req);
            send_json(res, c.summary(actor, scope_of(req), period_of(req)));
          }));

  svr.Get("/api/v1/reports/chronic", guarded([&c, user, scope_of](const Request& req, Response& res) {
            auto actor = user(req);
            auto from = param(req, "from");
            auto to = param(req, "to");
            if (!from || !to) throw Error(ErrorCode::kInvalidArgument, "chronic report needs 'from' and 'to'");
            double threshold = kDefaultChronicThreshold;
            if (auto t = param(req, "threshold")) {
              try {
                threshold = std::stod(*t);
              } catch (const std::exception&) {
                throw Error(ErrorCode::kInvalidArgument, "'threshold' must be a number");
              }
            }
            auto flags = c.chronic(actor, scope_of(req), Period::range(parse_date(*from), parse_date(*to)), threshold);
            send_json(res, {{"threshold", threshold}, {"flags", flags}});
          }));

  svr.Get("/api/v1/reports/export.csv", guarded([&c, user, filter_of](const Request& req, Response& res) {
            auto actor = user(req);
            auto filter = filter_of(req);
            std::ostringstream out;
            export_attendance_csv(out, c.export_rows(actor, filter));
            res.set_header("Content-Disposition", "attachment; filename=\"attendance-" + format_date(filter.from) +
                                                      "-" + format_date(filter.to) + ".csv\"");
            res.set_content(out.str(), "text/csv; charset=utf-8");
          }));

  // -- users and audit -------------------------------------------------------

  svr.Get("/api/v1/users", guarded([&c, user](const Request& req, Response& res) {
            Json users = Json::array();
            for (const auto& u : c.list_users(user(req))) users.push_back(user_json(u));
            send_json(res, {{"users", users}});
          }));

  svr.Post("/api/v1/users", guarded([&c, user](const Request& req, Response& res) {
             auto actor = user(req);
             auto body = body_of(req);
             auto role = parse_role(required(body, "role"));
             if (!role) throw Error(ErrorCode::kInvalidArgument, "unknown role");
             std::optional<std::string> code;
             if (body.contains("student_code") && body.at("student_code").is_string()) {
               code = body.at("student_code").get<std::string>();
             }
             auto created = c.create_user(actor, required(body, "username"), required(body, "password"), *role, code);
             send_json(res, user_json(created), 201);
           }));

  svr.Get("/api/v1/teachers/:username/assignments", guarded([&c, user](const Request& req, Response& res) {
            auto actor = user(req);
            const auto& name = req.path_params.at("username");
            if (actor.id != name) c.require(actor, Permission::kTeachersAssign);
            Json list = Json::array();
            for (const auto& d : c.assignments_of(name)) {
              list.push_back({{"grade", d.grade}, {"section", std::string(1, d.section)}});
            }
            send_json(res, {{"username", name}, {"assignments", list}});
          }));

  svr.Post("/api/v1/teachers/:username/assignments", guarded([&c, user](const Request& req, Response& res) {
             auto actor = user(req);
             auto body = body_of(req);
             c.assign_teacher(actor, req.path_params.at("username"),
                              Division{body.at("grade").get<int>(), section_from(required(body, "section"))});
             res.status = 204;
           }));

  svr.Get("/api/v1/audit", guarded([&c, user](const Request& req, Response& res) {
            auto actor = user(req);
            std::size_t limit = 100;
            if (auto l = param(req, "limit")) limit = static_cast<std::size_t>(std::max(0LL, int_param(*l, "limit")));
            send_json(res, {{"entries", c.audit(actor, limit)}});
          }));
}

CentralHttpServer::~CentralHttpServer() { stop(); }

void CentralHttpServer::bind() {
  auto& svr = impl_->server;
  if (options_.port == 0) {
    port_ = svr.bind_to_any_port(options_.host);
  } else {
    port_ = svr.bind_to_port(options_.host, options_.port) ? options_.port : -1;
  }
  if (port_ <= 0) {
    throw Error(ErrorCode::kConfig, "cannot bind " + options_.host + ":" + std::to_string(options_.port));
  }
}

void CentralHttpServer::start() {
  bind();
  thread_ = std::thread([this] { impl_->server.listen_after_bind(); });
  impl_->server.wait_until_ready();
}

void CentralHttpServer::run() {
  bind();
  impl_->server.listen_after_bind();
}

void CentralHttpServer::stop() {
  impl_->server.stop();
  if (thread_.joinable()) thread_.join();
}

}  // namespace rollcall
