#include "rollcall/reader_link.hpp"

#include <openssl/rand.h>

#include <algorithm>
#include <array>
#include <cctype>

#include "rollcall/error.hpp"

namespace rollcall::reader {

namespace {

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

constexpr std::array<std::pair<NakCode, std::string_view>, 6> kNakNames{{
    {NakCode::kBlocked, "BLK"},
    {NakCode::kUnknown, "UNK"},
    {NakCode::kWindow, "WIN"},
    {NakCode::kClosed, "CLO"},
    {NakCode::kDay, "DAY"},
    {NakCode::kError, "ERR"},
}};

std::vector<std::string_view> split_spaces(std::string_view line) {
  std::vector<std::string_view> tokens;
  std::size_t pos = 0;
  while (pos <= line.size()) {
    auto next = line.find(' ', pos);
    if (next == std::string_view::npos) next = line.size();
    tokens.push_back(line.substr(pos, next - pos));
    pos = next + 1;
  }
  return tokens;
}

bool is_token(std::string_view t) {
  return !t.empty() && std::all_of(t.begin(), t.end(), [](unsigned char c) {
    return std::isalnum(c) || c == '-' || c == '_' || c == '.';
  });
}

bool is_hex8(std::string_view t) {
  return t.size() == 8 && std::all_of(t.begin(), t.end(), [](unsigned char c) { return std::isxdigit(c); });
}

std::string hex(std::span<const unsigned char> bytes) {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string out;
  for (auto b : bytes) {
    out += kDigits[b >> 4];
    out += kDigits[b & 0xF];
  }
  return out;
}

}  // namespace

std::string_view to_string(NakCode code) {
  for (auto [c, name] : kNakNames) {
    if (c == code) return name;
  }
  return "ERR";
}

std::string encode(const ReaderMessage& message) {
  return std::visit(Overloaded{
                        [](const Hello& m) { return "HELLO " + m.node_id + " " + m.firmware + "\n"; },
                        [](const UidFrame& m) { return "UID " + m.uid.to_string() + "\n"; },
                        [](const Ping&) { return std::string("PING\n"); },
                    },
                    message);
}

std::string encode(const EdgeMessage& message) {
  return std::visit(Overloaded{
                        [](const Welcome& m) { return "WELCOME " + m.nonce + "\n"; },
                        [](const Ack& m) { return std::string("ACK ") + static_cast<char>(m.code) + "\n"; },
                        [](const Nak& m) { return "NAK " + std::string(to_string(m.code)) + "\n"; },
                        [](const Pong&) { return std::string("PONG\n"); },
                        [](const Reset&) { return std::string("RESET\n"); },
                    },
                    message);
}

std::optional<ReaderMessage> parse_reader_line(std::string_view line) {
  if (line.size() + 1 > kMaxFrameBytes) return std::nullopt;
  auto tokens = split_spaces(line);
  if (tokens[0] == "HELLO" && tokens.size() == 3 && is_token(tokens[1]) && is_token(tokens[2])) {
    return Hello{std::string(tokens[1]), std::string(tokens[2])};
  }
  if (tokens[0] == "UID" && tokens.size() == 2 && is_hex8(tokens[1])) {
    if (auto uid = CardUid::parse(tokens[1])) return UidFrame{*uid};
    return std::nullopt;
  }
  if (tokens[0] == "PING" && tokens.size() == 1) return Ping{};
  return std::nullopt;
}

std::optional<EdgeMessage> parse_edge_line(std::string_view line) {
  if (line.size() + 1 > kMaxFrameBytes) return std::nullopt;
  auto tokens = split_spaces(line);
  if (tokens[0] == "WELCOME" && tokens.size() == 2 && is_token(tokens[1])) {
    return Welcome{std::string(tokens[1])};
  }
  if (tokens[0] == "ACK" && tokens.size() == 2 && tokens[1].size() == 1) {
    switch (tokens[1][0]) {
      case 'P': return Ack{AckCode::kPresent};
      case 'L': return Ack{AckCode::kLate};
      case 'D': return Ack{AckCode::kDuplicate};
      default: return std::nullopt;
    }
  }
  if (tokens[0] == "NAK" && tokens.size() == 2) {
    for (auto [code, name] : kNakNames) {
      if (tokens[1] == name) return Nak{code};
    }
    return std::nullopt;
  }
  if (tokens.size() == 1 && tokens[0] == "PONG") return Pong{};
  if (tokens.size() == 1 && tokens[0] == "RESET") return Reset{};
  return std::nullopt;
}

EdgeMessage reply_for(const ScanOutcome& outcome) {
  switch (outcome.kind) {
    case ScanOutcome::Kind::kDuplicate:
      return Ack{AckCode::kDuplicate};
    case ScanOutcome::Kind::kRecorded:
      return Ack{outcome.status == AttendanceStatus::kLate ? AckCode::kLate : AckCode::kPresent};
    case ScanOutcome::Kind::kRejected:
      break;
  }
  switch (outcome.reason) {
    case RejectReason::kCardBlocked: return Nak{NakCode::kBlocked};
    case RejectReason::kUnknownCard:
    case RejectReason::kUnlinkedCard: return Nak{NakCode::kUnknown};
    case RejectReason::kBeforeWindow: return Nak{NakCode::kWindow};
    case RejectReason::kAfterClosure: return Nak{NakCode::kClosed};
    case RejectReason::kNonSchoolDay: return Nak{NakCode::kDay};
  }
  return Nak{NakCode::kError};
}

std::vector<std::optional<std::string>> LineFramer::feed(std::string_view bytes) {
  std::vector<std::optional<std::string>> lines;
  for (char c : bytes) {
    if (c == '\n') {
      if (discarding_ || bad_byte_) {
        lines.emplace_back(std::nullopt);
      } else {
        lines.emplace_back(std::move(buffer_));
      }
      buffer_.clear();
      discarding_ = false;
      bad_byte_ = false;
      continue;
    }
    if (discarding_) continue;
    auto u = static_cast<unsigned char>(c);
    if (u < 0x20 || u > 0x7E) bad_byte_ = true;
    buffer_.push_back(c);
    if (buffer_.size() + 1 > kMaxFrameBytes) {
      buffer_.clear();
      discarding_ = true;
    }
  }
  return lines;
}

ReaderSession::ReaderSession(ScanHandler handler, NonceSource nonces)
    : handler_(std::move(handler)), nonces_(std::move(nonces)) {}

std::vector<EdgeMessage> ReaderSession::malformed() {
  if (++consecutive_malformed_ >= kMaxConsecutiveMalformed) {
    closed_ = true;
    return {Reset{}};
  }
  return {Nak{NakCode::kError}};
}

std::vector<EdgeMessage> ReaderSession::on_line(const std::optional<std::string>& line) {
  if (closed_) return {};
  std::optional<ReaderMessage> message;
  if (line) message = parse_reader_line(*line);
  if (!message) return malformed();

  if (auto* hello = std::get_if<Hello>(&*message)) {
    consecutive_malformed_ = 0;
    node_id_ = hello->node_id;
    return {Welcome{nonces_()}};
  }
  if (std::holds_alternative<Ping>(*message)) {
    consecutive_malformed_ = 0;
    return {Pong{}};
  }
  const auto& uid = std::get<UidFrame>(*message).uid;
  if (!node_id_) return malformed();  // handshake first
  consecutive_malformed_ = 0;
  try {
    return {reply_for(handler_(uid, "reader:" + *node_id_))};
  } catch (const Error& e) {
    if (e.code() != ErrorCode::kEdgeStoreUnavailable) throw;
    return {Nak{NakCode::kError}};
  }
}

std::string random_nonce() {
  std::array<unsigned char, 8> bytes{};
  if (RAND_bytes(bytes.data(), static_cast<int>(bytes.size())) != 1) {
    throw Error(ErrorCode::kNetwork, "RAND_bytes failed");
  }
  return hex(bytes);
}

// -- server -----------------------------------------------------------------

ReaderServer::ReaderServer(AttendanceEngine& engine, Options options)
    : engine_(engine), options_(std::move(options)) {
  if (!options_.nonces) options_.nonces = &random_nonce;
}

ReaderServer::~ReaderServer() { stop(); }

ScanOutcome ReaderServer::handle_scan(const CardUid& uid, std::string_view actor) {
  return engine_.process_scan(uid, engine_.clock().now(), actor);
}

void ReaderServer::run_session(ByteStream& stream, std::stop_token stop) {
  using namespace std::chrono;
  ReaderSession session([this](const CardUid& uid, std::string_view actor) { return handle_scan(uid, actor); },
                        options_.nonces);
  LineFramer framer;
  std::array<char, 256> buffer{};
  auto last_activity = steady_clock::now();
  constexpr milliseconds kSlice{100};
  try {
    while (!stop.stop_requested() && !session.closed()) {
      auto idle = duration_cast<milliseconds>(steady_clock::now() - last_activity);
      if (idle >= options_.idle_timeout) break;
      auto n = stream.read(buffer, std::min(kSlice, options_.idle_timeout - idle));
      if (!n) continue;
      if (*n == 0) break;
      last_activity = steady_clock::now();
      std::string out;
      for (const auto& line : framer.feed(std::string_view(buffer.data(), *n))) {
        for (const auto& reply : session.on_line(line)) out += encode(reply);
        if (session.closed()) break;
      }
      if (!out.empty()) stream.write_all(out);
    }
  } catch (const Error& e) {
    if (e.code() != ErrorCode::kNetwork) throw;
  }
  stream.close();
  std::lock_guard lock(mu_);
  ++served_;
}

void ReaderServer::serve(std::unique_ptr<ByteStream> stream) {
  std::lock_guard lock(mu_);
  auto& worker = workers_.emplace_back();
  worker.stream = std::move(stream);
  auto* raw = worker.stream.get();
  worker.thread = std::jthread([this, raw, stop = stop_.get_token()] { run_session(*raw, stop); });
}

void ReaderServer::listen(TcpListener& listener) {
  auto stop = stop_.get_token();
  while (!stop.stop_requested()) {
    if (auto stream = listener.accept(std::chrono::milliseconds(100))) serve(std::move(stream));
  }
}

void ReaderServer::serve_serial(const std::string& device, int baud) {
  auto stream = open_serial(device, baud);
  auto stop = stop_.get_token();
  // The device stays open across sessions; after RESET the reader node
  // reinitializes and handshakes again on the same line.
  while (!stop.stop_requested()) {
    run_session(*stream, stop);
    // Nobody on the other end yet; do not spin.
    std::this_thread::sleep_for(std::chrono::milliseconds(100));
  }
}

void ReaderServer::stop() {
  stop_.request_stop();
  std::list<Worker> workers;
  {
    std::lock_guard lock(mu_);
    workers.swap(workers_);
  }
  for (auto& w : workers) w.stream->close();
  workers.clear();  // joins
}

std::size_t ReaderServer::sessions_served() const {
  std::lock_guard lock(mu_);
  return served_;
}

// -- emulator ---------------------------------------------------------------

ReaderEmulator::ReaderEmulator(Connector connect, Clock& clock, Options options)
    : connector_(std::move(connect)), clock_(clock), options_(std::move(options)) {}

void ReaderEmulator::send_raw(Transcript& transcript, const std::string& bytes) {
  std::string_view rest = bytes;
  while (!rest.empty()) {
    auto lf = rest.find('\n');
    auto line = rest.substr(0, lf);
    transcript.entries.push_back({clock_.now(), Direction::kToEdge, std::string(line)});
    if (lf == std::string_view::npos) break;
    rest.remove_prefix(lf + 1);
  }
  stream_->write_all(bytes);
}

void ReaderEmulator::send(Transcript& transcript, const ReaderMessage& message) {
  send_raw(transcript, encode(message));
}

std::optional<EdgeMessage> ReaderEmulator::receive(Transcript& transcript) {
  using namespace std::chrono;
  auto deadline = steady_clock::now() + options_.reply_timeout;
  std::array<char, 256> buffer{};
  while (true) {
    while (!pending_.empty()) {
      auto line = std::move(pending_.front());
      pending_.erase(pending_.begin());
      if (!line) continue;
      transcript.entries.push_back({clock_.now(), Direction::kFromEdge, *line});
      if (auto message = parse_edge_line(*line)) return message;
    }
    auto left = duration_cast<milliseconds>(deadline - steady_clock::now());
    if (left <= milliseconds::zero()) return std::nullopt;
    std::optional<std::size_t> n;
    try {
      n = stream_->read(buffer, left);
    } catch (const Error&) {
      return std::nullopt;
    }
    if (!n) return std::nullopt;
    if (*n == 0) return std::nullopt;
    auto lines = framer_.feed(std::string_view(buffer.data(), *n));
    pending_.insert(pending_.end(), lines.begin(), lines.end());
  }
}

void ReaderEmulator::connect(Transcript& transcript) {
  stream_ = connector_();
  framer_ = LineFramer{};
  pending_.clear();
  send(transcript, Hello{options_.node_id, options_.firmware});
  auto reply = receive(transcript);
  if (!reply || !std::holds_alternative<Welcome>(*reply)) {
    throw Error(ErrorCode::kConnectionRefused, "edge did not answer HELLO");
  }
}

void ReaderEmulator::reconnect(Transcript& transcript) {
  if (transcript.reconnects >= options_.max_reconnects) {
    throw Error(ErrorCode::kConnectionRefused, "too many reconnects");
  }
  ++transcript.reconnects;
  if (stream_) stream_->close();
  connect(transcript);
}

Transcript ReaderEmulator::run(const std::vector<ScriptStep>& script, std::stop_token stop) {
  Transcript transcript;
  connect(transcript);
  for (const auto& step : script) {
    if (step.delay > Duration::zero() && !clock_.sleep_for(step.delay, stop)) break;
    switch (step.kind) {
      case ScriptStep::Kind::kScan: {
        // A scan is retried once on a fresh session if the link drops
        // before the reply arrives.
        for (int attempt = 0;; ++attempt) {
          auto sent = std::chrono::steady_clock::now();
          std::optional<EdgeMessage> reply;
          try {
            send(transcript, UidFrame{step.uid});
            reply = receive(transcript);
          } catch (const Error& e) {
            if (e.code() != ErrorCode::kNetwork) throw;
          }
          if (reply && (std::holds_alternative<Ack>(*reply) || std::holds_alternative<Nak>(*reply))) {
            transcript.round_trips.push_back(std::chrono::steady_clock::now() - sent);
            transcript.scan_replies.push_back(*reply);
            break;
          }
          if (attempt >= 1) throw Error(ErrorCode::kConnectionRefused, "no reply to UID");
          reconnect(transcript);
        }
        break;
      }
      case ScriptStep::Kind::kPing:
      case ScriptStep::Kind::kNoise: {
        try {
          if (step.kind == ScriptStep::Kind::kNoise) send_raw(transcript, step.noise + "\n");
          send(transcript, Ping{});
        } catch (const Error& e) {
          if (e.code() != ErrorCode::kNetwork) throw;
          reconnect(transcript);
          break;
        }
        // Drain NAK ERR replies to the noise until the PONG; RESET or a
        // closed link means the edge dropped us.
        while (true) {
          auto reply = receive(transcript);
          if (reply && std::holds_alternative<Pong>(*reply)) break;
          if (!reply || std::holds_alternative<Reset>(*reply)) {
            reconnect(transcript);
            break;
          }
        }
        break;
      }
    }
  }
  stream_->close();
  return transcript;
}

}  // namespace rollcall::reader
