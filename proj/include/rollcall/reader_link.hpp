#pragma once

#include <chrono>
#include <cstdint>
#include <functional>
#include <list>
#include <memory>
#include <mutex>
#include <optional>
#include <stop_token>
#include <string>
#include <string_view>
#include <thread>
#include <variant>
#include <vector>

#include "rollcall/byte_stream.hpp"
#include "rollcall/domain.hpp"
#include "rollcall/engine.hpp"
#include "rollcall/time.hpp"

namespace rollcall::reader {

/// Frames are single ASCII lines terminated by LF, at most this many bytes
/// including the terminator.
inline constexpr std::size_t kMaxFrameBytes = 64;
inline constexpr int kMaxConsecutiveMalformed = 3;

// reader -> edge
struct Hello {
  std::string node_id;
  std::string firmware;
  bool operator==(const Hello&) const = default;
};
struct UidFrame {
  CardUid uid;
  bool operator==(const UidFrame&) const = default;
};
struct Ping {
  bool operator==(const Ping&) const = default;
};
using ReaderMessage = std::variant<Hello, UidFrame, Ping>;

// edge -> reader
enum class AckCode : char { kPresent = 'P', kLate = 'L', kDuplicate = 'D' };
enum class NakCode { kBlocked, kUnknown, kWindow, kClosed, kDay, kError };

struct Welcome {
  std::string nonce;
  bool operator==(const Welcome&) const = default;
};
struct Ack {
  AckCode code;
  bool operator==(const Ack&) const = default;
};
struct Nak {
  NakCode code;
  bool operator==(const Nak&) const = default;
};
struct Pong {
  bool operator==(const Pong&) const = default;
};
struct Reset {
  bool operator==(const Reset&) const = default;
};
using EdgeMessage = std::variant<Welcome, Ack, Nak, Pong, Reset>;

std::string_view to_string(NakCode code);

/// Encoded frames include the trailing LF.
std::string encode(const ReaderMessage& message);
std::string encode(const EdgeMessage& message);

/// `line` excludes the LF. nullopt for anything outside the grammar.
/// Lowercase UID hex is accepted and normalized.
std::optional<ReaderMessage> parse_reader_line(std::string_view line);
std::optional<EdgeMessage> parse_edge_line(std::string_view line);

/// UnlinkedCard maps to UNK: from the reader's point of view the card is
/// not usable for attendance.
EdgeMessage reply_for(const ScanOutcome& outcome);

/// Splits a byte stream into frames. Overlong or non-ASCII lines come out
/// as a single nullopt (malformed); bytes after an overlong prefix are
/// discarded up to the next LF.
class LineFramer {
 public:
  std::vector<std::optional<std::string>> feed(std::string_view bytes);
  bool has_partial() const { return !buffer_.empty() || discarding_; }

 private:
  std::string buffer_;
  bool discarding_ = false;
  bool bad_byte_ = false;
};

/// Per-connection protocol state machine, free of I/O.
class ReaderSession {
 public:
  /// Called for each accepted UID with the reader actor ("reader:<node_id>").
  /// May throw Error(kEdgeStoreUnavailable), which becomes NAK ERR.
  using ScanHandler = std::function<ScanOutcome(const CardUid&, std::string_view actor)>;
  using NonceSource = std::function<std::string()>;

  ReaderSession(ScanHandler handler, NonceSource nonces);

  /// `line` is nullopt for a frame the framer already judged malformed.
  std::vector<EdgeMessage> on_line(const std::optional<std::string>& line);

  bool closed() const { return closed_; }
  bool handshaken() const { return node_id_.has_value(); }
  const std::optional<std::string>& node_id() const { return node_id_; }

 private:
  std::vector<EdgeMessage> malformed();

  ScanHandler handler_;
  NonceSource nonces_;
  std::optional<std::string> node_id_;
  int consecutive_malformed_ = 0;
  bool closed_ = false;
};

/// 16 lowercase hex characters from the system CSPRNG.
std::string random_nonce();

/// Serves reader sessions against an attendance engine. One thread per
/// session; all scans funnel into the engine's single writer.
class ReaderServer {
 public:
  struct Options {
    std::chrono::milliseconds idle_timeout = std::chrono::seconds(60);
    ReaderSession::NonceSource nonces = &random_nonce;
  };

  ReaderServer(AttendanceEngine& engine, Options options);
  explicit ReaderServer(AttendanceEngine& engine) : ReaderServer(engine, Options{}) {}
  ~ReaderServer();
  ReaderServer(const ReaderServer&) = delete;
  ReaderServer& operator=(const ReaderServer&) = delete;

  /// Runs one session to completion on the calling thread.
  void run_session(ByteStream& stream, std::stop_token stop);
  /// Takes ownership of `stream` and serves it on a new thread.
  void serve(std::unique_ptr<ByteStream> stream);
  /// Accepts connections on `listener` until stop().
  void listen(TcpListener& listener);
  /// Serves a serial device; a new session starts whenever one ends.
  void serve_serial(const std::string& device, int baud = 9600);

  void stop();
  std::size_t sessions_served() const;

 private:
  struct Worker {
    std::unique_ptr<ByteStream> stream;
    std::jthread thread;
  };

  ScanOutcome handle_scan(const CardUid& uid, std::string_view actor);

  AttendanceEngine& engine_;
  Options options_;
  mutable std::mutex mu_;
  std::list<Worker> workers_;
  std::stop_source stop_;
  std::size_t served_ = 0;
};

// -- emulator ---------------------------------------------------------------

struct ScriptStep {
  enum class Kind { kScan, kPing, kNoise };

  Kind kind = Kind::kScan;
  /// Virtual time to wait before this step, measured on the emulator clock.
  Duration delay{0};
  CardUid uid;
  /// Raw bytes for kNoise; the emulator appends a LF so the next frame
  /// starts on a fresh line.
  std::string noise;

  static ScriptStep scan(Duration delay, CardUid uid) { return {Kind::kScan, delay, uid, {}}; }
  static ScriptStep ping(Duration delay) { return {Kind::kPing, delay, {}, {}}; }
  static ScriptStep garbage(Duration delay, std::string bytes) {
    return {Kind::kNoise, delay, {}, std::move(bytes)};
  }
};

enum class Direction { kToEdge, kFromEdge };

struct TranscriptEntry {
  Timestamp at;
  Direction direction;
  std::string line;  // without LF
  bool operator==(const TranscriptEntry&) const = default;
};

struct Transcript {
  std::vector<TranscriptEntry> entries;
  /// Wall-clock UID -> reply round trips, in script order.
  std::vector<std::chrono::nanoseconds> round_trips;
  /// Reply for each kScan step, in script order.
  std::vector<EdgeMessage> scan_replies;
  int reconnects = 0;
};

/// Scriptable reader node. Connects, handshakes, replays the script against
/// `clock` and records every frame exchanged. After RESET or a dropped
/// connection it reconnects and handshakes again.
class ReaderEmulator {
 public:
  /// Throws kConnectionRefused when no connection can be made.
  using Connector = std::function<std::unique_ptr<ByteStream>()>;

  struct Options {
    std::string node_id = "reader-1";
    std::string firmware = "emu-1.0";
    std::chrono::milliseconds reply_timeout = std::chrono::seconds(5);
    int max_reconnects = 16;
  };

  ReaderEmulator(Connector connect, Clock& clock, Options options);

  Transcript run(const std::vector<ScriptStep>& script, std::stop_token stop = {});

 private:
  void connect(Transcript& transcript);
  void send(Transcript& transcript, const ReaderMessage& message);
  void send_raw(Transcript& transcript, const std::string& bytes);
  /// Next well-formed edge frame, or nullopt on end of stream or timeout.
  std::optional<EdgeMessage> receive(Transcript& transcript);
  void reconnect(Transcript& transcript);

  Connector connector_;
  Clock& clock_;
  Options options_;
  std::unique_ptr<ByteStream> stream_;
  LineFramer framer_;
  std::vector<std::optional<std::string>> pending_;
};

}  // namespace rollcall::reader
