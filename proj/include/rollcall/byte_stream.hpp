#pragma once

#include <chrono>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>

namespace rollcall {

/// Reliable, ordered, bidirectional byte stream. Reader nodes talk to the
/// edge over one of these regardless of the physical link.
class ByteStream {
 public:
  virtual ~ByteStream() = default;

  /// Returns the number of bytes read (0 on end of stream), or nullopt when
  /// nothing arrived within `timeout`. Throws kNetwork on I/O errors.
  virtual std::optional<std::size_t> read(std::span<char> buffer, std::chrono::milliseconds timeout) = 0;
  /// Throws kNetwork when the peer is gone.
  virtual void write_all(std::string_view data) = 0;
  /// Unblocks pending reads on both ends.
  virtual void close() = 0;
};

/// Owns a file descriptor (socket, pty or tty).
class FdStream final : public ByteStream {
 public:
  explicit FdStream(int fd);
  ~FdStream() override;
  FdStream(const FdStream&) = delete;
  FdStream& operator=(const FdStream&) = delete;

  std::optional<std::size_t> read(std::span<char> buffer, std::chrono::milliseconds timeout) override;
  void write_all(std::string_view data) override;
  void close() override;

  int fd() const { return fd_; }

 private:
  int fd_;
  bool is_socket_;
};

/// Connected in-process pair (a Unix socketpair).
std::pair<std::unique_ptr<ByteStream>, std::unique_ptr<ByteStream>> make_stream_pair();

/// Throws kConnectionRefused.
std::unique_ptr<ByteStream> tcp_connect(const std::string& host, std::uint16_t port);

/// Opens a tty and puts it in raw 8N1 mode at `baud`.
std::unique_ptr<ByteStream> open_serial(const std::string& device, int baud = 9600);

/// `host:port` with an optional `tcp://` prefix.
std::pair<std::string, std::uint16_t> parse_host_port(std::string_view text);

class TcpListener {
 public:
  /// Port 0 picks an ephemeral port; see port().
  TcpListener(const std::string& host, std::uint16_t port);
  ~TcpListener();
  TcpListener(const TcpListener&) = delete;
  TcpListener& operator=(const TcpListener&) = delete;

  std::uint16_t port() const { return port_; }
  /// nullptr on timeout or after close().
  std::unique_ptr<ByteStream> accept(std::chrono::milliseconds timeout);
  void close();

 private:
  int fd_ = -1;
  std::uint16_t port_ = 0;
};

}  // namespace rollcall
