#include "rollcall/byte_stream.hpp"

#include <arpa/inet.h>
#include <fcntl.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <sys/stat.h>
#include <termios.h>
#include <unistd.h>

#include <cerrno>
#include <charconv>
#include <cstring>

#include "rollcall/error.hpp"

namespace rollcall {

namespace {

[[noreturn]] void throw_errno(ErrorCode code, const std::string& what) {
  throw Error(code, what + ": " + std::strerror(errno));
}

bool fd_is_socket(int fd) {
  struct stat st {};
  return ::fstat(fd, &st) == 0 && S_ISSOCK(st.st_mode);
}

void set_nodelay(int fd) {
  int one = 1;
  ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
}

speed_t baud_constant(int baud) {
  switch (baud) {
    case 1200: return B1200;
    case 2400: return B2400;
    case 4800: return B4800;
    case 9600: return B9600;
    case 19200: return B19200;
    case 38400: return B38400;
    case 57600: return B57600;
    case 115200: return B115200;
    default: throw Error(ErrorCode::kConfig, "unsupported baud rate " + std::to_string(baud));
  }
}

}  // namespace

FdStream::FdStream(int fd) : fd_(fd), is_socket_(fd_is_socket(fd)) {}

FdStream::~FdStream() {
  if (fd_ >= 0) ::close(fd_);
}

std::optional<std::size_t> FdStream::read(std::span<char> buffer, std::chrono::milliseconds timeout) {
  pollfd pfd{fd_, POLLIN, 0};
  int ready;
  do {
    ready = ::poll(&pfd, 1, static_cast<int>(timeout.count()));
  } while (ready < 0 && errno == EINTR);
  if (ready < 0) throw_errno(ErrorCode::kNetwork, "poll");
  if (ready == 0) return std::nullopt;
  ssize_t n;
  do {
    n = ::read(fd_, buffer.data(), buffer.size());
  } while (n < 0 && errno == EINTR);
  if (n < 0) {
    // A pty whose other side closed reports EIO; treat it as end of stream.
    if (errno == EIO || errno == ECONNRESET) return 0;
    throw_errno(ErrorCode::kNetwork, "read");
  }
  return static_cast<std::size_t>(n);
}

void FdStream::write_all(std::string_view data) {
  while (!data.empty()) {
    ssize_t n = is_socket_ ? ::send(fd_, data.data(), data.size(), MSG_NOSIGNAL)
                           : ::write(fd_, data.data(), data.size());
    if (n < 0) {
      if (errno == EINTR) continue;
      throw_errno(ErrorCode::kNetwork, "write");
    }
    data.remove_prefix(static_cast<std::size_t>(n));
  }
}

void FdStream::close() {
  if (is_socket_) ::shutdown(fd_, SHUT_RDWR);
}

std::pair<std::unique_ptr<ByteStream>, std::unique_ptr<ByteStream>> make_stream_pair() {
  int fds[2];
  if (::socketpair(AF_UNIX, SOCK_STREAM | SOCK_CLOEXEC, 0, fds) != 0) {
    throw_errno(ErrorCode::kNetwork, "socketpair");
  }
  return {std::make_unique<FdStream>(fds[0]), std::make_unique<FdStream>(fds[1])};
}

std::unique_ptr<ByteStream> tcp_connect(const std::string& host, std::uint16_t port) {
  addrinfo hints{};
  hints.ai_family = AF_UNSPEC;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* result = nullptr;
  if (::getaddrinfo(host.c_str(), std::to_string(port).c_str(), &hints, &result) != 0) {
    throw Error(ErrorCode::kConnectionRefused, "cannot resolve " + host);
  }
  int fd = -1;
  for (auto* ai = result; ai != nullptr; ai = ai->ai_next) {
    fd = ::socket(ai->ai_family, ai->ai_socktype | SOCK_CLOEXEC, ai->ai_protocol);
    if (fd < 0) continue;
    if (::connect(fd, ai->ai_addr, ai->ai_addrlen) == 0) break;
    ::close(fd);
    fd = -1;
  }
  ::freeaddrinfo(result);
  if (fd < 0) {
    throw Error(ErrorCode::kConnectionRefused, host + ":" + std::to_string(port));
  }
  set_nodelay(fd);
  return std::make_unique<FdStream>(fd);
}

std::unique_ptr<ByteStream> open_serial(const std::string& device, int baud) {
  auto speed = baud_constant(baud);
  int fd = ::open(device.c_str(), O_RDWR | O_NOCTTY | O_CLOEXEC);
  if (fd < 0) throw_errno(ErrorCode::kConnectionRefused, "open " + device);
  termios tio{};
  if (::tcgetattr(fd, &tio) != 0) {
    ::close(fd);
    throw_errno(ErrorCode::kConfig, device + " is not a terminal");
  }
  ::cfmakeraw(&tio);
  tio.c_cflag |= CLOCAL | CREAD;
  tio.c_cflag &= ~(CSTOPB | PARENB);
  ::cfsetispeed(&tio, speed);
  ::cfsetospeed(&tio, speed);
  tio.c_cc[VMIN] = 1;
  tio.c_cc[VTIME] = 0;
  if (::tcsetattr(fd, TCSANOW, &tio) != 0) {
    ::close(fd);
    throw_errno(ErrorCode::kConfig, "configure " + device);
  }
  return std::make_unique<FdStream>(fd);
}

std::pair<std::string, std::uint16_t> parse_host_port(std::string_view text) {
  if (text.starts_with("tcp://")) text.remove_prefix(6);
  auto colon = text.rfind(':');
  if (colon == std::string_view::npos) {
    throw Error(ErrorCode::kConfig, "expected host:port, got '" + std::string(text) + "'");
  }
  unsigned port = 0;
  auto digits = text.substr(colon + 1);
  auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), port);
  if (ec != std::errc() || ptr != digits.data() + digits.size() || port > 65535) {
    throw Error(ErrorCode::kConfig, "bad port in '" + std::string(text) + "'");
  }
  std::string host(text.substr(0, colon));
  if (host.size() >= 2 && host.front() == '[' && host.back() == ']') host = host.substr(1, host.size() - 2);
  return {host.empty() ? "127.0.0.1" : host, static_cast<std::uint16_t>(port)};
}

TcpListener::TcpListener(const std::string& host, std::uint16_t port) {
  addrinfo hints{};
  hints.ai_family = AF_UNSPEC;
  hints.ai_socktype = SOCK_STREAM;
  hints.ai_flags = AI_PASSIVE;
  addrinfo* result = nullptr;
  if (::getaddrinfo(host.c_str(), std::to_string(port).c_str(), &hints, &result) != 0 || !result) {
    throw Error(ErrorCode::kConfig, "cannot resolve listen address " + host);
  }
  fd_ = ::socket(result->ai_family, result->ai_socktype | SOCK_CLOEXEC, result->ai_protocol);
  if (fd_ < 0) {
    ::freeaddrinfo(result);
    throw_errno(ErrorCode::kNetwork, "socket");
  }
  int one = 1;
  ::setsockopt(fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
  if (::bind(fd_, result->ai_addr, result->ai_addrlen) != 0 || ::listen(fd_, 64) != 0) {
    ::freeaddrinfo(result);
    ::close(fd_);
    throw_errno(ErrorCode::kNetwork, "listen on " + host + ":" + std::to_string(port));
  }
  ::freeaddrinfo(result);
  sockaddr_storage addr{};
  socklen_t len = sizeof addr;
  ::getsockname(fd_, reinterpret_cast<sockaddr*>(&addr), &len);
  port_ = ntohs(addr.ss_family == AF_INET6 ? reinterpret_cast<sockaddr_in6*>(&addr)->sin6_port
                                           : reinterpret_cast<sockaddr_in*>(&addr)->sin_port);
}

TcpListener::~TcpListener() {
  if (fd_ >= 0) ::close(fd_);
}

std::unique_ptr<ByteStream> TcpListener::accept(std::chrono::milliseconds timeout) {
  pollfd pfd{fd_, POLLIN, 0};
  if (::poll(&pfd, 1, static_cast<int>(timeout.count())) <= 0) return nullptr;
  if ((pfd.revents & POLLIN) == 0) return nullptr;
  int fd = ::accept4(fd_, nullptr, nullptr, SOCK_CLOEXEC);
  if (fd < 0) return nullptr;
  set_nodelay(fd);
  return std::make_unique<FdStream>(fd);
}

void TcpListener::close() {
  if (fd_ >= 0) ::shutdown(fd_, SHUT_RDWR);
}

}  // namespace rollcall
