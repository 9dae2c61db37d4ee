#include "rollcall/journal.hpp"

#include <fcntl.h>
#include <unistd.h>
#include <zlib.h>

#include <cerrno>
#include <cstring>

#include "rollcall/error.hpp"

namespace rollcall {

namespace {

constexpr std::size_t kHeaderSize = 8;
constexpr std::uint32_t kMaxRecord = 64u << 20;

void put_u32(char* out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
}

std::uint32_t get_u32(const char* in) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(in[i])) << (8 * i);
  return v;
}

std::string io_message(const std::filesystem::path& path, const char* what) {
  return std::string(what) + " " + path.string() + ": " + std::strerror(errno);
}

}  // namespace

std::uint32_t crc32_of(std::string_view data) {
  return static_cast<std::uint32_t>(
      ::crc32(0L, reinterpret_cast<const Bytef*>(data.data()), static_cast<uInt>(data.size())));
}

Journal::Journal(std::filesystem::path path, Options options)
    : path_(std::move(path)), options_(options) {
  if (path_.has_parent_path()) std::filesystem::create_directories(path_.parent_path());
  fd_ = ::open(path_.c_str(), O_RDWR | O_CREAT | O_CLOEXEC, 0644);
  if (fd_ < 0) throw Error(ErrorCode::kEdgeStoreUnavailable, io_message(path_, "open"));

  std::string contents;
  char buf[1 << 16];
  for (;;) {
    auto n = ::read(fd_, buf, sizeof buf);
    if (n < 0) {
      if (errno == EINTR) continue;
      throw Error(ErrorCode::kEdgeStoreUnavailable, io_message(path_, "read"));
    }
    if (n == 0) break;
    contents.append(buf, static_cast<std::size_t>(n));
  }

  std::size_t pos = 0;
  while (contents.size() - pos >= kHeaderSize) {
    auto len = get_u32(contents.data() + pos);
    auto crc = get_u32(contents.data() + pos + 4);
    if (len > kMaxRecord || contents.size() - pos - kHeaderSize < len) break;
    std::string_view payload(contents.data() + pos + kHeaderSize, len);
    if (crc32_of(payload) != crc) break;
    recovered_.emplace_back(payload);
    pos += kHeaderSize + len;
  }
  if (pos != contents.size()) {
    truncated_ = contents.size() - pos;
    if (::ftruncate(fd_, static_cast<off_t>(pos)) != 0) {
      throw Error(ErrorCode::kEdgeStoreUnavailable, io_message(path_, "truncate"));
    }
  }
  size_ = pos;
  if (::lseek(fd_, static_cast<off_t>(size_), SEEK_SET) < 0) {
    throw Error(ErrorCode::kEdgeStoreUnavailable, io_message(path_, "seek"));
  }
}

Journal::~Journal() {
  if (fd_ >= 0) ::close(fd_);
}

void Journal::append(std::string_view payload) {
  if (payload.size() > kMaxRecord) throw Error(ErrorCode::kInvalidArgument, "record too large");
  std::uint64_t frame = kHeaderSize + payload.size();
  if (options_.max_bytes != 0 && size_ + frame > options_.max_bytes) {
    throw Error(ErrorCode::kStorageFull, path_.string());
  }
  std::string buf(kHeaderSize, '\0');
  put_u32(buf.data(), static_cast<std::uint32_t>(payload.size()));
  put_u32(buf.data() + 4, crc32_of(payload));
  buf.append(payload);

  std::size_t written = 0;
  while (written < buf.size()) {
    auto n = ::write(fd_, buf.data() + written, buf.size() - written);
    if (n < 0) {
      if (errno == EINTR) continue;
      auto message = io_message(path_, "write");
      // Drop whatever part of the frame landed so the file stays well formed.
      if (::ftruncate(fd_, static_cast<off_t>(size_)) == 0) {
        ::lseek(fd_, static_cast<off_t>(size_), SEEK_SET);
      }
      throw Error(ErrorCode::kEdgeStoreUnavailable, message);
    }
    written += static_cast<std::size_t>(n);
  }
  if (options_.sync && ::fdatasync(fd_) != 0) {
    throw Error(ErrorCode::kEdgeStoreUnavailable, io_message(path_, "fdatasync"));
  }
  size_ += frame;
}

}  // namespace rollcall
