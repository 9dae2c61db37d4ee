#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace rollcall {

/// Append-only record file. Each record is framed as
///
///   u32 payload length (little endian) | u32 CRC-32 of payload | payload
///
/// and is flushed with fdatasync before append() returns. On open, records
/// are read back until the first torn or corrupt frame; the file is
/// truncated there so later appends continue from the last durable record.
class Journal {
 public:
  struct Options {
    /// Appends that would grow the file past this many bytes fail with
    /// kStorageFull. Zero means unlimited.
    std::uint64_t max_bytes = 0;
    bool sync = true;
  };

  Journal(std::filesystem::path path, Options options);
  explicit Journal(std::filesystem::path path) : Journal(std::move(path), Options{}) {}
  ~Journal();

  Journal(const Journal&) = delete;
  Journal& operator=(const Journal&) = delete;

  /// Payloads recovered at open time, in append order. Moved out once.
  std::vector<std::string> take_recovered() { return std::move(recovered_); }

  /// Throws kStorageFull or kEdgeStoreUnavailable (I/O failure).
  void append(std::string_view payload);

  std::uint64_t size_bytes() const { return size_; }
  std::uint64_t truncated_bytes() const { return truncated_; }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
  Options options_;
  int fd_ = -1;
  std::uint64_t size_ = 0;
  std::uint64_t truncated_ = 0;
  std::vector<std::string> recovered_;
};

std::uint32_t crc32_of(std::string_view data);

}  // namespace rollcall
