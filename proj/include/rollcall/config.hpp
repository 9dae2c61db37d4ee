#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace rollcall {

/// `key = value` text configuration. Lines starting with '#' and blank lines
/// are ignored; a key may repeat (e.g. `holiday`). Environment variables
/// named ROLLCALL_<KEY> (uppercased, '.' and '-' mapped to '_') override
/// file values when apply_env() is called.
class Config {
 public:
  static Config parse(std::string_view text, std::string origin = "<config>");
  static Config load(const std::filesystem::path& path);

  /// `known_keys` lets the environment supply keys absent from the file.
  void apply_env(std::span<const std::string_view> known_keys = {});
  void set(std::string key, std::string value);

  bool has(std::string_view key) const;
  std::optional<std::string> get(std::string_view key) const;
  std::string get_or(std::string_view key, std::string fallback) const;
  std::string require(std::string_view key) const;
  std::vector<std::string> get_all(std::string_view key) const;
  long long get_int(std::string_view key, long long fallback) const;
  double get_double(std::string_view key, double fallback) const;
  bool get_bool(std::string_view key, bool fallback) const;
  std::vector<std::string> keys_with_prefix(std::string_view prefix) const;

  /// `origin:line` for diagnostics, or the origin alone for env/unknown.
  std::string where(std::string_view key) const;

  static std::string env_name(std::string_view key);

 private:
  struct Entry {
    std::string key;
    std::string value;
    int line = 0;  // 0 when the value came from the environment
  };
  const Entry* last(std::string_view key) const;

  std::string origin_;
  std::vector<Entry> entries_;
};

}  // namespace rollcall
