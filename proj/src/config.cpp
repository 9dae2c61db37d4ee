#include "rollcall/config.hpp"

#include <algorithm>
#include <cctype>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "rollcall/error.hpp"

namespace rollcall {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

bool valid_key(std::string_view key) {
  return !key.empty() && std::all_of(key.begin(), key.end(), [](char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '.' || c == '-';
  });
}

}  // namespace

Config Config::parse(std::string_view text, std::string origin) {
  Config config;
  config.origin_ = std::move(origin);
  int line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    auto end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    auto line = trim(text.substr(pos, end - pos));
    ++line_no;
    pos = end + 1;
    if (line.empty() || line.front() == '#') {
      if (end == text.size()) break;
      continue;
    }
    auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw Error(ErrorCode::kConfig,
                  config.origin_ + ":" + std::to_string(line_no) + ": expected 'key = value'");
    }
    auto key = trim(line.substr(0, eq));
    if (!valid_key(key)) {
      throw Error(ErrorCode::kConfig, config.origin_ + ":" + std::to_string(line_no) +
                                          ": invalid key '" + std::string(key) + "'");
    }
    config.entries_.push_back({std::string(key), std::string(trim(line.substr(eq + 1))), line_no});
    if (end == text.size()) break;
  }
  return config;
}

Config Config::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kConfig, "cannot read config '" + path.string() + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse(buf.str(), path.string());
}

std::string Config::env_name(std::string_view key) {
  std::string name = "ROLLCALL_";
  for (char c : key) {
    name.push_back(std::isalnum(static_cast<unsigned char>(c))
                       ? static_cast<char>(std::toupper(static_cast<unsigned char>(c)))
                       : '_');
  }
  return name;
}

void Config::apply_env(std::span<const std::string_view> known_keys) {
  std::vector<std::string> keys;
  for (const auto& e : entries_) keys.push_back(e.key);
  for (auto k : known_keys) keys.emplace_back(k);
  std::sort(keys.begin(), keys.end());
  keys.erase(std::unique(keys.begin(), keys.end()), keys.end());
  for (const auto& key : keys) {
    if (const char* value = std::getenv(env_name(key).c_str()); value != nullptr) {
      std::erase_if(entries_, [&](const Entry& e) { return e.key == key; });
      entries_.push_back({key, value, 0});
    }
  }
}

void Config::set(std::string key, std::string value) {
  std::erase_if(entries_, [&](const Entry& e) { return e.key == key; });
  entries_.push_back({std::move(key), std::move(value), 0});
}

const Config::Entry* Config::last(std::string_view key) const {
  for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) {
    if (it->key == key) return &*it;
  }
  return nullptr;
}

bool Config::has(std::string_view key) const { return last(key) != nullptr; }

std::optional<std::string> Config::get(std::string_view key) const {
  const auto* e = last(key);
  if (e == nullptr) return std::nullopt;
  return e->value;
}

std::string Config::get_or(std::string_view key, std::string fallback) const {
  const auto* e = last(key);
  return e == nullptr ? std::move(fallback) : e->value;
}

std::string Config::require(std::string_view key) const {
  const auto* e = last(key);
  if (e == nullptr || e->value.empty()) {
    throw Error(ErrorCode::kConfig, origin_ + ": missing required key '" + std::string(key) + "'");
  }
  return e->value;
}

std::vector<std::string> Config::get_all(std::string_view key) const {
  std::vector<std::string> out;
  for (const auto& e : entries_) {
    if (e.key == key) out.push_back(e.value);
  }
  return out;
}

std::string Config::where(std::string_view key) const {
  const auto* e = last(key);
  if (e == nullptr || e->line == 0) {
    return e == nullptr ? origin_ : "environment " + env_name(key);
  }
  return origin_ + ":" + std::to_string(e->line);
}

long long Config::get_int(std::string_view key, long long fallback) const {
  const auto* e = last(key);
  if (e == nullptr) return fallback;
  try {
    std::size_t used = 0;
    auto v = std::stoll(e->value, &used);
    if (used == e->value.size()) return v;
  } catch (const std::exception&) {
  }
  throw Error(ErrorCode::kConfig, where(key) + ": '" + std::string(key) + "' expects an integer");
}

double Config::get_double(std::string_view key, double fallback) const {
  const auto* e = last(key);
  if (e == nullptr) return fallback;
  try {
    std::size_t used = 0;
    auto v = std::stod(e->value, &used);
    if (used == e->value.size()) return v;
  } catch (const std::exception&) {
  }
  throw Error(ErrorCode::kConfig, where(key) + ": '" + std::string(key) + "' expects a number");
}

bool Config::get_bool(std::string_view key, bool fallback) const {
  const auto* e = last(key);
  if (e == nullptr) return fallback;
  if (e->value == "true" || e->value == "1" || e->value == "yes") return true;
  if (e->value == "false" || e->value == "0" || e->value == "no") return false;
  throw Error(ErrorCode::kConfig, where(key) + ": '" + std::string(key) + "' expects a boolean");
}

std::vector<std::string> Config::keys_with_prefix(std::string_view prefix) const {
  std::vector<std::string> out;
  for (const auto& e : entries_) {
    if (e.key.starts_with(prefix) &&
        std::find(out.begin(), out.end(), e.key) == out.end()) {
      out.push_back(e.key);
    }
  }
  return out;
}

}  // namespace rollcall
