#pragma once

// Human-readable key-value configuration files: one `key = value` per line,
// `#` comments, blank lines ignored. CLI flags override individual keys.

#include "sta/common.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <vector>

namespace sta {

class KeyValueConfig {
 public:
  KeyValueConfig() = default;

  static KeyValueConfig parse_file(const std::filesystem::path& file);
  static KeyValueConfig parse_string(const std::string& text);

  bool has(const std::string& key) const;
  void set(const std::string& key, const std::string& value);

  std::string get_str(const std::string& key, const std::string& fallback) const;
  int get_int(const std::string& key, int fallback) const;
  std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const;
  Real get_real(const std::string& key, Real fallback) const;
  /// Comma-separated list.
  std::vector<std::string> get_list(const std::string& key,
                                    const std::vector<std::string>& fallback) const;

  const std::map<std::string, std::string>& entries() const { return entries_; }

  /// Throws ConfigError naming the first key outside `known`.
  void require_known_keys(const std::set<std::string>& known) const;

 private:
  std::map<std::string, std::string> entries_;
};

}  // namespace sta
