#include "sta/config.hpp"

#include <fstream>
#include <sstream>

namespace sta {

namespace {

std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r\n");
  if (begin == std::string::npos) return "";
  const auto end = s.find_last_not_of(" \t\r\n");
  return s.substr(begin, end - begin + 1);
}

}  // namespace

KeyValueConfig KeyValueConfig::parse_file(const std::filesystem::path& file) {
  std::ifstream is(file);
  if (!is) throw ConfigError("cannot open config file: " + file.string());
  std::stringstream buffer;
  buffer << is.rdbuf();
  try {
    return parse_string(buffer.str());
  } catch (const ConfigError& e) {
    throw ConfigError(file.string() + ": " + e.what());
  }
}

KeyValueConfig KeyValueConfig::parse_string(const std::string& text) {
  KeyValueConfig config;
  std::istringstream is(text);
  std::string line;
  int line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("line " + std::to_string(line_no) +
                        ": expected 'key = value', got '" + line + "'");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty())
      throw ConfigError("line " + std::to_string(line_no) + ": empty key");
    config.entries_[key] = value;
  }
  return config;
}

bool KeyValueConfig::has(const std::string& key) const {
  return entries_.count(key) != 0;
}

void KeyValueConfig::set(const std::string& key, const std::string& value) {
  entries_[key] = value;
}

std::string KeyValueConfig::get_str(const std::string& key,
                                    const std::string& fallback) const {
  auto it = entries_.find(key);
  return it == entries_.end() ? fallback : it->second;
}

namespace {

template <class T>
T parse_number(const std::string& key, const std::string& text) {
  std::istringstream is(text);
  T value;
  is >> value;
  if (is.fail() || !(is >> std::ws).eof())
    throw ConfigError("key '" + key + "': cannot parse '" + text + "'");
  return value;
}

}  // namespace

int KeyValueConfig::get_int(const std::string& key, int fallback) const {
  auto it = entries_.find(key);
  return it == entries_.end() ? fallback : parse_number<int>(key, it->second);
}

std::uint64_t KeyValueConfig::get_u64(const std::string& key,
                                      std::uint64_t fallback) const {
  auto it = entries_.find(key);
  return it == entries_.end() ? fallback
                              : parse_number<std::uint64_t>(key, it->second);
}

Real KeyValueConfig::get_real(const std::string& key, Real fallback) const {
  auto it = entries_.find(key);
  return it == entries_.end() ? fallback : parse_number<Real>(key, it->second);
}

std::vector<std::string> KeyValueConfig::get_list(
    const std::string& key, const std::vector<std::string>& fallback) const {
  auto it = entries_.find(key);
  if (it == entries_.end()) return fallback;
  std::vector<std::string> out;
  std::string item;
  std::istringstream is(it->second);
  while (std::getline(is, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

void KeyValueConfig::require_known_keys(const std::set<std::string>& known) const {
  for (const auto& [key, value] : entries_) {
    if (!known.count(key))
      throw ConfigError("unknown config key '" + key + "'");
  }
}

}  // namespace sta
