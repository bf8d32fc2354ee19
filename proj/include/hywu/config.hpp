#pragma once

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

// Minimal INI-style run configuration: `[section]` headers, `key = value`
// pairs, `#`/`;` comments, whitespace-insensitive. Lookups are typed and
// validated; every parse or conversion failure carries the file line number.
namespace hywu {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

class Config {
 public:
  static Config parse_file(const std::string& path);
  static Config parse_string(const std::string& text, const std::string& origin = "<string>");

  bool has(const std::string& section, const std::string& key) const;

  // Each getter returns the fallback when the key is absent and throws
  // ConfigError when the stored text does not convert cleanly.
  std::string get_string(const std::string& section, const std::string& key,
                         const std::string& fallback) const;
  double get_double(const std::string& section, const std::string& key, double fallback) const;
  std::size_t get_size(const std::string& section, const std::string& key,
                       std::size_t fallback) const;
  std::uint64_t get_u64(const std::string& section, const std::string& key,
                        std::uint64_t fallback) const;
  bool get_bool(const std::string& section, const std::string& key, bool fallback) const;

  // Keys present in the file but never read by any getter; lets the CLI
  // reject typos instead of silently ignoring them.
  std::vector<std::string> unread_keys() const;

 private:
  struct Entry {
    std::string value;
    std::size_t line = 0;
    mutable bool read = false;
  };
  const Entry* find(const std::string& section, const std::string& key) const;

  std::string origin_;
  std::map<std::string, std::map<std::string, Entry>> sections_;
};

}  // namespace hywu
