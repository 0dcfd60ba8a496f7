#pragma once

#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace molgym {

/// Raised with the offending `section.key` path in the message.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Flat key-value config with [section] headers, `key = value` lines and
/// `#` comments. Typed getters track which keys were consumed so unknown
/// keys can be reported.
class ConfigFile {
 public:
  static ConfigFile parse_file(const std::string& path);
  static ConfigFile parse_text(const std::string& text, const std::string& origin = "<text>");

  bool has(const std::string& section, const std::string& key) const;
  std::string get_string(const std::string& section, const std::string& key,
                         const std::string& fallback) const;
  std::string require_string(const std::string& section, const std::string& key) const;
  double get_double(const std::string& section, const std::string& key, double fallback) const;
  long get_long(const std::string& section, const std::string& key, long fallback) const;
  int get_int(const std::string& section, const std::string& key, int fallback) const;
  bool get_bool(const std::string& section, const std::string& key, bool fallback) const;
  std::vector<long> get_long_list(const std::string& section, const std::string& key,
                                  const std::vector<long>& fallback) const;

  /// Keys never read by any getter (catches typos in experiment files).
  std::vector<std::string> unused_keys() const;

  const std::map<std::string, std::string>& raw() const { return values_; }

 private:
  std::string full_key(const std::string& section, const std::string& key) const {
    return section + "." + key;
  }
  std::map<std::string, std::string> values_;
  mutable std::map<std::string, bool> used_;
  std::string origin_;
};

}  // namespace molgym
