#include "molgym/config.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

namespace molgym {

namespace {

std::string strip(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

ConfigFile ConfigFile::parse_text(const std::string& text, const std::string& origin) {
  ConfigFile cfg;
  cfg.origin_ = origin;
  std::istringstream in(text);
  std::string line, section;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = strip(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') {
        throw ConfigError(origin + ":" + std::to_string(lineno) + ": unterminated section");
      }
      section = strip(line.substr(1, line.size() - 2));
      if (section.empty()) {
        throw ConfigError(origin + ":" + std::to_string(lineno) + ": empty section name");
      }
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(origin + ":" + std::to_string(lineno) + ": expected key = value");
    }
    const std::string key = strip(line.substr(0, eq));
    const std::string value = strip(line.substr(eq + 1));
    if (key.empty()) {
      throw ConfigError(origin + ":" + std::to_string(lineno) + ": empty key");
    }
    if (section.empty()) {
      throw ConfigError(origin + ":" + std::to_string(lineno) + ": key '" + key +
                        "' outside any [section]");
    }
    const std::string fk = section + "." + key;
    if (cfg.values_.count(fk)) {
      throw ConfigError(origin + ":" + std::to_string(lineno) + ": duplicate key " + fk);
    }
    cfg.values_[fk] = value;
    cfg.used_[fk] = false;
  }
  return cfg;
}

ConfigFile ConfigFile::parse_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_text(ss.str(), path);
}

bool ConfigFile::has(const std::string& section, const std::string& key) const {
  return values_.count(full_key(section, key)) != 0;
}

std::string ConfigFile::get_string(const std::string& section, const std::string& key,
                                   const std::string& fallback) const {
  const auto it = values_.find(full_key(section, key));
  if (it == values_.end()) return fallback;
  used_[it->first] = true;
  return it->second;
}

std::string ConfigFile::require_string(const std::string& section,
                                       const std::string& key) const {
  const auto it = values_.find(full_key(section, key));
  if (it == values_.end()) {
    throw ConfigError(origin_ + ": missing required key " + full_key(section, key));
  }
  used_[it->first] = true;
  return it->second;
}

double ConfigFile::get_double(const std::string& section, const std::string& key,
                              double fallback) const {
  if (!has(section, key)) return fallback;
  const std::string raw = get_string(section, key, "");
  try {
    std::size_t pos = 0;
    const double v = std::stod(raw, &pos);
    if (pos != raw.size()) throw std::invalid_argument(raw);
    return v;
  } catch (...) {
    throw ConfigError(origin_ + ": " + full_key(section, key) + ": expected a number, got '" +
                      raw + "'");
  }
}

long ConfigFile::get_long(const std::string& section, const std::string& key,
                          long fallback) const {
  if (!has(section, key)) return fallback;
  const std::string raw = get_string(section, key, "");
  try {
    std::size_t pos = 0;
    const long v = std::stol(raw, &pos);
    if (pos != raw.size()) throw std::invalid_argument(raw);
    return v;
  } catch (...) {
    throw ConfigError(origin_ + ": " + full_key(section, key) +
                      ": expected an integer, got '" + raw + "'");
  }
}

int ConfigFile::get_int(const std::string& section, const std::string& key,
                        int fallback) const {
  return static_cast<int>(get_long(section, key, fallback));
}

bool ConfigFile::get_bool(const std::string& section, const std::string& key,
                          bool fallback) const {
  if (!has(section, key)) return fallback;
  std::string raw = get_string(section, key, "");
  std::transform(raw.begin(), raw.end(), raw.begin(), ::tolower);
  if (raw == "true" || raw == "1" || raw == "yes" || raw == "on") return true;
  if (raw == "false" || raw == "0" || raw == "no" || raw == "off") return false;
  throw ConfigError(origin_ + ": " + full_key(section, key) + ": expected a boolean, got '" +
                    raw + "'");
}

std::vector<long> ConfigFile::get_long_list(const std::string& section, const std::string& key,
                                            const std::vector<long>& fallback) const {
  if (!has(section, key)) return fallback;
  const std::string raw = get_string(section, key, "");
  std::vector<long> out;
  std::istringstream ss(raw);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      out.push_back(std::stol(item));
    } catch (...) {
      throw ConfigError(origin_ + ": " + full_key(section, key) + ": bad list entry '" + item +
                        "'");
    }
  }
  if (out.empty()) {
    throw ConfigError(origin_ + ": " + full_key(section, key) + ": empty list");
  }
  return out;
}

std::vector<std::string> ConfigFile::unused_keys() const {
  std::vector<std::string> out;
  for (const auto& [key, used] : used_) {
    if (!used) out.push_back(key);
  }
  return out;
}

}  // namespace molgym
