#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>

#include "fieldmap/error.hpp"

namespace fieldmap {

// Minimal TOML-style config: [section] headers and scalar `key = value`
// pairs (integers, floats, booleans, quoted strings). This covers every
// config this project reads or echoes; full TOML is deliberately out of
// scope since no TOML library ships with the environment.
class ConfigFile {
 public:
  using Section = std::map<std::string, std::string>;

  static ConfigFile parse(std::istream& is, const std::string& origin = "<stream>") {
    ConfigFile cfg;
    std::string line;
    std::string section;
    int lineno = 0;
    while (std::getline(is, line)) {
      ++lineno;
      std::string s = strip(line);
      if (s.empty() || s[0] == '#') continue;
      if (s.front() == '[') {
        if (s.back() != ']') {
          throw ConfigError(origin + ":" + std::to_string(lineno) + ": unterminated section header");
        }
        section = strip(s.substr(1, s.size() - 2));
        if (section.empty()) {
          throw ConfigError(origin + ":" + std::to_string(lineno) + ": empty section name");
        }
        cfg.sections_[section];  // keep empty sections
        continue;
      }
      const auto eq = s.find('=');
      if (eq == std::string::npos) {
        throw ConfigError(origin + ":" + std::to_string(lineno) + ": expected key = value");
      }
      const std::string key = strip(s.substr(0, eq));
      std::string value = strip(s.substr(eq + 1));
      if (key.empty()) {
        throw ConfigError(origin + ":" + std::to_string(lineno) + ": empty key");
      }
      // strip trailing comment on unquoted values
      if (value.empty()) {
        throw ConfigError(origin + ":" + std::to_string(lineno) + ": empty value for '" + key + "'");
      }
      if (value.front() == '"') {
        const auto close = value.find('"', 1);
        if (close == std::string::npos) {
          throw ConfigError(origin + ":" + std::to_string(lineno) + ": unterminated string");
        }
        value = value.substr(1, close - 1);
      } else {
        const auto hash = value.find('#');
        if (hash != std::string::npos) value = strip(value.substr(0, hash));
      }
      cfg.sections_[section][key] = value;
    }
    return cfg;
  }

  static ConfigFile load(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) {
      throw InputIoError("cannot open config: " + path.string());
    }
    return parse(is, path.string());
  }

  bool has(const std::string& section, const std::string& key) const {
    const auto it = sections_.find(section);
    return it != sections_.end() && it->second.count(key) > 0;
  }

  std::string get_string(const std::string& section, const std::string& key,
                         const std::string& fallback) const {
    const auto* v = find(section, key);
    return v ? *v : fallback;
  }

  double get_double(const std::string& section, const std::string& key, double fallback) const {
    const auto* v = find(section, key);
    if (!v) return fallback;
    try {
      std::size_t pos = 0;
      const double d = std::stod(*v, &pos);
      if (pos != v->size()) throw std::invalid_argument("");
      return d;
    } catch (const std::exception&) {
      throw ConfigError("field " + section + "." + key + ": '" + *v + "' is not a number");
    }
  }

  std::int64_t get_int(const std::string& section, const std::string& key,
                       std::int64_t fallback) const {
    const auto* v = find(section, key);
    if (!v) return fallback;
    try {
      std::size_t pos = 0;
      const std::int64_t i = std::stoll(*v, &pos);
      if (pos != v->size()) throw std::invalid_argument("");
      return i;
    } catch (const std::exception&) {
      throw ConfigError("field " + section + "." + key + ": '" + *v + "' is not an integer");
    }
  }

  bool get_bool(const std::string& section, const std::string& key, bool fallback) const {
    const auto* v = find(section, key);
    if (!v) return fallback;
    if (*v == "true") return true;
    if (*v == "false") return false;
    throw ConfigError("field " + section + "." + key + ": '" + *v + "' is not a boolean");
  }

  void set_string(const std::string& section, const std::string& key, const std::string& value) {
    sections_[section][key] = value;
  }
  void set_double(const std::string& section, const std::string& key, double value) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", value);
    sections_[section][key] = buf;
  }
  void set_int(const std::string& section, const std::string& key, std::int64_t value) {
    sections_[section][key] = std::to_string(value);
  }
  void set_bool(const std::string& section, const std::string& key, bool value) {
    sections_[section][key] = value ? "true" : "false";
  }

  // Sections and keys are emitted sorted, so echoed configs are stable.
  void write(std::ostream& os) const {
    bool first = true;
    for (const auto& [name, section] : sections_) {
      if (!first) os << "\n";
      first = false;
      os << "[" << name << "]\n";
      for (const auto& [key, value] : section) {
        os << key << " = " << render_value(value) << "\n";
      }
    }
  }

  void save(const std::filesystem::path& path) const {
    std::ofstream os(path);
    if (!os) {
      throw OutputIoError("cannot write config: " + path.string());
    }
    write(os);
  }

  const std::map<std::string, Section>& sections() const { return sections_; }

 private:
  static std::string strip(const std::string& s) {
    const auto begin = s.find_first_not_of(" \t\r\n");
    if (begin == std::string::npos) return "";
    const auto end = s.find_last_not_of(" \t\r\n");
    return s.substr(begin, end - begin + 1);
  }

  static std::string render_value(const std::string& v) {
    // Values that parse as numbers or booleans go out bare; everything else
    // gets quoted.
    if (v == "true" || v == "false") return v;
    try {
      std::size_t pos = 0;
      (void)std::stod(v, &pos);
      if (pos == v.size()) return v;
    } catch (const std::exception&) {
    }
    return "\"" + v + "\"";
  }

  const std::string* find(const std::string& section, const std::string& key) const {
    const auto it = sections_.find(section);
    if (it == sections_.end()) return nullptr;
    const auto kit = it->second.find(key);
    return kit == it->second.end() ? nullptr : &kit->second;
  }

  std::map<std::string, Section> sections_;
};

}  // namespace fieldmap
