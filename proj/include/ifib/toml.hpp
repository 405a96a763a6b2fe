#pragma once

// Minimal TOML reader covering the configuration surface: [sections],
// key = value with strings, integers, floats, booleans, and flat arrays.
// Keys are exposed as "section.key".

#include <map>
#include <string>
#include <variant>
#include <vector>

namespace ifib::toml {

using Value = std::variant<std::string, std::int64_t, double, bool,
                           std::vector<std::string>, std::vector<std::int64_t>,
                           std::vector<double>>;

class Table {
 public:
  bool has(const std::string& key) const { return values_.count(key) > 0; }

  std::string get_string(const std::string& key) const;
  std::int64_t get_int(const std::string& key) const;
  double get_double(const std::string& key) const;  // accepts integer literals
  bool get_bool(const std::string& key) const;
  std::vector<std::string> get_string_array(const std::string& key) const;
  std::vector<std::int64_t> get_int_array(const std::string& key) const;

  std::string get_string(const std::string& key, const std::string& fallback) const;
  std::int64_t get_int(const std::string& key, std::int64_t fallback) const;
  double get_double(const std::string& key, double fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;

  void set(const std::string& key, Value v) { values_[key] = std::move(v); }

 private:
  const Value& at(const std::string& key) const;
  std::map<std::string, Value> values_;
};

Table parse(const std::string& text);
Table parse_file(const std::string& path);

}  // namespace ifib::toml
