#include "ifib/toml.hpp"

#include <cctype>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace ifib::toml {

namespace {

std::string trim(const std::string& s) {
  size_t b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  size_t e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

// strips a trailing comment that is not inside a string
std::string strip_comment(const std::string& s) {
  bool in_str = false;
  for (size_t i = 0; i < s.size(); ++i) {
    if (s[i] == '"') in_str = !in_str;
    if (s[i] == '#' && !in_str) return s.substr(0, i);
  }
  return s;
}

Value parse_scalar(const std::string& tok, int lineno) {
  if (tok.size() >= 2 && tok.front() == '"' && tok.back() == '"')
    return tok.substr(1, tok.size() - 2);
  if (tok == "true") return true;
  if (tok == "false") return false;
  bool looks_float = tok.find_first_of(".eE") != std::string::npos;
  try {
    size_t used = 0;
    if (!looks_float) {
      std::int64_t v = std::stoll(tok, &used);
      if (used == tok.size()) return v;
    }
    double d = std::stod(tok, &used);
    if (used == tok.size()) return d;
  } catch (...) {
  }
  throw std::runtime_error("toml: bad value at line " + std::to_string(lineno) + ": " + tok);
}

std::vector<std::string> split_array(const std::string& body, int lineno) {
  std::vector<std::string> out;
  std::string cur;
  bool in_str = false;
  for (char c : body) {
    if (c == '"') in_str = !in_str;
    if (c == ',' && !in_str) {
      out.push_back(trim(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  std::string last = trim(cur);
  if (!last.empty()) out.push_back(last);
  for (const auto& t : out)
    if (t.empty()) throw std::runtime_error("toml: empty array element at line " +
                                            std::to_string(lineno));
  return out;
}

}  // namespace

Table parse(const std::string& text) {
  Table table;
  std::istringstream in(text);
  std::string line, section;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    line = trim(strip_comment(line));
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']')
        throw std::runtime_error("toml: bad section header at line " + std::to_string(lineno));
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw std::runtime_error("toml: expected key = value at line " + std::to_string(lineno));
    std::string key = trim(line.substr(0, eq));
    std::string val = trim(line.substr(eq + 1));
    if (key.empty() || val.empty())
      throw std::runtime_error("toml: empty key or value at line " + std::to_string(lineno));
    std::string full = section.empty() ? key : section + "." + key;

    if (val.front() == '[') {
      if (val.back() != ']')
        throw std::runtime_error("toml: unterminated array at line " + std::to_string(lineno));
      auto tokens = split_array(val.substr(1, val.size() - 2), lineno);
      if (tokens.empty()) {
        table.set(full, std::vector<std::int64_t>{});
        continue;
      }
      Value first = parse_scalar(tokens[0], lineno);
      if (std::holds_alternative<std::string>(first)) {
        std::vector<std::string> arr;
        for (auto& t : tokens) arr.push_back(std::get<std::string>(parse_scalar(t, lineno)));
        table.set(full, arr);
      } else if (std::holds_alternative<double>(first)) {
        std::vector<double> arr;
        for (auto& t : tokens) {
          Value v = parse_scalar(t, lineno);
          arr.push_back(std::holds_alternative<double>(v)
                            ? std::get<double>(v)
                            : static_cast<double>(std::get<std::int64_t>(v)));
        }
        table.set(full, arr);
      } else {
        std::vector<std::int64_t> arr;
        for (auto& t : tokens) arr.push_back(std::get<std::int64_t>(parse_scalar(t, lineno)));
        table.set(full, arr);
      }
      continue;
    }
    table.set(full, parse_scalar(val, lineno));
  }
  return table;
}

Table parse_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

const Value& Table::at(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) throw std::runtime_error("toml: missing key " + key);
  return it->second;
}

std::string Table::get_string(const std::string& key) const {
  return std::get<std::string>(at(key));
}

std::int64_t Table::get_int(const std::string& key) const {
  return std::get<std::int64_t>(at(key));
}

double Table::get_double(const std::string& key) const {
  const Value& v = at(key);
  if (std::holds_alternative<std::int64_t>(v))
    return static_cast<double>(std::get<std::int64_t>(v));
  return std::get<double>(v);
}

bool Table::get_bool(const std::string& key) const { return std::get<bool>(at(key)); }

std::vector<std::string> Table::get_string_array(const std::string& key) const {
  return std::get<std::vector<std::string>>(at(key));
}

std::vector<std::int64_t> Table::get_int_array(const std::string& key) const {
  return std::get<std::vector<std::int64_t>>(at(key));
}

std::string Table::get_string(const std::string& key, const std::string& fallback) const {
  return has(key) ? get_string(key) : fallback;
}

std::int64_t Table::get_int(const std::string& key, std::int64_t fallback) const {
  return has(key) ? get_int(key) : fallback;
}

double Table::get_double(const std::string& key, double fallback) const {
  return has(key) ? get_double(key) : fallback;
}

bool Table::get_bool(const std::string& key, bool fallback) const {
  return has(key) ? get_bool(key) : fallback;
}

}  // namespace ifib::toml
