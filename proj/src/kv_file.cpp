#include "hekf/kv_file.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "hekf/errors.hpp"

namespace hekf {
namespace {

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

double parse_double(const std::string& text, const std::string& what) {
  const std::string t = trim(text);
  double value = 0.0;
  const auto* begin = t.data();
  const auto* end = t.data() + t.size();
  const auto [ptr, ec] = std::from_chars(begin, end, value);
  if (ec != std::errc() || ptr != end || t.empty()) {
    throw ConfigError(what + ": not a number: '" + t + "'");
  }
  return value;
}

}  // namespace

KeyValueFile KeyValueFile::parse(const std::string& text, const std::string& origin) {
  KeyValueFile kv;
  kv.origin_ = origin;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(origin + ":" + std::to_string(lineno) + ": expected 'name = value'");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) {
      throw ConfigError(origin + ":" + std::to_string(lineno) + ": empty key");
    }
    if (kv.entries_.count(key) != 0) {
      throw ConfigError(origin + ":" + std::to_string(lineno) + ": duplicate key '" + key + "'");
    }
    kv.entries_[key] = value;
    kv.order_.push_back(key);
  }
  return kv;
}

KeyValueFile KeyValueFile::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open '" + path.string() + "'");
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse(buffer.str(), path.string());
}

const std::string& KeyValueFile::raw(const std::string& key) const {
  const auto it = entries_.find(key);
  if (it == entries_.end()) throw ConfigError(origin_ + ": missing key '" + key + "'");
  return it->second;
}

double KeyValueFile::number(const std::string& key) const {
  return parse_double(raw(key), origin_ + ": " + key);
}

double KeyValueFile::number_or(const std::string& key, double fallback) const {
  return contains(key) ? number(key) : fallback;
}

long KeyValueFile::integer(const std::string& key) const {
  const double v = number(key);
  const auto as_int = static_cast<long>(v);
  if (static_cast<double>(as_int) != v) {
    throw ConfigError(origin_ + ": " + key + ": expected an integer");
  }
  return as_int;
}

long KeyValueFile::integer_or(const std::string& key, long fallback) const {
  return contains(key) ? integer(key) : fallback;
}

std::string KeyValueFile::string_or(const std::string& key, const std::string& fallback) const {
  return contains(key) ? raw(key) : fallback;
}

std::vector<double> KeyValueFile::numbers(const std::string& key) const {
  std::string text = raw(key);
  for (char& c : text) {
    if (c == ',') c = ' ';
  }
  std::istringstream in(text);
  std::vector<double> out;
  std::string token;
  while (in >> token) out.push_back(parse_double(token, origin_ + ": " + key));
  return out;
}

void KeyValueFile::set(const std::string& key, const std::string& value) {
  if (entries_.count(key) == 0) order_.push_back(key);
  entries_[key] = value;
}

void KeyValueFile::set(const std::string& key, double value) { set(key, format_double(value)); }

void KeyValueFile::reject_unknown(const std::set<std::string>& known,
                                  const std::vector<std::string>& known_prefixes) const {
  for (const auto& key : order_) {
    if (known.count(key) != 0) continue;
    bool ok = false;
    for (const auto& prefix : known_prefixes) {
      if (key.rfind(prefix, 0) == 0) {
        ok = true;
        break;
      }
    }
    if (!ok) throw ConfigError(origin_ + ": unknown key '" + key + "'");
  }
}

std::string KeyValueFile::to_string() const {
  std::string out;
  for (const auto& key : order_) {
    out += key;
    out += " = ";
    out += entries_.at(key);
    out += '\n';
  }
  return out;
}

void KeyValueFile::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write '" + path.string() + "'");
  out << to_string();
}

std::string format_double(double value) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, ptr);
}

}  // namespace hekf
