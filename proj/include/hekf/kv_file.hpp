#pragma once

#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <vector>

namespace hekf {

// Flat `name = value` text format shared by parameter, bounds and
// configuration files. `#` starts a comment; blank lines are ignored.
class KeyValueFile {
 public:
  KeyValueFile() = default;

  static KeyValueFile parse(const std::string& text, const std::string& origin = "<string>");
  static KeyValueFile load(const std::filesystem::path& path);

  bool contains(const std::string& key) const { return entries_.count(key) != 0; }
  const std::string& raw(const std::string& key) const;

  double number(const std::string& key) const;
  double number_or(const std::string& key, double fallback) const;
  long integer(const std::string& key) const;
  long integer_or(const std::string& key, long fallback) const;
  std::string string_or(const std::string& key, const std::string& fallback) const;
  std::vector<double> numbers(const std::string& key) const;

  void set(const std::string& key, const std::string& value);
  void set(const std::string& key, double value);

  // Throws ConfigError naming the first key that is not in `known` and
  // does not start with one of `known_prefixes`.
  void reject_unknown(const std::set<std::string>& known,
                      const std::vector<std::string>& known_prefixes = {}) const;

  const std::map<std::string, std::string>& entries() const { return entries_; }
  const std::string& origin() const { return origin_; }

  // Entries in insertion order, one `name = value` per line.
  std::string to_string() const;
  void save(const std::filesystem::path& path) const;

 private:
  std::map<std::string, std::string> entries_;
  std::vector<std::string> order_;
  std::string origin_;
};

// Shortest decimal text that round-trips the double exactly.
std::string format_double(double value);

}  // namespace hekf
