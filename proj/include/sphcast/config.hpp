#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace sphcast {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Flat `key = value` settings. Lines starting with `#` and blank lines are
/// ignored; a `#` after a value starts a comment. Keys are restricted to the
/// documented set in default_config().
class Config {
 public:
  struct Entry {
    std::string key;
    std::string value;
    std::string doc;
  };

  /// Parses text on top of the defaults; unknown keys and duplicates throw.
  static Config parse(const std::string& text, const std::string& what = "config");
  static Config load(const std::string& path);

  bool has(const std::string& key) const;
  void set(const std::string& key, const std::string& value);

  const std::string& str(const std::string& key) const;
  double num(const std::string& key) const;
  long integer(const std::string& key) const;
  std::size_t count(const std::string& key) const;  // non-negative integer
  bool flag(const std::string& key) const;
  std::vector<std::size_t> counts(const std::string& key) const;  // comma separated

  /// All keys, one per line, preceded by their documentation as comments.
  std::string dump(bool with_docs = true) const;
  const std::vector<Entry>& entries() const { return entries_; }

 private:
  friend Config default_config();
  Entry& find(const std::string& key);
  const Entry& find(const std::string& key) const;
  std::vector<Entry> entries_;
};

/// Every recognised key with its default value.
Config default_config();

}  // namespace sphcast
