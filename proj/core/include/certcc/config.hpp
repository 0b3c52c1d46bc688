#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>

namespace certcc {

/// Flat `key = value` configuration. `#` starts a comment.
class ConfigMap {
 public:
  static ConfigMap parse(std::istream& is);
  static ConfigMap load(const std::filesystem::path& path);

  void set(const std::string& key, const std::string& value) { values_[key] = value; }
  bool has(const std::string& key) const { return values_.count(key) != 0; }
  const std::map<std::string, std::string>& values() const { return values_; }

  std::string get_string(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key, double fallback) const;
  std::int64_t get_int(const std::string& key, std::int64_t fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;

  /// Overlays `other` on top of this map.
  void merge(const ConfigMap& other);
  void write(std::ostream& os) const;

 private:
  std::map<std::string, std::string> values_;
};

}  // namespace certcc
