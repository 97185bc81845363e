#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace ipl {

/// Flat key=value configuration. '#' starts a comment; later assignments
/// (including CLI overrides) win. Serialization is sorted, so a written
/// manifest re-parses to an identical config.
class KeyValueConfig {
 public:
  KeyValueConfig() = default;

  static KeyValueConfig from_file(const std::string& path);
  static KeyValueConfig from_string(const std::string& text);

  void set(const std::string& key, const std::string& value);
  /// Parses a "key=value" token (CLI override form).
  void set_assignment(const std::string& assignment);

  bool has(const std::string& key) const;

  std::string get_string(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key, double fallback) const;
  std::int64_t get_int(const std::string& key, std::int64_t fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  /// Comma-separated doubles.
  std::vector<double> get_doubles(const std::string& key,
                                  const std::vector<double>& fallback) const;

  std::string serialize() const;
  const std::map<std::string, std::string>& entries() const { return values_; }

  /// Keys read through any getter so far; unknown-key detection for strict
  /// validation.
  std::vector<std::string> unused_keys() const;

 private:
  std::map<std::string, std::string> values_;
  mutable std::map<std::string, bool> touched_;
};

}  // namespace ipl
