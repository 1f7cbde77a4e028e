#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace pdmp {

/// Sectioned UTF-8 key=value configuration.
///
///   [section]
///   key = value     # comment
///
/// Keys are addressed as "section.key". Lookups that fail carry the full field
/// path in the exception message.
class Config {
 public:
  static Config parse_file(const std::string& path);
  static Config parse_string(const std::string& text, const std::string& origin = "<string>");

  bool has(const std::string& key) const { return values_.count(key) > 0; }

  std::string get_str(const std::string& key) const;
  std::string get_str(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key) const;
  double get_double(const std::string& key, double fallback) const;
  int get_int(const std::string& key) const;
  int get_int(const std::string& key, int fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  std::vector<double> get_list(const std::string& key, const std::vector<double>& fallback) const;

  /// FNV-1a hash of the raw file content, for run manifests.
  std::uint64_t content_hash() const { return hash_; }
  const std::string& origin() const { return origin_; }

 private:
  std::map<std::string, std::string> values_;
  std::uint64_t hash_ = 0;
  std::string origin_;
};

}  // namespace pdmp
