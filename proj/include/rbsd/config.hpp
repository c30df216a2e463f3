#pragma once

#include <cstdint>
#include <map>
#include <string>

namespace rbsd {

/// 64-bit FNV-1a.
std::uint64_t fnv1a(const std::string& bytes);

/// Flat key=value configuration. A line "[name]" opens a section and later
/// keys are stored as "name.key"; '#' and ';' start comments.
class Config {
 public:
  static Config parse(const std::string& text);
  static Config load(const std::string& file);

  void set(const std::string& key, const std::string& value) { entries_[key] = value; }
  bool has(const std::string& key) const { return entries_.count(key) > 0; }
  std::string get(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key, double fallback) const;
  std::int64_t get_int(const std::string& key, std::int64_t fallback) const;

  /// Sorted "key=value" lines; equal configs give equal text.
  std::string canonical() const;
  std::uint64_t hash() const { return fnv1a(canonical()); }
  const std::map<std::string, std::string>& entries() const { return entries_; }

 private:
  std::map<std::string, std::string> entries_;
};

}  // namespace rbsd
