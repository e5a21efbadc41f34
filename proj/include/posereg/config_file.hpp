#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace posereg {

/// Plain-text "key = value" settings. Blank lines and lines starting with '#'
/// are ignored; later assignments override earlier ones.
class KeyValues {
 public:
  static KeyValues parse(const std::string& text, const std::string& source = "<string>");
  static KeyValues load(const std::filesystem::path& path);

  /// Applies "key=value" override strings, in order.
  void apply_overrides(const std::vector<std::string>& overrides);

  bool has(const std::string& key) const { return entries_.count(key) > 0; }
  const std::string& get(const std::string& key) const;
  std::string get_or(const std::string& key, const std::string& fallback) const;
  void set(const std::string& key, std::string value) { entries_[key] = std::move(value); }
  void erase(const std::string& key) { entries_.erase(key); }

  double get_double(const std::string& key) const;
  long long get_int(const std::string& key) const;
  std::vector<double> get_doubles(const std::string& key) const;

  const std::map<std::string, std::string>& entries() const { return entries_; }
  /// Sorted "key = value" lines.
  std::string to_string() const;

 private:
  std::map<std::string, std::string> entries_;
};

/// Shortest text that parses back to exactly `value` (up to 17 digits).
std::string format_double(double value);

/// FNV-1a 64-bit hash as 16 lowercase hex digits.
std::string fnv1a_hex(const std::string& text);

}  // namespace posereg
