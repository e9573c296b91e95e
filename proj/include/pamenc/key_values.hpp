#pragma once

#include <cstdint>
#include <filesystem>
#include <initializer_list>
#include <map>
#include <stdexcept>
#include <string>
#include <string_view>

namespace pamenc {

// Raised for malformed parameter files, unknown keys and unparsable values.
class ParameterError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Flat `name = value` text. Blank lines and lines starting with '#' are
// ignored; a trailing `# ...` comment after a value is stripped.
class KeyValues {
 public:
  KeyValues() = default;

  static KeyValues parse(std::string_view text, std::string origin = "<string>");
  static KeyValues load(const std::filesystem::path& path);

  bool contains(std::string_view key) const;
  const std::string& raw(std::string_view key) const;

  double number(std::string_view key) const;
  std::uint64_t hex(std::string_view key) const;

  // Overwrites `out` only when the key is present.
  void maybe(std::string_view key, double& out) const;
  void maybe(std::string_view key, int& out) const;
  void maybe(std::string_view key, bool& out) const;

  // Throws ParameterError naming the first key not in `allowed`.
  void reject_unknown(std::initializer_list<std::string_view> allowed) const;

  void set(std::string key, std::string value);
  const std::map<std::string, std::string, std::less<>>& entries() const { return entries_; }
  const std::string& origin() const { return origin_; }

  std::string to_string() const;

 private:
  std::map<std::string, std::string, std::less<>> entries_;
  std::map<std::string, int, std::less<>> line_of_;
  std::string origin_;
};

// Shortest decimal text that round-trips the double exactly.
std::string format_double(double v);

}  // namespace pamenc
