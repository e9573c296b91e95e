#include "pamenc/key_values.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace pamenc {
namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

}  // namespace

KeyValues KeyValues::parse(std::string_view text, std::string origin) {
  KeyValues kv;
  kv.origin_ = std::move(origin);
  int line_no = 0;
  while (!text.empty()) {
    const auto eol = text.find('\n');
    std::string_view line = text.substr(0, eol);
    text = eol == std::string_view::npos ? std::string_view{} : text.substr(eol + 1);
    ++line_no;

    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;

    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw ParameterError(kv.origin_ + ":" + std::to_string(line_no) + ": expected `name = value`");
    }
    const auto key = trim(line.substr(0, eq));
    const auto value = trim(line.substr(eq + 1));
    if (key.empty() || value.empty()) {
      throw ParameterError(kv.origin_ + ":" + std::to_string(line_no) + ": empty name or value");
    }
    if (kv.entries_.contains(key)) {
      throw ParameterError(kv.origin_ + ":" + std::to_string(line_no) + ": duplicate key `" +
                           std::string(key) + "`");
    }
    kv.entries_.emplace(std::string(key), std::string(value));
    kv.line_of_.emplace(std::string(key), line_no);
  }
  return kv;
}

KeyValues KeyValues::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParameterError("cannot open parameter file " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse(ss.str(), path.string());
}

bool KeyValues::contains(std::string_view key) const { return entries_.find(key) != entries_.end(); }

const std::string& KeyValues::raw(std::string_view key) const {
  const auto it = entries_.find(key);
  if (it == entries_.end()) throw ParameterError(origin_ + ": missing key `" + std::string(key) + "`");
  return it->second;
}

double KeyValues::number(std::string_view key) const {
  const std::string& text = raw(key);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc{} || ptr != text.data() + text.size()) {
    throw ParameterError(origin_ + ": key `" + std::string(key) + "` is not a number: " + text);
  }
  return v;
}

std::uint64_t KeyValues::hex(std::string_view key) const {
  std::string_view text = raw(key);
  if (text.starts_with("0x") || text.starts_with("0X")) text.remove_prefix(2);
  std::uint64_t v = 0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v, 16);
  if (text.empty() || ec != std::errc{} || ptr != text.data() + text.size()) {
    throw ParameterError(origin_ + ": key `" + std::string(key) + "` is not a 64-bit hex integer");
  }
  return v;
}

void KeyValues::maybe(std::string_view key, double& out) const {
  if (contains(key)) out = number(key);
}

void KeyValues::maybe(std::string_view key, int& out) const {
  if (!contains(key)) return;
  const std::string& text = raw(key);
  int v = 0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc{} || ptr != text.data() + text.size()) {
    throw ParameterError(origin_ + ": key `" + std::string(key) + "` is not an integer: " + text);
  }
  out = v;
}

void KeyValues::maybe(std::string_view key, bool& out) const {
  if (!contains(key)) return;
  const std::string& text = raw(key);
  if (text == "true" || text == "1" || text == "on") {
    out = true;
  } else if (text == "false" || text == "0" || text == "off") {
    out = false;
  } else {
    throw ParameterError(origin_ + ": key `" + std::string(key) + "` is not a boolean: " + text);
  }
}

void KeyValues::reject_unknown(std::initializer_list<std::string_view> allowed) const {
  for (const auto& [key, value] : entries_) {
    if (std::find(allowed.begin(), allowed.end(), std::string_view(key)) == allowed.end()) {
      const auto line = line_of_.find(key);
      const std::string where = line == line_of_.end() ? origin_ : origin_ + ":" + std::to_string(line->second);
      throw ParameterError(where + ": unknown key `" + key + "`");
    }
  }
}

void KeyValues::set(std::string key, std::string value) { entries_[std::move(key)] = std::move(value); }

std::string KeyValues::to_string() const {
  std::string out;
  for (const auto& [key, value] : entries_) out += key + " = " + value + "\n";
  return out;
}

std::string format_double(double v) {
  char buf[32];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  (void)ec;
  return std::string(buf, ptr);
}

}  // namespace pamenc
