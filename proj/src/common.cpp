#include "relx/common.hpp"

#include <cctype>
#include <charconv>
#include <cstdio>
#include <cstdlib>
#include <cmath>

namespace relx {

std::string format_double(double x) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), x);
  if (ec != std::errc()) {
    std::snprintf(buf, sizeof(buf), "%.17g", x);
    return std::string(buf);
  }
  return std::string(buf, ptr);
}

double parse_double(std::string_view s, const std::string& what) {
  // from_chars for double is incomplete in some libstdc++ versions; strtod
  // with explicit end checking is equivalent here.
  std::string tmp(s);
  if (tmp.empty()) throw DataError(what + ": empty numeric field");
  char* end = nullptr;
  const double v = std::strtod(tmp.c_str(), &end);
  if (end != tmp.c_str() + tmp.size()) {
    throw DataError(what + ": malformed number '" + tmp + "'");
  }
  return v;
}

long parse_long(std::string_view s, const std::string& what) {
  long v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw DataError(what + ": malformed integer '" + std::string(s) + "'");
  }
  return v;
}

std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (std::size_t i = 0; i <= s.size(); ++i) {
    if (i == s.size() || s[i] == sep) {
      out.emplace_back(s.substr(start, i - start));
      start = i + 1;
    }
  }
  return out;
}

std::string join(const std::vector<std::string>& parts, std::string_view sep) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i) out += sep;
    out += parts[i];
  }
  return out;
}

std::string lowercase_ascii(std::string_view s) {
  std::string out(s);
  for (char& c : out) {
    c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  }
  return out;
}

}  // namespace relx
