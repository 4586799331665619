#pragma once

#include <cmath>
#include <cstdio>
#include <ostream>
#include <string>
#include <vector>

#include "json.hpp"

namespace nevai::io {

using Json = nlohmann::ordered_json;

inline std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// RFC 4180 field quoting.
inline std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + '"';
}

class CsvWriter {
 public:
  explicit CsvWriter(std::ostream& os) : os_(os) {}

  CsvWriter& header(const std::vector<std::string>& names) {
    for (const auto& n : names) cell(n);
    return end();
  }
  CsvWriter& cell(const std::string& s) {
    sep();
    os_ << csv_field(s);
    return *this;
  }
  CsvWriter& cell(double v) {
    sep();
    os_ << format_double(v);
    return *this;
  }
  CsvWriter& cell(std::size_t v) {
    sep();
    os_ << v;
    return *this;
  }
  CsvWriter& end() {
    os_ << '\n';
    first_ = true;
    return *this;
  }

 private:
  void sep() {
    if (!first_) os_ << ',';
    first_ = false;
  }
  std::ostream& os_;
  bool first_ = true;
};

// Non-finite doubles become strings so the document stays valid JSON.
inline Json number(double v) {
  if (std::isfinite(v)) return v;
  return format_double(v);
}

inline Json numbers(const std::vector<double>& v) {
  Json a = Json::array();
  for (double x : v) a.push_back(number(x));
  return a;
}

}  // namespace nevai::io
