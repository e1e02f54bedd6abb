#pragma once

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>

#include "json.hpp"

#include "tdlab/common.hpp"

namespace tdlab {

using json = nlohmann::ordered_json;

/// Fixed 17 significant digits; round-trips every double.
inline std::string fmt17(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

namespace detail {
inline void dump17(std::ostream& os, const json& j, int indent, int depth) {
  auto nl = [&](int d) {
    if (indent < 0) return;
    os << '\n' << std::string(static_cast<size_t>(indent * d), ' ');
  };
  switch (j.type()) {
    case json::value_t::object: {
      if (j.empty()) { os << "{}"; return; }
      os << '{';
      bool first = true;
      for (auto it = j.begin(); it != j.end(); ++it) {
        if (!first) os << ',';
        first = false;
        nl(depth + 1);
        os << json(it.key()).dump() << (indent < 0 ? ":" : ": ");
        dump17(os, it.value(), indent, depth + 1);
      }
      nl(depth);
      os << '}';
      return;
    }
    case json::value_t::array: {
      if (j.empty()) { os << "[]"; return; }
      os << '[';
      for (size_t i = 0; i < j.size(); ++i) {
        if (i) os << ',';
        nl(depth + 1);
        dump17(os, j[i], indent, depth + 1);
      }
      nl(depth);
      os << ']';
      return;
    }
    case json::value_t::number_float: {
      double v = j.get<double>();
      // JSON has no nan/inf; null marks a non-finite value
      if (!std::isfinite(v)) os << "null"; else os << fmt17(v);
      return;
    }
    default:
      os << j.dump();
  }
}
}  // namespace detail

/// JSON text with every float printed to 17 significant digits.
inline std::string dump_json17(const json& j, int indent = 2) {
  std::ostringstream os;
  detail::dump17(os, j, indent, 0);
  os << '\n';
  return os.str();
}

inline void write_text(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  require(static_cast<bool>(f), ErrorCode::Io, "cannot open " + path + " for writing");
  f << text;
  require(static_cast<bool>(f), ErrorCode::Io, "write failed: " + path);
}

inline std::string read_text(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  require(static_cast<bool>(f), ErrorCode::Io, "cannot open " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

}  // namespace tdlab
