#include "ktorus/canonical_json.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>

namespace kt {

namespace {

void dump(const nlohmann::ordered_json& j, std::ostream& out, int indent) {
  const std::string pad(indent, ' ');
  const std::string inner(indent + 2, ' ');
  switch (j.type()) {
    case nlohmann::ordered_json::value_t::object: {
      if (j.empty()) {
        out << "{}";
        return;
      }
      out << "{\n";
      bool first = true;
      for (auto it = j.begin(); it != j.end(); ++it) {
        if (!first) out << ",\n";
        first = false;
        out << inner << nlohmann::ordered_json(it.key()).dump() << ": ";
        dump(it.value(), out, indent + 2);
      }
      out << "\n" << pad << "}";
      return;
    }
    case nlohmann::ordered_json::value_t::array: {
      if (j.empty()) {
        out << "[]";
        return;
      }
      out << "[\n";
      for (std::size_t k = 0; k < j.size(); ++k) {
        if (k) out << ",\n";
        out << inner;
        dump(j[k], out, indent + 2);
      }
      out << "\n" << pad << "]";
      return;
    }
    case nlohmann::ordered_json::value_t::number_float: {
      const double v = j.get<double>();
      if (!std::isfinite(v)) {
        out << "null";
        return;
      }
      char buf[32];
      std::snprintf(buf, sizeof buf, "%.17g", v);
      out << buf;
      return;
    }
    default:
      out << j.dump();
  }
}

}  // namespace

std::string canonical_json(const nlohmann::ordered_json& j) {
  std::ostringstream out;
  dump(j, out, 0);
  out << "\n";
  return out.str();
}

}  // namespace kt
