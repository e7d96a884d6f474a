// SPDX-License-Identifier: Apache-2.0

#include "gammaguard/json_out.hpp"

#include <cmath>
#include <cstdio>
#include <stdexcept>

namespace gammaguard {

std::string format_number(double value) {
  if (!std::isfinite(value)) {
    throw std::domain_error("cannot serialize a non-finite number");
  }
  if (value == 0.0) return "0";  // also folds -0
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", value);
  return buf;
}

namespace {

void write(const ordered_json& v, int depth, std::string& out) {
  const std::string pad(static_cast<std::size_t>(depth) * 2, ' ');
  const std::string inner(static_cast<std::size_t>(depth + 1) * 2, ' ');
  switch (v.type()) {
    case ordered_json::value_t::object: {
      if (v.empty()) {
        out += "{}";
        return;
      }
      out += "{\n";
      bool first = true;
      for (auto it = v.begin(); it != v.end(); ++it) {
        if (!first) out += ",\n";
        first = false;
        out += inner;
        out += ordered_json(it.key()).dump();
        out += ": ";
        write(it.value(), depth + 1, out);
      }
      out += "\n" + pad + "}";
      return;
    }
    case ordered_json::value_t::array: {
      if (v.empty()) {
        out += "[]";
        return;
      }
      // Arrays of scalars stay on one line.
      bool scalars = true;
      for (const auto& e : v) scalars = scalars && !e.is_structured();
      if (scalars) {
        out += "[";
        for (std::size_t i = 0; i < v.size(); ++i) {
          if (i) out += ", ";
          write(v[i], depth + 1, out);
        }
        out += "]";
        return;
      }
      out += "[\n";
      for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) out += ",\n";
        out += inner;
        write(v[i], depth + 1, out);
      }
      out += "\n" + pad + "]";
      return;
    }
    case ordered_json::value_t::number_float:
      out += format_number(v.get<double>());
      return;
    default:
      out += v.dump();
      return;
  }
}

}  // namespace

std::string dump_json(const ordered_json& doc) {
  std::string out;
  write(doc, 0, out);
  out += "\n";
  return out;
}

}  // namespace gammaguard
