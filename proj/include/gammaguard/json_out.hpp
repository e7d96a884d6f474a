// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>

#include "json.hpp"

namespace gammaguard {

using ordered_json = nlohmann::ordered_json;

/// Formats a finite double with 17 significant digits (round-trip exact).
std::string format_number(double value);

/// Pretty-prints `doc` with 2-space indentation, keys in insertion order and
/// every floating-point number through format_number. Output ends in '\n'.
std::string dump_json(const ordered_json& doc);

}  // namespace gammaguard
