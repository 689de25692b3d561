#pragma once

#include <string>

#include <json.hpp>

namespace kt {

/// Indented JSON with keys in insertion order, numbers with 17 significant digits and
/// non-finite numbers as null. Identical input gives identical bytes.
std::string canonical_json(const nlohmann::ordered_json& j);

}  // namespace kt
