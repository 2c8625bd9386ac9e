#pragma once

#include <string>
#include <vector>

#include <json.hpp>

namespace poro {

/// Structural validation against a JSON-schema subset: type, required,
/// properties, items, enum. Returns human-readable violations (empty = valid).
std::vector<std::string> validate_schema(const nlohmann::json& value,
                                         const nlohmann::json& schema,
                                         const std::string& path = "$");

} // namespace poro
