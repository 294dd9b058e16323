#pragma once

#include <optional>
#include <string>

#include "food4all/domain.hpp"

namespace food4all {

// Validates against the JSON Schema subset the tool specs use: type,
// properties, required, additionalProperties (bool), items, enum, minimum,
// maximum, minLength, minItems, anyOf, oneOf. Returns the first violation as
// "<json pointer>: <reason>", or nullopt when the document conforms.
std::optional<std::string> validate_schema(const json& schema, const json& doc);

}  // namespace food4all
