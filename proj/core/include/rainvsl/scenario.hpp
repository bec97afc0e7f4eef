#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

#include "rainvsl/domain.hpp"

namespace rainvsl {

/// Reads and validates a scenario document. Missing/unreadable file throws
/// IoError, malformed content SchemaError, broken invariants ValidationError.
ScenarioConfig load_scenario(const std::filesystem::path& path);

/// Same as load_scenario but from an in-memory document.
ScenarioConfig parse_scenario(std::string_view text);

/// Canonical text form; parse_scenario(serialize_scenario(c)) == c.
std::string serialize_scenario(const ScenarioConfig& cfg);

/// Checks every documented invariant; throws ValidationError naming the field.
void validate(const ScenarioConfig& cfg);

/// FNV-1a over the canonical serialization.
std::uint64_t config_hash(const ScenarioConfig& cfg);

std::string_view to_string(RainCapModel model);

}  // namespace rainvsl
