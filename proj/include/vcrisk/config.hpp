#pragma once

#include <string>

#include <json.hpp>

namespace vcrisk {

// nlohmann::json with map-backed objects: keys are stored sorted, so dump()
// is canonical and hashable.
using Json = nlohmann::json;

/// Full default configuration tree. Every tunable in the project appears
/// here; user files may override any subset but cannot introduce new keys.
Json default_config();

/// Deep-merges `user` over `defaults`. Unknown keys and type mismatches
/// throw ConfigError with the offending key path.
Json merge_config(const Json& defaults, const Json& user, const std::string& path = "");

/// Loads a user config file (or returns pure defaults when path is empty)
/// and merges it over default_config().
Json load_config(const std::string& path);

/// FNV-1a hash of the canonical dump, as fixed-width hex.
std::string config_hash(const Json& effective);

}  // namespace vcrisk
