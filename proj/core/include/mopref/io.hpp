#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

#include "mopref/momdp.hpp"

namespace mopref {

/// Builds a validated instance from the JSON instance document. Structural
/// problems and model violations both raise ValidationError with the field
/// path of the offending entry.
Momdp parse_instance(const nlohmann::json& document);
Momdp parse_instance_text(std::string_view text);
Momdp load_instance(const std::filesystem::path& path);

/// Canonical document: keys sorted, zero transition entries omitted.
nlohmann::json instance_to_json(const Momdp& mdp);

/// Lowercase hex SHA-256.
std::string sha256_hex(std::string_view bytes);
std::string instance_digest(const Momdp& mdp);
std::string policy_digest(const Policy& policy);

/// {"assignment": [{state: action, ...} for each step]}.
nlohmann::json policy_to_json(const Momdp& mdp, const Policy& policy);
/// Accepts the "assignment" form or {"stationary": {state: action}}.
Policy policy_from_json(const Momdp& mdp, const nlohmann::json& document);

nlohmann::json vector_to_json(const Eigen::VectorXd& v);
Eigen::VectorXd vector_from_json(const nlohmann::json& array);

/// Reads and parses a JSON file; throws ValidationError("document") on
/// unreadable or malformed input.
nlohmann::json read_json_file(const std::filesystem::path& path);

}  // namespace mopref
