#pragma once

#include <filesystem>

#include <json.hpp>

#include "carve/nn/mlp.hpp"

namespace carve::serialize {

// Shared checkpoint envelope: {"kind": ..., "config": ..., "tensors": ...}
// plus module-specific fields. Weight arrays serialize as shortest
// round-trip decimals, so load(save(m)) is bit-exact.

nlohmann::json tensor_to_json(const diff::Tensor& t);
diff::Tensor tensor_from_json(const nlohmann::json& j);

nlohmann::json mlp_to_json(const nn::Mlp& net);
nn::Mlp mlp_from_json(const nlohmann::json& j);

nlohmann::json standardizer_to_json(const nn::Standardizer& s);
nn::Standardizer standardizer_from_json(const nlohmann::json& j);

void save_json(const std::filesystem::path& path, const nlohmann::json& j);
// Throws MissingArtifactError when the file does not exist, IoError when unreadable.
nlohmann::json load_json(const std::filesystem::path& path);

}  // namespace carve::serialize
