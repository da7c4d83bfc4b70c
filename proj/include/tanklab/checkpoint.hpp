#pragma once

#include <string>

#include <json.hpp>

#include "tanklab/layers.hpp"

namespace tanklab::nn {

/// Round-trip exact model persistence: a JSON manifest carrying shapes,
/// activation names, seed and config, plus base64 little-endian doubles per
/// parameter.
nlohmann::json checkpoint_to_json(const std::string& model_kind, const nlohmann::json& config,
                                  std::uint64_t seed, const ParamSet& params,
                                  const nlohmann::json& extra = nlohmann::json::object());

/// Restores parameter values in place; shapes and names must match.
void checkpoint_restore(const nlohmann::json& ckpt, const ParamSet& params);

void save_checkpoint(const std::string& path, const nlohmann::json& ckpt);
nlohmann::json load_checkpoint(const std::string& path);

std::string base64_encode(const unsigned char* data, std::size_t len);
std::vector<unsigned char> base64_decode(const std::string& text);

/// Serialize an MLP topology (sizes + activations) for the manifest.
nlohmann::json mlp_manifest(const Mlp& mlp);

}  // namespace tanklab::nn
