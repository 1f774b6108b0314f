#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "json.hpp"
#include "mmm/numerics/params.hpp"

namespace mmm::nn {

/// Binary container shared by all model checkpoints:
///
///   magic (6 ASCII bytes) | version (1 byte)
///   u32 config length | config JSON (UTF-8)
///   u32 tensor count | per tensor: u32 name length, name, u32 rank, u32 dims...
///   float32 payloads in manifest order
///
/// All integers and floats are little-endian.
struct Checkpoint {
  std::string magic;
  nlohmann::json config;
  std::vector<std::pair<std::string, Tensor>> tensors;

  const Tensor& get(const std::string& name) const;
};

inline constexpr std::uint8_t kCheckpointVersion = 1;

void save_checkpoint(const std::filesystem::path& path, std::string_view magic, const nlohmann::json& config,
                     const ParamSet& params);
Checkpoint load_checkpoint(const std::filesystem::path& path, std::string_view magic);

/// Overwrites every tensor of `params` with the same-named checkpoint tensor.
void restore(ParamSet& params, const Checkpoint& ckpt);

}  // namespace mmm::nn
