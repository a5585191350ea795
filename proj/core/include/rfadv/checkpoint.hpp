#pragma once

// RFWT parameter checkpoints:
//   "RFWT" | u32 version | u32 tensor_count |
//   per tensor: u8 name_len | name | u32 rank | rank x u32 dims | float32 data
// All integers and floats are little-endian.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "rfadv/tensor.hpp"

namespace rfadv {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

std::string encode_checkpoint(const std::vector<NamedTensor>& tensors);
std::vector<NamedTensor> decode_checkpoint(const std::string& bytes);

void save_checkpoint(const std::filesystem::path& path, const std::vector<NamedTensor>& tensors);
std::vector<NamedTensor> load_checkpoint(const std::filesystem::path& path);

}  // namespace rfadv
