#pragma once

#include <string>
#include <utility>
#include <vector>

#include "snn/tensor.hpp"

namespace snn {

// Versioned binary parameter blob: magic "SNNW", u16 version, u32 tensor
// count, then per tensor {u16 name length, UTF-8 name, u8 dtype, u8 rank,
// u32 dims..., raw little-endian data}. dtype 0 = f32, 1 = f64; this
// implementation writes f64 and reads both.
using NamedTensors = std::vector<std::pair<std::string, Tensor>>;

std::vector<std::uint8_t> encode_checkpoint(const NamedTensors& tensors);
NamedTensors decode_checkpoint(const std::vector<std::uint8_t>& bytes);

void save_checkpoint(const std::string& path, const NamedTensors& tensors);
NamedTensors load_checkpoint(const std::string& path);

}  // namespace snn
