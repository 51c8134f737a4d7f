#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "tamrl/tensor.hpp"

namespace tamrl {

// Flat key -> tensor archive. Binary layout (little-endian):
//   magic "TAMCKPT1", u32 entry count, then per entry:
//   u32 key length, key bytes, u32 ndim, i32 dims..., f64 values (row-major).
using TensorMap = std::vector<std::pair<std::string, Tensor>>;

void save_checkpoint(const std::string& path, const TensorMap& entries);
TensorMap load_checkpoint(const std::string& path);

// Copies archive values into existing parameter tensors, matched by key.
// Throws on missing keys or shape mismatches.
void restore_into(const TensorMap& archive, const TensorMap& params);

// FNV-1a over the raw value bytes of every entry, in order.
uint64_t params_checksum(const TensorMap& params);

}  // namespace tamrl
