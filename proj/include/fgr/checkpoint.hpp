#pragma once

#include <string>

#include "fgr/nn.hpp"

namespace fgr {

// Checkpoint binary format, little-endian:
//   magic "FGRCKPT\0", u32 version (1),
//   u32 arch-name length + bytes, u32 num_classes, u32 in_c, u32 in_h, u32 in_w, u32 in_dim,
//   u32 param count, then per parameter (name-sorted):
//     u32 name length + bytes, u8 group (0 backbone / 1 head),
//     u32 ndim, u64 dims..., f64 data...
void save_checkpoint(const std::string& path, const ModelParams& model);
ModelParams load_checkpoint(const std::string& path);

}  // namespace fgr
