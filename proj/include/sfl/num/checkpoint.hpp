// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <utility>
#include <vector>

#include "sfl/num/tensor.hpp"

namespace sfl::num {

using NamedTensors = std::vector<std::pair<std::string, Tensor>>;

// Container layout (little-endian): magic "SPFL", version u32, then per
// tensor: name-length u32, utf-8 name, dtype tag u32 (0 = f32, 1 = f64),
// rank u32, extents u64 each, raw IEEE values. Tensors are read until EOF.
// Round trips are bit-exact.
void write_checkpoint(const std::string& path, const NamedTensors& tensors);
NamedTensors read_checkpoint(const std::string& path);

}  // namespace sfl::num
