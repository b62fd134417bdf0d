// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <vector>

#include "sfl/num/tensor.hpp"

namespace sfl::num::ops {

// Elementwise; operands must match in shape and dtype.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double c);

// Broadcasts a length-D vector over the last axis.
Tensor add_bias(const Tensor& a, const Tensor& bias);
Tensor mul_rowvec(const Tensor& a, const Tensor& v);

// (m x k) @ (k x n) -> (m x n), row-major, ascending-k accumulation.
Tensor matmul(const Tensor& a, const Tensor& b);

// 2-D transpose.
Tensor transpose(const Tensor& a);

Tensor reshape(const Tensor& a, std::vector<int64_t> shape);

// Numerically stable softmax over the last axis. -inf logits get weight 0.
Tensor softmax(const Tensor& a);

// Normalizes over the last axis: (x - mean) / sqrt(var + eps), no affine.
// Constant rows map to zeros (variance floored by eps).
Tensor layer_norm(const Tensor& a, double eps = 1e-5);

Tensor gelu(const Tensor& a);
Tensor silu(const Tensor& a);

// Full reduction to a rank-0 scalar.
Tensor mean(const Tensor& a);
Tensor sum_all(const Tensor& a);

// Reduces one axis, keeping the others.
Tensor sum_axis(const Tensor& a, size_t axis);

// Non-overlapping k x k max pooling over the last two axes; extents must be
// divisible by k. argmax (flat input indices, first-wins ties) is filled when
// non-null so the traced op can route gradients.
Tensor max_pool2d(const Tensor& a, int64_t k, std::vector<int64_t>* argmax = nullptr);

// out[i] = a.flat(index_map[i]); index permutations/replications (patchify,
// row slicing, per-frame broadcast) all reduce to this.
Tensor gather_flat(const Tensor& a, std::vector<int64_t> out_shape, const std::vector<int64_t>& index_map);

// Inverse accumulation of gather_flat: out[index_map[i]] += g.flat(i).
Tensor scatter_add_flat(const Tensor& g, std::vector<int64_t> in_shape, const std::vector<int64_t>& index_map);

// Stacks 2-D blocks with equal column counts along axis 0.
Tensor concat_rows(const std::vector<const Tensor*>& parts);

bool allclose(const Tensor& a, const Tensor& b, double atol, double rtol = 0.0);
double max_abs_diff(const Tensor& a, const Tensor& b);

}  // namespace sfl::num::ops
