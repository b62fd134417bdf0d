// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <functional>
#include <map>
#include <memory>
#include <vector>

#include "sfl/num/ops.hpp"
#include "sfl/num/tensor.hpp"

namespace sfl::num {

/// Handle to a node on a Tape. Only valid for the tape epoch it was created in.
struct Var {
    int32_t id = -1;
    bool valid() const { return id >= 0; }
};

using GradMap = std::map<int32_t, Tensor>;

/// Define-by-run reverse-mode tape. Rebuilt for every training step: record
/// the forward computation, call backward once, then the tape is cleared.
/// Node creation order is a topological order, so the backward sweep visits
/// nodes in reverse creation order exactly once.
class Tape {
public:
    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    /// Differentiable input; its gradient appears in the result of backward().
    Var leaf(Tensor value);
    /// Non-differentiable input.
    Var constant(Tensor value);

    const Tensor& value(Var v) const;
    size_t size() const { return nodes_.size(); }
    uint64_t epoch() const { return epoch_; }

    /// When disabled, ops still compute values (bitwise identical) but record
    /// no backward closures.
    void set_grad_enabled(bool on) { grad_enabled_ = on; }
    bool grad_enabled() const { return grad_enabled_; }

    // ---- traced operations ----
    Var add(Var a, Var b);
    Var sub(Var a, Var b);
    Var mul(Var a, Var b);
    Var scale(Var a, double c);
    Var add_bias(Var a, Var bias);
    Var mul_rowvec(Var a, Var v);
    Var matmul(Var a, Var b);
    Var transpose(Var a);
    Var reshape(Var a, std::vector<int64_t> shape);
    Var softmax(Var a);
    Var layer_norm(Var a, double eps = 1e-5);
    Var gelu(Var a);
    Var silu(Var a);
    Var mean(Var a);
    Var sum_axis(Var a, size_t axis);
    Var max_pool2d(Var a, int64_t k);
    Var gather(Var a, std::vector<int64_t> out_shape, std::shared_ptr<const std::vector<int64_t>> index_map);
    Var concat_rows(const std::vector<Var>& parts);

    /// Fused multi-head attention: q (nq x d), k/v (nk x d), d divisible by
    /// n_heads. additive_mask, when set, is (nq x nk) added to the logits;
    /// -inf entries receive exactly zero attention weight.
    Var multihead_attention(Var q, Var k, Var v, int n_heads,
                            std::shared_ptr<const Tensor> additive_mask = nullptr);

    /// Gradient of a scalar loss w.r.t. every traced leaf (zeros for unused
    /// leaves). The tape is cleared afterwards.
    GradMap backward(Var loss);

    /// Reverse sweep from an arbitrary output with a caller-supplied output
    /// gradient; used where the objective's gradient is known analytically.
    GradMap backward_seed(Var out, const Tensor& seed);

    void clear();

private:
    using BackFn = std::function<void(Tape&, const Tensor& gout)>;

    struct Node {
        Tensor value;
        bool requires_grad = false;
        bool is_leaf = false;
        BackFn backward;
    };

    std::vector<Node> nodes_;
    std::vector<Tensor> grads_;
    bool grad_enabled_ = true;
    uint64_t epoch_ = 0;

    Var push(Tensor value, bool requires_grad, BackFn backward);
    bool rg(Var v) const { return nodes_[static_cast<size_t>(v.id)].requires_grad; }
    void check(Var v) const;
    void accumulate(int32_t id, const Tensor& delta);
    GradMap run_backward(Var out, const Tensor& seed);

    friend struct TapeTestAccess;
};

/// Central finite-difference gradient of f at x (both fp64), for gradient
/// verification oracles.
double finite_difference(const std::function<double(double)>& f, double x, double eps);

}  // namespace sfl::num
