// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <map>
#include <string>
#include <vector>

#include "sfl/num/checkpoint.hpp"
#include "sfl/num/tape.hpp"
#include "sfl/num/tensor.hpp"

namespace sfl::num {

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// Named parameter tensors with Adam state, in stable insertion order.
class ParamStore {
public:
    /// Registration order defines checkpoint and binding order.
    size_t add(const std::string& name, Tensor init);

    bool has(const std::string& name) const { return index_.count(name) > 0; }
    size_t index_of(const std::string& name) const;
    Tensor& value(const std::string& name);
    const Tensor& value(const std::string& name) const;
    size_t count() const { return entries_.size(); }
    const std::string& name_at(size_t i) const { return entries_[i].name; }
    Tensor& value_at(size_t i) { return entries_[i].value; }
    const Tensor& value_at(size_t i) const { return entries_[i].value; }
    int64_t total_scalars() const;

    /// Registers every parameter on the tape, as leaves when trainable and as
    /// constants otherwise. One binding per tape epoch.
    struct Binding {
        std::vector<Var> vars;
        bool trainable = false;
    };
    Binding bind(Tape& tape, bool trainable) const;

    /// Adam update from the gradients of a bound tape. step_t is 1-based.
    void adam_step(const Binding& binding, const GradMap& grads, const AdamConfig& cfg, int64_t step_t);

    /// Plain SGD update (used by scene fitting and toy fixtures).
    void sgd_step(const Binding& binding, const GradMap& grads, double lr);

    void reset_adam();

    // Parameters plus Adam moments as named tensors ("p:", "m:", "v:" prefixes).
    NamedTensors snapshot(bool include_adam) const;
    void restore(const NamedTensors& tensors);

private:
    struct Entry {
        std::string name;
        Tensor value;
        Tensor adam_m, adam_v;
    };
    std::vector<Entry> entries_;
    std::map<std::string, size_t> index_;
};

}  // namespace sfl::num
