// SPDX-License-Identifier: Apache-2.0

#include "sfl/num/params.hpp"

#include <cmath>

namespace sfl::num {

size_t ParamStore::add(const std::string& name, Tensor init) {
    if (index_.count(name)) throw std::invalid_argument("ParamStore: duplicate parameter '" + name + "'");
    Entry e;
    e.name = name;
    e.adam_m = Tensor::zeros(init.shape(), init.dtype());
    e.adam_v = Tensor::zeros(init.shape(), init.dtype());
    e.value = std::move(init);
    entries_.push_back(std::move(e));
    index_[name] = entries_.size() - 1;
    return entries_.size() - 1;
}

size_t ParamStore::index_of(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw std::invalid_argument("ParamStore: unknown parameter '" + name + "'");
    return it->second;
}

Tensor& ParamStore::value(const std::string& name) { return entries_[index_of(name)].value; }
const Tensor& ParamStore::value(const std::string& name) const { return entries_[index_of(name)].value; }

int64_t ParamStore::total_scalars() const {
    int64_t n = 0;
    for (const auto& e : entries_) n += e.value.numel();
    return n;
}

ParamStore::Binding ParamStore::bind(Tape& tape, bool trainable) const {
    Binding b;
    b.trainable = trainable;
    b.vars.reserve(entries_.size());
    for (const auto& e : entries_) {
        b.vars.push_back(trainable ? tape.leaf(e.value) : tape.constant(e.value));
    }
    return b;
}

void ParamStore::adam_step(const Binding& binding, const GradMap& grads, const AdamConfig& cfg, int64_t step_t) {
    double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step_t));
    double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step_t));
    for (size_t i = 0; i < entries_.size(); ++i) {
        auto it = grads.find(binding.vars[i].id);
        if (it == grads.end()) continue;
        Entry& e = entries_[i];
        const Tensor& g = it->second;
        dispatch(e.value.dtype(), [&](auto tag) {
            using T = decltype(tag);
            auto pw = e.value.data<T>();
            auto pm = e.adam_m.data<T>();
            auto pv = e.adam_v.data<T>();
            auto pg = g.data<T>();
            T b1 = static_cast<T>(cfg.beta1), b2 = static_cast<T>(cfg.beta2);
            for (int64_t j = 0; j < e.value.numel(); ++j) {
                pm[j] = b1 * pm[j] + (T(1) - b1) * pg[j];
                pv[j] = b2 * pv[j] + (T(1) - b2) * pg[j] * pg[j];
                double mhat = static_cast<double>(pm[j]) / bc1;
                double vhat = static_cast<double>(pv[j]) / bc2;
                pw[j] -= static_cast<T>(cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps));
            }
        });
    }
}

void ParamStore::sgd_step(const Binding& binding, const GradMap& grads, double lr) {
    for (size_t i = 0; i < entries_.size(); ++i) {
        auto it = grads.find(binding.vars[i].id);
        if (it == grads.end()) continue;
        Entry& e = entries_[i];
        const Tensor& g = it->second;
        dispatch(e.value.dtype(), [&](auto tag) {
            using T = decltype(tag);
            auto pw = e.value.data<T>();
            auto pg = g.data<T>();
            for (int64_t j = 0; j < e.value.numel(); ++j) pw[j] -= static_cast<T>(lr) * pg[j];
        });
    }
}

void ParamStore::reset_adam() {
    for (auto& e : entries_) {
        e.adam_m = Tensor::zeros(e.value.shape(), e.value.dtype());
        e.adam_v = Tensor::zeros(e.value.shape(), e.value.dtype());
    }
}

NamedTensors ParamStore::snapshot(bool include_adam) const {
    NamedTensors out;
    for (const auto& e : entries_) out.emplace_back("p:" + e.name, e.value);
    if (include_adam) {
        for (const auto& e : entries_) out.emplace_back("m:" + e.name, e.adam_m);
        for (const auto& e : entries_) out.emplace_back("v:" + e.name, e.adam_v);
    }
    return out;
}

void ParamStore::restore(const NamedTensors& tensors) {
    for (const auto& [tagged_name, t] : tensors) {
        if (tagged_name.size() < 2 || tagged_name[1] != ':') continue;
        char kind = tagged_name[0];
        std::string name = tagged_name.substr(2);
        auto it = index_.find(name);
        if (it == index_.end()) {
            throw std::runtime_error("ParamStore: checkpoint tensor '" + name + "' has no matching parameter");
        }
        Entry& e = entries_[it->second];
        if (!e.value.same_shape(t)) {
            throw std::runtime_error("ParamStore: shape mismatch restoring '" + name + "'");
        }
        if (kind == 'p') {
            e.value = t;
        } else if (kind == 'm') {
            e.adam_m = t;
        } else if (kind == 'v') {
            e.adam_v = t;
        }
    }
}

}  // namespace sfl::num
