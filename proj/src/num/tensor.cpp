// SPDX-License-Identifier: Apache-2.0

#include "sfl/num/tensor.hpp"

#include <cmath>
#include <sstream>

namespace sfl::num {

int64_t checked_numel(const std::vector<int64_t>& shape) {
    int64_t n = 1;
    for (int64_t e : shape) {
        if (e < 0) {
            throw std::invalid_argument("tensor extent must be nonnegative, got " + std::to_string(e));
        }
        n *= e;
    }
    return n;
}

void Tensor::alloc() {
    int64_t n = checked_numel(shape_);
    if (dtype_ == DType::F32) {
        store_ = std::vector<float>(static_cast<size_t>(n), 0.0f);
    } else {
        store_ = std::vector<double>(static_cast<size_t>(n), 0.0);
    }
    numel_nonempty_ = true;
}

Tensor Tensor::zeros(std::vector<int64_t> shape, DType dt) {
    Tensor t;
    t.shape_ = std::move(shape);
    t.dtype_ = dt;
    t.alloc();
    return t;
}

Tensor Tensor::full(std::vector<int64_t> shape, double value, DType dt) {
    Tensor t = zeros(std::move(shape), dt);
    dispatch(dt, [&](auto tag) {
        using T = decltype(tag);
        for (auto& v : std::get<std::vector<T>>(t.store_)) v = static_cast<T>(value);
    });
    return t;
}

Tensor Tensor::scalar(double value, DType dt) { return full({}, value, dt); }

Tensor Tensor::from_values(std::vector<int64_t> shape, std::vector<double> values) {
    int64_t n = checked_numel(shape);
    if (static_cast<size_t>(n) != values.size()) {
        throw std::invalid_argument("from_values: element count " + std::to_string(values.size()) +
                                    " does not match shape product " + std::to_string(n));
    }
    Tensor t;
    t.shape_ = std::move(shape);
    t.dtype_ = DType::F64;
    t.store_ = std::move(values);
    t.numel_nonempty_ = true;
    return t;
}

Tensor Tensor::from_values_f32(std::vector<int64_t> shape, std::vector<float> values) {
    int64_t n = checked_numel(shape);
    if (static_cast<size_t>(n) != values.size()) {
        throw std::invalid_argument("from_values_f32: element count mismatch");
    }
    Tensor t;
    t.shape_ = std::move(shape);
    t.dtype_ = DType::F32;
    t.store_ = std::move(values);
    t.numel_nonempty_ = true;
    return t;
}

int64_t Tensor::numel() const { return checked_numel(shape_); }

int64_t Tensor::dim(size_t axis) const {
    if (axis >= shape_.size()) {
        throw std::invalid_argument("dim(" + std::to_string(axis) + ") out of range for rank " +
                                    std::to_string(shape_.size()));
    }
    return shape_[axis];
}

std::string Tensor::shape_str() const {
    std::ostringstream os;
    os << '(';
    for (size_t i = 0; i < shape_.size(); ++i) {
        if (i) os << 'x';
        os << shape_[i];
    }
    os << ')';
    return os.str();
}

double Tensor::at(std::initializer_list<int64_t> idx) const {
    if (idx.size() != shape_.size()) {
        throw std::invalid_argument("at(): index rank mismatch");
    }
    int64_t flat_idx = 0;
    size_t axis = 0;
    for (int64_t i : idx) {
        if (i < 0 || i >= shape_[axis]) {
            throw std::out_of_range("at(): index out of range on axis " + std::to_string(axis));
        }
        flat_idx = flat_idx * shape_[axis] + i;
        ++axis;
    }
    return flat(flat_idx);
}

double Tensor::flat(int64_t i) const {
    return dispatch(dtype_, [&](auto tag) -> double {
        using T = decltype(tag);
        return static_cast<double>(std::get<std::vector<T>>(store_).at(static_cast<size_t>(i)));
    });
}

void Tensor::set_flat(int64_t i, double v) {
    dispatch(dtype_, [&](auto tag) {
        using T = decltype(tag);
        std::get<std::vector<T>>(store_).at(static_cast<size_t>(i)) = static_cast<T>(v);
    });
}

Tensor Tensor::astype(DType dt) const {
    if (dt == dtype_) return *this;
    Tensor out = Tensor::zeros(shape_, dt);
    int64_t n = numel();
    if (dt == DType::F32) {
        auto src = data<double>();
        auto dst = out.data<float>();
        for (int64_t i = 0; i < n; ++i) dst[i] = static_cast<float>(src[i]);
    } else {
        auto src = data<float>();
        auto dst = out.data<double>();
        for (int64_t i = 0; i < n; ++i) dst[i] = static_cast<double>(src[i]);
    }
    return out;
}

Tensor Tensor::reshaped(std::vector<int64_t> new_shape) const {
    if (checked_numel(new_shape) != numel()) {
        throw std::invalid_argument("reshape: cannot view " + shape_str() + " with " +
                                    std::to_string(numel()) + " elements as new shape with " +
                                    std::to_string(checked_numel(new_shape)) + " elements");
    }
    Tensor out = *this;
    out.shape_ = std::move(new_shape);
    return out;
}

bool Tensor::all_finite() const {
    return dispatch(dtype_, [&](auto tag) {
        using T = decltype(tag);
        for (T v : std::get<std::vector<T>>(store_)) {
            if (!std::isfinite(static_cast<double>(v))) return false;
        }
        return true;
    });
}

double Tensor::max_abs() const {
    return dispatch(dtype_, [&](auto tag) {
        using T = decltype(tag);
        double m = 0.0;
        for (T v : std::get<std::vector<T>>(store_)) {
            m = std::max(m, std::abs(static_cast<double>(v)));
        }
        return m;
    });
}

void shape_error(const std::string& op, const Tensor& a, const Tensor& b) {
    throw std::invalid_argument(op + ": incompatible shapes " + a.shape_str() + " and " + b.shape_str());
}

void shape_error(const std::string& op, const std::string& detail) {
    throw std::invalid_argument(op + ": " + detail);
}

}  // namespace sfl::num
