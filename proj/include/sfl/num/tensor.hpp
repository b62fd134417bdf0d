// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

namespace sfl::num {

enum class DType : uint8_t {
    F32 = 0,
    F64 = 1,
};

inline const char* dtype_name(DType dt) { return dt == DType::F32 ? "f32" : "f64"; }

/// Dense row-major tensor holding either fp32 or fp64 values.
/// fp32 is the training precision, fp64 the verification precision.
class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(std::vector<int64_t> shape, DType dt);
    static Tensor full(std::vector<int64_t> shape, double value, DType dt);
    static Tensor scalar(double value, DType dt);
    // Builds an fp64 tensor from explicit values (test / fixture convenience).
    static Tensor from_values(std::vector<int64_t> shape, std::vector<double> values);
    static Tensor from_values_f32(std::vector<int64_t> shape, std::vector<float> values);

    const std::vector<int64_t>& shape() const { return shape_; }
    size_t rank() const { return shape_.size(); }
    int64_t numel() const;
    DType dtype() const { return dtype_; }
    bool defined() const { return !shape_.empty() || numel_nonempty_; }

    int64_t dim(size_t axis) const;
    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
    std::string shape_str() const;

    template <typename T>
    std::span<T> data() {
        return std::span<T>(std::get<std::vector<T>>(store_));
    }
    template <typename T>
    std::span<const T> data() const {
        return std::span<const T>(std::get<std::vector<T>>(store_));
    }

    // Element access through doubles regardless of storage dtype; test and
    // glue convenience, not a hot path.
    double at(std::initializer_list<int64_t> idx) const;
    double flat(int64_t i) const;
    void set_flat(int64_t i, double v);

    Tensor astype(DType dt) const;
    Tensor clone() const { return *this; }
    Tensor reshaped(std::vector<int64_t> new_shape) const;

    bool all_finite() const;
    double max_abs() const;

private:
    std::vector<int64_t> shape_;
    DType dtype_ = DType::F64;
    std::variant<std::vector<float>, std::vector<double>> store_ = std::vector<double>{};
    bool numel_nonempty_ = false;  // distinguishes default Tensor() from rank-0 scalar

    void alloc();
    friend int64_t checked_numel(const std::vector<int64_t>& shape);
};

[[noreturn]] void shape_error(const std::string& op, const Tensor& a, const Tensor& b);
[[noreturn]] void shape_error(const std::string& op, const std::string& detail);

int64_t checked_numel(const std::vector<int64_t>& shape);

/// Invokes fn with a type tag matching the runtime dtype.
template <typename Fn>
decltype(auto) dispatch(DType dt, Fn&& fn) {
    if (dt == DType::F32) {
        return fn(float{});
    }
    return fn(double{});
}

}  // namespace sfl::num
