// SPDX-License-Identifier: Apache-2.0

#include "sfl/num/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace sfl::num::ops {

namespace {

void require_same(const char* op, const Tensor& a, const Tensor& b) {
    if (!a.same_shape(b)) shape_error(op, a, b);
    if (a.dtype() != b.dtype()) {
        shape_error(op, std::string("dtype mismatch ") + dtype_name(a.dtype()) + " vs " + dtype_name(b.dtype()));
    }
}

template <typename T, typename Fn>
Tensor map2(const Tensor& a, const Tensor& b, Fn&& fn) {
    Tensor out = Tensor::zeros(a.shape(), a.dtype());
    auto pa = a.data<T>();
    auto pb = b.data<T>();
    auto po = out.data<T>();
    int64_t n = a.numel();
    for (int64_t i = 0; i < n; ++i) po[i] = fn(pa[i], pb[i]);
    return out;
}

template <typename T, typename Fn>
Tensor map1(const Tensor& a, Fn&& fn) {
    Tensor out = Tensor::zeros(a.shape(), a.dtype());
    auto pa = a.data<T>();
    auto po = out.data<T>();
    int64_t n = a.numel();
    for (int64_t i = 0; i < n; ++i) po[i] = fn(pa[i]);
    return out;
}

// Splits shape into (rows, cols) where cols is the last extent.
std::pair<int64_t, int64_t> rows_cols(const Tensor& a, const char* op) {
    if (a.rank() == 0) shape_error(op, "rank-0 input");
    int64_t cols = a.shape().back();
    int64_t rows = cols == 0 ? 0 : a.numel() / cols;
    return {rows, cols};
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
    require_same("add", a, b);
    return dispatch(a.dtype(), [&](auto tag) {
        using T = decltype(tag);
        return map2<T>(a, b, [](T x, T y) { return x + y; });
    });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    require_same("sub", a, b);
    return dispatch(a.dtype(), [&](auto tag) {
        using T = decltype(tag);
        return map2<T>(a, b, [](T x, T y) { return x - y; });
    });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    require_same("mul", a, b);
    return dispatch(a.dtype(), [&](auto tag) {
        using T = decltype(tag);
        return map2<T>(a, b, [](T x, T y) { return x * y; });
    });
}

Tensor scale(const Tensor& a, double c) {
    return dispatch(a.dtype(), [&](auto tag) {
        using T = decltype(tag);
        T cv = static_cast<T>(c);
        return map1<T>(a, [cv](T x) { return x * cv; });
    });
}

Tensor add_bias(const Tensor& a, const Tensor& bias) {
    auto [rows, cols] = rows_cols(a, "add_bias");
    if (bias.rank() != 1 || bias.dim(0) != cols) shape_error("add_bias", a, bias);
    if (a.dtype() != bias.dtype()) shape_error("add_bias", "dtype mismatch");
    Tensor out = Tensor::zeros(a.shape(), a.dtype());
    dispatch(a.dtype(), [&](auto tag) {
        using T = decltype(tag);
        auto pa = a.data<T>();
        auto pb = bias.data<T>();
        auto po = out.data<T>();
        for (int64_t r = 0; r < rows; ++r) {
            for (int64_t c = 0; c < cols; ++c) po[r * cols + c] = pa[r * cols + c] + pb[c];
        }
    });
    return out;
}

Tensor mul_rowvec(const Tensor& a, const Tensor& v) {
    auto [rows, cols] = rows_cols(a, "mul_rowvec");
    if (v.rank() != 1 || v.dim(0) != cols) shape_error("mul_rowvec", a, v);
    if (a.dtype() != v.dtype()) shape_error("mul_rowvec", "dtype mismatch");
    Tensor out = Tensor::zeros(a.shape(), a.dtype());
    dispatch(a.dtype(), [&](auto tag) {
        using T = decltype(tag);
        auto pa = a.data<T>();
        auto pv = v.data<T>();
        auto po = out.data<T>();
        for (int64_t r = 0; r < rows; ++r) {
            for (int64_t c = 0; c < cols; ++c) po[r * cols + c] = pa[r * cols + c] * pv[c];
        }
    });
    return out;
}

namespace {

// Row-major (m x k) @ (k x n); per output element the k-accumulation is
// sequential ascending, matching the naive triple loop. target_clones picks a
// wider-SIMD body at runtime where available.
template <typename T>
#if defined(__x86_64__) && defined(__GNUC__)
__attribute__((target_clones("avx2,fma", "avx2", "default")))
#endif
void matmul_kernel(const T* __restrict__ pa, const T* __restrict__ pb, T* __restrict__ po, int64_t m,
                   int64_t k, int64_t n) {
    for (int64_t i = 0; i < m; ++i) {
        T* __restrict__ orow = po + i * n;
        const T* __restrict__ arow = pa + i * k;
        for (int64_t kk = 0; kk < k; ++kk) {
            T av = arow[kk];
            const T* __restrict__ brow = pb + kk * n;
            for (int64_t j = 0; j < n; ++j) orow[j] += av * brow[j];
        }
    }
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) shape_error("matmul", a, b);
    if (a.dtype() != b.dtype()) shape_error("matmul", "dtype mismatch");
    int64_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
    Tensor out = Tensor::zeros({m, n}, a.dtype());
    dispatch(a.dtype(), [&](auto tag) {
        using T = decltype(tag);
        matmul_kernel<T>(a.data<T>().data(), b.data<T>().data(), out.data<T>().data(), m, k, n);
    });
    return out;
}

Tensor transpose(const Tensor& a) {
    if (a.rank() != 2) shape_error("transpose", "expects rank 2, got " + a.shape_str());
    int64_t m = a.dim(0), n = a.dim(1);
    Tensor out = Tensor::zeros({n, m}, a.dtype());
    dispatch(a.dtype(), [&](auto tag) {
        using T = decltype(tag);
        auto pa = a.data<T>();
        auto po = out.data<T>();
        for (int64_t i = 0; i < m; ++i) {
            for (int64_t j = 0; j < n; ++j) po[j * m + i] = pa[i * n + j];
        }
    });
    return out;
}

Tensor reshape(const Tensor& a, std::vector<int64_t> shape) { return a.reshaped(std::move(shape)); }

Tensor softmax(const Tensor& a) {
    auto [rows, cols] = rows_cols(a, "softmax");
    Tensor out = Tensor::zeros(a.shape(), a.dtype());
    dispatch(a.dtype(), [&](auto tag) {
        using T = decltype(tag);
        auto pa = a.data<T>();
        auto po = out.data<T>();
        for (int64_t r = 0; r < rows; ++r) {
            const T* x = pa.data() + r * cols;
            T* y = po.data() + r * cols;
            T mx = -std::numeric_limits<T>::infinity();
            for (int64_t c = 0; c < cols; ++c) mx = std::max(mx, x[c]);
            T denom = T(0);
            for (int64_t c = 0; c < cols; ++c) {
                y[c] = std::exp(x[c] - mx);
                denom += y[c];
            }
            for (int64_t c = 0; c < cols; ++c) y[c] /= denom;
        }
    });
    return out;
}

Tensor layer_norm(const Tensor& a, double eps) {
    auto [rows, cols] = rows_cols(a, "layer_norm");
    Tensor out = Tensor::zeros(a.shape(), a.dtype());
    dispatch(a.dtype(), [&](auto tag) {
        using T = decltype(tag);
        auto pa = a.data<T>();
        auto po = out.data<T>();
        for (int64_t r = 0; r < rows; ++r) {
            const T* x = pa.data() + r * cols;
            T* y = po.data() + r * cols;
            T mu = T(0);
            for (int64_t c = 0; c < cols; ++c) mu += x[c];
            mu /= static_cast<T>(cols);
            T var = T(0);
            for (int64_t c = 0; c < cols; ++c) var += (x[c] - mu) * (x[c] - mu);
            var /= static_cast<T>(cols);
            T inv = T(1) / std::sqrt(var + static_cast<T>(eps));
            for (int64_t c = 0; c < cols; ++c) y[c] = (x[c] - mu) * inv;
        }
    });
    return out;
}

Tensor gelu(const Tensor& a) {
    return dispatch(a.dtype(), [&](auto tag) {
        using T = decltype(tag);
        return map1<T>(a, [](T x) {
            return static_cast<T>(0.5 * static_cast<double>(x) *
                                  (1.0 + std::erf(static_cast<double>(x) * 0x1.6a09e667f3bcdp-1)));
        });
    });
}

Tensor silu(const Tensor& a) {
    return dispatch(a.dtype(), [&](auto tag) {
        using T = decltype(tag);
        return map1<T>(a, [](T x) { return static_cast<T>(static_cast<double>(x) / (1.0 + std::exp(-static_cast<double>(x)))); });
    });
}

Tensor mean(const Tensor& a) {
    int64_t n = a.numel();
    if (n == 0) shape_error("mean", "empty tensor");
    return dispatch(a.dtype(), [&](auto tag) {
        using T = decltype(tag);
        T acc = T(0);
        for (T v : a.data<T>()) acc += v;
        return Tensor::scalar(static_cast<double>(acc / static_cast<T>(n)), a.dtype());
    });
}

Tensor sum_all(const Tensor& a) {
    return dispatch(a.dtype(), [&](auto tag) {
        using T = decltype(tag);
        T acc = T(0);
        for (T v : a.data<T>()) acc += v;
        return Tensor::scalar(static_cast<double>(acc), a.dtype());
    });
}

Tensor sum_axis(const Tensor& a, size_t axis) {
    if (axis >= a.rank()) shape_error("sum_axis", "axis " + std::to_string(axis) + " out of range for " + a.shape_str());
    const auto& sh = a.shape();
    int64_t outer = 1, inner = 1, reduce = sh[axis];
    for (size_t i = 0; i < axis; ++i) outer *= sh[i];
    for (size_t i = axis + 1; i < sh.size(); ++i) inner *= sh[i];
    std::vector<int64_t> out_shape;
    for (size_t i = 0; i < sh.size(); ++i) {
        if (i != axis) out_shape.push_back(sh[i]);
    }
    Tensor out = Tensor::zeros(out_shape, a.dtype());
    dispatch(a.dtype(), [&](auto tag) {
        using T = decltype(tag);
        auto pa = a.data<T>();
        auto po = out.data<T>();
        for (int64_t o = 0; o < outer; ++o) {
            for (int64_t r = 0; r < reduce; ++r) {
                const T* src = pa.data() + (o * reduce + r) * inner;
                T* dst = po.data() + o * inner;
                for (int64_t i = 0; i < inner; ++i) dst[i] += src[i];
            }
        }
    });
    return out;
}

Tensor max_pool2d(const Tensor& a, int64_t k, std::vector<int64_t>* argmax) {
    if (a.rank() < 2) shape_error("max_pool2d", "needs at least 2 axes, got " + a.shape_str());
    if (k <= 0) shape_error("max_pool2d", "window must be positive");
    const auto& sh = a.shape();
    int64_t w = sh.back();
    int64_t h = sh[sh.size() - 2];
    if (h % k != 0 || w % k != 0) {
        shape_error("max_pool2d", "extents " + std::to_string(h) + "x" + std::to_string(w) +
                                      " not divisible by window " + std::to_string(k));
    }
    int64_t batch = a.numel() / (h * w);
    int64_t oh = h / k, ow = w / k;
    std::vector<int64_t> out_shape(sh.begin(), sh.end() - 2);
    out_shape.push_back(oh);
    out_shape.push_back(ow);
    Tensor out = Tensor::zeros(out_shape, a.dtype());
    if (argmax) argmax->assign(static_cast<size_t>(out.numel()), 0);
    dispatch(a.dtype(), [&](auto tag) {
        using T = decltype(tag);
        auto pa = a.data<T>();
        auto po = out.data<T>();
        for (int64_t b = 0; b < batch; ++b) {
            const T* src = pa.data() + b * h * w;
            for (int64_t oy = 0; oy < oh; ++oy) {
                for (int64_t ox = 0; ox < ow; ++ox) {
                    T best = src[(oy * k) * w + ox * k];
                    int64_t best_idx = (oy * k) * w + ox * k;
                    for (int64_t dy = 0; dy < k; ++dy) {
                        for (int64_t dx = 0; dx < k; ++dx) {
                            int64_t idx = (oy * k + dy) * w + ox * k + dx;
                            if (src[idx] > best) {
                                best = src[idx];
                                best_idx = idx;
                            }
                        }
                    }
                    int64_t oidx = b * oh * ow + oy * ow + ox;
                    po[oidx] = best;
                    if (argmax) (*argmax)[static_cast<size_t>(oidx)] = b * h * w + best_idx;
                }
            }
        }
    });
    return out;
}

Tensor gather_flat(const Tensor& a, std::vector<int64_t> out_shape, const std::vector<int64_t>& index_map) {
    int64_t out_n = checked_numel(out_shape);
    if (static_cast<size_t>(out_n) != index_map.size()) shape_error("gather_flat", "index map size mismatch");
    Tensor out = Tensor::zeros(std::move(out_shape), a.dtype());
    int64_t in_n = a.numel();
    dispatch(a.dtype(), [&](auto tag) {
        using T = decltype(tag);
        auto pa = a.data<T>();
        auto po = out.data<T>();
        for (int64_t i = 0; i < out_n; ++i) {
            int64_t src = index_map[static_cast<size_t>(i)];
            if (src < 0 || src >= in_n) shape_error("gather_flat", "index out of range");
            po[i] = pa[src];
        }
    });
    return out;
}

Tensor scatter_add_flat(const Tensor& g, std::vector<int64_t> in_shape, const std::vector<int64_t>& index_map) {
    if (static_cast<size_t>(g.numel()) != index_map.size()) shape_error("scatter_add_flat", "index map size mismatch");
    Tensor out = Tensor::zeros(std::move(in_shape), g.dtype());
    int64_t n = g.numel();
    int64_t in_n = out.numel();
    dispatch(g.dtype(), [&](auto tag) {
        using T = decltype(tag);
        auto pg = g.data<T>();
        auto po = out.data<T>();
        for (int64_t i = 0; i < n; ++i) {
            int64_t dst = index_map[static_cast<size_t>(i)];
            if (dst < 0 || dst >= in_n) shape_error("scatter_add_flat", "index out of range");
            po[dst] += pg[i];
        }
    });
    return out;
}

Tensor concat_rows(const std::vector<const Tensor*>& parts) {
    if (parts.empty()) shape_error("concat_rows", "no inputs");
    int64_t cols = parts[0]->dim(1);
    DType dt = parts[0]->dtype();
    int64_t rows = 0;
    for (const Tensor* p : parts) {
        if (p->rank() != 2 || p->dim(1) != cols || p->dtype() != dt) {
            shape_error("concat_rows", "parts must be rank-2 with equal columns and dtype");
        }
        rows += p->dim(0);
    }
    Tensor out = Tensor::zeros({rows, cols}, dt);
    dispatch(dt, [&](auto tag) {
        using T = decltype(tag);
        auto po = out.data<T>();
        int64_t r = 0;
        for (const Tensor* p : parts) {
            auto pp = p->data<T>();
            std::copy(pp.begin(), pp.end(), po.begin() + r * cols);
            r += p->dim(0);
        }
    });
    return out;
}

bool allclose(const Tensor& a, const Tensor& b, double atol, double rtol) {
    if (!a.same_shape(b)) return false;
    int64_t n = a.numel();
    for (int64_t i = 0; i < n; ++i) {
        double x = a.flat(i), y = b.flat(i);
        if (std::isinf(x) && std::isinf(y) && (x > 0) == (y > 0)) continue;
        if (std::abs(x - y) > atol + rtol * std::abs(y)) return false;
    }
    return true;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
    if (!a.same_shape(b)) shape_error("max_abs_diff", a, b);
    double m = 0.0;
    int64_t n = a.numel();
    for (int64_t i = 0; i < n; ++i) m = std::max(m, std::abs(a.flat(i) - b.flat(i)));
    return m;
}

}  // namespace sfl::num::ops
