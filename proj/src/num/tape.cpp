// SPDX-License-Identifier: Apache-2.0

#include "sfl/num/tape.hpp"

#include <cmath>
#include <limits>

namespace sfl::num {

namespace {

void add_into(Tensor& acc, const Tensor& delta) {
    if (!acc.defined()) {
        acc = delta;
        return;
    }
    if (!acc.same_shape(delta) || acc.dtype() != delta.dtype()) shape_error("grad accumulate", acc, delta);
    dispatch(acc.dtype(), [&](auto tag) {
        using T = decltype(tag);
        auto pa = acc.data<T>();
        auto pd = delta.data<T>();
        for (int64_t i = 0; i < acc.numel(); ++i) pa[i] += pd[i];
    });
}

// Sums a (rows x cols) gradient over rows into a length-cols vector.
Tensor col_sum(const Tensor& g) {
    int64_t cols = g.shape().back();
    int64_t rows = g.numel() / cols;
    Tensor out = Tensor::zeros({cols}, g.dtype());
    dispatch(g.dtype(), [&](auto tag) {
        using T = decltype(tag);
        auto pg = g.data<T>();
        auto po = out.data<T>();
        for (int64_t r = 0; r < rows; ++r) {
            for (int64_t c = 0; c < cols; ++c) po[c] += pg[r * cols + c];
        }
    });
    return out;
}

}  // namespace

Var Tape::push(Tensor value, bool requires_grad, BackFn backward) {
    Node node;
    node.value = std::move(value);
    node.requires_grad = requires_grad && grad_enabled_;
    node.backward = node.requires_grad ? std::move(backward) : BackFn{};
    nodes_.push_back(std::move(node));
    return Var{static_cast<int32_t>(nodes_.size() - 1)};
}

Var Tape::leaf(Tensor value) {
    Var v = push(std::move(value), true, {});
    nodes_.back().is_leaf = true;
    return v;
}

Var Tape::constant(Tensor value) { return push(std::move(value), false, {}); }

const Tensor& Tape::value(Var v) const {
    check(v);
    return nodes_[static_cast<size_t>(v.id)].value;
}

void Tape::check(Var v) const {
    if (!v.valid() || static_cast<size_t>(v.id) >= nodes_.size()) {
        throw std::invalid_argument("Var does not belong to this tape epoch");
    }
}

void Tape::accumulate(int32_t id, const Tensor& delta) { add_into(grads_[static_cast<size_t>(id)], delta); }

Var Tape::add(Var a, Var b) {
    check(a);
    check(b);
    Tensor out = ops::add(value(a), value(b));
    return push(std::move(out), rg(a) || rg(b), [a, b](Tape& t, const Tensor& g) {
        if (t.rg(a)) t.accumulate(a.id, g);
        if (t.rg(b)) t.accumulate(b.id, g);
    });
}

Var Tape::sub(Var a, Var b) {
    check(a);
    check(b);
    Tensor out = ops::sub(value(a), value(b));
    return push(std::move(out), rg(a) || rg(b), [a, b](Tape& t, const Tensor& g) {
        if (t.rg(a)) t.accumulate(a.id, g);
        if (t.rg(b)) t.accumulate(b.id, ops::scale(g, -1.0));
    });
}

Var Tape::mul(Var a, Var b) {
    check(a);
    check(b);
    Tensor out = ops::mul(value(a), value(b));
    return push(std::move(out), rg(a) || rg(b), [a, b](Tape& t, const Tensor& g) {
        if (t.rg(a)) t.accumulate(a.id, ops::mul(g, t.value(b)));
        if (t.rg(b)) t.accumulate(b.id, ops::mul(g, t.value(a)));
    });
}

Var Tape::scale(Var a, double c) {
    check(a);
    Tensor out = ops::scale(value(a), c);
    return push(std::move(out), rg(a), [a, c](Tape& t, const Tensor& g) {
        if (t.rg(a)) t.accumulate(a.id, ops::scale(g, c));
    });
}

Var Tape::add_bias(Var a, Var bias) {
    check(a);
    check(bias);
    Tensor out = ops::add_bias(value(a), value(bias));
    return push(std::move(out), rg(a) || rg(bias), [a, bias](Tape& t, const Tensor& g) {
        if (t.rg(a)) t.accumulate(a.id, g);
        if (t.rg(bias)) t.accumulate(bias.id, col_sum(g));
    });
}

Var Tape::mul_rowvec(Var a, Var v) {
    check(a);
    check(v);
    Tensor out = ops::mul_rowvec(value(a), value(v));
    return push(std::move(out), rg(a) || rg(v), [a, v](Tape& t, const Tensor& g) {
        if (t.rg(a)) t.accumulate(a.id, ops::mul_rowvec(g, t.value(v)));
        if (t.rg(v)) t.accumulate(v.id, col_sum(ops::mul(g, t.value(a))));
    });
}

Var Tape::matmul(Var a, Var b) {
    check(a);
    check(b);
    Tensor out = ops::matmul(value(a), value(b));
    return push(std::move(out), rg(a) || rg(b), [a, b](Tape& t, const Tensor& g) {
        if (t.rg(a)) t.accumulate(a.id, ops::matmul(g, ops::transpose(t.value(b))));
        if (t.rg(b)) t.accumulate(b.id, ops::matmul(ops::transpose(t.value(a)), g));
    });
}

Var Tape::transpose(Var a) {
    check(a);
    Tensor out = ops::transpose(value(a));
    return push(std::move(out), rg(a), [a](Tape& t, const Tensor& g) {
        if (t.rg(a)) t.accumulate(a.id, ops::transpose(g));
    });
}

Var Tape::reshape(Var a, std::vector<int64_t> shape) {
    check(a);
    std::vector<int64_t> in_shape = value(a).shape();
    Tensor out = ops::reshape(value(a), std::move(shape));
    return push(std::move(out), rg(a), [a, in_shape](Tape& t, const Tensor& g) {
        if (t.rg(a)) t.accumulate(a.id, ops::reshape(g, in_shape));
    });
}

Var Tape::softmax(Var a) {
    check(a);
    Tensor y = ops::softmax(value(a));
    Tensor saved = y;
    return push(std::move(y), rg(a), [a, saved](Tape& t, const Tensor& g) {
        if (!t.rg(a)) return;
        // dx = y * (g - rowsum(g * y))
        int64_t cols = saved.shape().back();
        int64_t rows = saved.numel() / cols;
        Tensor dx = Tensor::zeros(saved.shape(), saved.dtype());
        dispatch(saved.dtype(), [&](auto tag) {
            using T = decltype(tag);
            auto py = saved.data<T>();
            auto pg = g.data<T>();
            auto pd = dx.data<T>();
            for (int64_t r = 0; r < rows; ++r) {
                T dot = T(0);
                for (int64_t c = 0; c < cols; ++c) dot += pg[r * cols + c] * py[r * cols + c];
                for (int64_t c = 0; c < cols; ++c) {
                    pd[r * cols + c] = py[r * cols + c] * (pg[r * cols + c] - dot);
                }
            }
        });
        t.accumulate(a.id, dx);
    });
}

Var Tape::layer_norm(Var a, double eps) {
    check(a);
    const Tensor& x = value(a);
    int64_t cols = x.shape().back();
    int64_t rows = x.numel() / cols;
    Tensor y = ops::layer_norm(x, eps);
    // Saves per-row inverse stddev for the backward pass.
    Tensor inv = Tensor::zeros({rows}, x.dtype());
    dispatch(x.dtype(), [&](auto tag) {
        using T = decltype(tag);
        auto px = x.data<T>();
        auto pi = inv.data<T>();
        for (int64_t r = 0; r < rows; ++r) {
            T mu = T(0);
            for (int64_t c = 0; c < cols; ++c) mu += px[r * cols + c];
            mu /= static_cast<T>(cols);
            T var = T(0);
            for (int64_t c = 0; c < cols; ++c) {
                T d = px[r * cols + c] - mu;
                var += d * d;
            }
            var /= static_cast<T>(cols);
            pi[r] = T(1) / std::sqrt(var + static_cast<T>(eps));
        }
    });
    Tensor saved_y = y;
    return push(std::move(y), rg(a), [a, saved_y, inv, cols, rows](Tape& t, const Tensor& g) {
        if (!t.rg(a)) return;
        // dx = inv * (g - mean(g) - y * mean(g * y)) per row
        Tensor dx = Tensor::zeros(saved_y.shape(), saved_y.dtype());
        dispatch(saved_y.dtype(), [&](auto tag) {
            using T = decltype(tag);
            auto py = saved_y.data<T>();
            auto pg = g.data<T>();
            auto pi = inv.data<T>();
            auto pd = dx.data<T>();
            for (int64_t r = 0; r < rows; ++r) {
                T mg = T(0), mgy = T(0);
                for (int64_t c = 0; c < cols; ++c) {
                    mg += pg[r * cols + c];
                    mgy += pg[r * cols + c] * py[r * cols + c];
                }
                mg /= static_cast<T>(cols);
                mgy /= static_cast<T>(cols);
                for (int64_t c = 0; c < cols; ++c) {
                    pd[r * cols + c] = pi[r] * (pg[r * cols + c] - mg - py[r * cols + c] * mgy);
                }
            }
        });
        t.accumulate(a.id, dx);
    });
}

Var Tape::gelu(Var a) {
    check(a);
    Tensor out = ops::gelu(value(a));
    return push(std::move(out), rg(a), [a](Tape& t, const Tensor& g) {
        if (!t.rg(a)) return;
        const Tensor& x = t.value(a);
        Tensor dx = Tensor::zeros(x.shape(), x.dtype());
        dispatch(x.dtype(), [&](auto tag) {
            using T = decltype(tag);
            auto px = x.data<T>();
            auto pg = g.data<T>();
            auto pd = dx.data<T>();
            for (int64_t i = 0; i < x.numel(); ++i) {
                double xv = static_cast<double>(px[i]);
                double phi = 0.5 * (1.0 + std::erf(xv * 0x1.6a09e667f3bcdp-1));
                double pdf = std::exp(-0.5 * xv * xv) * 0x1.9884533d43651p-2;  // 1/sqrt(2*pi)
                pd[i] = pg[i] * static_cast<T>(phi + xv * pdf);
            }
        });
        t.accumulate(a.id, dx);
    });
}

Var Tape::silu(Var a) {
    check(a);
    Tensor out = ops::silu(value(a));
    return push(std::move(out), rg(a), [a](Tape& t, const Tensor& g) {
        if (!t.rg(a)) return;
        const Tensor& x = t.value(a);
        Tensor dx = Tensor::zeros(x.shape(), x.dtype());
        dispatch(x.dtype(), [&](auto tag) {
            using T = decltype(tag);
            auto px = x.data<T>();
            auto pg = g.data<T>();
            auto pd = dx.data<T>();
            for (int64_t i = 0; i < x.numel(); ++i) {
                double xv = static_cast<double>(px[i]);
                double s = 1.0 / (1.0 + std::exp(-xv));
                pd[i] = pg[i] * static_cast<T>(s * (1.0 + xv * (1.0 - s)));
            }
        });
        t.accumulate(a.id, dx);
    });
}

Var Tape::mean(Var a) {
    check(a);
    int64_t n = value(a).numel();
    std::vector<int64_t> in_shape = value(a).shape();
    Tensor out = ops::mean(value(a));
    return push(std::move(out), rg(a), [a, n, in_shape](Tape& t, const Tensor& g) {
        if (!t.rg(a)) return;
        double gv = g.flat(0) / static_cast<double>(n);
        t.accumulate(a.id, Tensor::full(in_shape, gv, g.dtype()));
    });
}

Var Tape::sum_axis(Var a, size_t axis) {
    check(a);
    const auto& sh = value(a).shape();
    if (axis >= sh.size()) shape_error("sum_axis", "axis out of range");
    std::vector<int64_t> in_shape = sh;
    Tensor out = ops::sum_axis(value(a), axis);
    return push(std::move(out), rg(a), [a, axis, in_shape](Tape& t, const Tensor& g) {
        if (!t.rg(a)) return;
        int64_t outer = 1, inner = 1, reduce = in_shape[axis];
        for (size_t i = 0; i < axis; ++i) outer *= in_shape[i];
        for (size_t i = axis + 1; i < in_shape.size(); ++i) inner *= in_shape[i];
        Tensor dx = Tensor::zeros(in_shape, g.dtype());
        dispatch(g.dtype(), [&](auto tag) {
            using T = decltype(tag);
            auto pg = g.data<T>();
            auto pd = dx.data<T>();
            for (int64_t o = 0; o < outer; ++o) {
                for (int64_t r = 0; r < reduce; ++r) {
                    for (int64_t i = 0; i < inner; ++i) {
                        pd[(o * reduce + r) * inner + i] = pg[o * inner + i];
                    }
                }
            }
        });
        t.accumulate(a.id, dx);
    });
}

Var Tape::max_pool2d(Var a, int64_t k) {
    check(a);
    auto argmax = std::make_shared<std::vector<int64_t>>();
    std::vector<int64_t> in_shape = value(a).shape();
    Tensor out = ops::max_pool2d(value(a), k, argmax.get());
    return push(std::move(out), rg(a), [a, argmax, in_shape](Tape& t, const Tensor& g) {
        if (t.rg(a)) t.accumulate(a.id, ops::scatter_add_flat(g, in_shape, *argmax));
    });
}

Var Tape::gather(Var a, std::vector<int64_t> out_shape, std::shared_ptr<const std::vector<int64_t>> index_map) {
    check(a);
    std::vector<int64_t> in_shape = value(a).shape();
    Tensor out = ops::gather_flat(value(a), std::move(out_shape), *index_map);
    return push(std::move(out), rg(a), [a, index_map, in_shape](Tape& t, const Tensor& g) {
        if (t.rg(a)) t.accumulate(a.id, ops::scatter_add_flat(g, in_shape, *index_map));
    });
}

Var Tape::concat_rows(const std::vector<Var>& parts) {
    std::vector<const Tensor*> tensors;
    std::vector<int64_t> row_counts;
    bool any_rg = false;
    for (Var p : parts) {
        check(p);
        tensors.push_back(&value(p));
        row_counts.push_back(value(p).dim(0));
        any_rg = any_rg || rg(p);
    }
    Tensor out = ops::concat_rows(tensors);
    return push(std::move(out), any_rg, [parts, row_counts](Tape& t, const Tensor& g) {
        int64_t cols = g.dim(1);
        int64_t row = 0;
        for (size_t i = 0; i < parts.size(); ++i) {
            int64_t rows_i = row_counts[i];
            if (t.rg(parts[i])) {
                Tensor slice = Tensor::zeros({rows_i, cols}, g.dtype());
                dispatch(g.dtype(), [&](auto tag) {
                    using T = decltype(tag);
                    auto pg = g.data<T>();
                    auto ps = slice.data<T>();
                    std::copy(pg.begin() + row * cols, pg.begin() + (row + rows_i) * cols, ps.begin());
                });
                t.accumulate(parts[i].id, slice);
            }
            row += rows_i;
        }
    });
}

Var Tape::multihead_attention(Var q, Var k, Var v, int n_heads, std::shared_ptr<const Tensor> additive_mask) {
    check(q);
    check(k);
    check(v);
    const Tensor& Q = value(q);
    const Tensor& K = value(k);
    const Tensor& V = value(v);
    if (Q.rank() != 2 || K.rank() != 2 || V.rank() != 2) shape_error("attention", "inputs must be rank 2");
    int64_t nq = Q.dim(0), d = Q.dim(1), nk = K.dim(0);
    if (K.dim(1) != d || V.dim(0) != nk || V.dim(1) != d) shape_error("attention", Q, K);
    if (n_heads <= 0 || d % n_heads != 0) shape_error("attention", "embed dim not divisible by head count");
    if (additive_mask && (additive_mask->rank() != 2 || additive_mask->dim(0) != nq || additive_mask->dim(1) != nk)) {
        shape_error("attention", "mask shape mismatch");
    }
    int64_t dh = d / n_heads;
    double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));

    if (additive_mask && additive_mask->dtype() != Q.dtype()) {
        shape_error("attention", "mask dtype must match inputs");
    }
    Tensor out = Tensor::zeros({nq, d}, Q.dtype());
    // Attention weights saved per head for the backward pass.
    auto weights = std::make_shared<Tensor>(Tensor::zeros({n_heads, nq, nk}, Q.dtype()));
    dispatch(Q.dtype(), [&](auto tag) {
        using T = decltype(tag);
        auto pq = Q.data<T>();
        auto pk = K.data<T>();
        auto pv = V.data<T>();
        auto po = out.data<T>();
        auto pw = weights->data<T>();
        const T* pm = additive_mask ? additive_mask->data<T>().data() : nullptr;
        T sc = static_cast<T>(inv_sqrt);
        std::vector<T> logits(static_cast<size_t>(nk));
        for (int h = 0; h < n_heads; ++h) {
            int64_t off = h * dh;
            for (int64_t i = 0; i < nq; ++i) {
                const T* qi = pq.data() + i * d + off;
                T mx = -std::numeric_limits<T>::infinity();
                for (int64_t j = 0; j < nk; ++j) {
                    const T* kj = pk.data() + j * d + off;
                    T dot = T(0);
                    for (int64_t c = 0; c < dh; ++c) dot += qi[c] * kj[c];
                    dot *= sc;
                    if (pm) dot += pm[i * nk + j];
                    logits[static_cast<size_t>(j)] = dot;
                    mx = std::max(mx, dot);
                }
                T denom = T(0);
                T* wrow = pw.data() + (h * nq + i) * nk;
                for (int64_t j = 0; j < nk; ++j) {
                    wrow[j] = std::exp(logits[static_cast<size_t>(j)] - mx);
                    denom += wrow[j];
                }
                T* orow = po.data() + i * d + off;
                for (int64_t j = 0; j < nk; ++j) {
                    wrow[j] /= denom;
                    const T* vj = pv.data() + j * d + off;
                    T w = wrow[j];
                    for (int64_t c = 0; c < dh; ++c) orow[c] += w * vj[c];
                }
            }
        }
    });

    bool needs_grad = rg(q) || rg(k) || rg(v);
    return push(std::move(out), needs_grad,
                [q, k, v, n_heads, dh, nq, nk, d, inv_sqrt, weights](Tape& t, const Tensor& g) {
                    const Tensor& Q = t.value(q);
                    const Tensor& K = t.value(k);
                    const Tensor& V = t.value(v);
                    Tensor dQ = Tensor::zeros(Q.shape(), Q.dtype());
                    Tensor dK = Tensor::zeros(K.shape(), K.dtype());
                    Tensor dV = Tensor::zeros(V.shape(), V.dtype());
                    dispatch(Q.dtype(), [&](auto tag) {
                        using T = decltype(tag);
                        auto pq = Q.data<T>();
                        auto pk = K.data<T>();
                        auto pv = V.data<T>();
                        auto pg = g.data<T>();
                        auto pw = weights->data<T>();
                        auto pdq = dQ.data<T>();
                        auto pdk = dK.data<T>();
                        auto pdv = dV.data<T>();
                        T sc = static_cast<T>(inv_sqrt);
                        std::vector<T> dA(static_cast<size_t>(nk));
                        for (int h = 0; h < n_heads; ++h) {
                            int64_t off = h * dh;
                            for (int64_t i = 0; i < nq; ++i) {
                                const T* grow = pg.data() + i * d + off;
                                const T* wrow = pw.data() + (h * nq + i) * nk;
                                // dV and dA
                                T dot = T(0);
                                for (int64_t j = 0; j < nk; ++j) {
                                    const T* vj = pv.data() + j * d + off;
                                    T* dvj = pdv.data() + j * d + off;
                                    T da = T(0);
                                    for (int64_t c = 0; c < dh; ++c) {
                                        da += grow[c] * vj[c];
                                        dvj[c] += wrow[j] * grow[c];
                                    }
                                    dA[static_cast<size_t>(j)] = da;
                                    dot += da * wrow[j];
                                }
                                // dlogits = w * (dA - dot); then into dQ, dK
                                const T* qi = pq.data() + i * d + off;
                                T* dqi = pdq.data() + i * d + off;
                                for (int64_t j = 0; j < nk; ++j) {
                                    T dl = wrow[j] * (dA[static_cast<size_t>(j)] - dot) * sc;
                                    if (dl == T(0)) continue;
                                    const T* kj = pk.data() + j * d + off;
                                    T* dkj = pdk.data() + j * d + off;
                                    for (int64_t c = 0; c < dh; ++c) {
                                        dqi[c] += dl * kj[c];
                                        dkj[c] += dl * qi[c];
                                    }
                                }
                            }
                        }
                    });
                    if (t.rg(q)) t.accumulate(q.id, dQ);
                    if (t.rg(k)) t.accumulate(k.id, dK);
                    if (t.rg(v)) t.accumulate(v.id, dV);
                });
}

GradMap Tape::run_backward(Var out, const Tensor& seed) {
    check(out);
    if (!seed.same_shape(value(out))) shape_error("backward", "seed gradient shape mismatch");
    grads_.assign(nodes_.size(), Tensor{});
    grads_[static_cast<size_t>(out.id)] = seed;
    for (int32_t id = out.id; id >= 0; --id) {
        Node& node = nodes_[static_cast<size_t>(id)];
        if (!grads_[static_cast<size_t>(id)].defined() || !node.backward) continue;
        node.backward(*this, grads_[static_cast<size_t>(id)]);
    }
    GradMap result;
    for (size_t id = 0; id < nodes_.size(); ++id) {
        if (!nodes_[id].is_leaf) continue;
        if (grads_[id].defined()) {
            result[static_cast<int32_t>(id)] = std::move(grads_[id]);
        } else {
            result[static_cast<int32_t>(id)] = Tensor::zeros(nodes_[id].value.shape(), nodes_[id].value.dtype());
        }
    }
    clear();
    return result;
}

GradMap Tape::backward(Var loss) {
    check(loss);
    const Tensor& lv = value(loss);
    if (lv.numel() != 1) {
        throw std::invalid_argument("backward: loss must be scalar, got shape " + lv.shape_str());
    }
    return run_backward(loss, Tensor::full(lv.shape(), 1.0, lv.dtype()));
}

GradMap Tape::backward_seed(Var out, const Tensor& seed) { return run_backward(out, seed); }

void Tape::clear() {
    nodes_.clear();
    grads_.clear();
    ++epoch_;
}

double finite_difference(const std::function<double(double)>& f, double x, double eps) {
    return (f(x + eps) - f(x - eps)) / (2.0 * eps);
}

}  // namespace sfl::num
