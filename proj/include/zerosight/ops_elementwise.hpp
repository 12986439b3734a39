#pragma once

#include <cmath>

#include "zerosight/tensor.hpp"

namespace zerosight {

// numpy-style trailing-axis broadcasting: each dim must match or be 1.
inline Shape broadcast_shape(const Shape& a, const Shape& b, const char* op) {
    std::size_t r = std::max(a.size(), b.size());
    Shape out(r, 1);
    for (std::size_t i = 0; i < r; ++i) {
        std::size_t da = i < r - a.size() ? 1 : a[i - (r - a.size())];
        std::size_t db = i < r - b.size() ? 1 : b[i - (r - b.size())];
        if (da != db && da != 1 && db != 1)
            throw ShapeError(std::string(op) + ": cannot broadcast " + shape_str(a) + " with " +
                             shape_str(b) + " at output dim " + std::to_string(i) + " (" +
                             std::to_string(da) + " vs " + std::to_string(db) + ")");
        out[i] = std::max(da, db);
    }
    return out;
}

struct BroadcastPlan {
    Shape out;
    std::vector<std::size_t> a_stride;  // per output axis; 0 on broadcast axes
    std::vector<std::size_t> b_stride;
};

inline BroadcastPlan make_broadcast_plan(const Shape& a, const Shape& b, const char* op) {
    BroadcastPlan p;
    p.out = broadcast_shape(a, b, op);
    std::size_t r = p.out.size();
    auto sa = strides_of(a);
    auto sb = strides_of(b);
    p.a_stride.assign(r, 0);
    p.b_stride.assign(r, 0);
    for (std::size_t i = 0; i < r; ++i) {
        if (i >= r - a.size()) {
            std::size_t ai = i - (r - a.size());
            p.a_stride[i] = (a[ai] == 1) ? 0 : sa[ai];
        }
        if (i >= r - b.size()) {
            std::size_t bi = i - (r - b.size());
            p.b_stride[i] = (b[bi] == 1) ? 0 : sb[bi];
        }
    }
    return p;
}

// Walks the output index space once, handing (out_i, a_i, b_i) to fn.
template <class Fn>
inline void for_each_broadcast(const BroadcastPlan& p, Fn&& fn) {
    std::size_t r = p.out.size();
    std::size_t total = numel(p.out);
    std::vector<std::size_t> idx(r, 0);
    std::size_t oa = 0, ob = 0;
    for (std::size_t i = 0; i < total; ++i) {
        fn(i, oa, ob);
        for (std::size_t ax = r; ax-- > 0;) {
            ++idx[ax];
            oa += p.a_stride[ax];
            ob += p.b_stride[ax];
            if (idx[ax] < p.out[ax]) break;
            oa -= p.a_stride[ax] * p.out[ax];
            ob -= p.b_stride[ax] * p.out[ax];
            idx[ax] = 0;
        }
    }
}

namespace detail {

// Generic broadcasting binary op. FwdFn(va, vb) -> value;
// DaFn/DbFn(va, vb, g) -> gradient contribution for that operand.
template <class T, class FwdFn, class DaFn, class DbFn>
Tensor<T> binary_op(const Tensor<T>& a, const Tensor<T>& b, const char* name, FwdFn fwd, DaFn da,
                    DbFn db) {
    BroadcastPlan plan = make_broadcast_plan(a.shape(), b.shape(), name);
    Tensor<T> out(plan.out);
    const auto& av = a.data();
    const auto& bv = b.data();
    auto& ov = out.data();
    for_each_broadcast(plan, [&](std::size_t i, std::size_t ia, std::size_t ib) {
        ov[i] = fwd(av[ia], bv[ib]);
    });
    if (recording<T>({&a, &b})) {
        out.set_requires_grad(true);
        auto an = a.node();
        auto bn = b.node();
        auto on = out.node();
        bool need_a = a.requires_grad();
        bool need_b = b.requires_grad();
        Tape<T>::active()->record(on, [an, bn, on, plan, da, db, need_a, need_b]() {
            if (need_a) an->ensure_grad();
            if (need_b) bn->ensure_grad();
            for_each_broadcast(plan, [&](std::size_t i, std::size_t ia, std::size_t ib) {
                T g = on->grad[i];
                if (need_a) an->grad[ia] += da(an->data[ia], bn->data[ib], g);
                if (need_b) bn->grad[ib] += db(an->data[ia], bn->data[ib], g);
            });
        });
    }
    return out;
}

// Elementwise unary op. DFn(x, y, g) -> dx contribution.
template <class T, class FwdFn, class DFn>
Tensor<T> unary_op(const Tensor<T>& x, FwdFn fwd, DFn dfn) {
    Tensor<T> out(x.shape());
    const auto& xv = x.data();
    auto& ov = out.data();
    for (std::size_t i = 0; i < xv.size(); ++i) ov[i] = fwd(xv[i]);
    if (recording<T>({&x})) {
        out.set_requires_grad(true);
        auto xn = x.node();
        auto on = out.node();
        Tape<T>::active()->record(on, [xn, on, dfn]() {
            xn->ensure_grad();
            for (std::size_t i = 0; i < xn->data.size(); ++i)
                xn->grad[i] += dfn(xn->data[i], on->data[i], on->grad[i]);
        });
    }
    return out;
}

}  // namespace detail

template <class T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
    return detail::binary_op(
        a, b, "add", [](T x, T y) { return x + y; }, [](T, T, T g) { return g; },
        [](T, T, T g) { return g; });
}

template <class T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
    return detail::binary_op(
        a, b, "sub", [](T x, T y) { return x - y; }, [](T, T, T g) { return g; },
        [](T, T, T g) { return -g; });
}

template <class T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
    return detail::binary_op(
        a, b, "mul", [](T x, T y) { return x * y; }, [](T, T y, T g) { return g * y; },
        [](T x, T, T g) { return g * x; });
}

template <class T>
Tensor<T> add_scalar(const Tensor<T>& x, T c) {
    return detail::unary_op(
        x, [c](T v) { return v + c; }, [](T, T, T g) { return g; });
}

template <class T>
Tensor<T> mul_scalar(const Tensor<T>& x, T c) {
    return detail::unary_op(
        x, [c](T v) { return v * c; }, [c](T, T, T g) { return g * c; });
}

template <class T>
Tensor<T> exp(const Tensor<T>& x) {
    return detail::unary_op(
        x, [](T v) { return std::exp(v); }, [](T, T y, T g) { return g * y; });
}

template <class T>
Tensor<T> log(const Tensor<T>& x) {
    return detail::unary_op(
        x, [](T v) { return std::log(v); }, [](T v, T, T g) { return g / v; });
}

// Subgradient 0 at the kink.
template <class T>
Tensor<T> relu(const Tensor<T>& x) {
    return detail::unary_op(
        x, [](T v) { return v > T(0) ? v : T(0); },
        [](T v, T, T g) { return v > T(0) ? g : T(0); });
}

template <class T>
Tensor<T> leaky_relu(const Tensor<T>& x, T slope = T(0.01)) {
    return detail::unary_op(
        x, [slope](T v) { return v > T(0) ? v : slope * v; },
        [slope](T v, T, T g) { return v > T(0) ? g : slope * g; });
}

// Branch on sign keeps exp() from overflowing for large |x|.
template <class T>
Tensor<T> sigmoid(const Tensor<T>& x) {
    return detail::unary_op(
        x,
        [](T v) {
            if (v >= T(0)) return T(1) / (T(1) + std::exp(-v));
            T e = std::exp(v);
            return e / (T(1) + e);
        },
        [](T, T y, T g) { return g * y * (T(1) - y); });
}

}  // namespace zerosight
