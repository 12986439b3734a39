#pragma once

#include "zerosight/tensor.hpp"

namespace zerosight {

namespace detail {

// Dot product with four fixed-order partial sums in double. The reassociation
// is fixed, so results are run-to-run identical while breaking the FP add
// dependency chain.
template <class T>
inline double dot4(const T* a, const T* b, std::size_t n) {
    double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        s0 += static_cast<double>(a[i]) * static_cast<double>(b[i]);
        s1 += static_cast<double>(a[i + 1]) * static_cast<double>(b[i + 1]);
        s2 += static_cast<double>(a[i + 2]) * static_cast<double>(b[i + 2]);
        s3 += static_cast<double>(a[i + 3]) * static_cast<double>(b[i + 3]);
    }
    for (; i < n; ++i) s0 += static_cast<double>(a[i]) * static_cast<double>(b[i]);
    return ((s0 + s1) + (s2 + s3));
}

template <class T>
inline double dot4_strided(const T* a, std::size_t sa, const T* b, std::size_t sb,
                           std::size_t n) {
    double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        s0 += static_cast<double>(a[i * sa]) * static_cast<double>(b[i * sb]);
        s1 += static_cast<double>(a[(i + 1) * sa]) * static_cast<double>(b[(i + 1) * sb]);
        s2 += static_cast<double>(a[(i + 2) * sa]) * static_cast<double>(b[(i + 2) * sb]);
        s3 += static_cast<double>(a[(i + 3) * sa]) * static_cast<double>(b[(i + 3) * sb]);
    }
    for (; i < n; ++i) s0 += static_cast<double>(a[i * sa]) * static_cast<double>(b[i * sb]);
    return ((s0 + s1) + (s2 + s3));
}

}  // namespace detail

// 2-D matrix product (N,K) x (K,M) -> (N,M).
template <class T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.rank() != 2 || b.rank() != 2)
        throw ShapeError("matmul: expected rank-2 operands, got " + shape_str(a.shape()) +
                         " and " + shape_str(b.shape()));
    std::size_t n = a.dim(0), k = a.dim(1), m = b.dim(1);
    if (b.dim(0) != k)
        throw ShapeError("matmul: inner dims differ, a dim 1 = " + std::to_string(k) +
                         " vs b dim 0 = " + std::to_string(b.dim(0)));
    Tensor<T> out(Shape{n, m});
    const T* av = a.data().data();
    const T* bv = b.data().data();
    T* ov = out.data().data();
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < m; ++j)
            ov[i * m + j] = static_cast<T>(detail::dot4_strided(av + i * k, 1, bv + j, m, k));
    if (recording<T>({&a, &b})) {
        out.set_requires_grad(true);
        auto an = a.node();
        auto bn = b.node();
        auto on = out.node();
        bool need_a = a.requires_grad();
        bool need_b = b.requires_grad();
        Tape<T>::active()->record(on, [an, bn, on, n, k, m, need_a, need_b]() {
            const T* g = on->grad.data();
            if (need_a) {
                an->ensure_grad();
                // dA = g @ B^T
                for (std::size_t i = 0; i < n; ++i)
                    for (std::size_t p = 0; p < k; ++p)
                        an->grad[i * k + p] += static_cast<T>(
                            detail::dot4_strided(g + i * m, 1, bn->data.data() + p * m, 1, m));
            }
            if (need_b) {
                bn->ensure_grad();
                // dB = A^T @ g
                for (std::size_t p = 0; p < k; ++p)
                    for (std::size_t j = 0; j < m; ++j)
                        bn->grad[p * m + j] += static_cast<T>(detail::dot4_strided(
                            an->data.data() + p, k, g + j, m, n));
            }
        });
    }
    return out;
}

template <class T>
Tensor<T> transpose2d(const Tensor<T>& x) {
    if (x.rank() != 2)
        throw ShapeError("transpose2d: expected rank-2, got " + shape_str(x.shape()));
    std::size_t n = x.dim(0), m = x.dim(1);
    Tensor<T> out(Shape{m, n});
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < m; ++j) out.at(j * n + i) = x.at(i * m + j);
    if (recording<T>({&x})) {
        out.set_requires_grad(true);
        auto xn = x.node();
        auto on = out.node();
        Tape<T>::active()->record(on, [xn, on, n, m]() {
            xn->ensure_grad();
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t j = 0; j < m; ++j) xn->grad[i * m + j] += on->grad[j * n + i];
        });
    }
    return out;
}

// Same buffer length, new extents; data copied so nodes stay single-writer.
template <class T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape) {
    if (numel(shape) != x.size())
        throw ShapeError("reshape: " + shape_str(x.shape()) + " has " + std::to_string(x.size()) +
                         " elements, target " + shape_str(shape) + " has " +
                         std::to_string(numel(shape)));
    Tensor<T> out = Tensor<T>::from(std::move(shape), x.data());
    if (recording<T>({&x})) {
        out.set_requires_grad(true);
        auto xn = x.node();
        auto on = out.node();
        Tape<T>::active()->record(on, [xn, on]() {
            xn->ensure_grad();
            for (std::size_t i = 0; i < xn->grad.size(); ++i) xn->grad[i] += on->grad[i];
        });
    }
    return out;
}

// Concatenate two tensors along one axis; all other extents must match.
template <class T>
Tensor<T> concat(const Tensor<T>& a, const Tensor<T>& b, std::size_t axis) {
    if (a.rank() != b.rank())
        throw ShapeError("concat: rank mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
    if (axis >= a.rank())
        throw ShapeError("concat: axis " + std::to_string(axis) + " out of range for " +
                         shape_str(a.shape()));
    for (std::size_t i = 0; i < a.rank(); ++i)
        if (i != axis && a.dim(i) != b.dim(i))
            throw ShapeError("concat: dim " + std::to_string(i) + " differs (" +
                             std::to_string(a.dim(i)) + " vs " + std::to_string(b.dim(i)) + ")");
    Shape out_shape = a.shape();
    out_shape[axis] += b.dim(axis);
    std::size_t outer = 1, inner = 1;
    for (std::size_t i = 0; i < axis; ++i) outer *= a.dim(i);
    for (std::size_t i = axis + 1; i < a.rank(); ++i) inner *= a.dim(i);
    std::size_t wa = a.dim(axis) * inner, wb = b.dim(axis) * inner;
    Tensor<T> out(out_shape);
    for (std::size_t o = 0; o < outer; ++o) {
        for (std::size_t i = 0; i < wa; ++i) out.at(o * (wa + wb) + i) = a.at(o * wa + i);
        for (std::size_t i = 0; i < wb; ++i) out.at(o * (wa + wb) + wa + i) = b.at(o * wb + i);
    }
    if (recording<T>({&a, &b})) {
        out.set_requires_grad(true);
        auto an = a.node();
        auto bn = b.node();
        auto on = out.node();
        bool need_a = a.requires_grad();
        bool need_b = b.requires_grad();
        Tape<T>::active()->record(on, [an, bn, on, outer, wa, wb, need_a, need_b]() {
            if (need_a) an->ensure_grad();
            if (need_b) bn->ensure_grad();
            for (std::size_t o = 0; o < outer; ++o) {
                if (need_a)
                    for (std::size_t i = 0; i < wa; ++i)
                        an->grad[o * wa + i] += on->grad[o * (wa + wb) + i];
                if (need_b)
                    for (std::size_t i = 0; i < wb; ++i)
                        bn->grad[o * wb + i] += on->grad[o * (wa + wb) + wa + i];
            }
        });
    }
    return out;
}

}  // namespace zerosight
