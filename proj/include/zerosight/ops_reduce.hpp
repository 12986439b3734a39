#pragma once

#include <cmath>

#include "zerosight/ops_elementwise.hpp"
#include "zerosight/tensor.hpp"

namespace zerosight {

namespace detail {

// Views an axis reduction as (outer, axis, inner) over row-major data.
struct AxisSplit {
    std::size_t outer, axis, inner;
};

inline AxisSplit axis_split(const Shape& shape, std::size_t axis, const char* op) {
    if (axis >= shape.size())
        throw ShapeError(std::string(op) + ": axis " + std::to_string(axis) +
                         " out of range for shape " + shape_str(shape));
    AxisSplit s{1, shape[axis], 1};
    for (std::size_t i = 0; i < axis; ++i) s.outer *= shape[i];
    for (std::size_t i = axis + 1; i < shape.size(); ++i) s.inner *= shape[i];
    return s;
}

}  // namespace detail

// Full reduction to a rank-0 scalar. Accumulates in double regardless of T.
template <class T>
Tensor<T> sum(const Tensor<T>& x) {
    double acc = 0.0;
    for (T v : x.data()) acc += static_cast<double>(v);
    Tensor<T> out = Tensor<T>::scalar(static_cast<T>(acc));
    if (recording<T>({&x})) {
        out.set_requires_grad(true);
        auto xn = x.node();
        auto on = out.node();
        Tape<T>::active()->record(on, [xn, on]() {
            xn->ensure_grad();
            T g = on->grad[0];
            for (auto& gv : xn->grad) gv += g;
        });
    }
    return out;
}

template <class T>
Tensor<T> mean(const Tensor<T>& x) {
    if (x.size() == 0) throw ShapeError("mean: empty tensor");
    return mul_scalar(sum(x), static_cast<T>(1.0 / static_cast<double>(x.size())));
}

// Reduction over one axis. keepdims keeps a size-1 extent for broadcasting.
template <class T>
Tensor<T> sum_axis(const Tensor<T>& x, std::size_t axis, bool keepdims = false) {
    auto s = detail::axis_split(x.shape(), axis, "sum_axis");
    Shape out_shape;
    for (std::size_t i = 0; i < x.rank(); ++i) {
        if (i == axis) {
            if (keepdims) out_shape.push_back(1);
        } else {
            out_shape.push_back(x.shape()[i]);
        }
    }
    Tensor<T> out(out_shape);
    const auto& xv = x.data();
    auto& ov = out.data();
    for (std::size_t o = 0; o < s.outer; ++o)
        for (std::size_t in = 0; in < s.inner; ++in) {
            double acc = 0.0;
            for (std::size_t a = 0; a < s.axis; ++a)
                acc += static_cast<double>(xv[(o * s.axis + a) * s.inner + in]);
            ov[o * s.inner + in] = static_cast<T>(acc);
        }
    if (recording<T>({&x})) {
        out.set_requires_grad(true);
        auto xn = x.node();
        auto on = out.node();
        Tape<T>::active()->record(on, [xn, on, s]() {
            xn->ensure_grad();
            for (std::size_t o = 0; o < s.outer; ++o)
                for (std::size_t in = 0; in < s.inner; ++in) {
                    T g = on->grad[o * s.inner + in];
                    for (std::size_t a = 0; a < s.axis; ++a)
                        xn->grad[(o * s.axis + a) * s.inner + in] += g;
                }
        });
    }
    return out;
}

template <class T>
Tensor<T> mean_axis(const Tensor<T>& x, std::size_t axis, bool keepdims = false) {
    auto sums = sum_axis(x, axis, keepdims);
    std::size_t n = x.shape()[axis];
    return mul_scalar(sums, static_cast<T>(1.0 / static_cast<double>(n)));
}

// log softmax along an axis, max-subtracted for stability.
// Adjoint: dx = g - softmax(x) * sum(g over axis).
template <class T>
Tensor<T> log_softmax(const Tensor<T>& x, std::size_t axis) {
    auto s = detail::axis_split(x.shape(), axis, "log_softmax");
    Tensor<T> out(x.shape());
    const auto& xv = x.data();
    auto& ov = out.data();
    for (std::size_t o = 0; o < s.outer; ++o)
        for (std::size_t in = 0; in < s.inner; ++in) {
            T mx = xv[(o * s.axis + 0) * s.inner + in];
            for (std::size_t a = 1; a < s.axis; ++a)
                mx = std::max(mx, xv[(o * s.axis + a) * s.inner + in]);
            double lse = 0.0;
            for (std::size_t a = 0; a < s.axis; ++a)
                lse += std::exp(static_cast<double>(xv[(o * s.axis + a) * s.inner + in] - mx));
            T log_z = mx + static_cast<T>(std::log(lse));
            for (std::size_t a = 0; a < s.axis; ++a) {
                std::size_t i = (o * s.axis + a) * s.inner + in;
                ov[i] = xv[i] - log_z;
            }
        }
    if (recording<T>({&x})) {
        out.set_requires_grad(true);
        auto xn = x.node();
        auto on = out.node();
        Tape<T>::active()->record(on, [xn, on, s]() {
            xn->ensure_grad();
            for (std::size_t o = 0; o < s.outer; ++o)
                for (std::size_t in = 0; in < s.inner; ++in) {
                    double gsum = 0.0;
                    for (std::size_t a = 0; a < s.axis; ++a)
                        gsum += static_cast<double>(on->grad[(o * s.axis + a) * s.inner + in]);
                    for (std::size_t a = 0; a < s.axis; ++a) {
                        std::size_t i = (o * s.axis + a) * s.inner + in;
                        T soft = std::exp(on->data[i]);
                        xn->grad[i] += on->grad[i] - soft * static_cast<T>(gsum);
                    }
                }
        });
    }
    return out;
}

// x / max(||x||_2, eps) along an axis, eps = 1e-12. Below the clamp the map
// is linear in x.
template <class T>
Tensor<T> l2_normalize(const Tensor<T>& x, std::size_t axis, T eps = T(1e-12)) {
    auto s = detail::axis_split(x.shape(), axis, "l2_normalize");
    Tensor<T> out(x.shape());
    const auto& xv = x.data();
    auto& ov = out.data();
    std::vector<T> norms(s.outer * s.inner);
    for (std::size_t o = 0; o < s.outer; ++o)
        for (std::size_t in = 0; in < s.inner; ++in) {
            double sq = 0.0;
            for (std::size_t a = 0; a < s.axis; ++a) {
                double v = static_cast<double>(xv[(o * s.axis + a) * s.inner + in]);
                sq += v * v;
            }
            T n = std::max(static_cast<T>(std::sqrt(sq)), eps);
            norms[o * s.inner + in] = n;
            for (std::size_t a = 0; a < s.axis; ++a) {
                std::size_t i = (o * s.axis + a) * s.inner + in;
                ov[i] = xv[i] / n;
            }
        }
    if (recording<T>({&x})) {
        out.set_requires_grad(true);
        auto xn = x.node();
        auto on = out.node();
        Tape<T>::active()->record(on, [xn, on, s, norms, eps]() {
            xn->ensure_grad();
            for (std::size_t o = 0; o < s.outer; ++o)
                for (std::size_t in = 0; in < s.inner; ++in) {
                    T n = norms[o * s.inner + in];
                    if (n <= eps) {
                        // clamped: y = x / eps exactly
                        for (std::size_t a = 0; a < s.axis; ++a) {
                            std::size_t i = (o * s.axis + a) * s.inner + in;
                            xn->grad[i] += on->grad[i] / eps;
                        }
                        continue;
                    }
                    double gy = 0.0;  // <g, y>
                    for (std::size_t a = 0; a < s.axis; ++a) {
                        std::size_t i = (o * s.axis + a) * s.inner + in;
                        gy += static_cast<double>(on->grad[i]) * static_cast<double>(on->data[i]);
                    }
                    for (std::size_t a = 0; a < s.axis; ++a) {
                        std::size_t i = (o * s.axis + a) * s.inner + in;
                        xn->grad[i] += (on->grad[i] - on->data[i] * static_cast<T>(gy)) / n;
                    }
                }
        });
    }
    return out;
}

}  // namespace zerosight
