#pragma once

#include <limits>

#include "zerosight/ops_conv.hpp"
#include "zerosight/tensor.hpp"

namespace zerosight {

namespace detail {

template <class T>
void check_nchw(const Tensor<T>& x, const char* op) {
    if (x.rank() != 4)
        throw ShapeError(std::string(op) + ": expected NCHW input, got " + shape_str(x.shape()));
}

}  // namespace detail

// Max over window*window patches. Padding cells never win (treated as -inf).
// Ties go to the first cell in scan order. stride 0 means stride = window.
template <class T>
Tensor<T> max_pool2d(const Tensor<T>& x, std::size_t window, std::size_t stride = 0,
                     std::size_t padding = 0) {
    detail::check_nchw(x, "max_pool2d");
    if (stride == 0) stride = window;
    const std::size_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    const std::size_t OH = conv_out_extent(H, window, stride, padding, "max_pool2d", "H");
    const std::size_t OW = conv_out_extent(W, window, stride, padding, "max_pool2d", "W");
    Tensor<T> out(Shape{N, C, OH, OW});
    std::vector<std::size_t> argmax(out.size());
    const T* xv = x.data().data();
    T* ov = out.data().data();
    const long p = static_cast<long>(padding);
    for (std::size_t n = 0; n < N; ++n)
        for (std::size_t c = 0; c < C; ++c)
            for (std::size_t oy = 0; oy < OH; ++oy)
                for (std::size_t ox = 0; ox < OW; ++ox) {
                    T best = -std::numeric_limits<T>::infinity();
                    std::size_t best_i = 0;
                    bool found = false;
                    for (std::size_t ky = 0; ky < window; ++ky) {
                        const long iy = static_cast<long>(oy * stride + ky) - p;
                        if (iy < 0 || iy >= static_cast<long>(H)) continue;
                        for (std::size_t kx = 0; kx < window; ++kx) {
                            const long ix = static_cast<long>(ox * stride + kx) - p;
                            if (ix < 0 || ix >= static_cast<long>(W)) continue;
                            std::size_t i = ((n * C + c) * H + iy) * W + ix;
                            if (!found || xv[i] > best) {
                                best = xv[i];
                                best_i = i;
                                found = true;
                            }
                        }
                    }
                    std::size_t oi = ((n * C + c) * OH + oy) * OW + ox;
                    ov[oi] = best;
                    argmax[oi] = best_i;
                }
    if (recording<T>({&x})) {
        out.set_requires_grad(true);
        auto xn = x.node();
        auto on = out.node();
        Tape<T>::active()->record(on, [xn, on, argmax]() {
            xn->ensure_grad();
            for (std::size_t i = 0; i < on->grad.size(); ++i) xn->grad[argmax[i]] += on->grad[i];
        });
    }
    return out;
}

// Average over window*window patches, fixed divisor window^2 (padding cells
// count as zeros).
template <class T>
Tensor<T> avg_pool2d(const Tensor<T>& x, std::size_t window, std::size_t stride = 0,
                     std::size_t padding = 0) {
    detail::check_nchw(x, "avg_pool2d");
    if (stride == 0) stride = window;
    const std::size_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    const std::size_t OH = conv_out_extent(H, window, stride, padding, "avg_pool2d", "H");
    const std::size_t OW = conv_out_extent(W, window, stride, padding, "avg_pool2d", "W");
    const double inv = 1.0 / (static_cast<double>(window) * static_cast<double>(window));
    Tensor<T> out(Shape{N, C, OH, OW});
    const T* xv = x.data().data();
    T* ov = out.data().data();
    const long p = static_cast<long>(padding);
    for (std::size_t n = 0; n < N; ++n)
        for (std::size_t c = 0; c < C; ++c)
            for (std::size_t oy = 0; oy < OH; ++oy)
                for (std::size_t ox = 0; ox < OW; ++ox) {
                    double acc = 0.0;
                    for (std::size_t ky = 0; ky < window; ++ky) {
                        const long iy = static_cast<long>(oy * stride + ky) - p;
                        if (iy < 0 || iy >= static_cast<long>(H)) continue;
                        for (std::size_t kx = 0; kx < window; ++kx) {
                            const long ix = static_cast<long>(ox * stride + kx) - p;
                            if (ix < 0 || ix >= static_cast<long>(W)) continue;
                            acc += static_cast<double>(xv[((n * C + c) * H + iy) * W + ix]);
                        }
                    }
                    ov[((n * C + c) * OH + oy) * OW + ox] = static_cast<T>(acc * inv);
                }
    if (recording<T>({&x})) {
        out.set_requires_grad(true);
        auto xn = x.node();
        auto on = out.node();
        std::size_t st = stride, win = window;
        Tape<T>::active()->record(on, [xn, on, N, C, H, W, OH, OW, st, win, p, inv]() {
            xn->ensure_grad();
            for (std::size_t n = 0; n < N; ++n)
                for (std::size_t c = 0; c < C; ++c)
                    for (std::size_t oy = 0; oy < OH; ++oy)
                        for (std::size_t ox = 0; ox < OW; ++ox) {
                            T g = on->grad[((n * C + c) * OH + oy) * OW + ox] *
                                  static_cast<T>(inv);
                            if (g == T(0)) continue;
                            for (std::size_t ky = 0; ky < win; ++ky) {
                                const long iy = static_cast<long>(oy * st + ky) - p;
                                if (iy < 0 || iy >= static_cast<long>(H)) continue;
                                for (std::size_t kx = 0; kx < win; ++kx) {
                                    const long ix = static_cast<long>(ox * st + kx) - p;
                                    if (ix < 0 || ix >= static_cast<long>(W)) continue;
                                    xn->grad[((n * C + c) * H + iy) * W + ix] += g;
                                }
                            }
                        }
        });
    }
    return out;
}

// (N,C,H,W) -> (N,C,1,1), mean over the spatial extent.
template <class T>
Tensor<T> global_avg_pool(const Tensor<T>& x) {
    detail::check_nchw(x, "global_avg_pool");
    const std::size_t N = x.dim(0), C = x.dim(1), HW = x.dim(2) * x.dim(3);
    if (HW == 0) throw ShapeError("global_avg_pool: empty spatial extent");
    Tensor<T> out(Shape{N, C, 1, 1});
    const double inv = 1.0 / static_cast<double>(HW);
    for (std::size_t nc = 0; nc < N * C; ++nc) {
        double acc = 0.0;
        for (std::size_t i = 0; i < HW; ++i) acc += static_cast<double>(x.at(nc * HW + i));
        out.at(nc) = static_cast<T>(acc * inv);
    }
    if (recording<T>({&x})) {
        out.set_requires_grad(true);
        auto xn = x.node();
        auto on = out.node();
        Tape<T>::active()->record(on, [xn, on, N, C, HW, inv]() {
            xn->ensure_grad();
            for (std::size_t nc = 0; nc < N * C; ++nc) {
                T g = on->grad[nc] * static_cast<T>(inv);
                for (std::size_t i = 0; i < HW; ++i) xn->grad[nc * HW + i] += g;
            }
        });
    }
    return out;
}

// (N,C,H,W) -> (N,C,1,1), max over the spatial extent.
template <class T>
Tensor<T> global_max_pool(const Tensor<T>& x) {
    detail::check_nchw(x, "global_max_pool");
    const std::size_t N = x.dim(0), C = x.dim(1), HW = x.dim(2) * x.dim(3);
    if (HW == 0) throw ShapeError("global_max_pool: empty spatial extent");
    Tensor<T> out(Shape{N, C, 1, 1});
    std::vector<std::size_t> argmax(out.size());
    for (std::size_t nc = 0; nc < N * C; ++nc) {
        std::size_t best = nc * HW;
        for (std::size_t i = 1; i < HW; ++i)
            if (x.at(nc * HW + i) > x.at(best)) best = nc * HW + i;
        out.at(nc) = x.at(best);
        argmax[nc] = best;
    }
    if (recording<T>({&x})) {
        out.set_requires_grad(true);
        auto xn = x.node();
        auto on = out.node();
        Tape<T>::active()->record(on, [xn, on, argmax]() {
            xn->ensure_grad();
            for (std::size_t i = 0; i < on->grad.size(); ++i) xn->grad[argmax[i]] += on->grad[i];
        });
    }
    return out;
}

// Max over the channel axis: (N,C,H,W) -> (N,1,H,W).
template <class T>
Tensor<T> channel_max(const Tensor<T>& x) {
    detail::check_nchw(x, "channel_max");
    const std::size_t N = x.dim(0), C = x.dim(1), HW = x.dim(2) * x.dim(3);
    if (C == 0) throw ShapeError("channel_max: zero channels");
    Tensor<T> out(Shape{N, 1, x.dim(2), x.dim(3)});
    std::vector<std::size_t> argmax(out.size());
    for (std::size_t n = 0; n < N; ++n)
        for (std::size_t i = 0; i < HW; ++i) {
            std::size_t best = (n * C) * HW + i;
            for (std::size_t c = 1; c < C; ++c) {
                std::size_t j = (n * C + c) * HW + i;
                if (x.at(j) > x.at(best)) best = j;
            }
            out.at(n * HW + i) = x.at(best);
            argmax[n * HW + i] = best;
        }
    if (recording<T>({&x})) {
        out.set_requires_grad(true);
        auto xn = x.node();
        auto on = out.node();
        Tape<T>::active()->record(on, [xn, on, argmax]() {
            xn->ensure_grad();
            for (std::size_t i = 0; i < on->grad.size(); ++i) xn->grad[argmax[i]] += on->grad[i];
        });
    }
    return out;
}

// Mean over the channel axis: (N,C,H,W) -> (N,1,H,W).
template <class T>
Tensor<T> channel_mean(const Tensor<T>& x) {
    detail::check_nchw(x, "channel_mean");
    const std::size_t N = x.dim(0), C = x.dim(1), HW = x.dim(2) * x.dim(3);
    if (C == 0) throw ShapeError("channel_mean: zero channels");
    Tensor<T> out(Shape{N, 1, x.dim(2), x.dim(3)});
    const double inv = 1.0 / static_cast<double>(C);
    for (std::size_t n = 0; n < N; ++n)
        for (std::size_t i = 0; i < HW; ++i) {
            double acc = 0.0;
            for (std::size_t c = 0; c < C; ++c)
                acc += static_cast<double>(x.at((n * C + c) * HW + i));
            out.at(n * HW + i) = static_cast<T>(acc * inv);
        }
    if (recording<T>({&x})) {
        out.set_requires_grad(true);
        auto xn = x.node();
        auto on = out.node();
        Tape<T>::active()->record(on, [xn, on, N, C, HW, inv]() {
            xn->ensure_grad();
            for (std::size_t n = 0; n < N; ++n)
                for (std::size_t i = 0; i < HW; ++i) {
                    T g = on->grad[n * HW + i] * static_cast<T>(inv);
                    for (std::size_t c = 0; c < C; ++c) xn->grad[(n * C + c) * HW + i] += g;
                }
        });
    }
    return out;
}

}  // namespace zerosight
