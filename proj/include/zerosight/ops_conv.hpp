#pragma once

#include <optional>

#include "zerosight/ops_linear.hpp"
#include "zerosight/tensor.hpp"

namespace zerosight {

// Output extent rule shared by conv and pooling. Throws unless
// (in + 2*pad - window) is a non-negative multiple of stride.
inline std::size_t conv_out_extent(std::size_t in, std::size_t window, std::size_t stride,
                                   std::size_t pad, const char* op, const char* dim_name) {
    if (stride == 0) throw ConfigError(std::string(op) + ": stride must be positive");
    std::size_t padded = in + 2 * pad;
    if (padded < window)
        throw ConfigError(std::string(op) + ": window " + std::to_string(window) +
                          " exceeds padded input " + std::to_string(padded) + " along " +
                          dim_name);
    std::size_t span = padded - window;
    if (span % stride != 0)
        throw ConfigError(std::string(op) + ": output extent along " + dim_name +
                          " is not an integer: (" + std::to_string(in) + " + 2*" +
                          std::to_string(pad) + " - " + std::to_string(window) + ") / " +
                          std::to_string(stride) + " + 1");
    return span / stride + 1;
}

// Cross-correlation (no kernel flip), NCHW input, OIHW kernel.
template <class T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& kernel,
                 const std::optional<Tensor<T>>& bias, std::size_t stride, std::size_t padding) {
    if (input.rank() != 4)
        throw ShapeError("conv2d: input must be NCHW, got " + shape_str(input.shape()));
    if (kernel.rank() != 4)
        throw ShapeError("conv2d: kernel must be OIHW, got " + shape_str(kernel.shape()));
    const std::size_t N = input.dim(0), C = input.dim(1), H = input.dim(2), W = input.dim(3);
    const std::size_t O = kernel.dim(0), KI = kernel.dim(1), KH = kernel.dim(2),
                      KW = kernel.dim(3);
    if (C != KI)
        throw ShapeError("conv2d: input channel dim 1 (" + std::to_string(C) +
                         ") != kernel input dim 1 (" + std::to_string(KI) + ")");
    if (bias && (bias->rank() != 1 || bias->dim(0) != O))
        throw ShapeError("conv2d: bias must have shape (" + std::to_string(O) + "), got " +
                         shape_str(bias->shape()));
    const std::size_t OH = conv_out_extent(H, KH, stride, padding, "conv2d", "H");
    const std::size_t OW = conv_out_extent(W, KW, stride, padding, "conv2d", "W");

    Tensor<T> out(Shape{N, O, OH, OW});
    const T* in = input.data().data();
    const T* kn = kernel.data().data();
    T* ov = out.data().data();
    const long p = static_cast<long>(padding);

    for (std::size_t n = 0; n < N; ++n)
        for (std::size_t o = 0; o < O; ++o) {
            const double b = bias ? static_cast<double>(bias->at(o)) : 0.0;
            for (std::size_t oy = 0; oy < OH; ++oy) {
                const long iy0 = static_cast<long>(oy * stride) - p;
                for (std::size_t ox = 0; ox < OW; ++ox) {
                    const long ix0 = static_cast<long>(ox * stride) - p;
                    const long wrem = static_cast<long>(W) - ix0;
                    const std::size_t kx_lo =
                        std::min(KW, ix0 < 0 ? static_cast<std::size_t>(-ix0) : 0);
                    const std::size_t kx_hi =
                        wrem <= 0 ? kx_lo : std::min(KW, static_cast<std::size_t>(wrem));
                    double acc = b;
                    if (kx_hi > kx_lo) {
                        for (std::size_t c = 0; c < C; ++c)
                            for (std::size_t ky = 0; ky < KH; ++ky) {
                                const long iy = iy0 + static_cast<long>(ky);
                                if (iy < 0 || iy >= static_cast<long>(H)) continue;
                                const T* irow = in + ((n * C + c) * H + iy) * W + ix0 + kx_lo;
                                const T* krow = kn + ((o * C + c) * KH + ky) * KW + kx_lo;
                                acc += detail::dot4(irow, krow, kx_hi - kx_lo);
                            }
                    }
                    ov[((n * O + o) * OH + oy) * OW + ox] = static_cast<T>(acc);
                }
            }
        }

    const Tensor<T>* bias_ptr = bias ? &*bias : nullptr;
    bool rec = bias_ptr ? recording<T>({&input, &kernel, bias_ptr})
                        : recording<T>({&input, &kernel});
    if (rec) {
        out.set_requires_grad(true);
        auto in_n = input.node();
        auto k_n = kernel.node();
        auto b_n = bias ? bias->node() : nullptr;
        auto o_n = out.node();
        bool need_in = input.requires_grad();
        bool need_k = kernel.requires_grad();
        bool need_b = bias && bias->requires_grad();
        Tape<T>::active()->record(o_n, [=]() {
            const T* g = o_n->grad.data();
            if (need_in) in_n->ensure_grad();
            if (need_k) k_n->ensure_grad();
            if (need_b) b_n->ensure_grad();
            // Kernel/bias grads are long sums; keep them in double until done.
            std::vector<double> dk(need_k ? k_n->data.size() : 0, 0.0);
            std::vector<double> db(need_b ? b_n->data.size() : 0, 0.0);
            for (std::size_t n = 0; n < N; ++n)
                for (std::size_t o = 0; o < O; ++o)
                    for (std::size_t oy = 0; oy < OH; ++oy) {
                        const long iy0 = static_cast<long>(oy * stride) - p;
                        for (std::size_t ox = 0; ox < OW; ++ox) {
                            const T gv = g[((n * O + o) * OH + oy) * OW + ox];
                            if (gv == T(0)) continue;
                            const long ix0 = static_cast<long>(ox * stride) - p;
                            if (need_b) db[o] += static_cast<double>(gv);
                            const long wrem = static_cast<long>(W) - ix0;
                            const std::size_t kx_lo =
                                std::min(KW, ix0 < 0 ? static_cast<std::size_t>(-ix0) : 0);
                            const std::size_t kx_hi =
                                wrem <= 0 ? kx_lo
                                          : std::min(KW, static_cast<std::size_t>(wrem));
                            for (std::size_t c = 0; c < C; ++c)
                                for (std::size_t ky = 0; ky < KH; ++ky) {
                                    const long iy = iy0 + static_cast<long>(ky);
                                    if (iy < 0 || iy >= static_cast<long>(H)) continue;
                                    const std::size_t ib =
                                        ((n * C + c) * H + iy) * W + ix0 + kx_lo;
                                    const std::size_t kb = ((o * C + c) * KH + ky) * KW + kx_lo;
                                    if (need_k)
                                        for (std::size_t k = 0; k < kx_hi - kx_lo; ++k)
                                            dk[kb + k] += static_cast<double>(gv) *
                                                          static_cast<double>(in_n->data[ib + k]);
                                    if (need_in) {
                                        T* dst = in_n->grad.data() + ib;
                                        const T* kr = k_n->data.data() + kb;
                                        for (std::size_t k = 0; k < kx_hi - kx_lo; ++k)
                                            dst[k] += gv * kr[k];
                                    }
                                }
                        }
                    }
            if (need_k)
                for (std::size_t i = 0; i < dk.size(); ++i)
                    k_n->grad[i] += static_cast<T>(dk[i]);
            if (need_b)
                for (std::size_t i = 0; i < db.size(); ++i)
                    b_n->grad[i] += static_cast<T>(db[i]);
        });
    }
    return out;
}

template <class T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& kernel, std::size_t stride,
                 std::size_t padding) {
    return conv2d(input, kernel, std::optional<Tensor<T>>{}, stride, padding);
}

}  // namespace zerosight
