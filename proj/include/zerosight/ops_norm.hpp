#pragma once

#include <cmath>

#include "zerosight/tensor.hpp"

namespace zerosight {

enum class NormMode { Train, Infer };

template <class T>
struct BatchNormState {
    std::vector<T> running_mean;
    std::vector<T> running_var;
    bool initialized = false;
};

// Batch normalization over axis 1 of (N,C,H,W) or (N,D) input. Train mode
// normalizes by batch statistics and folds them into the running stats by
// exponential moving average; infer mode applies the stored affine.
template <class T>
Tensor<T> batch_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                     BatchNormState<T>& state, NormMode mode, T eps = T(1e-5),
                     T momentum = T(0.1)) {
    if (x.rank() != 2 && x.rank() != 4)
        throw ShapeError("batch_norm: expected (N,C,H,W) or (N,D) input, got " +
                         shape_str(x.shape()));
    const std::size_t N = x.dim(0);
    const std::size_t C = x.dim(1);
    const std::size_t HW = x.rank() == 4 ? x.dim(2) * x.dim(3) : 1;
    if (gamma.size() != C || beta.size() != C)
        throw ShapeError("batch_norm: channel dim 1 is " + std::to_string(C) +
                         " but gamma/beta have " + std::to_string(gamma.size()) + "/" +
                         std::to_string(beta.size()) + " entries");
    const std::size_t m = N * HW;  // reduce count per channel
    if (m == 0) throw ShapeError("batch_norm: empty batch");

    auto channel_index = [C, HW](std::size_t n, std::size_t c, std::size_t s) {
        return (n * C + c) * HW + s;
    };

    std::vector<T> mu(C), inv_std(C);
    if (mode == NormMode::Train) {
        for (std::size_t c = 0; c < C; ++c) {
            double sum = 0.0;
            for (std::size_t n = 0; n < N; ++n)
                for (std::size_t s = 0; s < HW; ++s)
                    sum += static_cast<double>(x.at(channel_index(n, c, s)));
            double mean = sum / static_cast<double>(m);
            double sq = 0.0;
            for (std::size_t n = 0; n < N; ++n)
                for (std::size_t s = 0; s < HW; ++s) {
                    double d = static_cast<double>(x.at(channel_index(n, c, s))) - mean;
                    sq += d * d;
                }
            double var = sq / static_cast<double>(m);
            mu[c] = static_cast<T>(mean);
            inv_std[c] = static_cast<T>(1.0 / std::sqrt(var + static_cast<double>(eps)));
            double var_unbiased = m > 1 ? sq / static_cast<double>(m - 1) : var;
            if (!state.initialized) {
                if (state.running_mean.size() != C) {
                    state.running_mean.assign(C, T(0));
                    state.running_var.assign(C, T(1));
                }
                state.running_mean[c] = static_cast<T>(mean);
                state.running_var[c] = static_cast<T>(var_unbiased);
            } else {
                state.running_mean[c] = (T(1) - momentum) * state.running_mean[c] +
                                        momentum * static_cast<T>(mean);
                state.running_var[c] = (T(1) - momentum) * state.running_var[c] +
                                       momentum * static_cast<T>(var_unbiased);
            }
        }
        state.initialized = true;
    } else {
        if (!state.initialized)
            throw ConfigError("batch_norm: infer mode requested before any running statistics "
                              "were recorded");
        for (std::size_t c = 0; c < C; ++c) {
            mu[c] = state.running_mean[c];
            inv_std[c] = static_cast<T>(
                1.0 / std::sqrt(static_cast<double>(state.running_var[c]) +
                                static_cast<double>(eps)));
        }
    }

    Tensor<T> out(x.shape());
    for (std::size_t n = 0; n < N; ++n)
        for (std::size_t c = 0; c < C; ++c)
            for (std::size_t s = 0; s < HW; ++s) {
                std::size_t i = channel_index(n, c, s);
                out.at(i) = gamma.at(c) * (x.at(i) - mu[c]) * inv_std[c] + beta.at(c);
            }

    if (recording<T>({&x, &gamma, &beta})) {
        out.set_requires_grad(true);
        auto xn = x.node();
        auto gn = gamma.node();
        auto bn = beta.node();
        auto on = out.node();
        bool need_x = x.requires_grad();
        bool need_g = gamma.requires_grad();
        bool need_b = beta.requires_grad();
        bool train = mode == NormMode::Train;
        Tape<T>::active()->record(on, [=]() {
            if (need_x) xn->ensure_grad();
            if (need_g) gn->ensure_grad();
            if (need_b) bn->ensure_grad();
            for (std::size_t c = 0; c < C; ++c) {
                double sum_g = 0.0, sum_g_xhat = 0.0;
                for (std::size_t n = 0; n < N; ++n)
                    for (std::size_t s = 0; s < HW; ++s) {
                        std::size_t i = channel_index(n, c, s);
                        double g = static_cast<double>(on->grad[i]);
                        double xhat = static_cast<double>((xn->data[i] - mu[c]) * inv_std[c]);
                        sum_g += g;
                        sum_g_xhat += g * xhat;
                    }
                if (need_g) gn->grad[c] += static_cast<T>(sum_g_xhat);
                if (need_b) bn->grad[c] += static_cast<T>(sum_g);
                if (!need_x) continue;
                double gam = static_cast<double>(gn->data[c]);
                double istd = static_cast<double>(inv_std[c]);
                if (train) {
                    // through the batch statistics
                    double inv_m = 1.0 / static_cast<double>(m);
                    for (std::size_t n = 0; n < N; ++n)
                        for (std::size_t s = 0; s < HW; ++s) {
                            std::size_t i = channel_index(n, c, s);
                            double g = static_cast<double>(on->grad[i]);
                            double xhat =
                                static_cast<double>((xn->data[i] - mu[c]) * inv_std[c]);
                            xn->grad[i] += static_cast<T>(
                                gam * istd * (g - inv_m * sum_g - xhat * inv_m * sum_g_xhat));
                        }
                } else {
                    // running stats are constants
                    for (std::size_t n = 0; n < N; ++n)
                        for (std::size_t s = 0; s < HW; ++s) {
                            std::size_t i = channel_index(n, c, s);
                            xn->grad[i] += static_cast<T>(
                                gam * istd * static_cast<double>(on->grad[i]));
                        }
                }
            }
        });
    }
    return out;
}

// Owning layer: learnable gamma/beta plus the running-stat buffers.
template <class T>
struct BatchNormLayer {
    Tensor<T> gamma;
    Tensor<T> beta;
    BatchNormState<T> state;
    T eps = T(1e-5);
    T momentum = T(0.1);

    BatchNormLayer() = default;
    explicit BatchNormLayer(std::size_t channels)
        : gamma(Tensor<T>::ones({channels})), beta(Tensor<T>::zeros({channels})) {
        gamma.set_requires_grad(true);
        beta.set_requires_grad(true);
    }

    Tensor<T> forward(const Tensor<T>& x, NormMode mode) {
        return batch_norm(x, gamma, beta, state, mode, eps, momentum);
    }
};

}  // namespace zerosight
