#pragma once

#include <optional>
#include <string>

#include "zerosight/ops.hpp"
#include "zerosight/rng.hpp"

namespace zerosight {

// Named handle on a learnable tensor. decay=false exempts the parameter from
// weight decay (norm scales/shifts, proxies).
template <class T>
struct ParamRef {
    std::string name;
    Tensor<T> tensor;
    bool decay = true;
};

// Non-learnable state that still belongs in a checkpoint (running stats).
template <class T>
struct BufferRef {
    std::string name;
    std::vector<T>* data = nullptr;
    bool* loaded_flag = nullptr;  // set true after a checkpoint restore
};

template <class T>
void collect_norm(BatchNormLayer<T>& bn, const std::string& prefix,
                  std::vector<ParamRef<T>>& params, std::vector<BufferRef<T>>& buffers) {
    params.push_back({prefix + ".gamma", bn.gamma, false});
    params.push_back({prefix + ".beta", bn.beta, false});
    buffers.push_back({prefix + ".running_mean", &bn.state.running_mean, &bn.state.initialized});
    buffers.push_back({prefix + ".running_var", &bn.state.running_var, &bn.state.initialized});
}

template <class T>
struct Conv2dLayer {
    Tensor<T> weight;  // OIHW
    std::optional<Tensor<T>> bias;
    std::size_t stride = 1;
    std::size_t padding = 0;

    static Conv2dLayer make(std::size_t out_ch, std::size_t in_ch, std::size_t k,
                            std::size_t stride, std::size_t padding, bool with_bias, Rng& rng) {
        Conv2dLayer l;
        double fan_in = static_cast<double>(in_ch * k * k);
        l.weight = Tensor<T>::normal({out_ch, in_ch, k, k}, rng, 0.0, std::sqrt(2.0 / fan_in));
        l.weight.set_requires_grad(true);
        if (with_bias) {
            l.bias = Tensor<T>::zeros({out_ch});
            l.bias->set_requires_grad(true);
        }
        l.stride = stride;
        l.padding = padding;
        return l;
    }

    Tensor<T> forward(const Tensor<T>& x) const {
        return conv2d(x, weight, bias, stride, padding);
    }

    void collect(const std::string& prefix, std::vector<ParamRef<T>>& params,
                 std::vector<BufferRef<T>>& buffers) {
        (void)buffers;
        params.push_back({prefix + ".weight", weight, true});
        if (bias) params.push_back({prefix + ".bias", *bias, true});
    }
};

template <class T>
struct LinearLayer {
    Tensor<T> weight;  // (in, out)
    std::optional<Tensor<T>> bias;

    static LinearLayer make(std::size_t in_dim, std::size_t out_dim, bool with_bias, Rng& rng) {
        LinearLayer l;
        l.weight = Tensor<T>::normal({in_dim, out_dim}, rng, 0.0,
                                     std::sqrt(2.0 / static_cast<double>(in_dim)));
        l.weight.set_requires_grad(true);
        if (with_bias) {
            l.bias = Tensor<T>::zeros({out_dim});
            l.bias->set_requires_grad(true);
        }
        return l;
    }

    Tensor<T> forward(const Tensor<T>& x) const {
        Tensor<T> y = matmul(x, weight);
        if (bias) y = add(y, *bias);
        return y;
    }

    void collect(const std::string& prefix, std::vector<ParamRef<T>>& params,
                 std::vector<BufferRef<T>>& buffers) {
        (void)buffers;
        params.push_back({prefix + ".weight", weight, true});
        if (bias) params.push_back({prefix + ".bias", *bias, true});
    }
};

}  // namespace zerosight
