#pragma once

#include "zerosight/layers.hpp"

namespace zerosight {

// Convolutional block attention: channel gate from a shared two-layer MLP on
// max- and avg-pooled descriptors, then a spatial gate from a 7x7 conv over
// stacked channel-max/channel-mean maps. Channel attention runs first.
template <class T>
struct CbamBlock {
    std::size_t channels = 0;
    std::size_t reduction = 16;
    Tensor<T> mlp_w1;  // (C, C/r)
    Tensor<T> mlp_b1;  // (C/r)
    Tensor<T> mlp_w2;  // (C/r, C)
    Tensor<T> mlp_b2;  // (C)
    Conv2dLayer<T> spatial;  // 7x7, 2 -> 1, pad 3

    static CbamBlock make(std::size_t channels, std::size_t reduction, Rng& rng) {
        if (reduction == 0 || channels % reduction != 0)
            throw ConfigError("cbam: channels (" + std::to_string(channels) +
                              ") not divisible by reduction ratio (" +
                              std::to_string(reduction) + ")");
        CbamBlock b;
        b.channels = channels;
        b.reduction = reduction;
        std::size_t hidden = channels / reduction;
        b.mlp_w1 = Tensor<T>::normal({channels, hidden}, rng, 0.0,
                                     std::sqrt(2.0 / static_cast<double>(channels)));
        b.mlp_b1 = Tensor<T>::zeros({hidden});
        b.mlp_w2 = Tensor<T>::normal({hidden, channels}, rng, 0.0,
                                     std::sqrt(2.0 / static_cast<double>(hidden)));
        b.mlp_b2 = Tensor<T>::zeros({channels});
        for (Tensor<T>* t : {&b.mlp_w1, &b.mlp_b1, &b.mlp_w2, &b.mlp_b2})
            t->set_requires_grad(true);
        b.spatial = Conv2dLayer<T>::make(1, 2, 7, 1, 3, true, rng);
        return b;
    }

    Tensor<T> forward(const Tensor<T>& f) const {
        if (f.rank() != 4 || f.dim(1) != channels)
            throw ShapeError("cbam: expected channel dim 1 = " + std::to_string(channels) +
                             ", got input " + shape_str(f.shape()));
        const std::size_t n = f.dim(0);
        auto mlp = [&](const Tensor<T>& desc) {
            auto h = relu(add(matmul(desc, mlp_w1), mlp_b1));
            return add(matmul(h, mlp_w2), mlp_b2);
        };
        auto avg_desc = reshape(global_avg_pool(f), {n, channels});
        auto max_desc = reshape(global_max_pool(f), {n, channels});
        auto channel_gate =
            reshape(sigmoid(add(mlp(avg_desc), mlp(max_desc))), {n, channels, 1, 1});
        auto f1 = mul(f, channel_gate);
        auto stacked = concat(channel_max(f1), channel_mean(f1), 1);  // (N,2,H,W)
        auto spatial_gate = sigmoid(spatial.forward(stacked));        // (N,1,H,W)
        return mul(f1, spatial_gate);
    }

    void collect(const std::string& prefix, std::vector<ParamRef<T>>& params,
                 std::vector<BufferRef<T>>& buffers) {
        params.push_back({prefix + ".mlp.w1", mlp_w1, true});
        params.push_back({prefix + ".mlp.b1", mlp_b1, true});
        params.push_back({prefix + ".mlp.w2", mlp_w2, true});
        params.push_back({prefix + ".mlp.b2", mlp_b2, true});
        spatial.collect(prefix + ".spatial", params, buffers);
    }
};

// Input attention: IA(F) = F * sigmoid(conv_b(leaky_relu(conv_a(F)))).
// Both convs are 3x3, C -> C, pad 1; no pooling anywhere on the gate path.
template <class T>
struct InputAttention {
    Conv2dLayer<T> conv_a;
    Conv2dLayer<T> conv_b;
    std::size_t channels = 0;
    T slope = T(0.01);

    static InputAttention make(std::size_t channels, Rng& rng) {
        InputAttention ia;
        ia.channels = channels;
        ia.conv_a = Conv2dLayer<T>::make(channels, channels, 3, 1, 1, true, rng);
        ia.conv_b = Conv2dLayer<T>::make(channels, channels, 3, 1, 1, true, rng);
        return ia;
    }

    Tensor<T> forward(const Tensor<T>& f) const {
        if (f.rank() != 4 || f.dim(1) != channels)
            throw ShapeError("input_attention: expected channel dim 1 = " +
                             std::to_string(channels) + ", got input " + shape_str(f.shape()));
        auto gate = sigmoid(conv_b.forward(leaky_relu(conv_a.forward(f), slope)));
        return mul(f, gate);
    }

    void collect(const std::string& prefix, std::vector<ParamRef<T>>& params,
                 std::vector<BufferRef<T>>& buffers) {
        conv_a.collect(prefix + ".conv_a", params, buffers);
        conv_b.collect(prefix + ".conv_b", params, buffers);
    }
};

}  // namespace zerosight
