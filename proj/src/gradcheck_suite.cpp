#include "zerosight/gradcheck_suite.hpp"

#include <algorithm>

#include "zerosight/attention.hpp"
#include "zerosight/backbone.hpp"
#include "zerosight/losses.hpp"

namespace zerosight {

namespace {

// Respaces each group of coordinates to distinct, well-separated levels so
// max-style argmaxes cannot flip under the +-1e-5 finite-difference probe.
void space_groups(TensorD& t, const std::vector<std::vector<std::size_t>>& groups, double lo,
                  double hi, Rng& rng) {
    for (const auto& g : groups) {
        std::vector<std::size_t> order(g);
        std::sort(order.begin(), order.end(),
                  [&](std::size_t a, std::size_t b) { return t.at(a) < t.at(b); });
        double step = (hi - lo) / static_cast<double>(order.size());
        for (std::size_t r = 0; r < order.size(); ++r)
            t.at(order[r]) = lo + step * (static_cast<double>(r) + 0.5) +
                             step * 0.2 * rng.uniform(-1.0, 1.0);
    }
}

// Keeps values away from a kink at zero.
void avoid_zero(TensorD& t, double margin) {
    for (std::size_t i = 0; i < t.size(); ++i) {
        double v = t.at(i);
        if (std::abs(v) < margin) t.at(i) = v < 0.0 ? v - margin : v + margin;
    }
}

std::vector<std::vector<std::size_t>> pool_window_groups(const Shape& s, std::size_t window,
                                                         std::size_t stride) {
    std::vector<std::vector<std::size_t>> groups;
    const std::size_t N = s[0], C = s[1], H = s[2], W = s[3];
    for (std::size_t n = 0; n < N; ++n)
        for (std::size_t c = 0; c < C; ++c)
            for (std::size_t oy = 0; oy * stride + window <= H; ++oy)
                for (std::size_t ox = 0; ox * stride + window <= W; ++ox) {
                    std::vector<std::size_t> g;
                    for (std::size_t ky = 0; ky < window; ++ky)
                        for (std::size_t kx = 0; kx < window; ++kx)
                            g.push_back(((n * C + c) * H + oy * stride + ky) * W + ox * stride +
                                        kx);
                    groups.push_back(std::move(g));
                }
    return groups;
}

std::vector<std::vector<std::size_t>> spatial_groups(const Shape& s) {
    std::vector<std::vector<std::size_t>> groups;
    const std::size_t N = s[0], C = s[1], HW = s[2] * s[3];
    for (std::size_t nc = 0; nc < N * C; ++nc) {
        std::vector<std::size_t> g(HW);
        for (std::size_t i = 0; i < HW; ++i) g[i] = nc * HW + i;
        groups.push_back(std::move(g));
    }
    return groups;
}

std::vector<std::vector<std::size_t>> channel_groups(const Shape& s) {
    std::vector<std::vector<std::size_t>> groups;
    const std::size_t N = s[0], C = s[1], HW = s[2] * s[3];
    for (std::size_t n = 0; n < N; ++n)
        for (std::size_t i = 0; i < HW; ++i) {
            std::vector<std::size_t> g(C);
            for (std::size_t c = 0; c < C; ++c) g[c] = (n * C + c) * HW + i;
            groups.push_back(std::move(g));
        }
    return groups;
}

// Scalar readout that weights every output element differently, so errors
// cannot cancel inside a plain sum.
TensorD weighted(const TensorD& out, const TensorD& w) { return sum(mul(out, w)); }

// n coordinates per tensor, deterministic in the rng.
std::vector<std::size_t> sample_coords(std::size_t size, std::size_t n, Rng& rng) {
    if (size <= n) {
        std::vector<std::size_t> all(size);
        for (std::size_t i = 0; i < size; ++i) all[i] = i;
        return all;
    }
    std::vector<std::size_t> picks;
    while (picks.size() < n) {
        std::size_t c = rng.uniform_index(size);
        if (std::find(picks.begin(), picks.end(), c) == picks.end()) picks.push_back(c);
    }
    std::sort(picks.begin(), picks.end());
    return picks;
}

GradCheckResult check_elementwise_binary(std::uint64_t seed, int which) {
    Rng rng(seed * 31 + static_cast<std::uint64_t>(which));
    auto a = TensorD::uniform({2, 3, 4}, rng);
    auto b = TensorD::uniform({3, 4}, rng);  // broadcast over the batch axis
    auto w = TensorD::uniform({2, 3, 4}, rng, 0.3, 1.0);
    auto fn = [=]() {
        switch (which) {
            case 0: return weighted(add(a, b), w);
            case 1: return weighted(sub(a, b), w);
            default: return weighted(mul(a, b), w);
        }
    };
    return check_gradients(fn, {a, b});
}

}  // namespace

const std::vector<OpCheck>& gradcheck_suite() {
    static const std::vector<OpCheck> suite = {
        {"add", 1e-4, [](std::uint64_t s) { return check_elementwise_binary(s, 0); }},
        {"sub", 1e-4, [](std::uint64_t s) { return check_elementwise_binary(s, 1); }},
        {"mul", 1e-4, [](std::uint64_t s) { return check_elementwise_binary(s, 2); }},
        {"scalar_ops", 1e-4,
         [](std::uint64_t seed) {
             Rng rng(seed * 31 + 3);
             auto x = TensorD::uniform({3, 4}, rng);
             auto w = TensorD::uniform({3, 4}, rng, 0.3, 1.0);
             auto fn = [=]() { return weighted(add_scalar(mul_scalar(x, 1.7), -0.3), w); };
             return check_gradients(fn, {x});
         }},
        {"exp", 1e-4,
         [](std::uint64_t seed) {
             Rng rng(seed * 31 + 4);
             auto x = TensorD::uniform({3, 4}, rng);
             auto w = TensorD::uniform({3, 4}, rng, 0.3, 1.0);
             auto fn = [=]() { return weighted(exp(x), w); };
             return check_gradients(fn, {x});
         }},
        {"log", 1e-4,
         [](std::uint64_t seed) {
             Rng rng(seed * 31 + 5);
             auto x = TensorD::uniform({3, 4}, rng, 0.2, 2.0);
             auto w = TensorD::uniform({3, 4}, rng, 0.3, 1.0);
             auto fn = [=]() { return weighted(log(x), w); };
             return check_gradients(fn, {x});
         }},
        {"relu", 1e-4,
         [](std::uint64_t seed) {
             Rng rng(seed * 31 + 6);
             auto x = TensorD::uniform({3, 6}, rng);
             avoid_zero(x, 0.05);
             auto w = TensorD::uniform({3, 6}, rng, 0.3, 1.0);
             auto fn = [=]() { return weighted(relu(x), w); };
             return check_gradients(fn, {x});
         }},
        {"leaky_relu", 1e-4,
         [](std::uint64_t seed) {
             Rng rng(seed * 31 + 7);
             auto x = TensorD::uniform({3, 6}, rng);
             avoid_zero(x, 0.05);
             auto w = TensorD::uniform({3, 6}, rng, 0.3, 1.0);
             auto fn = [=]() { return weighted(leaky_relu(x, 0.01), w); };
             return check_gradients(fn, {x});
         }},
        {"sigmoid", 1e-4,
         [](std::uint64_t seed) {
             Rng rng(seed * 31 + 8);
             auto x = TensorD::uniform({3, 6}, rng, -3.0, 3.0);
             auto w = TensorD::uniform({3, 6}, rng, 0.3, 1.0);
             auto fn = [=]() { return weighted(sigmoid(x), w); };
             return check_gradients(fn, {x});
         }},
        {"sum", 1e-4,
         [](std::uint64_t seed) {
             Rng rng(seed * 31 + 9);
             auto x = TensorD::uniform({4, 5}, rng);
             auto fn = [=]() { return mul_scalar(sum(x), 1.3); };
             return check_gradients(fn, {x});
         }},
        {"mean", 1e-4,
         [](std::uint64_t seed) {
             Rng rng(seed * 31 + 10);
             auto x = TensorD::uniform({4, 5}, rng);
             auto fn = [=]() { return mean(mul(x, x)); };
             return check_gradients(fn, {x});
         }},
        {"sum_axis", 1e-4,
         [](std::uint64_t seed) {
             Rng rng(seed * 31 + 11);
             auto x = TensorD::uniform({3, 4, 2}, rng);
             auto w = TensorD::uniform({3, 2}, rng, 0.3, 1.0);
             auto fn = [=]() { return weighted(sum_axis(x, 1), w); };
             return check_gradients(fn, {x});
         }},
        {"matmul", 1e-6,
         [](std::uint64_t seed) {
             Rng rng(seed * 31 + 12);
             auto a = TensorD::uniform({3, 4}, rng);
             auto b = TensorD::uniform({4, 2}, rng);
             auto w = TensorD::uniform({3, 2}, rng, 0.3, 1.0);
             auto fn = [=]() { return weighted(matmul(a, b), w); };
             return check_gradients(fn, {a, b});
         }},
        {"transpose", 1e-4,
         [](std::uint64_t seed) {
             Rng rng(seed * 31 + 13);
             auto a = TensorD::uniform({3, 4}, rng);
             auto w = TensorD::uniform({4, 3}, rng, 0.3, 1.0);
             auto fn = [=]() { return weighted(transpose2d(a), w); };
             return check_gradients(fn, {a});
         }},
        {"reshape", 1e-4,
         [](std::uint64_t seed) {
             Rng rng(seed * 31 + 14);
             auto a = TensorD::uniform({3, 4}, rng);
             auto w = TensorD::uniform({2, 6}, rng, 0.3, 1.0);
             auto fn = [=]() { return weighted(reshape(mul(a, a), {2, 6}), w); };
             return check_gradients(fn, {a});
         }},
        {"concat", 1e-4,
         [](std::uint64_t seed) {
             Rng rng(seed * 31 + 15);
             auto a = TensorD::uniform({2, 3, 2, 2}, rng);
             auto b = TensorD::uniform({2, 1, 2, 2}, rng);
             auto w = TensorD::uniform({2, 4, 2, 2}, rng, 0.3, 1.0);
             auto fn = [=]() { return weighted(concat(a, b, 1), w); };
             return check_gradients(fn, {a, b});
         }},
        {"conv2d", 1e-5,
         [](std::uint64_t seed) {
             Rng rng(seed * 31 + 16);
             auto x = TensorD::uniform({2, 3, 8, 8}, rng);
             auto k = TensorD::uniform({4, 3, 3, 3}, rng);
             auto b = TensorD::uniform({4}, rng);
             auto w = TensorD::uniform({2, 4, 8, 8}, rng, 0.3, 1.0);
             auto fn = [=]() {
                 return weighted(conv2d(x, k, std::optional<TensorD>(b), 1, 1), w);
             };
             return check_gradients(fn, {x, k, b});
         }},
        {"batch_norm", 1e-4,
         [](std::uint64_t seed) {
             Rng rng(seed * 31 + 17);
             auto x = TensorD::uniform({4, 2, 3, 3}, rng);
             auto g = TensorD::uniform({2}, rng, 0.5, 1.5);
             auto b = TensorD::uniform({2}, rng);
             auto w = TensorD::uniform({4, 2, 3, 3}, rng, 0.3, 1.0);
             auto fn = [=]() {
                 BatchNormState<double> state;
                 return weighted(batch_norm(x, g, b, state, NormMode::Train), w);
             };
             return check_gradients(fn, {x, g, b});
         }},
        {"max_pool2d", 1e-5,
         [](std::uint64_t seed) {
             Rng rng(seed * 31 + 18);
             auto x = TensorD::uniform({2, 4, 4, 4}, rng);
             space_groups(x, pool_window_groups(x.shape(), 2, 2), -1.0, 1.0, rng);
             auto w = TensorD::uniform({2, 4, 2, 2}, rng, 0.3, 1.0);
             auto fn = [=]() { return weighted(max_pool2d(x, 2, 2, 0), w); };
             return check_gradients(fn, {x});
         }},
        {"avg_pool2d", 1e-5,
         [](std::uint64_t seed) {
             Rng rng(seed * 31 + 19);
             auto x = TensorD::uniform({2, 4, 4, 4}, rng);
             auto w = TensorD::uniform({2, 4, 2, 2}, rng, 0.3, 1.0);
             auto fn = [=]() { return weighted(avg_pool2d(x, 2, 2, 0), w); };
             return check_gradients(fn, {x});
         }},
        {"global_avg_pool", 1e-5,
         [](std::uint64_t seed) {
             Rng rng(seed * 31 + 20);
             auto x = TensorD::uniform({2, 4, 4, 4}, rng);
             auto w = TensorD::uniform({2, 4, 1, 1}, rng, 0.3, 1.0);
             auto fn = [=]() { return weighted(global_avg_pool(x), w); };
             return check_gradients(fn, {x});
         }},
        {"global_max_pool", 1e-5,
         [](std::uint64_t seed) {
             Rng rng(seed * 31 + 21);
             auto x = TensorD::uniform({2, 4, 4, 4}, rng);
             space_groups(x, spatial_groups(x.shape()), -1.0, 1.0, rng);
             auto w = TensorD::uniform({2, 4, 1, 1}, rng, 0.3, 1.0);
             auto fn = [=]() { return weighted(global_max_pool(x), w); };
             return check_gradients(fn, {x});
         }},
        {"channel_max", 1e-5,
         [](std::uint64_t seed) {
             Rng rng(seed * 31 + 22);
             auto x = TensorD::uniform({2, 4, 4, 4}, rng);
             space_groups(x, channel_groups(x.shape()), -1.0, 1.0, rng);
             auto w = TensorD::uniform({2, 1, 4, 4}, rng, 0.3, 1.0);
             auto fn = [=]() { return weighted(channel_max(x), w); };
             return check_gradients(fn, {x});
         }},
        {"channel_mean", 1e-5,
         [](std::uint64_t seed) {
             Rng rng(seed * 31 + 23);
             auto x = TensorD::uniform({2, 4, 4, 4}, rng);
             auto w = TensorD::uniform({2, 1, 4, 4}, rng, 0.3, 1.0);
             auto fn = [=]() { return weighted(channel_mean(x), w); };
             return check_gradients(fn, {x});
         }},
        {"l2_normalize", 1e-4,
         [](std::uint64_t seed) {
             Rng rng(seed * 31 + 24);
             auto x = TensorD::uniform({3, 5}, rng);
             auto w = TensorD::uniform({3, 5}, rng, 0.3, 1.0);
             auto fn = [=]() { return weighted(l2_normalize(x, 1), w); };
             return check_gradients(fn, {x});
         }},
        {"log_softmax", 1e-4,
         [](std::uint64_t seed) {
             Rng rng(seed * 31 + 25);
             auto x = TensorD::uniform({3, 5}, rng, -2.0, 2.0);
             auto w = TensorD::uniform({3, 5}, rng, 0.3, 1.0);
             auto fn = [=]() { return weighted(log_softmax(x, 1), w); };
             return check_gradients(fn, {x});
         }},
        {"cbam_forward", 1e-4,
         [](std::uint64_t seed) {
             Rng rng(seed * 31 + 26);
             auto block = CbamBlock<double>::make(8, 4, rng);
             // positive bias keeps the MLP relu units off their kink
             for (std::size_t i = 0; i < block.mlp_b1.size(); ++i) block.mlp_b1.at(i) = 0.3;
             // Every position gets one designated winner channel far above
             // the rest, so the channel_max argmax survives the channel
             // gates (sigmoid ratio stays well under the 0.9/0.2 margin);
             // spacing within the winner/loser groups keeps the spatial
             // argmaxes stable too.
             const Shape fs{2, 8, 6, 6};
             const std::size_t C = 8, HW = 36;
             auto f = TensorD::uniform(fs, rng, 0.05, 0.2);
             std::vector<std::vector<std::size_t>> winner_groups(2 * C), loser_groups(2 * C);
             for (std::size_t n = 0; n < 2; ++n)
                 for (std::size_t i = 0; i < HW; ++i) {
                     std::size_t star = rng.uniform_index(C);
                     for (std::size_t c = 0; c < C; ++c) {
                         auto& bucket =
                             c == star ? winner_groups[n * C + c] : loser_groups[n * C + c];
                         bucket.push_back((n * C + c) * HW + i);
                     }
                 }
             space_groups(f, winner_groups, 0.9, 1.5, rng);
             space_groups(f, loser_groups, 0.05, 0.2, rng);
             auto w = TensorD::uniform(fs, rng, 0.3, 1.0);
             auto fn = [=]() { return weighted(block.forward(f), w); };
             return check_gradients(fn, {f, block.mlp_w1, block.mlp_b1, block.mlp_w2,
                                         block.mlp_b2, block.spatial.weight,
                                         *block.spatial.bias});
         }},
        {"ia_forward", 1e-4,
         [](std::uint64_t seed) {
             Rng rng(seed * 31 + 27);
             auto ia = InputAttention<double>::make(4, rng);
             auto f = TensorD::uniform({2, 4, 6, 6}, rng);
             auto w = TensorD::uniform({2, 4, 6, 6}, rng, 0.3, 1.0);
             auto fn = [=]() { return weighted(ia.forward(f), w); };
             return check_gradients(fn, {f, ia.conv_a.weight, *ia.conv_a.bias, ia.conv_b.weight,
                                         *ia.conv_b.bias});
         }},
        {"proxy_nca", 1e-4,
         [](std::uint64_t seed) {
             Rng rng(seed * 31 + 28);
             auto emb = TensorD::uniform({6, 5}, rng);
             auto bank = ProxyBank<double>::make(4, 5, seed * 97 + 5);
             std::vector<std::size_t> labels{0, 1, 2, 3, 0, 1};
             auto fn = [=]() mutable { return proxy_nca(emb, labels, bank); };
             return check_gradients(fn, {emb, bank.proxies});
         }},
        {"smoothed_softmax", 1e-4,
         [](std::uint64_t seed) {
             Rng rng(seed * 31 + 29);
             auto logits = TensorD::uniform({5, 4}, rng, -2.0, 2.0);
             std::vector<std::size_t> labels{0, 1, 2, 3, 1};
             auto fn = [=]() { return smoothed_softmax(logits, labels, 0.25); };
             return check_gradients(fn, {logits});
         }},
        {"embed", 1e-3,
         [](std::uint64_t seed) {
             Rng rng(seed * 31 + 30);
             BackboneConfig cfg;
             cfg.widths = {4, 8};
             cfg.blocks_per_stage = 1;
             cfg.input_size = 8;
             cfg.placement = Placement::None;
             auto bb = Backbone<double>::build(cfg, seed * 131 + 7);
             auto batch = TensorD::uniform({2, 3, 8, 8}, rng, 0.0, 1.0);
             auto w = TensorD::uniform({2, 8}, rng, 0.3, 1.0);
             auto fn = [=]() mutable {
                 return weighted(bb.embed(batch, NormMode::Train), w);
             };
             return check_gradients(fn, {bb.stem().weight}, 1e-5, nullptr, 1e-4);
         }},
        {"combined_full_graph", 1e-3,
         [](std::uint64_t seed) {
             Rng rng(seed * 31 + 31);
             BackboneConfig bcfg;
             bcfg.widths = {4, 8};
             bcfg.blocks_per_stage = 1;
             bcfg.input_size = 8;
             bcfg.placement = Placement::Early;
             bcfg.cbam_reduction = 2;
             bcfg.use_input_attention = true;
             auto bb = Backbone<double>::build(bcfg, seed * 131 + 9);
             auto bank = ProxyBank<double>::make(3, 8, seed * 177 + 3);
             auto head = LossHead<double>::make(8, 3, true, seed * 211 + 11);
             auto batch = TensorD::uniform({4, 3, 8, 8}, rng, 0.0, 1.0);
             std::vector<std::size_t> labels{0, 1, 2, 0};
             // probe a deterministic sample of coordinates on every parameter
             std::vector<TensorD> inputs{batch};
             std::vector<ParamRef<double>> params;
             std::vector<BufferRef<double>> buffers;
             bb.collect(params, buffers);
             bank.collect(params);
             head.collect(params, buffers);
             for (auto& p : params) inputs.push_back(p.tensor);
             std::vector<std::vector<std::size_t>> coords;
             Rng coord_rng(seed * 5 + 1);
             for (auto& t : inputs) coords.push_back(sample_coords(t.size(), 10, coord_rng));
             auto fn2 = [=]() mutable {
                 TensorD emb = bb.embed(batch, NormMode::Train);
                 return combined_loss(emb, labels, head, bank).total;
             };
             return check_gradients(fn2, inputs, 1e-5, &coords, 1e-4);
         }},
    };
    return suite;
}

}  // namespace zerosight
