#pragma once

#include <cstdint>

#include "zerosight/layers.hpp"

namespace zerosight {

// One learnable proxy vector per training class, row i <-> class index i.
// Rows are L2-normalized inside the loss on every forward pass.
template <class T>
struct ProxyBank {
    Tensor<T> proxies;  // (n_classes, dim)

    static ProxyBank make(std::size_t n_classes, std::size_t dim, std::uint64_t seed) {
        if (n_classes == 0 || dim == 0)
            throw ConfigError("proxy bank: need n_classes >= 1 and dim >= 1");
        ProxyBank b;
        Rng rng(seed);
        b.proxies = Tensor<T>::normal({n_classes, dim}, rng);
        // unit-norm rows
        for (std::size_t c = 0; c < n_classes; ++c) {
            double sq = 0.0;
            for (std::size_t d = 0; d < dim; ++d) {
                double v = static_cast<double>(b.proxies.at(c * dim + d));
                sq += v * v;
            }
            double inv = 1.0 / std::max(std::sqrt(sq), 1e-12);
            for (std::size_t d = 0; d < dim; ++d)
                b.proxies.at(c * dim + d) = static_cast<T>(
                    static_cast<double>(b.proxies.at(c * dim + d)) * inv);
        }
        b.proxies.set_requires_grad(true);
        return b;
    }

    std::size_t n_classes() const { return proxies.dim(0); }
    std::size_t dim() const { return proxies.dim(1); }

    void collect(std::vector<ParamRef<T>>& params) {
        params.push_back({"proxy.bank", proxies, false});
    }
};

// ProxyNCA with squared Euclidean distance on L2-normalized embeddings and
// proxies. Per sample: d(x, p(y)) + log(sum over z != y of exp(-d(x, p(z)))),
// i.e. the negative proxies alone form the denominator; mean over the batch.
template <class T>
Tensor<T> proxy_nca(const Tensor<T>& emb, const std::vector<std::size_t>& labels,
                    ProxyBank<T>& bank) {
    if (emb.rank() != 2)
        throw ShapeError("proxy_nca: expected (N,D) embeddings, got " + shape_str(emb.shape()));
    const std::size_t n = emb.dim(0), d = emb.dim(1);
    const std::size_t n_proxies = bank.n_classes();
    if (n == 0) throw ShapeError("proxy_nca: empty batch");
    if (labels.size() != n)
        throw ShapeError("proxy_nca: " + std::to_string(labels.size()) + " labels for " +
                         std::to_string(n) + " embeddings");
    if (bank.dim() != d)
        throw ShapeError("proxy_nca: embedding dim " + std::to_string(d) +
                         " != proxy dim " + std::to_string(bank.dim()));
    if (n_proxies < 2)
        throw ConfigError("proxy_nca: bank of size " + std::to_string(n_proxies) +
                          " leaves no negative proxies");
    for (std::size_t i = 0; i < n; ++i)
        if (labels[i] >= n_proxies)
            throw ConfigError("proxy_nca: label " + std::to_string(labels[i]) +
                              " outside proxy bank of size " + std::to_string(n_proxies));

    auto xh = l2_normalize(emb, 1);
    auto ph = l2_normalize(bank.proxies, 1);
    // squared distances (N,C) = |x|^2 + |p|^2 - 2 x.p
    auto x_sq = sum_axis(mul(xh, xh), 1, true);                  // (N,1)
    auto p_sq = transpose2d(sum_axis(mul(ph, ph), 1, true));     // (1,C)
    auto cross = matmul(xh, transpose2d(ph));                    // (N,C)
    auto dist = add(add(x_sq, p_sq), mul_scalar(cross, T(-2)));

    Tensor<T> pos_mask({n, n_proxies});
    Tensor<T> neg_mask({n, n_proxies}, T(1));
    for (std::size_t i = 0; i < n; ++i) {
        pos_mask.at(i * n_proxies + labels[i]) = T(1);
        neg_mask.at(i * n_proxies + labels[i]) = T(0);
    }
    auto pos = sum_axis(mul(dist, pos_mask), 1);                       // (N)
    auto lse = log(sum_axis(mul(exp(mul_scalar(dist, T(-1))), neg_mask), 1));
    return mean(add(pos, lse));
}

// Label-smoothed softmax loss. Target vector per sample: 1 - eps at the true
// class and +eps at every other class (the targets sum to 1 + (C-2)*eps; the
// conventional renormalized variant hides behind normalize_targets).
template <class T>
Tensor<T> smoothed_softmax(const Tensor<T>& logits, const std::vector<std::size_t>& labels,
                           T epsilon, bool normalize_targets = false) {
    if (logits.rank() != 2)
        throw ShapeError("smoothed_softmax: expected (N,C) logits, got " +
                         shape_str(logits.shape()));
    const std::size_t n = logits.dim(0), c = logits.dim(1);
    if (c < 2) throw ConfigError("smoothed_softmax: need at least 2 classes");
    // inclusive upper bound: eps = 1/N hits exactly 0.5 for two classes
    if (!(epsilon >= T(0) && epsilon <= T(0.5)))
        throw ConfigError("smoothed_softmax: epsilon must lie in [0, 0.5]");
    if (labels.size() != n)
        throw ShapeError("smoothed_softmax: " + std::to_string(labels.size()) + " labels for " +
                         std::to_string(n) + " rows");
    for (std::size_t i = 0; i < n; ++i)
        if (labels[i] >= c)
            throw ConfigError("smoothed_softmax: label " + std::to_string(labels[i]) +
                              " >= class count " + std::to_string(c));

    Tensor<T> targets({n, c}, epsilon);
    for (std::size_t i = 0; i < n; ++i) targets.at(i * c + labels[i]) = T(1) - epsilon;
    if (normalize_targets) {
        for (std::size_t i = 0; i < n; ++i) {
            double row = 0.0;
            for (std::size_t j = 0; j < c; ++j)
                row += static_cast<double>(targets.at(i * c + j));
            for (std::size_t j = 0; j < c; ++j)
                targets.at(i * c + j) = static_cast<T>(
                    static_cast<double>(targets.at(i * c + j)) / row);
        }
    }
    return mul_scalar(mean_axis(sum_axis(mul(targets, log_softmax(logits, 1)), 1), 0), T(-1));
}

// Smoothing targets as a plain vector, for verification against the rule.
template <class T>
std::vector<T> smoothing_targets(std::size_t n_classes, std::size_t true_class, T epsilon) {
    std::vector<T> q(n_classes, epsilon);
    q[true_class] = T(1) - epsilon;
    return q;
}

struct LossWeights {
    double lambda_proxy = 1.0;
    double lambda_softmax = 0.5;
};

// Training head: proxy loss reads the raw embeddings; the softmax branch
// reads them through a batch-norm "separation" layer and a bias-free linear
// classifier. Inference never touches this head.
template <class T>
struct LossHead {
    bool use_separation_norm = true;
    BatchNormLayer<T> norm;       // over the embedding dim
    LinearLayer<T> classifier;    // (D, n_classes), no bias
    T epsilon = T(0);             // 1 / n_train_classes
    bool normalize_targets = false;
    LossWeights weights;
    std::size_t forward_calls = 0;  // execution trace: must stay 0 in eval

    static LossHead make(std::size_t dim, std::size_t n_classes, bool use_norm,
                         std::uint64_t seed) {
        if (n_classes < 2) throw ConfigError("loss head: need at least 2 training classes");
        LossHead h;
        Rng rng(seed);
        h.use_separation_norm = use_norm;
        if (use_norm) h.norm = BatchNormLayer<T>(dim);
        h.classifier = LinearLayer<T>::make(dim, n_classes, false, rng);
        h.epsilon = static_cast<T>(1.0 / static_cast<double>(n_classes));
        return h;
    }

    // Softmax-branch logits from pre-normalization embeddings.
    Tensor<T> logits(const Tensor<T>& pre_norm_emb, NormMode mode) {
        ++forward_calls;
        Tensor<T> z = use_separation_norm ? norm.forward(pre_norm_emb, mode) : pre_norm_emb;
        return classifier.forward(z);
    }

    void collect(std::vector<ParamRef<T>>& params, std::vector<BufferRef<T>>& buffers) {
        if (use_separation_norm) collect_norm(norm, "head.norm", params, buffers);
        params.push_back({"head.classifier.weight", classifier.weight, true});
    }
};

template <class T>
struct LossParts {
    Tensor<T> total;
    Tensor<T> proxy;
    Tensor<T> softmax;
};

// lambda_P * L_P + lambda_S * L_S on one batch of pre-normalization
// embeddings. The proxy branch sees the embeddings as-is; the softmax branch
// goes through the head.
template <class T>
LossParts<T> combined_loss(const Tensor<T>& pre_norm_emb,
                           const std::vector<std::size_t>& labels, LossHead<T>& head,
                           ProxyBank<T>& bank) {
    LossParts<T> parts;
    parts.proxy = proxy_nca(pre_norm_emb, labels, bank);
    parts.softmax = smoothed_softmax(head.logits(pre_norm_emb, NormMode::Train), labels,
                                     head.epsilon, head.normalize_targets);
    parts.total = add(mul_scalar(parts.proxy, static_cast<T>(head.weights.lambda_proxy)),
                      mul_scalar(parts.softmax, static_cast<T>(head.weights.lambda_softmax)));
    return parts;
}

}  // namespace zerosight
