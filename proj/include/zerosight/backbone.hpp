#pragma once

#include <cstdint>

#include "zerosight/attention.hpp"

namespace zerosight {

// Which stages get a CBAM block attached to their basic blocks.
enum class Placement { None, Early, Late, Everywhere };

inline const char* placement_name(Placement p) {
    switch (p) {
        case Placement::None: return "none";
        case Placement::Early: return "early";
        case Placement::Late: return "late";
        case Placement::Everywhere: return "everywhere";
    }
    return "none";
}

inline Placement placement_from(const std::string& s) {
    if (s == "none") return Placement::None;
    if (s == "early") return Placement::Early;
    if (s == "late") return Placement::Late;
    if (s == "everywhere") return Placement::Everywhere;
    throw ConfigError("unknown placement policy '" + s +
                      "' (expected none|early|late|everywhere)");
}

struct BackboneConfig {
    std::vector<std::size_t> widths{16, 32, 64, 128};
    std::size_t blocks_per_stage = 1;
    bool use_input_attention = false;
    Placement placement = Placement::None;
    std::size_t cbam_reduction = 16;
    std::size_t in_channels = 3;
    std::size_t input_size = 32;

    // The embedding is the globally pooled last feature map; no projection.
    std::size_t embedding_dim() const { return widths.back(); }

    bool big_stem() const { return input_size >= 64; }
};

// Residual unit: two 3x3 convs with norm and relu, summed with the residual.
// The residual is identity when channel counts match, else 1x1 conv + norm.
// An attached CBAM acts on the branch output before the addition.
template <class T>
struct BasicBlock {
    Conv2dLayer<T> conv1, conv2;
    BatchNormLayer<T> norm1, norm2;
    bool has_downsample = false;
    Conv2dLayer<T> ds_conv;
    BatchNormLayer<T> ds_norm;
    bool has_cbam = false;
    CbamBlock<T> cbam;

    static BasicBlock make(std::size_t in_ch, std::size_t out_ch, bool with_cbam,
                           std::size_t reduction, Rng& rng) {
        BasicBlock b;
        b.conv1 = Conv2dLayer<T>::make(out_ch, in_ch, 3, 1, 1, false, rng);
        b.norm1 = BatchNormLayer<T>(out_ch);
        b.conv2 = Conv2dLayer<T>::make(out_ch, out_ch, 3, 1, 1, false, rng);
        b.norm2 = BatchNormLayer<T>(out_ch);
        if (in_ch != out_ch) {
            b.has_downsample = true;
            b.ds_conv = Conv2dLayer<T>::make(out_ch, in_ch, 1, 1, 0, false, rng);
            b.ds_norm = BatchNormLayer<T>(out_ch);
        }
        if (with_cbam) {
            b.has_cbam = true;
            b.cbam = CbamBlock<T>::make(out_ch, reduction, rng);
        }
        return b;
    }

    Tensor<T> forward(const Tensor<T>& x, NormMode mode) {
        auto y = relu(norm1.forward(conv1.forward(x), mode));
        y = norm2.forward(conv2.forward(y), mode);
        if (has_cbam) y = cbam.forward(y);
        Tensor<T> residual = has_downsample ? ds_norm.forward(ds_conv.forward(x), mode) : x;
        return relu(add(y, residual));
    }

    void collect(const std::string& prefix, std::vector<ParamRef<T>>& params,
                 std::vector<BufferRef<T>>& buffers) {
        conv1.collect(prefix + ".conv1", params, buffers);
        collect_norm(norm1, prefix + ".norm1", params, buffers);
        conv2.collect(prefix + ".conv2", params, buffers);
        collect_norm(norm2, prefix + ".norm2", params, buffers);
        if (has_downsample) {
            ds_conv.collect(prefix + ".downsample.conv", params, buffers);
            collect_norm(ds_norm, prefix + ".downsample.norm", params, buffers);
        }
        if (has_cbam) cbam.collect(prefix + ".cbam", params, buffers);
    }
};

// Fully convolutional feature extractor. Stage transitions downsample with a
// 2x2 max pool (stride-2 convs cannot satisfy the exact output-extent rule on
// even toy extents); the in-block convs all run at stride 1. Inputs of 64 px
// and up get the 7x7/stride-2 stem with a 3x3/stride-2 max pool; smaller
// inputs use a stride-1 stem with the pool dropped so extents stay positive.
template <class T>
class Backbone {
public:
    static Backbone build(const BackboneConfig& cfg, std::uint64_t seed) {
        if (cfg.widths.empty()) throw ConfigError("backbone: no stage widths given");
        for (std::size_t i = 0; i < cfg.widths.size(); ++i)
            if (cfg.widths[i] == 0)
                throw ConfigError("backbone: stage " + std::to_string(i) + " has zero width");
        if (cfg.blocks_per_stage == 0)
            throw ConfigError("backbone: blocks_per_stage must be >= 1");
        if (cfg.in_channels == 0) throw ConfigError("backbone: in_channels must be >= 1");

        Backbone m;
        m.cfg_ = cfg;
        Rng rng(seed);
        m.stem_conv_ = Conv2dLayer<T>::make(cfg.widths[0], cfg.in_channels, 7,
                                            cfg.big_stem() ? 2 : 1, 3, false, rng);
        if (cfg.use_input_attention) m.ia_ = InputAttention<T>::make(cfg.widths[0], rng);
        m.stem_norm_ = BatchNormLayer<T>(cfg.widths[0]);

        std::size_t n_stages = cfg.widths.size();
        for (std::size_t s = 0; s < n_stages; ++s) {
            bool attach = cfg.placement == Placement::Everywhere ||
                          (cfg.placement == Placement::Early && s == 0) ||
                          (cfg.placement == Placement::Late && s == n_stages - 1);
            for (std::size_t b = 0; b < cfg.blocks_per_stage; ++b) {
                std::size_t in_ch = (b == 0) ? (s == 0 ? cfg.widths[0] : cfg.widths[s - 1])
                                             : cfg.widths[s];
                m.blocks_.push_back(BasicBlock<T>::make(in_ch, cfg.widths[s], attach,
                                                        cfg.cbam_reduction, rng));
                m.block_stage_.push_back(s);
            }
        }
        return m;
    }

    // Final feature map, NCHW.
    Tensor<T> features(const Tensor<T>& batch, NormMode mode) {
        if (batch.rank() != 4)
            throw ShapeError("embed: expected NCHW batch, got " + shape_str(batch.shape()));
        if (batch.dim(1) != cfg_.in_channels)
            throw ShapeError("embed: batch has " + std::to_string(batch.dim(1)) +
                             " channels, backbone expects " + std::to_string(cfg_.in_channels));
        check_spatial(batch.dim(2), batch.dim(3));
        auto x = stem_conv_.forward(batch);
        if (ia_) x = ia_->forward(x);
        x = relu(stem_norm_.forward(x, mode));
        if (cfg_.big_stem()) x = max_pool2d(x, 3, 2, 1);
        for (std::size_t i = 0; i < blocks_.size(); ++i) {
            bool stage_entry = i > 0 && block_stage_[i] != block_stage_[i - 1];
            if (stage_entry) x = max_pool2d(x, 2, 2, 0);
            x = blocks_[i].forward(x, mode);
        }
        return x;
    }

    // N x D embeddings via global average pooling; no dense layers anywhere.
    Tensor<T> embed(const Tensor<T>& batch, NormMode mode) {
        auto f = features(batch, mode);
        return reshape(global_avg_pool(f), {f.dim(0), f.dim(1)});
    }

    void collect(std::vector<ParamRef<T>>& params, std::vector<BufferRef<T>>& buffers) {
        stem_conv_.collect("stem.conv", params, buffers);
        if (ia_) ia_->collect("ia", params, buffers);
        collect_norm(stem_norm_, "stem.norm", params, buffers);
        for (std::size_t i = 0; i < blocks_.size(); ++i)
            blocks_[i].collect("block" + std::to_string(i + 1), params, buffers);
    }

    std::vector<std::string> parameter_names() {
        std::vector<ParamRef<T>> params;
        std::vector<BufferRef<T>> buffers;
        collect(params, buffers);
        std::vector<std::string> names;
        for (auto& p : params) names.push_back(p.name);
        return names;
    }

    std::size_t parameter_count() {
        std::vector<ParamRef<T>> params;
        std::vector<BufferRef<T>> buffers;
        collect(params, buffers);
        std::size_t n = 0;
        for (auto& p : params) n += p.tensor.size();
        return n;
    }

    const BackboneConfig& config() const { return cfg_; }
    std::size_t num_blocks() const { return blocks_.size(); }
    BasicBlock<T>& block(std::size_t i) { return blocks_[i]; }
    Conv2dLayer<T>& stem() { return stem_conv_; }
    InputAttention<T>* input_attention() { return ia_ ? &*ia_ : nullptr; }

private:
    // Walk the extent arithmetic up front so a bad input size names the
    // offending stage instead of failing inside an op.
    void check_spatial(std::size_t h, std::size_t w) const {
        auto shrink = [](std::size_t e, std::size_t window, std::size_t stride, std::size_t pad,
                         const std::string& where) {
            std::size_t padded = e + 2 * pad;
            if (padded < window || (padded - window) % stride != 0)
                throw ConfigError("backbone: spatial extent " + std::to_string(e) +
                                  " incompatible at " + where);
            return (padded - window) / stride + 1;
        };
        for (std::size_t e : {h, w}) {
            std::size_t cur = shrink(e, 7, cfg_.big_stem() ? 2 : 1, 3, "stem conv");
            if (cfg_.big_stem()) cur = shrink(cur, 3, 2, 1, "stem pool");
            for (std::size_t s = 1; s < cfg_.widths.size(); ++s) {
                if (cur < 2)
                    throw ConfigError("backbone: spatial extent collapsed to " +
                                      std::to_string(cur) + " before stage " +
                                      std::to_string(s) + " (of " +
                                      std::to_string(cfg_.widths.size()) + ")");
                cur = shrink(cur, 2, 2, 0, "stage " + std::to_string(s) + " pool");
            }
            if (cur == 0)
                throw ConfigError("backbone: spatial extent collapsed to zero at final stage");
        }
    }

    BackboneConfig cfg_;
    Conv2dLayer<T> stem_conv_;
    BatchNormLayer<T> stem_norm_;
    std::optional<InputAttention<T>> ia_;
    std::vector<BasicBlock<T>> blocks_;
    std::vector<std::size_t> block_stage_;
};

}  // namespace zerosight
