#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cstring>
#include <set>

#include "zerosight/backbone.hpp"
#include "zerosight/gradcheck_suite.hpp"
#include "zerosight/serialize.hpp"

using namespace zerosight;

namespace {

BackboneConfig toy_config() {
    BackboneConfig cfg;
    cfg.widths = {8, 16};
    cfg.blocks_per_stage = 1;
    cfg.use_input_attention = true;
    cfg.placement = Placement::Early;
    cfg.cbam_reduction = 4;
    cfg.input_size = 32;
    return cfg;
}

// Independent parameter arithmetic straight from the config.
std::size_t expected_param_count(const BackboneConfig& cfg) {
    auto conv = [](std::size_t o, std::size_t i, std::size_t k) { return o * i * k * k; };
    auto norm = [](std::size_t c) { return 2 * c; };
    std::size_t total = conv(cfg.widths[0], cfg.in_channels, 7) + norm(cfg.widths[0]);
    if (cfg.use_input_attention)
        total += 2 * (conv(cfg.widths[0], cfg.widths[0], 3) + cfg.widths[0]);
    for (std::size_t s = 0; s < cfg.widths.size(); ++s) {
        bool cbam = cfg.placement == Placement::Everywhere ||
                    (cfg.placement == Placement::Early && s == 0) ||
                    (cfg.placement == Placement::Late && s == cfg.widths.size() - 1);
        for (std::size_t b = 0; b < cfg.blocks_per_stage; ++b) {
            std::size_t in = b == 0 ? (s == 0 ? cfg.widths[0] : cfg.widths[s - 1])
                                    : cfg.widths[s];
            std::size_t out = cfg.widths[s];
            total += conv(out, in, 3) + norm(out) + conv(out, out, 3) + norm(out);
            if (in != out) total += conv(out, in, 1) + norm(out);
            if (cbam) {
                std::size_t hidden = out / cfg.cbam_reduction;
                total += out * hidden + hidden + hidden * out + out;  // mlp
                total += conv(1, 2, 7) + 1;                           // spatial
            }
        }
    }
    return total;
}

}  // namespace

TEST_CASE("build is deterministic in (config, seed)") {
    auto a = Backbone<float>::build(toy_config(), 42);
    auto b = Backbone<float>::build(toy_config(), 42);
    std::vector<ParamRef<float>> pa, pb;
    std::vector<BufferRef<float>> ba, bb;
    a.collect(pa, ba);
    b.collect(pb, bb);
    REQUIRE(pa.size() == pb.size());
    for (std::size_t i = 0; i < pa.size(); ++i) {
        CHECK(pa[i].name == pb[i].name);
        REQUIRE(pa[i].tensor.size() == pb[i].tensor.size());
        CHECK(std::memcmp(pa[i].tensor.data().data(), pb[i].tensor.data().data(),
                          pa[i].tensor.size() * sizeof(float)) == 0);
    }
    auto c = Backbone<float>::build(toy_config(), 43);
    std::vector<ParamRef<float>> pc;
    std::vector<BufferRef<float>> bc;
    c.collect(pc, bc);
    CHECK(std::memcmp(pa[0].tensor.data().data(), pc[0].tensor.data().data(),
                      pa[0].tensor.size() * sizeof(float)) != 0);
}

TEST_CASE("placement controls which blocks carry cbam groups") {
    auto count_cbam_blocks = [](Placement p) {
        BackboneConfig cfg;
        cfg.widths = {8, 16, 32};
        cfg.blocks_per_stage = 2;
        cfg.placement = p;
        cfg.cbam_reduction = 4;
        auto bb = Backbone<float>::build(cfg, 1);
        std::set<std::string> blocks_with_cbam;
        for (const auto& name : bb.parameter_names()) {
            auto pos = name.find(".cbam.");
            if (pos != std::string::npos) blocks_with_cbam.insert(name.substr(0, pos));
        }
        return blocks_with_cbam;
    };
    CHECK(count_cbam_blocks(Placement::None).empty());
    CHECK(count_cbam_blocks(Placement::Early) ==
          std::set<std::string>{"block1", "block2"});
    CHECK(count_cbam_blocks(Placement::Late) ==
          std::set<std::string>{"block5", "block6"});
    CHECK(count_cbam_blocks(Placement::Everywhere).size() == 6);
}

TEST_CASE("placement changes only cbam parameter groups") {
    BackboneConfig base;
    base.widths = {8, 16};
    base.cbam_reduction = 4;
    auto names_for = [&](Placement p) {
        BackboneConfig cfg = base;
        cfg.placement = p;
        auto bb = Backbone<float>::build(cfg, 1);
        auto names = bb.parameter_names();
        return std::set<std::string>(names.begin(), names.end());
    };
    auto none = names_for(Placement::None);
    for (Placement p : {Placement::Early, Placement::Late, Placement::Everywhere}) {
        auto with = names_for(p);
        // every added name is a cbam name; nothing else moved
        std::vector<std::string> added;
        std::set_difference(with.begin(), with.end(), none.begin(), none.end(),
                            std::back_inserter(added));
        CHECK(!added.empty());
        for (const auto& n : added) CHECK(n.find(".cbam.") != std::string::npos);
        std::vector<std::string> removed;
        std::set_difference(none.begin(), none.end(), with.begin(), with.end(),
                            std::back_inserter(removed));
        CHECK(removed.empty());
    }
}

TEST_CASE("embedding dim equals the last stage width") {
    CHECK(toy_config().embedding_dim() == 16);
    auto bb = Backbone<float>::build(toy_config(), 7);
    Rng rng(3);
    auto batch = TensorF::uniform({4, 3, 32, 32}, rng, 0.0, 1.0);
    auto emb = bb.embed(batch, NormMode::Train);
    CHECK(emb.shape() == Shape{4, 16});
}

TEST_CASE("parameter count matches the closed form") {
    auto cfg1 = toy_config();
    auto bb1 = Backbone<float>::build(cfg1, 5);
    CHECK(bb1.parameter_count() == expected_param_count(cfg1));

    BackboneConfig cfg2;
    cfg2.widths = {4, 8, 16};
    cfg2.blocks_per_stage = 2;
    cfg2.placement = Placement::None;
    auto bb2 = Backbone<float>::build(cfg2, 5);
    CHECK(bb2.parameter_count() == expected_param_count(cfg2));
}

TEST_CASE("infer-mode embeddings are per-sample independent") {
    auto bb = Backbone<float>::build(toy_config(), 11);
    Rng rng(13);
    auto warm = TensorF::uniform({8, 3, 32, 32}, rng, 0.0, 1.0);
    bb.embed(warm, NormMode::Train);  // record running stats

    auto img = TensorF::uniform({1, 3, 32, 32}, rng, 0.0, 1.0);
    TensorF batch({3, 3, 32, 32});
    for (std::size_t r = 0; r < 3; ++r)
        std::copy(img.data().begin(), img.data().end(),
                  batch.data().begin() + r * img.size());
    auto emb = bb.embed(batch, NormMode::Infer);
    const std::size_t d = 16;
    for (std::size_t c = 0; c < d; ++c) {
        CHECK(emb.at(c) == emb.at(d + c));
        CHECK(emb.at(c) == emb.at(2 * d + c));
    }
}

TEST_CASE("infer-mode embed is permutation equivariant") {
    auto bb = Backbone<float>::build(toy_config(), 17);
    Rng rng(19);
    auto warm = TensorF::uniform({8, 3, 32, 32}, rng, 0.0, 1.0);
    bb.embed(warm, NormMode::Train);

    auto batch = TensorF::uniform({4, 3, 32, 32}, rng, 0.0, 1.0);
    auto emb = bb.embed(batch, NormMode::Infer);
    std::vector<std::size_t> perm{2, 0, 3, 1};
    TensorF shuffled({4, 3, 32, 32});
    const std::size_t stride = 3 * 32 * 32;
    for (std::size_t r = 0; r < 4; ++r)
        std::copy(batch.data().begin() + perm[r] * stride,
                  batch.data().begin() + (perm[r] + 1) * stride,
                  shuffled.data().begin() + r * stride);
    auto emb2 = bb.embed(shuffled, NormMode::Infer);
    for (std::size_t r = 0; r < 4; ++r)
        for (std::size_t c = 0; c < 16; ++c)
            CHECK(emb2.at(r * 16 + c) == emb.at(perm[r] * 16 + c));
}

TEST_CASE("zero-width stages and collapsed extents are rejected") {
    BackboneConfig bad;
    bad.widths = {8, 0};
    CHECK_THROWS_AS(Backbone<float>::build(bad, 1), ConfigError);

    BackboneConfig deep;
    deep.widths = {4, 8, 16, 32};
    deep.input_size = 4;
    auto bb = Backbone<float>::build(deep, 1);
    CHECK_THROWS_WITH_AS(bb.embed(TensorF::ones({1, 3, 4, 4}), NormMode::Train),
                         doctest::Contains("stage"), ConfigError);
}

TEST_CASE("classic stem engages for large inputs") {
    BackboneConfig cfg;
    cfg.widths = {4, 8};
    cfg.input_size = 125;  // 125 -> 63 (stem conv) -> 32 (stem pool) -> 16
    auto bb = Backbone<float>::build(cfg, 23);
    Rng rng(29);
    auto batch = TensorF::uniform({1, 3, 125, 125}, rng, 0.0, 1.0);
    auto emb = bb.embed(batch, NormMode::Train);
    CHECK(emb.shape() == Shape{1, 8});
}

TEST_CASE("embed gradient vs finite differences through the stem") {
    for (const auto& check : gradcheck_suite()) {
        if (check.name != "embed") continue;
        for (std::uint64_t seed = 1; seed <= 2; ++seed)
            CHECK(check.run(seed).max_err <= 1e-3);
    }
}

TEST_CASE("checkpoint round trip restores parameters and running stats") {
    auto cfg = toy_config();
    auto a = Backbone<float>::build(cfg, 31);
    Rng rng(37);
    auto warm = TensorF::uniform({6, 3, 32, 32}, rng, 0.0, 1.0);
    a.embed(warm, NormMode::Train);

    std::vector<ParamRef<float>> pa;
    std::vector<BufferRef<float>> ba;
    a.collect(pa, ba);
    const std::string path = "test_backbone_ckpt.ckpt";
    save_checkpoint(path, pa, ba, 0xDEADBEEFCAFEF00DULL);

    auto entries = read_checkpoint(path);
    CHECK(checkpoint_config_hash(entries) == 0xDEADBEEFCAFEF00DULL);

    auto b = Backbone<float>::build(cfg, 99);  // different init
    std::vector<ParamRef<float>> pb;
    std::vector<BufferRef<float>> bb2;
    b.collect(pb, bb2);
    load_checkpoint_into(entries, pb, bb2);

    auto batch = TensorF::uniform({2, 3, 32, 32}, rng, 0.0, 1.0);
    auto ea = a.embed(batch, NormMode::Infer);
    auto eb = b.embed(batch, NormMode::Infer);
    REQUIRE(ea.size() == eb.size());
    for (std::size_t i = 0; i < ea.size(); ++i) CHECK(ea.at(i) == eb.at(i));
    std::remove(path.c_str());
}
