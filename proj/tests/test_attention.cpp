#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "zerosight/attention.hpp"
#include "zerosight/gradcheck_suite.hpp"

using namespace zerosight;

TEST_CASE("cbam preserves shape") {
    Rng rng(1);
    auto block = CbamBlock<double>::make(8, 4, rng);
    auto f = TensorD::uniform({2, 8, 16, 16}, rng);
    auto out = block.forward(f);
    CHECK(out.shape() == Shape{2, 8, 16, 16});
}

TEST_CASE("cbam keeps strictly positive inputs strictly positive") {
    Rng rng(2);
    auto block = CbamBlock<double>::make(8, 4, rng);
    auto f = TensorD::uniform({2, 8, 5, 5}, rng, 0.1, 1.0);
    auto out = block.forward(f);
    for (std::size_t i = 0; i < out.size(); ++i) CHECK(out.at(i) > 0.0);
}

TEST_CASE("cbam on zero input returns zeros") {
    Rng rng(3);
    auto block = CbamBlock<double>::make(8, 4, rng);  // biases initialize to zero
    auto out = block.forward(TensorD::zeros({1, 8, 4, 4}));
    for (std::size_t i = 0; i < out.size(); ++i) CHECK(out.at(i) == 0.0);
}

TEST_CASE("cbam gates shrink magnitudes") {
    Rng rng(4);
    auto block = CbamBlock<double>::make(4, 2, rng);
    auto f = TensorD::uniform({2, 4, 6, 6}, rng, -2.0, 2.0);
    auto out = block.forward(f);
    for (std::size_t i = 0; i < out.size(); ++i)
        CHECK(std::abs(out.at(i)) <= std::abs(f.at(i)));
}

TEST_CASE("cbam with saturated gates passes the input through") {
    Rng rng(5);
    auto block = CbamBlock<double>::make(8, 4, rng);
    for (auto* t : {&block.mlp_w1, &block.mlp_w2, &block.spatial.weight})
        for (std::size_t i = 0; i < t->size(); ++i) t->at(i) = 0.0;
    for (std::size_t i = 0; i < block.mlp_b2.size(); ++i) block.mlp_b2.at(i) = 10.0;
    block.spatial.bias->at(0) = 10.0;
    auto f = TensorD::uniform({2, 8, 5, 5}, rng, -1.0, 1.0);
    auto out = block.forward(f);
    for (std::size_t i = 0; i < out.size(); ++i)
        CHECK(std::abs(out.at(i) - f.at(i)) <= 1e-3);
}

TEST_CASE("cbam rejects reduction ratios that do not divide the width") {
    Rng rng(6);
    CHECK_THROWS_AS(CbamBlock<double>::make(8, 3, rng), ConfigError);
    auto block = CbamBlock<double>::make(8, 4, rng);
    CHECK_THROWS_AS(block.forward(TensorD::ones({1, 4, 4, 4})), ShapeError);
}

TEST_CASE("input attention on zeros returns zeros") {
    Rng rng(7);
    auto ia = InputAttention<double>::make(4, rng);
    auto out = ia.forward(TensorD::zeros({2, 4, 5, 5}));
    for (std::size_t i = 0; i < out.size(); ++i) CHECK(out.at(i) == 0.0);
}

TEST_CASE("input attention gate lies in (0,1)") {
    Rng rng(8);
    auto ia = InputAttention<double>::make(4, rng);
    auto f = TensorD::uniform({2, 4, 6, 6}, rng, -3.0, 3.0);
    auto out = ia.forward(f);
    double max_in = 0.0, max_out = 0.0;
    for (std::size_t i = 0; i < out.size(); ++i) {
        CHECK(std::abs(out.at(i)) <= std::abs(f.at(i)));
        max_in = std::max(max_in, std::abs(f.at(i)));
        max_out = std::max(max_out, std::abs(out.at(i)));
    }
    CHECK(max_out <= max_in);
}

TEST_CASE("input attention with zeroed gate path halves every feature") {
    Rng rng(9);
    auto ia = InputAttention<double>::make(3, rng);
    for (auto* t : {&ia.conv_a.weight, &ia.conv_b.weight})
        for (std::size_t i = 0; i < t->size(); ++i) t->at(i) = 0.0;
    for (std::size_t i = 0; i < ia.conv_a.bias->size(); ++i) ia.conv_a.bias->at(i) = 0.0;
    for (std::size_t i = 0; i < ia.conv_b.bias->size(); ++i) ia.conv_b.bias->at(i) = 0.0;
    auto f = TensorD::uniform({2, 3, 4, 4}, rng, -1.0, 1.0);
    auto out = ia.forward(f);
    for (std::size_t i = 0; i < out.size(); ++i)
        CHECK(out.at(i) == doctest::Approx(0.5 * f.at(i)));
}

TEST_CASE("input attention rejects channel mismatches") {
    Rng rng(10);
    auto ia = InputAttention<double>::make(4, rng);
    CHECK_THROWS_AS(ia.forward(TensorD::ones({1, 3, 4, 4})), ShapeError);
}

TEST_CASE("attention gradients match finite differences") {
    for (const auto& check : gradcheck_suite()) {
        if (check.name != "cbam_forward" && check.name != "ia_forward") continue;
        for (std::uint64_t seed = 1; seed <= 3; ++seed)
            CHECK_MESSAGE(check.run(seed).max_err <= check.tol, check.name, " seed ", seed);
    }
}

TEST_CASE("attention parameters serialize under the documented names") {
    Rng rng(11);
    auto ia = InputAttention<double>::make(4, rng);
    std::vector<ParamRef<double>> params;
    std::vector<BufferRef<double>> buffers;
    ia.collect("ia", params, buffers);
    REQUIRE(params.size() == 4);
    CHECK(params[0].name == "ia.conv_a.weight");
    CHECK(params[1].name == "ia.conv_a.bias");
    CHECK(params[2].name == "ia.conv_b.weight");
    CHECK(params[3].name == "ia.conv_b.bias");
}
