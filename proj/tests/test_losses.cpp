#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "zerosight/backbone.hpp"
#include "zerosight/gradcheck_suite.hpp"
#include "zerosight/losses.hpp"

using namespace zerosight;

namespace {

ProxyBank<double> bank_from(Shape shape, std::vector<double> values) {
    ProxyBank<double> bank = ProxyBank<double>::make(shape[0], shape[1], 1);
    bank.proxies = TensorD::from(shape, std::move(values));
    bank.proxies.set_requires_grad(true);
    return bank;
}

}  // namespace

TEST_CASE("proxy_nca at the positive proxy with an antipodal negative") {
    // d(x, p(y)) = 0 and d(x, p(z)) = 4 on the unit circle
    auto bank = bank_from({2, 2}, {1, 0, -1, 0});
    auto emb = TensorD::from({1, 2}, {1, 0});
    auto loss = proxy_nca(emb, {0}, bank);
    CHECK(loss.item() == doctest::Approx(-4.0).epsilon(1e-10));
}

TEST_CASE("proxy_nca with symmetric distances cancels to zero") {
    // both proxies at squared distance 1 from x: 2 - 2cos = 1 => cos = 0.5
    double c = 0.5, s = std::sqrt(3.0) / 2.0;
    auto bank = bank_from({2, 2}, {c, s, c, -s});
    auto emb = TensorD::from({1, 2}, {1, 0});
    auto loss = proxy_nca(emb, {0}, bank);
    CHECK(loss.item() == doctest::Approx(0.0).epsilon(1e-10));
}

TEST_CASE("proxy_nca error paths") {
    auto bank = bank_from({2, 2}, {1, 0, -1, 0});
    auto emb = TensorD::from({1, 2}, {1, 0});
    CHECK_THROWS_AS(proxy_nca(emb, {5}, bank), ConfigError);   // label outside bank
    auto tiny = ProxyBank<double>::make(1, 2, 1);
    CHECK_THROWS_AS(proxy_nca(emb, {0}, tiny), ConfigError);   // no negatives available
    CHECK_THROWS_AS(proxy_nca(TensorD::from({1, 3}, {1, 0, 0}), {0}, bank), ShapeError);
}

TEST_CASE("proxy_nca is invariant to uniform positive rescaling") {
    Rng rng(5);
    auto emb = TensorD::uniform({6, 4}, rng);
    auto bank = ProxyBank<double>::make(3, 4, 7);
    std::vector<std::size_t> labels{0, 1, 2, 0, 1, 2};
    double a = proxy_nca(emb, labels, bank).item();
    auto scaled = mul_scalar(emb, 3.7);
    double b = proxy_nca(scaled, labels, bank).item();
    CHECK(a == doctest::Approx(b).epsilon(1e-12));
}

TEST_CASE("proxy_nca gradients match finite differences") {
    for (const auto& check : gradcheck_suite()) {
        if (check.name != "proxy_nca") continue;
        for (std::uint64_t seed = 1; seed <= 3; ++seed)
            CHECK(check.run(seed).max_err <= 1e-4);
    }
}

TEST_CASE("smoothed softmax uniform two-class case") {
    auto logits = TensorD::from({1, 2}, {0.0, 0.0});
    auto loss = smoothed_softmax(logits, {0}, 0.5);
    CHECK(loss.item() == doctest::Approx(std::log(2.0)).epsilon(1e-12));
}

TEST_CASE("smoothing targets follow the sign rule") {
    auto q = smoothing_targets<double>(4, 1, 0.25);
    CHECK(q == std::vector<double>{0.25, 0.75, 0.25, 0.25});
    // the as-written rule sums to 1 + (C-2) * eps
    for (std::size_t c : {2ul, 4ul, 10ul}) {
        double eps = 1.0 / static_cast<double>(c);
        if (eps > 0.5) eps = 0.5;
        auto t = smoothing_targets<double>(c, 0, eps);
        double sum = 0.0;
        for (double v : t) sum += v;
        CHECK(sum == doctest::Approx(1.0 + (static_cast<double>(c) - 2.0) * eps).epsilon(1e-12));
    }
}

TEST_CASE("zero smoothing reduces to plain cross-entropy") {
    Rng rng(9);
    auto logits = TensorD::uniform({6, 5}, rng, -2.0, 2.0);
    std::vector<std::size_t> labels{0, 3, 2, 4, 1, 0};
    double ours = smoothed_softmax(logits, labels, 0.0).item();
    // independent oracle: direct -log softmax[label] mean
    double oracle = 0.0;
    for (std::size_t i = 0; i < 6; ++i) {
        double mx = -1e300;
        for (std::size_t c = 0; c < 5; ++c) mx = std::max(mx, logits.at(i * 5 + c));
        double z = 0.0;
        for (std::size_t c = 0; c < 5; ++c) z += std::exp(logits.at(i * 5 + c) - mx);
        oracle -= logits.at(i * 5 + labels[i]) - mx - std::log(z);
    }
    oracle /= 6.0;
    CHECK(std::abs(ours - oracle) <= 1e-9);
}

TEST_CASE("normalize_targets renormalizes the rule to sum one") {
    auto logits = TensorD::from({1, 4}, {0.0, 0.0, 0.0, 0.0});
    // q = [.25,.75,.25,.25] -> normalized q/1.5; loss = sum(q) * log(4) after scaling
    double plain = smoothed_softmax(logits, {1}, 0.25, false).item();
    double normalized = smoothed_softmax(logits, {1}, 0.25, true).item();
    CHECK(plain == doctest::Approx(1.5 * std::log(4.0)).epsilon(1e-12));
    CHECK(normalized == doctest::Approx(std::log(4.0)).epsilon(1e-12));
}

TEST_CASE("smoothed softmax error paths") {
    auto logits = TensorD::from({1, 2}, {0.0, 0.0});
    CHECK_THROWS_AS(smoothed_softmax(logits, {2}, 0.1), ConfigError);   // label >= C
    CHECK_THROWS_AS(smoothed_softmax(logits, {0}, 0.7), ConfigError);   // eps out of range
    CHECK_THROWS_AS(smoothed_softmax(TensorD::from({1, 1}, {0.0}), {0}, 0.1), ConfigError);
}

TEST_CASE("smoothed softmax gradients match finite differences") {
    for (const auto& check : gradcheck_suite()) {
        if (check.name != "smoothed_softmax") continue;
        for (std::uint64_t seed = 1; seed <= 3; ++seed)
            CHECK(check.run(seed).max_err <= 1e-4);
    }
}

TEST_CASE("combined loss weighting") {
    // engineered so L_P = -4 and L_S = ln 2 exactly
    auto bank = bank_from({2, 2}, {1, 0, -1, 0});
    auto head = LossHead<double>::make(2, 2, false, 1);
    for (std::size_t i = 0; i < head.classifier.weight.size(); ++i)
        head.classifier.weight.at(i) = 0.0;  // logits [0,0] -> L_S = ln 2 at eps = 1/2
    auto emb = TensorD::from({1, 2}, {1, 0});

    auto parts = combined_loss(emb, {0}, head, bank);
    CHECK(parts.proxy.item() == doctest::Approx(-4.0).epsilon(1e-10));
    CHECK(parts.softmax.item() == doctest::Approx(std::log(2.0)).epsilon(1e-10));
    CHECK(parts.total.item() ==
          doctest::Approx(1.0 * parts.proxy.item() + 0.5 * parts.softmax.item())
              .epsilon(1e-12));

    // the paper's loss weights, applied to the documented component values
    CHECK(1.0 * 4.0 + 0.5 * std::log(2.0) == doctest::Approx(4.34655).epsilon(1e-4));

    head.weights.lambda_softmax = 0.0;
    auto parts0 = combined_loss(emb, {0}, head, bank);
    CHECK(parts0.total.item() == parts0.proxy.item());  // exact when lambda_S = 0
}

TEST_CASE("combined loss reaches every parameter group") {
    BackboneConfig cfg;
    cfg.widths = {4, 8};
    cfg.blocks_per_stage = 1;
    cfg.use_input_attention = true;
    cfg.placement = Placement::Early;
    cfg.cbam_reduction = 2;
    cfg.input_size = 16;
    auto bb = Backbone<double>::build(cfg, 3);
    auto bank = ProxyBank<double>::make(3, 8, 5);
    auto head = LossHead<double>::make(8, 3, true, 7);
    Rng rng(11);
    auto batch = TensorD::uniform({6, 3, 16, 16}, rng, 0.0, 1.0);
    std::vector<std::size_t> labels{0, 1, 2, 0, 1, 2};

    std::vector<ParamRef<double>> params;
    std::vector<BufferRef<double>> buffers;
    bb.collect(params, buffers);
    bank.collect(params);
    head.collect(params, buffers);

    Tape<double> tape;
    {
        Tape<double>::Scope scope(tape);
        auto emb = bb.embed(batch, NormMode::Train);
        auto parts = combined_loss(emb, labels, head, bank);
        tape.backward(parts.total);
    }
    for (auto& p : params) {
        CHECK_MESSAGE(p.tensor.has_grad(), "no grad for ", p.name);
        if (p.tensor.has_grad()) {
            double norm = 0.0;
            for (double g : p.tensor.grad()) norm += std::abs(g);
            CHECK_MESSAGE(norm > 0.0, "all-zero grad for ", p.name);
        }
    }
    CHECK(head.forward_calls == 1);
}

TEST_CASE("full-graph gradients match finite differences") {
    for (const auto& check : gradcheck_suite()) {
        if (check.name != "combined_full_graph") continue;
        for (std::uint64_t seed = 1; seed <= 2; ++seed)
            CHECK(check.run(seed).max_err <= 1e-3);
    }
}

TEST_CASE("loss head exposes the documented parameter names") {
    auto head = LossHead<float>::make(8, 4, true, 1);
    std::vector<ParamRef<float>> params;
    std::vector<BufferRef<float>> buffers;
    head.collect(params, buffers);
    REQUIRE(params.size() == 3);
    CHECK(params[0].name == "head.norm.gamma");
    CHECK(params[1].name == "head.norm.beta");
    CHECK(params[2].name == "head.classifier.weight");
    CHECK(head.epsilon == doctest::Approx(0.25));
    CHECK_FALSE(params[0].decay);  // norm params exempt from weight decay

    auto bare = LossHead<float>::make(8, 4, false, 1);
    params.clear();
    buffers.clear();
    bare.collect(params, buffers);
    REQUIRE(params.size() == 1);
    CHECK(params[0].name == "head.classifier.weight");
}
