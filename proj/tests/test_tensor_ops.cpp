#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>

#include "zerosight/gradcheck_suite.hpp"
#include "zerosight/ops.hpp"

using namespace zerosight;

namespace {

GradCheckResult run_op_check(const std::string& name, std::uint64_t seed) {
    for (const auto& c : gradcheck_suite())
        if (c.name == name) return c.run(seed);
    FAIL("no gradcheck registered for ", name);
    return {};
}

double op_tol(const std::string& name) {
    for (const auto& c : gradcheck_suite())
        if (c.name == name) return c.tol;
    return 0.0;
}

}  // namespace

TEST_CASE("conv2d window of ones") {
    auto out = conv2d(TensorD::ones({1, 1, 3, 3}), TensorD::ones({1, 1, 2, 2}), 1, 0);
    CHECK(out.shape() == Shape{1, 1, 2, 2});
    for (std::size_t i = 0; i < out.size(); ++i) CHECK(out.at(i) == doctest::Approx(4.0));
}

TEST_CASE("conv2d identity delta kernel preserves input") {
    Rng rng(3);
    auto x = TensorD::uniform({2, 1, 5, 5}, rng);
    TensorD k({1, 1, 3, 3});
    k.at(4) = 1.0;  // center
    auto out = conv2d(x, k, 1, 1);
    REQUIRE(out.shape() == x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) CHECK(out.at(i) == doctest::Approx(x.at(i)));
}

TEST_CASE("conv2d shape errors name the offending dimension") {
    auto x = TensorD::ones({1, 3, 4, 4});
    auto k = TensorD::ones({2, 4, 3, 3});
    CHECK_THROWS_WITH_AS(conv2d(x, k, 1, 1),
                         doctest::Contains("channel"), ShapeError);
    // (4 + 0 - 3) / 2 is not an integer
    auto k2 = TensorD::ones({2, 3, 3, 3});
    CHECK_THROWS_AS(conv2d(x, k2, 2, 0), ConfigError);
}

TEST_CASE("conv2d gradients match finite differences") {
    for (std::uint64_t seed = 1; seed <= 3; ++seed) {
        auto res = run_op_check("conv2d", seed);
        CHECK(res.max_err <= 1e-5);
    }
}

TEST_CASE("batch_norm constant input goes to zero") {
    TensorD x({3, 2, 2, 2}, 7.5);
    auto gamma = TensorD::ones({2});
    auto beta = TensorD::zeros({2});
    BatchNormState<double> state;
    auto out = batch_norm(x, gamma, beta, state, NormMode::Train);
    for (std::size_t i = 0; i < out.size(); ++i) CHECK(std::abs(out.at(i)) < 1e-6);
}

TEST_CASE("batch_norm affine shift lands on beta") {
    Rng rng(11);
    auto x = TensorD::uniform({8, 2, 3, 3}, rng);
    auto gamma = TensorD::ones({2});
    auto beta = TensorD::full({2}, 5.0);
    BatchNormState<double> state;
    auto out = batch_norm(x, gamma, beta, state, NormMode::Train);
    for (std::size_t c = 0; c < 2; ++c) {
        double mean = 0.0;
        std::size_t count = 0;
        for (std::size_t n = 0; n < 8; ++n)
            for (std::size_t s = 0; s < 9; ++s) {
                mean += out.at((n * 2 + c) * 9 + s);
                ++count;
            }
        mean /= static_cast<double>(count);
        CHECK(mean == doctest::Approx(5.0).epsilon(1e-5));
    }
}

TEST_CASE("batch_norm infer before any stats is an error") {
    auto gamma = TensorD::ones({2});
    auto beta = TensorD::zeros({2});
    BatchNormState<double> state;
    auto x = TensorD::ones({2, 2});
    CHECK_THROWS_AS(batch_norm(x, gamma, beta, state, NormMode::Infer), ConfigError);
}

TEST_CASE("batch_norm infer uses running stats per sample") {
    Rng rng(5);
    auto gamma = TensorD::ones({3});
    auto beta = TensorD::zeros({3});
    BatchNormState<double> state;
    auto warm = TensorD::uniform({16, 3}, rng);
    batch_norm(warm, gamma, beta, state, NormMode::Train);
    auto x = TensorD::uniform({1, 3}, rng);
    auto a = batch_norm(x, gamma, beta, state, NormMode::Infer);
    auto b = batch_norm(x, gamma, beta, state, NormMode::Infer);
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(a.at(i) == b.at(i));
}

TEST_CASE("batch_norm gradients match finite differences") {
    for (std::uint64_t seed = 1; seed <= 3; ++seed)
        CHECK(run_op_check("batch_norm", seed).max_err <= 1e-4);
}

TEST_CASE("activation values") {
    auto x = TensorD::from({4}, {-1.0, 2.0, -2.0, 0.0});
    auto r = relu(x);
    CHECK(r.at(0) == 0.0);
    CHECK(r.at(1) == 2.0);
    auto l = leaky_relu(x, 0.1);
    CHECK(l.at(2) == doctest::Approx(-0.2));
    auto s = sigmoid(x);
    CHECK(s.at(3) == doctest::Approx(0.5));
    CHECK(sigmoid(TensorD::from({1}, {1000.0})).at(0) == doctest::Approx(1.0));
    CHECK(sigmoid(TensorD::from({1}, {-1000.0})).at(0) == doctest::Approx(0.0));
}

TEST_CASE("pooling values and errors") {
    auto x = TensorD::from({1, 1, 2, 2}, {1, 2, 3, 4});
    CHECK(max_pool2d(x, 2).at(0) == 4.0);
    CHECK(avg_pool2d(x, 2).at(0) == doctest::Approx(2.5));
    auto c = TensorD::full({2, 3, 4, 4}, 0.7);
    auto g = global_avg_pool(c);
    CHECK(g.shape() == Shape{2, 3, 1, 1});
    for (std::size_t i = 0; i < g.size(); ++i) CHECK(g.at(i) == doctest::Approx(0.7));
    CHECK_THROWS_AS(max_pool2d(x, 5), ConfigError);  // window exceeds padded input
    auto cm = channel_max(TensorD::from({1, 2, 1, 2}, {1, 5, 7, 2}));
    CHECK(cm.shape() == Shape{1, 1, 1, 2});
    CHECK(cm.at(0) == 7.0);
    CHECK(cm.at(1) == 5.0);
    auto cmean = channel_mean(TensorD::from({1, 2, 1, 2}, {1, 5, 7, 2}));
    CHECK(cmean.at(0) == doctest::Approx(4.0));
    CHECK(cmean.at(1) == doctest::Approx(3.5));
}

TEST_CASE("pool gradients match finite differences") {
    for (const char* op : {"max_pool2d", "avg_pool2d", "global_avg_pool", "global_max_pool",
                           "channel_max", "channel_mean"})
        for (std::uint64_t seed = 1; seed <= 3; ++seed)
            CHECK_MESSAGE(run_op_check(op, seed).max_err <= op_tol(op), op, " seed ", seed);
}

TEST_CASE("log_softmax symmetry and stability") {
    auto out = log_softmax(TensorD::from({1, 2}, {0.0, 0.0}), 1);
    CHECK(out.at(0) == doctest::Approx(-std::log(2.0)));
    CHECK(out.at(1) == doctest::Approx(-std::log(2.0)));
    // huge logits stay finite thanks to max subtraction
    auto big = log_softmax(TensorD::from({1, 2}, {1000.0, 999.0}), 1);
    CHECK(std::isfinite(big.at(0)));
}

TEST_CASE("log_softmax rows satisfy logsumexp == 0") {
    Rng rng(17);
    for (int rep = 0; rep < 10; ++rep) {
        auto x = TensorD::uniform({4, 7}, rng, -5.0, 5.0);
        auto out = log_softmax(x, 1);
        for (std::size_t r = 0; r < 4; ++r) {
            double lse = 0.0;
            for (std::size_t c = 0; c < 7; ++c) lse += std::exp(out.at(r * 7 + c));
            CHECK(std::abs(std::log(lse)) <= 1e-6);
        }
    }
}

TEST_CASE("l2_normalize values and unit-norm property") {
    auto out = l2_normalize(TensorD::from({1, 2}, {3.0, 4.0}), 1);
    CHECK(out.at(0) == doctest::Approx(0.6));
    CHECK(out.at(1) == doctest::Approx(0.8));
    Rng rng(23);
    for (int rep = 0; rep < 10; ++rep) {
        auto x = TensorD::uniform({5, 6}, rng, -2.0, 2.0);
        auto y = l2_normalize(x, 1);
        for (std::size_t r = 0; r < 5; ++r) {
            double sq = 0.0;
            for (std::size_t c = 0; c < 6; ++c) sq += y.at(r * 6 + c) * y.at(r * 6 + c);
            CHECK(std::abs(std::sqrt(sq) - 1.0) <= 1e-6);
        }
    }
}

TEST_CASE("broadcasting rules") {
    auto a = TensorD::from({2, 3}, {1, 2, 3, 4, 5, 6});
    auto b = TensorD::from({3}, {10, 20, 30});
    auto out = add(a, b);
    CHECK(out.at(0) == 11.0);
    CHECK(out.at(5) == 36.0);
    auto col = TensorD::from({2, 1}, {100, 200});
    auto both = add(col, b);  // (2,1) + (3) -> (2,3)
    CHECK(both.shape() == Shape{2, 3});
    CHECK(both.at(5) == 230.0);
    CHECK_THROWS_AS(add(TensorD::ones({2, 3}), TensorD::ones({2, 2})), ShapeError);
}

TEST_CASE("dense algebra gradients match finite differences") {
    for (const char* op : {"add", "sub", "mul", "scalar_ops", "exp", "log", "sum", "mean",
                           "sum_axis", "matmul", "transpose", "reshape", "concat",
                           "log_softmax", "l2_normalize", "relu", "leaky_relu", "sigmoid"})
        for (std::uint64_t seed = 1; seed <= 2; ++seed)
            CHECK_MESSAGE(run_op_check(op, seed).max_err <= op_tol(op), op, " seed ", seed);
}

TEST_CASE("matmul meets its tighter tolerance") {
    for (std::uint64_t seed = 1; seed <= 5; ++seed)
        CHECK(run_op_check("matmul", seed).max_err <= 1e-6);
}

TEST_CASE("forward evaluation is bit-identical across runs") {
    Rng rng(29);
    auto x = TensorD::uniform({2, 3, 6, 6}, rng);
    auto k = TensorD::uniform({4, 3, 3, 3}, rng);
    auto a = conv2d(x, k, 1, 1);
    auto b = conv2d(x, k, 1, 1);
    CHECK(std::memcmp(a.data().data(), b.data().data(), a.size() * sizeof(double)) == 0);
    auto s1 = sum(mul(a, a)).item();
    auto s2 = sum(mul(b, b)).item();
    CHECK(s1 == s2);
}

TEST_CASE("tape populates gradients for every reachable parameter") {
    Rng rng(31);
    auto x = TensorD::uniform({2, 4}, rng).set_requires_grad(true);
    auto w = TensorD::uniform({4, 3}, rng).set_requires_grad(true);
    auto dead = TensorD::uniform({4, 3}, rng).set_requires_grad(true);
    Tape<double> tape;
    {
        Tape<double>::Scope scope(tape);
        auto y = sum(relu(matmul(x, w)));
        auto unused = matmul(x, dead);  // recorded but not reachable from the root
        (void)unused;
        tape.backward(y);
    }
    CHECK(x.has_grad());
    CHECK(w.has_grad());
    CHECK_FALSE(dead.has_grad());
    CHECK(tape.size() > 0);
    tape.clear();
    CHECK(tape.size() == 0);
}

TEST_CASE("ops run without a tape record nothing") {
    Rng rng(37);
    auto x = TensorD::uniform({2, 2}, rng).set_requires_grad(true);
    auto y = mul(x, x);
    CHECK_FALSE(y.requires_grad());
}

TEST_CASE("scalar backward rejects non-scalar roots") {
    auto x = TensorD::ones({2, 2}).set_requires_grad(true);
    Tape<double> tape;
    Tape<double>::Scope scope(tape);
    auto y = mul(x, x);
    CHECK_THROWS_AS(tape.backward(y), ShapeError);
}
