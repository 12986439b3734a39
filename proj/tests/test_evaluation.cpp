#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>

#include "zerosight/evaluation.hpp"
#include "zerosight/rng.hpp"

#include "oracles.hpp"

using namespace zerosight;

namespace {

Matrix matrix_from(std::size_t r, std::size_t c, std::vector<double> v) {
    Matrix m(r, c);
    m.values = std::move(v);
    return m;
}

}  // namespace

TEST_CASE("kmeans separates two identical pairs") {
    auto emb = matrix_from(4, 2, {0, 0, 0, 0, 10, 10, 10, 10});
    auto c = kmeans(emb, 2, 7);
    CHECK(c.wcss == doctest::Approx(0.0));
    CHECK(c.predicted[0] == c.predicted[1]);
    CHECK(c.predicted[2] == c.predicted[3]);
    CHECK(c.predicted[0] != c.predicted[2]);
}

TEST_CASE("kmeans with k equal to n isolates every point") {
    Rng rng(3);
    Matrix emb(6, 3);
    for (auto& v : emb.values) v = rng.uniform(-1, 1);
    auto c = kmeans(emb, 6, 11);
    CHECK(c.wcss == doctest::Approx(0.0).epsilon(1e-12));
    std::vector<std::size_t> sorted(c.predicted);
    std::sort(sorted.begin(), sorted.end());
    for (std::size_t i = 0; i < 6; ++i) CHECK(sorted[i] == i);
}

TEST_CASE("kmeans recovers three separated gaussians up to relabeling") {
    Rng rng(5);
    const double centers[3][2] = {{0, 0}, {1, 0}, {0.5, std::sqrt(3.0) / 2.0}};
    Matrix emb(60, 2);
    std::vector<std::size_t> truth(60);
    for (std::size_t i = 0; i < 60; ++i) {
        std::size_t g = i % 3;
        truth[i] = g;
        emb.at(i, 0) = centers[g][0] + 0.05 * rng.normal();
        emb.at(i, 1) = centers[g][1] + 0.05 * rng.normal();
    }
    auto c = kmeans(emb, 3, 13);
    // brute-force match over all 3! relabelings
    std::vector<std::size_t> perm{0, 1, 2};
    bool matched = false;
    std::sort(perm.begin(), perm.end());
    do {
        bool all = true;
        for (std::size_t i = 0; i < 60 && all; ++i) all = perm[c.predicted[i]] == truth[i];
        matched = matched || all;
    } while (std::next_permutation(perm.begin(), perm.end()));
    CHECK(matched);
    // Lloyd objective never increases
    for (std::size_t i = 1; i < c.objective_history.size(); ++i)
        CHECK(c.objective_history[i] <= c.objective_history[i - 1] * (1.0 + 1e-9) + 1e-12);
}

TEST_CASE("kmeans rejects k larger than n") {
    Matrix emb(3, 2);
    CHECK_THROWS_AS(kmeans(emb, 4, 1), ConfigError);
}

TEST_CASE("kmeans is deterministic per seed") {
    Rng rng(17);
    Matrix emb(40, 4);
    for (auto& v : emb.values) v = rng.uniform(-1, 1);
    auto a = kmeans(emb, 5, 23);
    auto b = kmeans(emb, 5, 23);
    CHECK(a.predicted == b.predicted);
    CHECK(a.wcss == b.wcss);
}

TEST_CASE("nmi on identical and independent partitions") {
    Clustering c;
    c.predicted = {0, 0, 1, 1};
    c.truth = {0, 0, 1, 1};
    c.k = 2;
    CHECK(nmi(c) == doctest::Approx(1.0));
    c.predicted = {0, 1, 0, 1};
    CHECK(nmi(c) == doctest::Approx(0.0));
    c.truth = {0, 0};
    CHECK_THROWS_AS(nmi(c), ShapeError);
}

TEST_CASE("nmi matches the joint-entropy oracle on 500 random partitions") {
    Rng rng(29);
    for (int rep = 0; rep < 500; ++rep) {
        std::size_t n = 2 + rng.uniform_index(63);
        std::size_t ka = 1 + rng.uniform_index(8);
        std::size_t kb = 1 + rng.uniform_index(8);
        Clustering c;
        c.k = ka;
        for (std::size_t i = 0; i < n; ++i) {
            c.predicted.push_back(rng.uniform_index(ka));
            c.truth.push_back(rng.uniform_index(kb));
        }
        double ours = nmi(c);
        double oracle = std::clamp(oracles::nmi_oracle(c.predicted, c.truth), 0.0, 1.0);
        CHECK(std::abs(ours - oracle) <= 1e-9);
    }
}

TEST_CASE("nmi is invariant to cluster index permutation and symmetric") {
    Rng rng(31);
    for (int rep = 0; rep < 50; ++rep) {
        std::size_t n = 4 + rng.uniform_index(40);
        std::size_t k = 2 + rng.uniform_index(5);
        Clustering c;
        c.k = k;
        for (std::size_t i = 0; i < n; ++i) {
            c.predicted.push_back(rng.uniform_index(k));
            c.truth.push_back(rng.uniform_index(4));
        }
        double base = nmi(c);
        // permute predicted labels
        std::vector<std::size_t> perm(k);
        for (std::size_t i = 0; i < k; ++i) perm[i] = i;
        rng.shuffle(perm);
        Clustering permuted = c;
        for (auto& p : permuted.predicted) p = perm[p];
        CHECK(nmi(permuted) == doctest::Approx(base).epsilon(1e-12));
        // symmetry
        Clustering swapped;
        swapped.predicted = c.truth;
        swapped.truth = c.predicted;
        swapped.k = 4;
        CHECK(std::abs(nmi(swapped) - base) <= 1e-12);
    }
}

TEST_CASE("nmi degenerate single-cluster cases") {
    Clustering c;
    c.predicted = {0, 0, 0};
    c.truth = {5, 5, 5};
    c.k = 1;
    CHECK(nmi(c) == 1.0);  // both trivial partitions are identical
    c.truth = {0, 1, 2};
    CHECK(nmi(c) == doctest::Approx(0.0));  // one trivial, one not: I = 0
}

TEST_CASE("topk retrieval on duplicated class pairs") {
    // two identical vectors per class, distinct across classes
    Matrix emb(6, 2);
    std::vector<std::size_t> labels{0, 0, 1, 1, 2, 2};
    const double pts[3][2] = {{0, 0}, {5, 0}, {0, 5}};
    for (std::size_t i = 0; i < 6; ++i) {
        emb.at(i, 0) = pts[i / 2][0];
        emb.at(i, 1) = pts[i / 2][1];
    }
    auto res = topk_retrieval(emb, labels);
    CHECK(res.recall_at.at(1) == doctest::Approx(100.0));
    CHECK(res.excluded_singletons == 0);
}

TEST_CASE("recall is monotone in k and bounded") {
    Rng rng(37);
    for (int rep = 0; rep < 20; ++rep) {
        std::size_t n = 10 + rng.uniform_index(20);
        Matrix emb(n, 4);
        for (auto& v : emb.values) v = rng.uniform(-1, 1);
        std::vector<std::size_t> labels(n);
        for (auto& l : labels) l = rng.uniform_index(5);
        auto res = topk_retrieval(emb, labels);
        double prev = -1.0;
        for (std::size_t k : {1ul, 2ul, 4ul, 8ul}) {
            double v = res.recall_at.at(k);
            CHECK(v >= prev);
            CHECK(v >= 0.0);
            CHECK(v <= 100.0);
            prev = v;
        }
    }
}

TEST_CASE("topk matches the exhaustive oracle exactly") {
    Rng rng(41);
    for (int rep = 0; rep < 30; ++rep) {
        Matrix emb(20, 4);
        for (auto& v : emb.values) v = rng.uniform(-1, 1);
        std::vector<std::size_t> labels(20);
        for (auto& l : labels) l = rng.uniform_index(5);
        auto ours = topk_retrieval(emb, labels);
        std::size_t oracle_excluded = 0;
        auto oracle = oracles::topk_oracle(emb, labels, {1, 2, 4, 8}, &oracle_excluded);
        for (std::size_t k : {1ul, 2ul, 4ul, 8ul}) CHECK(ours.recall_at.at(k) == oracle.at(k));
        CHECK(ours.excluded_singletons == oracle_excluded);
    }
}

TEST_CASE("gzsl harmonic mean matches the paper's reported row") {
    CHECK(harmonic_mean(54.44, 84.26) == doctest::Approx(66.14).epsilon(0.0002));
    CHECK(harmonic_mean(40.0, 40.0) == doctest::Approx(40.0));
    CHECK(harmonic_mean(0.0, 84.26) == 0.0);
}

TEST_CASE("gzsl report splits accuracies by the seen mask") {
    // seen pair is tight, unseen pair is tight, groups far apart
    Matrix emb(8, 2);
    std::vector<std::size_t> labels{0, 0, 1, 1, 2, 2, 3, 3};
    std::vector<bool> seen{true, true, true, true, false, false, false, false};
    // distinct directions: retrieval runs on L2-normalized rows
    const double pts[4][2] = {{10, 0}, {0, 10}, {-10, 0}, {0, -10}};
    Rng rng(43);
    for (std::size_t i = 0; i < 8; ++i) {
        emb.at(i, 0) = pts[i / 2][0] + 0.01 * rng.uniform(-1, 1);
        emb.at(i, 1) = pts[i / 2][1] + 0.01 * rng.uniform(-1, 1);
    }
    auto res = gzsl_report(emb, labels, seen);
    CHECK(res.u == doctest::Approx(100.0));
    CHECK(res.s == doctest::Approx(100.0));
    CHECK(res.h == doctest::Approx(100.0));
    CHECK_THROWS_AS(gzsl_report(emb, labels, std::vector<bool>(8, true)), ConfigError);
}

TEST_CASE("report csv round trip") {
    EvalReport r;
    r.nmi_value = 0.873;
    r.recall_at = {{1, 80.0}, {2, 90.0}, {4, 95.0}, {8, 97.5}};
    r.has_gzsl = true;
    r.gzsl.u = 54.44;
    r.gzsl.s = 84.26;
    r.gzsl.h = harmonic_mean(54.44, 84.26);
    r.split = "gzsl";
    r.seed = 7;
    r.config_hash = "0123456789abcdef";
    const std::string path = "test_report.csv";
    write_report_csv(path, r);
    std::ifstream is(path);
    std::string line;
    REQUIRE(std::getline(is, line));
    CHECK(line == "metric,value,split,seed,config_hash");
    std::size_t rows = 0;
    bool saw_h = false;
    while (std::getline(is, line)) {
        ++rows;
        if (line.rfind("h,", 0) == 0) {
            saw_h = true;
            CHECK(line.find("66.14") != std::string::npos);
            CHECK(line.find(",gzsl,7,0123456789abcdef") != std::string::npos);
        }
    }
    CHECK(rows == 9);  // nmi, r1, r2, r4, r8, u, s, h, excluded_singletons
    CHECK(saw_h);
    std::remove(path.c_str());
}

TEST_CASE("labels csv round trip") {
    std::vector<LabelRow> rows{{0, 3, true}, {1, 5, false}, {2, 3, false}};
    const std::string path = "test_labels.csv";
    write_labels_csv(path, rows);
    auto back = read_labels_csv(path);
    REQUIRE(back.size() == 3);
    CHECK(back[0].index == 0);
    CHECK(back[0].label == 3);
    CHECK(back[0].seen);
    CHECK_FALSE(back[1].seen);
    std::remove(path.c_str());
}
