#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "zerosight/common.hpp"

namespace zerosight {

// Row-major matrix of embeddings, one row per sample. Metrics run in double
// regardless of the model scalar.
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> values;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), values(r * c, 0.0) {}

    double& at(std::size_t r, std::size_t c) { return values[r * cols + c]; }
    double at(std::size_t r, std::size_t c) const { return values[r * cols + c]; }
    const double* row(std::size_t r) const { return values.data() + r * cols; }
};

// Predicted cluster assignment plus ground truth for the same samples.
struct Clustering {
    std::vector<std::size_t> predicted;            // cluster index per sample, in [0,k)
    std::vector<std::size_t> truth;                // class label per sample
    std::size_t k = 0;
    double wcss = 0.0;
    std::vector<double> objective_history;         // per-iteration WCSS, winning restart
};

// Lloyd iterations with k-means++ seeding; 10 restarts, lowest WCSS wins;
// deterministic for a given seed. Empty clusters reseed to the farthest point.
Clustering kmeans(const Matrix& embeddings, std::size_t k, std::uint64_t seed);

// Eq-style NMI = 2 I(Omega,C) / (H(Omega) + H(C)), natural log, 0*log0 = 0.
// Both-entropies-zero degenerates to 1.0 for identical partitions, else 0.
double nmi(const Clustering& clustering);

struct RecallResult {
    std::map<std::size_t, double> recall_at;  // k -> percentage in [0,100]
    std::size_t excluded_singletons = 0;      // queries with no same-class candidate
};

// Leave-one-out retrieval on L2-normalized embeddings, Euclidean distance,
// ties broken by ascending sample index.
RecallResult topk_retrieval(const Matrix& embeddings, const std::vector<std::size_t>& labels,
                            const std::vector<std::size_t>& ks = {1, 2, 4, 8});

struct GzslResult {
    double u = 0.0;  // R-1 over unseen-class queries, percent
    double s = 0.0;  // R-1 over seen-class queries, percent
    double h = 0.0;  // harmonic mean
    std::size_t excluded_singletons = 0;
};

double harmonic_mean(double u, double s);

// Gallery is the full test set; per-sample R-1 split by the seen mask.
GzslResult gzsl_report(const Matrix& embeddings, const std::vector<std::size_t>& labels,
                       const std::vector<bool>& seen_mask);

struct EvalReport {
    double nmi_value = 0.0;
    std::map<std::size_t, double> recall_at;
    bool has_gzsl = false;
    GzslResult gzsl;
    std::size_t excluded_singletons = 0;
    std::string split;        // "zsl" or "gzsl"
    std::uint64_t seed = 0;
    std::string config_hash;  // 16 hex digits
};

// CSV with header metric,value,split,seed,config_hash and one row per figure.
void write_report_csv(const std::string& path, const EvalReport& report);

// Sidecar for embedding archives: header index,label,seen.
struct LabelRow {
    std::size_t index = 0;
    std::size_t label = 0;
    bool seen = false;
};

std::vector<LabelRow> read_labels_csv(const std::string& path);
void write_labels_csv(const std::string& path, const std::vector<LabelRow>& rows);

}  // namespace zerosight
