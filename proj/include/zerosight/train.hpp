#pragma once

#include "zerosight/config.hpp"
#include "zerosight/dataset.hpp"
#include "zerosight/evaluation.hpp"
#include "zerosight/losses.hpp"
#include "zerosight/optimizer.hpp"

namespace zerosight {

struct EpochLog {
    std::size_t epoch = 0;
    double loss_proxy = 0.0;
    double loss_softmax = 0.0;
    double loss_total = 0.0;
    double lr = 0.0;
};

struct TrainResult {
    std::vector<EpochLog> log;
    std::string final_checkpoint;
    std::string best_checkpoint;
    std::string log_path;
    std::size_t best_epoch = 0;
    double initial_loss = 0.0;
    double final_loss = 0.0;
    std::vector<std::string> files_read;  // audit: which archives training touched
};

// Full recipe: class-balanced P x K batches, combined proxy+softmax loss,
// AdamW with per-epoch exponential lr decay, per-epoch train_log.csv rows,
// final and best (lowest epoch loss) checkpoints. Deterministic per seeds.
TrainResult train_run(const RunConfig& cfg);

// Infer-mode embeddings for the given samples, reduced to an N x D matrix.
Matrix embed_dataset(Backbone<float>& backbone, ImageStore& store,
                     const std::vector<std::size_t>& indices, std::size_t batch = 64);

// Rebuilds the backbone from cfg, loads the checkpoint (hash-checked), embeds
// the test partition and writes report.csv, embeddings.ten and labels.csv
// into out_dir.
EvalReport evaluate_checkpoint(const RunConfig& cfg, const std::string& checkpoint_path,
                               SplitMode mode, const std::string& out_dir);

// Metrics over externally supplied embeddings (the .ten + labels.csv route).
EvalReport evaluate_embeddings(const Matrix& embeddings,
                               const std::vector<std::size_t>& labels,
                               const std::vector<bool>& seen_mask, SplitMode mode,
                               std::uint64_t kmeans_seed, EvalReport meta);

struct GridRow {
    std::string method;
    EvalReport report;
    double final_loss = 0.0;
};

// The six-row ablation of the paper's tables: baseline, +Norm, +CBAM
// everywhere, +CBAM late, +CBAM early, and CBAM_E+IA+Norm, sharing seeds.
// Writes <out_dir>/grid.csv and per-variant run directories.
std::vector<GridRow> ablation_grid(const RunConfig& base);

void write_grid_csv(const std::string& path, const std::vector<GridRow>& rows);

}  // namespace zerosight
