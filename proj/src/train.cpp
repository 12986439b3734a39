#include "zerosight/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>

#include "zerosight/serialize.hpp"

namespace zerosight {

namespace {

void write_train_log(const std::string& path, const std::vector<EpochLog>& rows) {
    std::ofstream os(path);
    if (!os) throw ConfigError("cannot open for writing: " + path);
    os << "epoch,loss_proxy,loss_softmax,loss_total,lr\n";
    char buf[160];
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof buf, "%zu,%.12g,%.12g,%.12g,%.12g\n", r.epoch, r.loss_proxy,
                      r.loss_softmax, r.loss_total, r.lr);
        os << buf;
    }
    if (!os) throw ConfigError("write failed: " + path);
}

struct TrainClassIndex {
    std::vector<std::size_t> classes;                        // sorted original ids
    std::map<std::size_t, std::size_t> to_compact;           // original -> [0,C)
    std::vector<std::vector<std::size_t>> members;           // compact class -> sample indices
};

TrainClassIndex index_train_classes(const SplitSpec& split,
                                    const std::vector<std::size_t>& labels) {
    TrainClassIndex idx;
    idx.classes = split.train_classes;
    for (std::size_t i = 0; i < idx.classes.size(); ++i) idx.to_compact[idx.classes[i]] = i;
    idx.members.resize(idx.classes.size());
    for (std::size_t s : split.train_indices)
        idx.members[idx.to_compact.at(labels[s])].push_back(s);
    return idx;
}

}  // namespace

TrainResult train_run(const RunConfig& cfg) {
    if (cfg.data_dir.empty()) throw ConfigError("train: data_dir is not set");
    if (cfg.out_dir.empty()) throw ConfigError("train: out_dir is not set");
    std::filesystem::create_directories(cfg.out_dir);

    ImageStore store(cfg.data_dir);
    if (store.meta().image_size != cfg.image_size)
        throw ConfigError("train: dataset images are " + std::to_string(store.meta().image_size) +
                          " px but config says image_size = " + std::to_string(cfg.image_size));

    SplitSpec split = make_split(store.meta().labels, cfg.mode, cfg.seed_data);
    TrainClassIndex cls = index_train_classes(split, store.meta().labels);
    const std::size_t n_classes = cls.classes.size();
    if (n_classes < 2)
        throw ConfigError("train: need at least 2 training classes, split produced " +
                          std::to_string(n_classes));

    auto backbone = Backbone<float>::build(cfg.backbone_config(), cfg.seed_init);
    const std::size_t dim = cfg.backbone_config().embedding_dim();
    auto bank = ProxyBank<float>::make(n_classes, dim, cfg.seed_init ^ 0xA5A5A5A5ULL);
    auto head = LossHead<float>::make(dim, n_classes, cfg.use_separation_norm,
                                      cfg.seed_init ^ 0x5A5A5A5AULL);
    head.weights.lambda_proxy = cfg.lambda_proxy;
    head.weights.lambda_softmax = cfg.lambda_softmax;
    head.normalize_targets = cfg.normalize_targets;

    std::vector<ParamRef<float>> params;
    std::vector<BufferRef<float>> buffers;
    backbone.collect(params, buffers);
    bank.collect(params);
    head.collect(params, buffers);

    AdamWOptions opts;
    opts.lr0 = cfg.lr;
    opts.weight_decay = cfg.weight_decay;
    opts.gamma = cfg.lr_gamma;
    AdamW<float> optimizer(params, opts);

    // write the verbatim config next to the outputs
    {
        std::ofstream os(cfg.out_dir + "/run_config.txt");
        if (!os) throw ConfigError("cannot open for writing: " + cfg.out_dir + "/run_config.txt");
        os << cfg.serialize();
    }

    std::size_t n_train = split.train_indices.size();
    const std::size_t pick_classes = std::min(cfg.batch_classes, n_classes);
    const std::size_t batch_size = pick_classes * cfg.batch_per_class;
    const std::size_t steps_per_epoch = (n_train + batch_size - 1) / batch_size;

    TrainResult result;
    result.log_path = cfg.out_dir + "/train_log.csv";
    result.final_checkpoint = cfg.out_dir + "/checkpoint_final.ckpt";
    result.best_checkpoint = cfg.out_dir + "/checkpoint_best.ckpt";
    double best_loss = std::numeric_limits<double>::infinity();

    Rng data_rng(cfg.seed_data);
    const std::uint64_t hash = cfg.config_hash();

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        optimizer.set_epoch(epoch);
        Rng epoch_rng = data_rng.fork(0xE0000 + epoch);
        double sum_proxy = 0.0, sum_softmax = 0.0, sum_total = 0.0;

        for (std::size_t step = 0; step < steps_per_epoch; ++step) {
            // P distinct classes, K samples each
            std::vector<std::size_t> order(n_classes);
            for (std::size_t i = 0; i < n_classes; ++i) order[i] = i;
            epoch_rng.shuffle(order);
            std::vector<std::size_t> indices;
            std::vector<std::size_t> labels;
            for (std::size_t p = 0; p < pick_classes; ++p) {
                std::size_t c = order[p];
                const auto& members = cls.members[c];
                if (members.size() >= cfg.batch_per_class) {
                    std::vector<std::size_t> picks(members);
                    epoch_rng.shuffle(picks);
                    for (std::size_t k = 0; k < cfg.batch_per_class; ++k) {
                        indices.push_back(picks[k]);
                        labels.push_back(c);
                    }
                } else {
                    for (std::size_t k = 0; k < cfg.batch_per_class; ++k) {
                        indices.push_back(
                            members[epoch_rng.uniform_index(members.size())]);
                        labels.push_back(c);
                    }
                }
            }

            TensorF batch = store.load_batch(indices);
            Tape<float> tape;
            Tape<float>::Scope scope(tape);
            TensorF emb = backbone.embed(batch, NormMode::Train);
            LossParts<float> parts = combined_loss(emb, labels, head, bank);
            double total = static_cast<double>(parts.total.item());
            if (!std::isfinite(total))
                throw NumericError("train: non-finite loss at epoch " + std::to_string(epoch) +
                                   ", step " + std::to_string(step) +
                                   "; last-good checkpoint retained");
            tape.backward(parts.total);
            optimizer.step();
            optimizer.zero_grad();
            sum_proxy += static_cast<double>(parts.proxy.item());
            sum_softmax += static_cast<double>(parts.softmax.item());
            sum_total += total;
        }

        EpochLog row;
        row.epoch = epoch;
        row.loss_proxy = sum_proxy / static_cast<double>(steps_per_epoch);
        row.loss_softmax = sum_softmax / static_cast<double>(steps_per_epoch);
        row.loss_total = sum_total / static_cast<double>(steps_per_epoch);
        row.lr = optimizer.lr();
        result.log.push_back(row);
        write_train_log(result.log_path, result.log);

        save_checkpoint(result.final_checkpoint, params, buffers, hash);
        if (row.loss_total < best_loss) {
            best_loss = row.loss_total;
            result.best_epoch = epoch;
            save_checkpoint(result.best_checkpoint, params, buffers, hash);
        }
    }

    result.initial_loss = result.log.front().loss_total;
    result.final_loss = result.log.back().loss_total;
    result.files_read = store.accessed();
    return result;
}

Matrix embed_dataset(Backbone<float>& backbone, ImageStore& store,
                     const std::vector<std::size_t>& indices, std::size_t batch) {
    const std::size_t dim = backbone.config().embedding_dim();
    Matrix out(indices.size(), dim);
    for (std::size_t start = 0; start < indices.size(); start += batch) {
        std::size_t stop = std::min(indices.size(), start + batch);
        std::vector<std::size_t> chunk(indices.begin() + start, indices.begin() + stop);
        TensorF emb = backbone.embed(store.load_batch(chunk), NormMode::Infer);
        for (std::size_t r = 0; r < chunk.size(); ++r)
            for (std::size_t c = 0; c < dim; ++c)
                out.at(start + r, c) = static_cast<double>(emb.at(r * dim + c));
    }
    return out;
}

EvalReport evaluate_embeddings(const Matrix& embeddings,
                               const std::vector<std::size_t>& labels,
                               const std::vector<bool>& seen_mask, SplitMode mode,
                               std::uint64_t kmeans_seed, EvalReport meta) {
    std::vector<std::size_t> distinct(labels);
    std::sort(distinct.begin(), distinct.end());
    distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());

    Clustering clustering = kmeans(embeddings, distinct.size(), kmeans_seed);
    clustering.truth = labels;
    meta.nmi_value = nmi(clustering);

    RecallResult recall = topk_retrieval(embeddings, labels);
    meta.recall_at = recall.recall_at;
    meta.excluded_singletons = recall.excluded_singletons;

    if (mode == SplitMode::Gzsl) {
        meta.has_gzsl = true;
        meta.gzsl = gzsl_report(embeddings, labels, seen_mask);
    }
    meta.split = split_mode_name(mode);
    return meta;
}

EvalReport evaluate_checkpoint(const RunConfig& cfg, const std::string& checkpoint_path,
                               SplitMode mode, const std::string& out_dir) {
    if (cfg.data_dir.empty()) throw ConfigError("eval: data_dir is not set");
    std::filesystem::create_directories(out_dir);

    auto entries = read_checkpoint(checkpoint_path);
    std::uint64_t stored = checkpoint_config_hash(entries);
    if (stored != cfg.config_hash()) {
        char a[17], b[17];
        std::snprintf(a, sizeof a, "%016llx", static_cast<unsigned long long>(stored));
        std::snprintf(b, sizeof b, "%016llx",
                      static_cast<unsigned long long>(cfg.config_hash()));
        throw ConfigError(std::string("eval: config hash mismatch: checkpoint carries ") + a +
                          ", supplied config hashes to " + b);
    }

    ImageStore store(cfg.data_dir);
    SplitSpec split = make_split(store.meta().labels, mode, cfg.seed_data);

    auto backbone = Backbone<float>::build(cfg.backbone_config(), cfg.seed_init);
    std::vector<ParamRef<float>> params;
    std::vector<BufferRef<float>> buffers;
    backbone.collect(params, buffers);
    load_checkpoint_into(entries, params, buffers);

    Matrix emb = embed_dataset(backbone, store, split.test_indices);
    std::vector<std::size_t> labels;
    for (std::size_t i : split.test_indices) labels.push_back(store.meta().labels[i]);

    EvalReport meta;
    meta.seed = cfg.seed_data;
    meta.config_hash = cfg.config_hash_hex();
    EvalReport report =
        evaluate_embeddings(emb, labels, split.test_seen, mode, cfg.seed_kmeans, meta);

    write_report_csv(out_dir + "/report.csv", report);
    // embedding dump + sidecar in the exchange format
    TensorF dump({emb.rows, emb.cols});
    for (std::size_t i = 0; i < emb.values.size(); ++i)
        dump.at(i) = static_cast<float>(emb.values[i]);
    write_ten(out_dir + "/embeddings.ten", dump);
    std::vector<LabelRow> rows(labels.size());
    for (std::size_t i = 0; i < labels.size(); ++i)
        rows[i] = LabelRow{i, labels[i], split.test_seen[i]};
    write_labels_csv(out_dir + "/labels.csv", rows);
    return report;
}

void write_grid_csv(const std::string& path, const std::vector<GridRow>& rows) {
    std::ofstream os(path);
    if (!os) throw ConfigError("cannot open for writing: " + path);
    os << "method,nmi,r1,r2,r4,r8,final_loss,config_hash\n";
    char buf[200];
    for (const auto& row : rows) {
        auto r = [&](std::size_t k) {
            auto it = row.report.recall_at.find(k);
            return it == row.report.recall_at.end() ? 0.0 : it->second;
        };
        std::snprintf(buf, sizeof buf, "%s,%.6f,%.6f,%.6f,%.6f,%.6f,%.12g,%s\n",
                      row.method.c_str(), row.report.nmi_value, r(1), r(2), r(4), r(8),
                      row.final_loss, row.report.config_hash.c_str());
        os << buf;
    }
    if (!os) throw ConfigError("write failed: " + path);
}

std::vector<GridRow> ablation_grid(const RunConfig& base) {
    if (base.out_dir.empty()) throw ConfigError("ablate: out_dir is not set");
    struct Variant {
        const char* method;
        const char* slug;
        Placement placement;
        bool ia;
        bool norm;
    };
    const Variant variants[] = {
        {"B", "b", Placement::None, false, false},
        {"B+Norm", "b_norm", Placement::None, false, true},
        {"B+CBAM", "b_cbam", Placement::Everywhere, false, false},
        {"B+CBAM_L", "b_cbam_l", Placement::Late, false, false},
        {"B+CBAM_E", "b_cbam_e", Placement::Early, false, false},
        {"B+CBAM_E+IA+Norm", "b_cbam_e_ia_norm", Placement::Early, true, true},
    };

    std::vector<GridRow> rows;
    for (const Variant& v : variants) {
        RunConfig cfg = base;
        cfg.placement = v.placement;
        cfg.use_input_attention = v.ia;
        cfg.use_separation_norm = v.norm;
        cfg.out_dir = base.out_dir + "/" + v.slug;
        TrainResult tr = train_run(cfg);
        EvalReport report =
            evaluate_checkpoint(cfg, tr.final_checkpoint, cfg.mode, cfg.out_dir);
        rows.push_back(GridRow{v.method, report, tr.final_loss});
    }
    write_grid_csv(base.out_dir + "/grid.csv", rows);
    return rows;
}

}  // namespace zerosight
