#include <cstdio>
#include <filesystem>
#include <string>

#include <CLI11.hpp>

#include "zerosight/dataset.hpp"
#include "zerosight/gradcheck_suite.hpp"
#include "zerosight/serialize.hpp"
#include "zerosight/train.hpp"

namespace {

using namespace zerosight;

int cmd_synth_gen(const SynthSpec& spec, const std::string& out) {
    synth_gen(spec, out);
    std::printf("wrote %zu images to %s\n", spec.n_classes * spec.samples_per_class,
                out.c_str());
    return 0;
}

int cmd_train(const std::string& config_path) {
    RunConfig cfg = load_config(config_path);
    TrainResult res = train_run(cfg);
    std::printf("trained %zu epochs: loss %.6f -> %.6f (best epoch %zu)\n", res.log.size(),
                res.initial_loss, res.final_loss, res.best_epoch);
    std::printf("log: %s\ncheckpoints: %s, %s\n", res.log_path.c_str(),
                res.final_checkpoint.c_str(), res.best_checkpoint.c_str());
    return 0;
}

void print_report(const EvalReport& r) {
    std::printf("nmi: %.4f\n", r.nmi_value);
    for (auto& [k, v] : r.recall_at) std::printf("r-%zu: %.2f%%\n", k, v);
    if (r.has_gzsl)
        std::printf("gzsl u: %.2f%% s: %.2f%% H: %.2f%%\n", r.gzsl.u, r.gzsl.s, r.gzsl.h);
}

int cmd_eval_checkpoint(const std::string& checkpoint, const std::string& mode,
                        std::string config_path, std::string out_dir) {
    std::filesystem::path ckpt(checkpoint);
    if (config_path.empty()) {
        auto sibling = ckpt.parent_path() / "run_config.txt";
        if (!std::filesystem::exists(sibling))
            throw ConfigError("eval: pass --config, or keep run_config.txt next to the "
                              "checkpoint (looked at " + sibling.string() + ")");
        config_path = sibling.string();
    }
    if (out_dir.empty()) out_dir = ckpt.parent_path().string();
    if (out_dir.empty()) out_dir = ".";
    RunConfig cfg = load_config(config_path);
    EvalReport report = evaluate_checkpoint(cfg, checkpoint, split_mode_from(mode), out_dir);
    print_report(report);
    std::printf("report: %s/report.csv\n", out_dir.c_str());
    return 0;
}

int cmd_eval_embeddings(const std::string& emb_path, const std::string& labels_path,
                        const std::string& mode, std::string out_dir,
                        std::uint64_t kmeans_seed) {
    TenRecord rec = read_ten_record(emb_path);
    if (rec.shape.size() != 2)
        throw ConfigError("eval: embeddings must be a rank-2 .ten archive, got " +
                          shape_str(rec.shape));
    Matrix emb(rec.shape[0], rec.shape[1]);
    emb.values = rec.values;
    auto rows = read_labels_csv(labels_path);
    if (rows.size() != emb.rows)
        throw ConfigError("eval: " + std::to_string(rows.size()) + " label rows for " +
                          std::to_string(emb.rows) + " embeddings");
    std::vector<std::size_t> labels(rows.size());
    std::vector<bool> seen(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        labels[i] = rows[i].label;
        seen[i] = rows[i].seen;
    }
    EvalReport meta;
    meta.seed = kmeans_seed;
    meta.config_hash = "external";
    EvalReport report =
        evaluate_embeddings(emb, labels, seen, split_mode_from(mode), kmeans_seed, meta);
    if (out_dir.empty()) out_dir = ".";
    std::filesystem::create_directories(out_dir);
    write_report_csv(out_dir + "/report.csv", report);
    print_report(report);
    return 0;
}

int cmd_ablate(const std::string& config_path) {
    RunConfig cfg = load_config(config_path);
    auto rows = ablation_grid(cfg);
    std::printf("%-20s %8s %8s\n", "method", "nmi", "r-1");
    for (auto& row : rows) {
        double r1 = row.report.recall_at.count(1) ? row.report.recall_at.at(1) : 0.0;
        std::printf("%-20s %8.4f %8.2f\n", row.method.c_str(), row.report.nmi_value, r1);
    }
    std::printf("grid: %s/grid.csv\n", cfg.out_dir.c_str());
    return 0;
}

int cmd_gradcheck(const std::string& only_op, std::size_t seeds) {
    const auto& suite = gradcheck_suite();
    bool found = false, all_pass = true;
    for (const auto& check : suite) {
        if (!only_op.empty() && check.name != only_op) continue;
        found = true;
        double worst = 0.0;
        for (std::size_t s = 0; s < seeds; ++s) {
            GradCheckResult r = check.run(1 + s);
            worst = std::max(worst, r.max_err);
        }
        bool pass = worst <= check.tol;
        all_pass = all_pass && pass;
        std::printf("%-20s max_rel_err %.3e  tol %.0e  %s\n", check.name.c_str(), worst,
                    check.tol, pass ? "PASS" : "FAIL");
    }
    if (!found) throw ConfigError("gradcheck: unknown op '" + only_op + "'");
    return all_pass ? 0 : 3;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"zerosight: targeted-attention zero-shot learning pipeline"};
    app.require_subcommand(1);

    auto* sg = app.add_subcommand("synth-gen", "generate the synthetic dataset");
    zerosight::SynthSpec spec;
    std::string sg_out;
    sg->add_option("--classes", spec.n_classes, "number of classes")->required();
    sg->add_option("--per-class", spec.samples_per_class, "samples per class")->required();
    sg->add_option("--size", spec.image_size, "square image size in px")->required();
    sg->add_option("--seed", spec.seed, "generation seed")->required();
    sg->add_option("--out", sg_out, "output directory")->required();

    auto* tr = app.add_subcommand("train", "train a model from a config file");
    std::string tr_config;
    tr->add_option("--config", tr_config, "run config file")->required();

    auto* ev = app.add_subcommand("eval", "evaluate a checkpoint or an embedding dump");
    std::string ev_ckpt, ev_mode = "zsl", ev_config, ev_out, ev_emb, ev_labels;
    std::uint64_t ev_kseed = 3;
    ev->add_option("--checkpoint", ev_ckpt, "checkpoint file");
    ev->add_option("--mode", ev_mode, "zsl|gzsl")->required();
    ev->add_option("--config", ev_config, "run config (default: run_config.txt next to the checkpoint)");
    ev->add_option("--out", ev_out, "output directory");
    ev->add_option("--embeddings", ev_emb, "embedding .ten archive (instead of --checkpoint)");
    ev->add_option("--labels", ev_labels, "labels.csv sidecar for --embeddings");
    ev->add_option("--kmeans-seed", ev_kseed, "clustering seed for --embeddings");

    auto* ab = app.add_subcommand("ablate", "run the six-configuration ablation grid");
    std::string ab_config;
    ab->add_option("--config", ab_config, "base run config file")->required();

    auto* gc = app.add_subcommand("gradcheck", "finite-difference gradient verification");
    std::string gc_op;
    std::size_t gc_seeds = 5;
    gc->add_option("--op", gc_op, "check a single op by name");
    gc->add_option("--seeds", gc_seeds, "random seeds per op");

    try {
        app.parse(argc, argv);
        if (*sg) return cmd_synth_gen(spec, sg_out);
        if (*tr) return cmd_train(tr_config);
        if (*ev) {
            if (!ev_emb.empty()) {
                if (ev_labels.empty())
                    throw zerosight::ConfigError("eval: --embeddings needs --labels");
                return cmd_eval_embeddings(ev_emb, ev_labels, ev_mode, ev_out, ev_kseed);
            }
            if (ev_ckpt.empty())
                throw zerosight::ConfigError("eval: pass --checkpoint or --embeddings");
            return cmd_eval_checkpoint(ev_ckpt, ev_mode, ev_config, ev_out);
        }
        if (*ab) return cmd_ablate(ab_config);
        if (*gc) return cmd_gradcheck(gc_op, gc_seeds);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 2;
    } catch (const zerosight::NumericError& e) {
        std::fprintf(stderr, "numerical abort: %s\n", e.what());
        return 3;
    } catch (const zerosight::ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
