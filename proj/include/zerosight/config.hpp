#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "zerosight/backbone.hpp"
#include "zerosight/split.hpp"

namespace zerosight {

// One training/evaluation run, loadable from a "key = value" config file.
// Unknown keys are rejected. The canonical serialization (minus out_dir,
// which only says where results land) feeds the config hash stamped into
// checkpoints and reports.
struct RunConfig {
    std::string data_dir;
    std::string out_dir;
    std::size_t image_size = 32;
    std::vector<std::size_t> widths{16, 32, 64, 128};
    std::size_t blocks_per_stage = 1;
    Placement placement = Placement::None;
    bool use_input_attention = false;
    bool use_separation_norm = false;
    std::size_t cbam_reduction = 16;
    std::size_t epochs = 50;
    std::size_t batch_classes = 4;    // P of the P x K class-balanced sampler
    std::size_t batch_per_class = 4;  // K
    SplitMode mode = SplitMode::Zsl;
    std::uint64_t seed_init = 1;
    std::uint64_t seed_data = 2;
    std::uint64_t seed_kmeans = 3;
    double lr = 1e-4;
    double weight_decay = 5e-4;
    double lr_gamma = 0.94;
    double lambda_proxy = 1.0;
    double lambda_softmax = 0.5;
    bool normalize_targets = false;

    BackboneConfig backbone_config() const {
        BackboneConfig b;
        b.widths = widths;
        b.blocks_per_stage = blocks_per_stage;
        b.use_input_attention = use_input_attention;
        b.placement = placement;
        b.cbam_reduction = cbam_reduction;
        b.in_channels = 3;
        b.input_size = image_size;
        return b;
    }

    std::string serialize() const;
    std::uint64_t config_hash() const;
    std::string config_hash_hex() const;
};

RunConfig parse_config_text(const std::string& text, const std::string& what);
RunConfig load_config(const std::string& path);

std::uint64_t fnv1a64(const std::string& text);

}  // namespace zerosight
