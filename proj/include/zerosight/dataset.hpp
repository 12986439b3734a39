#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "zerosight/tensor.hpp"

namespace zerosight {

// Per-sample listing of a dataset directory (labels.csv: index,label,file).
struct DatasetMeta {
    std::vector<std::size_t> labels;
    std::vector<std::string> files;
    std::size_t image_size = 0;
    std::size_t n_classes = 0;
};

struct SynthSpec {
    std::size_t n_classes = 16;
    std::size_t samples_per_class = 40;
    std::size_t image_size = 32;
    std::uint64_t seed = 1;
};

// Procedural 3-channel dataset. Each class is a coarse attribute combination
// (base hue, blob shape, position cell); samples add hue/position jitter,
// global brightness scaling, and high-frequency pixel noise. Verifies at
// generation time that a pixel-space nearest-centroid classifier reaches 90%.
void synth_gen(const SynthSpec& spec, const std::string& out_dir);

DatasetMeta read_dataset_meta(const std::string& dir);

// Loads image tensors on demand and records which files were touched, so
// tests can audit that training never reads a test-class sample.
class ImageStore {
public:
    explicit ImageStore(std::string dir);

    const DatasetMeta& meta() const { return meta_; }
    std::size_t size() const { return meta_.labels.size(); }

    // (B, 3, S, S) float batch in the given sample order.
    TensorF load_batch(const std::vector<std::size_t>& indices);

    const std::vector<std::string>& accessed() const { return accessed_; }

private:
    std::string dir_;
    DatasetMeta meta_;
    std::vector<std::string> accessed_;
    std::vector<std::vector<float>> cache_;
    std::vector<bool> cached_;
};

}  // namespace zerosight
