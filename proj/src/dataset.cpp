#include "zerosight/dataset.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "zerosight/rng.hpp"
#include "zerosight/serialize.hpp"

namespace zerosight {

namespace {

constexpr std::size_t kNumHues = 8;
constexpr std::size_t kNumShapes = 4;   // disk, bar, cross, ring
constexpr std::size_t kGrid = 3;        // 3x3 position cells
constexpr std::size_t kCapacity = kNumHues * kNumShapes * kGrid * kGrid;

std::array<double, 3> hue_rgb(std::size_t hue_index) {
    // evenly spaced hue wheel at full saturation
    double h = 6.0 * static_cast<double>(hue_index) / static_cast<double>(kNumHues);
    int sector = static_cast<int>(h) % 6;
    double f = h - std::floor(h);
    switch (sector) {
        case 0: return {1.0, f, 0.0};
        case 1: return {1.0 - f, 1.0, 0.0};
        case 2: return {0.0, 1.0, f};
        case 3: return {0.0, 1.0 - f, 1.0};
        case 4: return {f, 0.0, 1.0};
        default: return {1.0, 0.0, 1.0 - f};
    }
}

bool in_shape(std::size_t shape, double dx, double dy, double r) {
    double ax = std::abs(dx), ay = std::abs(dy);
    double dist = std::sqrt(dx * dx + dy * dy);
    switch (shape) {
        case 0: return dist <= r;                                        // disk
        case 1: return ax <= r && ay <= r * 0.35;                        // bar
        case 2: return (ax <= r * 0.35 && ay <= r) || (ay <= r * 0.35 && ax <= r);  // cross
        default: return dist <= r && dist >= r * 0.55;                   // ring
    }
}

}  // namespace

void synth_gen(const SynthSpec& spec, const std::string& out_dir) {
    if (spec.image_size < 16)
        throw ConfigError("synth_gen: image_size must be >= 16, got " +
                          std::to_string(spec.image_size));
    if (spec.n_classes < 1 || spec.samples_per_class < 1)
        throw ConfigError("synth_gen: need at least one class and one sample per class");
    if (spec.n_classes > kCapacity)
        throw ConfigError("synth_gen: " + std::to_string(spec.n_classes) +
                          " classes exceed attribute capacity of " + std::to_string(kCapacity) +
                          " (hues x shapes x positions = " + std::to_string(kNumHues) + " x " +
                          std::to_string(kNumShapes) + " x " + std::to_string(kGrid * kGrid) +
                          ")");

    std::filesystem::create_directories(out_dir);
    Rng rng(spec.seed);

    // distinct coarse attribute combos per class
    std::vector<std::size_t> combos(kCapacity);
    for (std::size_t i = 0; i < kCapacity; ++i) combos[i] = i;
    rng.shuffle(combos);
    combos.resize(spec.n_classes);

    const std::size_t s = spec.image_size;
    const double size = static_cast<double>(s);
    const std::size_t n_total = spec.n_classes * spec.samples_per_class;
    std::vector<std::vector<float>> images(n_total);
    std::vector<std::size_t> labels(n_total);

    std::size_t idx = 0;
    for (std::size_t cls = 0; cls < spec.n_classes; ++cls) {
        std::size_t combo = combos[cls];
        std::size_t hue = combo % kNumHues;
        std::size_t shape = (combo / kNumHues) % kNumShapes;
        std::size_t cell = combo / (kNumHues * kNumShapes);
        double cx0 = size * (1.0 + 2.0 * static_cast<double>(cell % kGrid)) / 6.0;
        double cy0 = size * (1.0 + 2.0 * static_cast<double>(cell / kGrid)) / 6.0;
        auto rgb = hue_rgb(hue);
        for (std::size_t rep = 0; rep < spec.samples_per_class; ++rep, ++idx) {
            labels[idx] = cls;
            double jx = rng.uniform(-size / 16.0, size / 16.0);
            double jy = rng.uniform(-size / 16.0, size / 16.0);
            double radius = size / 6.0 * rng.uniform(0.85, 1.15);
            double brightness = rng.uniform(0.55, 1.0);
            double blob_gain = rng.uniform(0.75, 1.0);
            std::vector<float>& img = images[idx];
            img.assign(3 * s * s, 0.0f);
            for (std::size_t y = 0; y < s; ++y)
                for (std::size_t x = 0; x < s; ++x) {
                    double noise = rng.uniform(0.0, 0.18);
                    bool inside = in_shape(shape, static_cast<double>(x) - (cx0 + jx),
                                           static_cast<double>(y) - (cy0 + jy), radius);
                    double texture = rng.uniform(-0.08, 0.08);
                    for (std::size_t ch = 0; ch < 3; ++ch) {
                        double v = noise;
                        if (inside) v += rgb[ch] * blob_gain;
                        v = (v + texture) * brightness;
                        img[(ch * s + y) * s + x] =
                            static_cast<float>(std::clamp(v, 0.0, 1.0));
                    }
                }
        }
    }

    // pixel-space nearest-centroid oracle: the coarse attributes must make
    // classes separable before any training happens
    const std::size_t dim = 3 * s * s;
    std::vector<double> centroids(spec.n_classes * dim, 0.0);
    for (std::size_t i = 0; i < n_total; ++i)
        for (std::size_t j = 0; j < dim; ++j)
            centroids[labels[i] * dim + j] += static_cast<double>(images[i][j]);
    for (std::size_t c = 0; c < spec.n_classes; ++c)
        for (std::size_t j = 0; j < dim; ++j)
            centroids[c * dim + j] /= static_cast<double>(spec.samples_per_class);
    std::size_t correct = 0;
    for (std::size_t i = 0; i < n_total; ++i) {
        double best = std::numeric_limits<double>::infinity();
        std::size_t best_c = 0;
        for (std::size_t c = 0; c < spec.n_classes; ++c) {
            double acc = 0.0;
            for (std::size_t j = 0; j < dim; ++j) {
                double t = static_cast<double>(images[i][j]) - centroids[c * dim + j];
                acc += t * t;
            }
            if (acc < best) {
                best = acc;
                best_c = c;
            }
        }
        if (best_c == labels[i]) ++correct;
    }
    double accuracy = static_cast<double>(correct) / static_cast<double>(n_total);
    if (accuracy < 0.9)
        throw NumericError("synth_gen: nearest-centroid accuracy " + std::to_string(accuracy) +
                           " below the 0.9 separability bar; generated classes are not "
                           "coarsely separable");

    std::ofstream csv(out_dir + "/labels.csv");
    if (!csv) throw ConfigError("cannot open for writing: " + out_dir + "/labels.csv");
    csv << "index,label,file\n";
    char name[32];
    for (std::size_t i = 0; i < n_total; ++i) {
        std::snprintf(name, sizeof name, "img_%05zu.ten", i);
        TensorF t = TensorF::from({3, s, s}, images[i]);
        write_ten(out_dir + "/" + name, t);
        csv << i << ',' << labels[i] << ',' << name << '\n';
    }
    if (!csv) throw ConfigError("write failed: " + out_dir + "/labels.csv");
}

DatasetMeta read_dataset_meta(const std::string& dir) {
    std::ifstream is(dir + "/labels.csv");
    if (!is) throw ConfigError("cannot open: " + dir + "/labels.csv");
    std::string line;
    if (!std::getline(is, line) || line != "index,label,file")
        throw ConfigError(dir + "/labels.csv: expected header index,label,file");
    DatasetMeta meta;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::size_t c1 = line.find(',');
        std::size_t c2 = line.find(',', c1 + 1);
        if (c1 == std::string::npos || c2 == std::string::npos)
            throw ConfigError(dir + "/labels.csv: malformed row '" + line + "'");
        meta.labels.push_back(static_cast<std::size_t>(std::stoull(line.substr(c1 + 1, c2 - c1 - 1))));
        meta.files.push_back(line.substr(c2 + 1));
    }
    if (meta.labels.empty()) throw ConfigError(dir + "/labels.csv: no samples listed");
    std::vector<std::size_t> classes(meta.labels);
    std::sort(classes.begin(), classes.end());
    classes.erase(std::unique(classes.begin(), classes.end()), classes.end());
    meta.n_classes = classes.size();
    // image size from the first archive
    TenRecord r = read_ten_record(dir + "/" + meta.files[0]);
    if (r.shape.size() != 3 || r.shape[0] != 3 || r.shape[1] != r.shape[2])
        throw ConfigError(dir + ": expected (3,S,S) image archives, found " +
                          shape_str(r.shape));
    meta.image_size = r.shape[1];
    return meta;
}

ImageStore::ImageStore(std::string dir) : dir_(std::move(dir)) {
    meta_ = read_dataset_meta(dir_);
    cache_.resize(meta_.files.size());
    cached_.assign(meta_.files.size(), false);
}

TensorF ImageStore::load_batch(const std::vector<std::size_t>& indices) {
    const std::size_t s = meta_.image_size;
    TensorF batch({indices.size(), 3, s, s});
    for (std::size_t b = 0; b < indices.size(); ++b) {
        std::size_t i = indices[b];
        if (i >= meta_.files.size())
            throw ConfigError("dataset: sample index " + std::to_string(i) + " out of range");
        if (!cached_[i]) {
            TensorF img = read_ten<float>(dir_ + "/" + meta_.files[i]);
            if (img.shape() != Shape{3, s, s})
                throw ConfigError("dataset: " + meta_.files[i] + " has shape " +
                                  shape_str(img.shape()));
            cache_[i] = img.data();
            cached_[i] = true;
            accessed_.push_back(meta_.files[i]);
        }
        std::copy(cache_[i].begin(), cache_[i].end(), batch.data().begin() + b * 3 * s * s);
    }
    return batch;
}

}  // namespace zerosight
