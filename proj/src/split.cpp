#include "zerosight/split.hpp"

#include <algorithm>
#include <map>

#include "zerosight/rng.hpp"

namespace zerosight {

SplitSpec make_split(const std::vector<std::size_t>& labels, SplitMode mode,
                     std::uint64_t seed) {
    if (labels.empty()) throw ConfigError("make_split: no samples");
    std::map<std::size_t, std::vector<std::size_t>> by_class;
    for (std::size_t i = 0; i < labels.size(); ++i) by_class[labels[i]].push_back(i);
    if (by_class.size() < 2)
        throw ConfigError("make_split: need at least 2 classes, got " +
                          std::to_string(by_class.size()));

    std::vector<std::size_t> classes;
    for (auto& [c, _] : by_class) classes.push_back(c);
    Rng rng(seed);
    rng.shuffle(classes);

    SplitSpec spec;
    spec.mode = mode;
    spec.seed = seed;
    std::size_t n_train = classes.size() / 2;
    spec.train_classes.assign(classes.begin(), classes.begin() + n_train);
    spec.test_classes.assign(classes.begin() + n_train, classes.end());
    std::sort(spec.train_classes.begin(), spec.train_classes.end());
    std::sort(spec.test_classes.begin(), spec.test_classes.end());

    if (mode == SplitMode::Gzsl) {
        for (auto& [c, members] : by_class)
            if (members.size() < 2)
                throw ConfigError("make_split: gzsl needs >= 2 samples per class; class " +
                                  std::to_string(c) + " has " + std::to_string(members.size()));
    }

    for (std::size_t c : spec.train_classes) {
        auto members = by_class[c];  // already in ascending sample order
        if (mode == SplitMode::Gzsl) {
            Rng class_rng = rng.fork(c + 1);
            class_rng.shuffle(members);
            std::size_t held = members.size() / 2;
            for (std::size_t i = 0; i < held; ++i) spec.test_indices.push_back(members[i]);
            for (std::size_t i = held; i < members.size(); ++i)
                spec.train_indices.push_back(members[i]);
        } else {
            for (std::size_t i : members) spec.train_indices.push_back(i);
        }
    }
    for (std::size_t c : spec.test_classes)
        for (std::size_t i : by_class[c]) spec.test_indices.push_back(i);

    std::sort(spec.train_indices.begin(), spec.train_indices.end());
    std::sort(spec.test_indices.begin(), spec.test_indices.end());
    spec.test_seen.resize(spec.test_indices.size());
    for (std::size_t i = 0; i < spec.test_indices.size(); ++i) {
        std::size_t cls = labels[spec.test_indices[i]];
        spec.test_seen[i] = std::binary_search(spec.train_classes.begin(),
                                               spec.train_classes.end(), cls);
    }
    return spec;
}

}  // namespace zerosight
