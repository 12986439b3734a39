#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "zerosight/common.hpp"

namespace zerosight {

enum class SplitMode { Zsl, Gzsl };

inline const char* split_mode_name(SplitMode m) { return m == SplitMode::Zsl ? "zsl" : "gzsl"; }

inline SplitMode split_mode_from(const std::string& s) {
    if (s == "zsl") return SplitMode::Zsl;
    if (s == "gzsl") return SplitMode::Gzsl;
    throw ConfigError("unknown split mode '" + s + "' (expected zsl|gzsl)");
}

// Class-disjoint 50/50 partition. ZSL: test set = all samples of the held-out
// classes. GZSL: test set additionally holds out half of each train class's
// samples as test-seen.
struct SplitSpec {
    SplitMode mode = SplitMode::Zsl;
    std::uint64_t seed = 0;
    std::vector<std::size_t> train_classes;
    std::vector<std::size_t> test_classes;
    std::vector<std::size_t> train_indices;  // samples the trainer may read
    std::vector<std::size_t> test_indices;   // evaluation samples
    std::vector<bool> test_seen;             // parallel to test_indices
};

SplitSpec make_split(const std::vector<std::size_t>& labels, SplitMode mode,
                     std::uint64_t seed);

}  // namespace zerosight
