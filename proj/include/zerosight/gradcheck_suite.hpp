#pragma once

#include <functional>
#include <vector>

#include "zerosight/gradcheck.hpp"

namespace zerosight {

// Named finite-difference checks for every differentiable op, all at 64-bit.
// The CLI `gradcheck` subcommand and the acceptance suite both walk this
// registry.
struct OpCheck {
    std::string name;
    double tol;
    std::function<GradCheckResult(std::uint64_t seed)> run;
};

const std::vector<OpCheck>& gradcheck_suite();

}  // namespace zerosight
