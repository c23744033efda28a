#pragma once

// Finite-difference checks of every loss term and of the weighted total,
// run through the full network on a small synthetic corpus.

#include "ismaf/grad_check.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace ismaf {

struct GradientCase {
    std::string loss;  // ce, scl, cmca, ml, af or overall
    ad::GradCheckResult result;
};

struct GradientSuiteOptions {
    std::uint64_t seed = 7;
    std::size_t batch = 4;
    double h = 1e-4;
    std::size_t max_per_param = 0;  // 0 checks every entry
    // Signed graph attention jumps where an edge score crosses zero; entries
    // whose step crosses such a point are reported separately.
    bool skip_nonsmooth = true;
    double tolerance = 1e-4;
};

std::vector<GradientCase> run_gradient_suite(const GradientSuiteOptions& options);

} // namespace ismaf
