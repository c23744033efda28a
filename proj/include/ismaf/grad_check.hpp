#pragma once

#include "ismaf/tape.hpp"

#include <functional>
#include <string>

namespace ismaf::ad {

// A deterministic scalar function of the parameters in a store. It must
// bind every parameter it reads through tape.param().
using LossFn = std::function<Var(Tape&, const ParamStore&)>;

struct GradCheckResult {
    double max_relative_error = 0.0;
    std::string worst_param;
    std::size_t worst_index = 0;
    double analytic = 0.0;
    double numeric = 0.0;
    std::size_t entries_checked = 0;
    std::size_t nonsmooth_skipped = 0;
};

// Compares reverse-mode gradients against central differences over every
// trainable entry. Relative error per entry is
// |analytic - numeric| / max(|analytic|, |numeric|, floor), floor 1e-8 by default.
// The store is restored to its original values on return.
//
// With max_per_param > 0, larger tensors are checked on that many entries
// drawn with `sample_seed`; smaller ones are checked in full.
//
// With skip_nonsmooth, an entry whose error exceeds `tolerance` is measured
// again at step h/2. If the two central differences disagree by more than
// `tolerance`, the loss is not smooth within the step (a sign flip or a kink
// was crossed) and the entry is counted in nonsmooth_skipped instead.
struct GradCheckOptions {
    double h = 1e-6;
    std::size_t max_per_param = 0;
    std::uint64_t sample_seed = 0;
    bool skip_nonsmooth = false;
    double tolerance = 1e-4;
    // Gradients that are exactly zero by symmetry still show central
    // difference rounding noise of order eps * |f| / h; raise the floor when
    // such entries are expected.
    double floor = 1e-8;
};

GradCheckResult grad_check(const LossFn& f, ParamStore& params, const GradCheckOptions& options);
GradCheckResult grad_check(const LossFn& f, ParamStore& params, double h);

} // namespace ismaf::ad
