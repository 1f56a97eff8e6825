#pragma once

#include "psg/tape.hpp"

#include <functional>
#include <string>
#include <vector>

namespace psg {

struct GradCheckBlock {
    std::string name;
    std::size_t elements = 0;
    double max_rel_err = 0.0;
    double max_abs_err = 0.0;
    bool pass = true;
};

struct GradCheckReport {
    std::vector<GradCheckBlock> blocks;
    bool pass = true;

    /// Blocks sorted worst-first, for error listings.
    std::vector<GradCheckBlock> worst() const;
};

struct GradCheckOptions {
    double rtol = 1e-3;
    double atol = 1e-6;
    double step = 1e-5;   // central-difference half step, scaled by max(1, |theta|)
    bool corrupt = false; // negative control: perturbs the first analytic block by +10%
};

/// Compares the tape's analytic gradients against central finite differences
/// of build_loss for every element of every parameter in `params`. The
/// finite-difference route only uses forward evaluations, so it is independent
/// of the backward pass it certifies. build_loss must be deterministic; this
/// is verified by double evaluation and a mismatch throws TrainingError.
GradCheckReport grad_check(ParamStore& params, const std::function<Var(Tape&)>& build_loss,
                           const GradCheckOptions& opts = {});

} // namespace psg
