#pragma once

#include "psg/tape.hpp"

#include <vector>

namespace psg {

/// AdamW with decoupled weight decay and bias-corrected moments
/// (beta1=0.9, beta2=0.999, eps=1e-8). Moment state is keyed by parameter
/// position in the store and initialized lazily on the first step.
class AdamW {
public:
    AdamW(double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
        : beta1_(beta1), beta2_(beta2), eps_(eps) {}

    /// One update from the gradients currently held in the store. Weight decay
    /// is applied as a pure multiplicative shrink, independent of the moments.
    void step(ParamStore& params, double lr, double weight_decay);

    std::size_t steps_taken() const { return step_count_; }

private:
    double beta1_, beta2_, eps_;
    std::size_t step_count_ = 0;
    std::vector<Array> m_, v_;
};

} // namespace psg
