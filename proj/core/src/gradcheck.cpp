#include "psg/gradcheck.hpp"

#include "psg/errors.hpp"

#include <algorithm>
#include <cmath>

namespace psg {

std::vector<GradCheckBlock> GradCheckReport::worst() const {
    std::vector<GradCheckBlock> sorted = blocks;
    std::stable_sort(sorted.begin(), sorted.end(),
                     [](const GradCheckBlock& a, const GradCheckBlock& b) {
                         return a.max_rel_err > b.max_rel_err;
                     });
    return sorted;
}

namespace {

double forward_value(ParamStore&, const std::function<Var(Tape&)>& build_loss) {
    Tape tape;
    const Var loss = build_loss(tape);
    const Array& v = tape.value(loss);
    if (!v.is_scalar()) {
        throw TrainingError("grad_check: loss must be scalar, got shape " + shape_str(v));
    }
    return v[0];
}

} // namespace

GradCheckReport grad_check(ParamStore& params, const std::function<Var(Tape&)>& build_loss,
                           const GradCheckOptions& opts) {
    // Determinism gate: two forward evaluations must agree bit for bit.
    const double f0 = forward_value(params, build_loss);
    const double f1 = forward_value(params, build_loss);
    if (f0 != f1) {
        throw TrainingError("grad_check: loss function is not deterministic (" +
                            std::to_string(f0) + " vs " + std::to_string(f1) + ")");
    }

    // Analytic gradients via the tape.
    params.zero_grads();
    {
        Tape tape;
        const Var loss = build_loss(tape);
        tape.backward(loss);
    }
    std::vector<Array> analytic;
    analytic.reserve(params.size());
    for (std::size_t b = 0; b < params.size(); ++b) analytic.push_back(params[b].grad);
    if (opts.corrupt && !analytic.empty()) {
        for (std::size_t i = 0; i < analytic[0].numel(); ++i) analytic[0][i] *= 1.10;
    }

    GradCheckReport report;
    for (std::size_t b = 0; b < params.size(); ++b) {
        Parameter& p = params[b];
        GradCheckBlock block;
        block.name = p.name;
        block.elements = p.value.numel();
        for (std::size_t i = 0; i < p.value.numel(); ++i) {
            const double theta = p.value[i];
            const double h = opts.step * std::max(1.0, std::abs(theta));
            p.value[i] = theta + h;
            const double fp = forward_value(params, build_loss);
            p.value[i] = theta - h;
            const double fm = forward_value(params, build_loss);
            p.value[i] = theta;

            const double fd = (fp - fm) / (2.0 * h);
            const double an = analytic[b][i];
            const double abs_err = std::abs(fd - an);
            const double scale = std::max(std::abs(fd), std::abs(an));
            const double rel_err = abs_err / std::max(scale, 1e-12);
            block.max_abs_err = std::max(block.max_abs_err, abs_err);
            block.max_rel_err = std::max(block.max_rel_err, rel_err);
            if (abs_err > opts.atol + opts.rtol * scale) block.pass = false;
        }
        report.pass = report.pass && block.pass;
        report.blocks.push_back(std::move(block));
    }
    return report;
}

} // namespace psg
