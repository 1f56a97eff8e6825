#include "psg/losses.hpp"

#include "psg/errors.hpp"

namespace psg {

SoftLabelTensor hard_labels(const Scene& scene, std::size_t predicates) {
    const std::size_t n = scene.object_count();
    SoftLabelTensor out;
    out.targets = Array({n, n, predicates});
    out.provenance = Array({n, n, predicates});
    for (const Triplet& t : scene.triplets) {
        out.targets.at3(t.subject, t.object, t.predicate) = 1.0;
        out.provenance.at3(t.subject, t.object, t.predicate) = 1.0;
    }
    return out;
}

namespace {

Array offdiag_for(const SoftLabelTensor& targets) {
    return offdiag_mask(targets.targets.dim(0), targets.targets.dim(2));
}

} // namespace

Var focal_loss(Tape& tape, std::span<const Var> planes, const SoftLabelTensor& targets,
               double gamma, double balance) {
    if (gamma < 0.0) throw ConfigError("focal_loss: gamma must be nonnegative");
    return tape.pair_loss(planes, targets.targets, offdiag_for(targets), gamma, balance, true);
}

Var bce_multilabel(Tape& tape, std::span<const Var> planes, const SoftLabelTensor& targets) {
    return tape.pair_loss(planes, targets.targets, offdiag_for(targets), 0.0, 1.0, false);
}

Var focal_loss_masked(Tape& tape, std::span<const Var> planes, const Array& targets,
                      const Array& include, double gamma, double balance) {
    if (gamma < 0.0) throw ConfigError("focal_loss: gamma must be nonnegative");
    return tape.pair_loss(planes, targets, include, gamma, balance, true);
}

Var bce_multilabel_masked(Tape& tape, std::span<const Var> planes, const Array& targets,
                          const Array& include) {
    return tape.pair_loss(planes, targets, include, 0.0, 1.0, false);
}

} // namespace psg
