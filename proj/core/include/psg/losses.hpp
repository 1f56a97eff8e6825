#pragma once

#include "psg/model.hpp"
#include "psg/scene.hpp"
#include "psg/tape.hpp"

#include <span>

namespace psg {

/// Per-pair-and-predicate targets in [0, 1]. Hard-annotated entries are
/// pinned to exactly 1 and flagged in `provenance`; teacher-derived entries
/// carry the teacher's sigmoid score.
struct SoftLabelTensor {
    Array targets;    // N x N x P
    Array provenance; // 0 = negative, 1 = hard annotation, 2 = teacher-derived

    std::size_t objects() const { return targets.ndim() == 3 ? targets.dim(0) : 0; }
};

/// Hard {0,1} targets from the scene's annotated triplets.
SoftLabelTensor hard_labels(const Scene& scene, std::size_t predicates);

/// Mean focal loss over the off-diagonal entries. `balance` weights the
/// positive branch (balance=1, gamma=0 reduces exactly to bce_multilabel);
/// soft targets interpolate the two branches linearly.
Var focal_loss(Tape& tape, std::span<const Var> planes, const SoftLabelTensor& targets,
               double gamma, double balance);

/// Mean sigmoid binary cross-entropy with soft targets over off-diagonal
/// entries, in numerically stable form.
Var bce_multilabel(Tape& tape, std::span<const Var> planes, const SoftLabelTensor& targets);

/// As above but with an explicit include mask (nonzero entries are counted);
/// used by tests that pin single-entry values.
Var focal_loss_masked(Tape& tape, std::span<const Var> planes, const Array& targets,
                      const Array& include, double gamma, double balance);
Var bce_multilabel_masked(Tape& tape, std::span<const Var> planes, const Array& targets,
                          const Array& include);

} // namespace psg
