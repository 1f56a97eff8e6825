#pragma once

#include "psg/losses.hpp"
#include "psg/model.hpp"
#include "psg/optimizer.hpp"
#include "psg/scene.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace psg {

/// Two-phase schedule: phase 1 trains on hard labels, then the teacher is set
/// to an exact copy of the student and phase 2 finetunes on self-distilled
/// soft labels while the teacher tracks the student by EMA.
struct TrainSchedule {
    std::size_t phase1_epochs = 10;
    std::size_t phase2_epochs = 5;
    double ema_alpha = 0.999;
    double lr = 1e-4;
    double weight_decay = 0.05;
    /// 1-based epoch numbers (across both phases) whose start multiplies the
    /// learning rate by lr_decay_factor.
    std::vector<std::size_t> lr_decay_epochs = {6, 10};
    double lr_decay_factor = 0.1;
    double focal_gamma = 2.0;
    double focal_balance = 0.25;
    /// Soft-label floor: teacher scores below tau are dropped to 0.
    double tau = 0.5;
    std::size_t batch_size = 8;
    std::uint64_t seed = 0;
    /// Use plain BCE instead of focal loss on phase-2 soft targets.
    bool phase2_bce = false;
    /// Refresh soft labels once per epoch instead of every step.
    bool cached_soft_labels = false;
    std::size_t threads = 1;

    void validate() const;
};

struct EpochRecord {
    std::size_t epoch = 0; // 1-based, across both phases
    std::string phase;     // "hard" or "soft"
    double mean_loss = 0.0;
    double lr = 0.0;
};

struct TrainResult {
    std::vector<EpochRecord> log;
    /// EMA teacher parameters; present iff phase2_epochs > 0.
    std::optional<ParamStore> teacher;
    /// Student parameters at the end of phase 1; present iff phase2_epochs > 0.
    std::optional<ParamStore> phase1_params;
};

/// teacher <- teacher * alpha + student * (1 - alpha), elementwise. The
/// student is untouched and the teacher never sees gradients.
void ema_update(ParamStore& teacher, const ParamStore& student, double alpha);

/// Runs the teacher on the scene and combines its sigmoid scores with the
/// hard annotation: target = max(hard, score >= tau ? score : 0). Hard
/// entries stay pinned at exactly 1.
SoftLabelTensor make_soft_labels(RelationModel& teacher, const Scene& scene, double tau);

/// Trains the model in place. Deterministic given (corpus, model seed,
/// schedule); scene gradients inside a batch may be computed in parallel but
/// are reduced in fixed scene order, so the result is identical for any
/// thread count. On divergence (non-finite loss) the model is restored to the
/// last completed epoch and TrainingError is thrown.
TrainResult train(const std::vector<Scene>& corpus, RelationModel& model,
                  const TrainSchedule& schedule);

} // namespace psg
