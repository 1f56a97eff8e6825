#include "psg/trainer.hpp"

#include "psg/errors.hpp"
#include "psg/rng.hpp"
#include "psg/threads.hpp"

#include <algorithm>
#include <cmath>
#include <mutex>
#include <numeric>

namespace psg {

void TrainSchedule::validate() const {
    if (ema_alpha < 0.0 || ema_alpha > 1.0) throw ConfigError("train: ema alpha must be in [0, 1]");
    if (tau < 0.0 || tau >= 1.0) throw ConfigError("train: tau must be in [0, 1)");
    if (lr <= 0.0) throw ConfigError("train: learning rate must be positive");
    if (weight_decay < 0.0) throw ConfigError("train: weight decay must be nonnegative");
    if (focal_gamma < 0.0) throw ConfigError("train: gamma must be nonnegative");
    if (batch_size == 0) throw ConfigError("train: batch size must be positive");
    if (lr_decay_factor <= 0.0) throw ConfigError("train: lr decay factor must be positive");
}

void ema_update(ParamStore& teacher, const ParamStore& student, double alpha) {
    if (teacher.size() != student.size()) {
        throw TrainingError("ema_update: teacher/student parameter count mismatch");
    }
    for (std::size_t i = 0; i < teacher.size(); ++i) {
        Parameter& t = teacher[i];
        const Parameter& s = student[i];
        if (t.name != s.name || !t.value.same_shape(s.value)) {
            throw TrainingError("ema_update: parameter mismatch at '" + t.name + "' vs '" +
                                s.name + "'");
        }
        for (std::size_t e = 0; e < t.value.numel(); ++e) {
            t.value[e] = t.value[e] * alpha + s.value[e] * (1.0 - alpha);
        }
    }
}

SoftLabelTensor make_soft_labels(RelationModel& teacher, const Scene& scene, double tau) {
    const std::size_t p_count = teacher.config().predicates;
    SoftLabelTensor labels = hard_labels(scene, p_count);
    const RelationLogits logits = teacher.relation_logits(scene);
    const std::size_t n = scene.object_count();
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            if (i == j) continue;
            for (std::size_t p = 0; p < p_count; ++p) {
                if (labels.provenance.at3(i, j, p) == 1.0) continue; // hard labels stay pinned
                const double score = sigmoid(logits.scores.at3(i, j, p));
                if (score >= tau) {
                    labels.targets.at3(i, j, p) = score;
                    labels.provenance.at3(i, j, p) = 2.0;
                }
            }
        }
    }
    return labels;
}

namespace {

// Worker-local student/teacher copies so parallel scenes never share a tape
// or a gradient buffer.
struct WorkerSlot {
    RelationModel student;
    std::optional<RelationModel> teacher;
};

struct SceneResult {
    double loss = 0.0;
    std::vector<Array> grads;
};

std::vector<Array> grad_snapshot(const ParamStore& params) {
    std::vector<Array> out;
    out.reserve(params.size());
    for (std::size_t i = 0; i < params.size(); ++i) out.push_back(params[i].grad);
    return out;
}

} // namespace

TrainResult train(const std::vector<Scene>& corpus, RelationModel& model,
                  const TrainSchedule& schedule) {
    schedule.validate();
    if (corpus.empty()) throw ConfigError("train: corpus is empty");

    const std::size_t p_count = model.config().predicates;
    for (const Scene& s : corpus) {
        for (const Triplet& t : s.triplets) {
            if (t.predicate >= p_count) {
                throw ConfigError("train: scene '" + s.id + "' uses predicate " +
                                  std::to_string(t.predicate) + " but the model has " +
                                  std::to_string(p_count));
            }
        }
    }

    const std::size_t total_epochs = schedule.phase1_epochs + schedule.phase2_epochs;
    const std::size_t workers = std::max<std::size_t>(1, schedule.threads);

    std::vector<WorkerSlot> slots;
    slots.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) {
        WorkerSlot slot{model.clone(), std::nullopt};
        if (schedule.phase2_epochs > 0) slot.teacher = model.clone();
        slots.push_back(std::move(slot));
    }

    AdamW optimizer;
    TrainResult result;
    std::optional<RelationModel> teacher;
    ParamStore last_good = model.params().clone();
    double lr = schedule.lr;

    std::vector<SoftLabelTensor> cached_labels; // per corpus index, cached mode only

    for (std::size_t epoch = 1; epoch <= total_epochs; ++epoch) {
        const bool soft_phase = epoch > schedule.phase1_epochs;
        if (std::find(schedule.lr_decay_epochs.begin(), schedule.lr_decay_epochs.end(), epoch) !=
            schedule.lr_decay_epochs.end()) {
            lr *= schedule.lr_decay_factor;
        }
        if (soft_phase && !teacher.has_value()) {
            // Phase 2 entry: the teacher starts as an exact copy of the student.
            teacher = model.clone();
            result.phase1_params = model.params().clone();
        }

        if (soft_phase && schedule.cached_soft_labels) {
            for (std::size_t w = 0; w < workers; ++w) {
                slots[w].teacher->params().copy_values_from(teacher->params());
            }
            cached_labels.assign(corpus.size(), SoftLabelTensor{});
            const std::size_t active = std::min(workers, corpus.size());
            parallel_for(corpus.size(), workers, [&](std::size_t i) {
                cached_labels[i] =
                    make_soft_labels(*slots[i % active].teacher, corpus[i], schedule.tau);
            });
        }

        std::vector<std::size_t> order(corpus.size());
        std::iota(order.begin(), order.end(), 0);
        Rng shuffle_rng(Rng::mix(schedule.seed, 0xE90C0000ULL + epoch));
        shuffle_rng.shuffle(order);

        double epoch_loss = 0.0;
        std::size_t seen = 0;

        for (std::size_t start = 0; start < order.size(); start += schedule.batch_size) {
            const std::size_t count = std::min(schedule.batch_size, order.size() - start);

            for (std::size_t w = 0; w < workers; ++w) {
                slots[w].student.params().copy_values_from(model.params());
                if (soft_phase && slots[w].teacher.has_value()) {
                    slots[w].teacher->params().copy_values_from(teacher->params());
                }
            }

            std::vector<SceneResult> results(count);
            std::exception_ptr failure;
            std::mutex failure_mutex;
            parallel_for(count, workers, [&](std::size_t b) {
                try {
                    const std::size_t worker = b % std::min(workers, count);
                    WorkerSlot& slot = slots[worker];
                    const Scene& scene = corpus[order[start + b]];

                    SoftLabelTensor labels;
                    if (!soft_phase) {
                        labels = hard_labels(scene, p_count);
                    } else if (schedule.cached_soft_labels) {
                        labels = cached_labels[order[start + b]];
                    } else {
                        labels = make_soft_labels(*slot.teacher, scene, schedule.tau);
                    }

                    slot.student.params().zero_grads();
                    Tape tape;
                    const Var emb = slot.student.object_embeddings(tape, scene);
                    const std::vector<Var> planes = slot.student.relation_logit_planes(tape, emb);
                    const Var loss =
                        (soft_phase && schedule.phase2_bce)
                            ? bce_multilabel(tape, planes, labels)
                            : focal_loss(tape, planes, labels, schedule.focal_gamma,
                                         schedule.focal_balance);
                    tape.backward(loss);
                    results[b].loss = tape.value(loss)[0];
                    results[b].grads = grad_snapshot(slot.student.params());
                } catch (...) {
                    std::lock_guard<std::mutex> lock(failure_mutex);
                    if (!failure) failure = std::current_exception();
                }
            });
            if (failure) {
                model.params().copy_values_from(last_good);
                try {
                    std::rethrow_exception(failure);
                } catch (const TrainingError& e) {
                    throw TrainingError(std::string(e.what()) +
                                        " (model restored to last completed epoch)");
                }
            }

            bool finite = true;
            for (const SceneResult& r : results) finite = finite && std::isfinite(r.loss);
            if (!finite) {
                model.params().copy_values_from(last_good);
                throw TrainingError("train: loss diverged at epoch " + std::to_string(epoch) +
                                    " (model restored to last completed epoch)");
            }

            // Deterministic reduction: scene order within the batch, scaled to
            // the batch mean.
            ParamStore& params = model.params();
            params.zero_grads();
            const double inv = 1.0 / static_cast<double>(count);
            for (std::size_t b = 0; b < count; ++b) {
                for (std::size_t i = 0; i < params.size(); ++i) {
                    Array& dst = params[i].grad;
                    const Array& src = results[b].grads[i];
                    for (std::size_t e = 0; e < dst.numel(); ++e) dst[e] += inv * src[e];
                }
                epoch_loss += results[b].loss;
            }
            seen += count;

            optimizer.step(params, lr, schedule.weight_decay);
            if (soft_phase) {
                ema_update(teacher->params(), model.params(), schedule.ema_alpha);
            }
        }

        EpochRecord record;
        record.epoch = epoch;
        record.phase = soft_phase ? "soft" : "hard";
        record.mean_loss = epoch_loss / static_cast<double>(seen);
        record.lr = lr;
        result.log.push_back(record);
        last_good = model.params().clone();
    }

    if (teacher.has_value()) {
        result.teacher = teacher->params().clone();
    }
    return result;
}

} // namespace psg
