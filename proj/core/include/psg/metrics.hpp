#pragma once

#include "psg/model.hpp"
#include "psg/scene.hpp"

#include <map>
#include <string>
#include <vector>

namespace psg {

/// Intersection over union of two equally sized binary masks.
double mask_iou(const Mask& a, const Mask& b);

/// One ground-truth triplet's matching outcome for a scene.
struct MatchRecord {
    Triplet gt;
    bool matched = false;
    std::size_t rank = 0; // 1-based rank of the matching prediction
};

/// Greedy rank-order matching: walk predictions up to rank k; a prediction
/// matches a GT triplet iff subject class, object class and predicate agree
/// and both mask IoUs exceed 0.5 (strictly). Each GT is matched at most once
/// and each prediction consumes at most one GT (first compatible by GT index).
std::vector<MatchRecord> match_triplets(const std::vector<RankedTriplet>& preds,
                                        const Scene& gt, std::size_t k);

/// Total matched / total GT over all records; throws ConfigError when there
/// are no GT triplets at all.
double recall_at_k(const std::vector<MatchRecord>& records, std::size_t k);

/// Unweighted mean of per-predicate recalls over predicates with at least one
/// GT instance.
double mean_recall_at_k(const std::vector<MatchRecord>& records, std::size_t k);

struct Segment {
    Mask mask;
    std::uint16_t label = 0;
};

struct PqResult {
    double pq = 0.0;
    double sq = 0.0;
    double rq = 0.0;
    std::size_t tp = 0;
    std::size_t fp = 0;
    std::size_t fn = 0;
    double iou_sum = 0.0;
};

/// Panoptic quality over one set of predicted and ground-truth segments:
/// same-class pairs with IoU > 0.5 match (such a matching is unique),
/// PQ = sum(matched IoU) / (TP + FP/2 + FN/2), SQ = mean matched IoU,
/// RQ = TP / (TP + FP/2 + FN/2). Overlapping segments on either side are an
/// input error.
PqResult panoptic_quality(const std::vector<Segment>& pred, const std::vector<Segment>& gt);

/// Aggregates two partial PQ tallies (for corpus-wide pooling).
PqResult merge_pq(const PqResult& a, const PqResult& b);

struct PredicateStats {
    std::size_t gt_count = 0;
    std::size_t matched = 0;
    double recall = 0.0;
};

struct MetricsReport {
    std::vector<std::size_t> ks;
    /// Per-GT matched rank or miss, pooled over the corpus in scene order.
    /// In-memory diagnostics only; not part of the report file schema.
    std::vector<MatchRecord> diagnostics;
    std::map<std::size_t, double> recall;      // R@K
    std::map<std::size_t, double> mean_recall; // mR@K
    std::map<std::uint16_t, PredicateStats> per_predicate; // at max K
    double pq = 0.0;
    double sq = 0.0;
    double rq = 0.0;
    std::string corpus_id;
    std::string checkpoint_id;

    std::string to_json() const;
    static MetricsReport from_json(const std::string& text);
};

/// Full SGDet-style evaluation: the model predicts from the scenes'
/// ground-truth masks and labels, triplets are ranked to max(ks) and matched
/// per scene, recalls are pooled corpus-wide, and PQ is computed over the
/// predicted segments. Deterministic; scenes may be evaluated in parallel.
MetricsReport evaluate(const std::vector<Scene>& corpus, RelationModel& model,
                       std::vector<std::size_t> ks, std::size_t threads = 1);

/// Plumbing sanity mode: emits the GT triplets themselves as predictions.
MetricsReport evaluate_oracle(const std::vector<Scene>& corpus, std::vector<std::size_t> ks,
                              std::size_t threads = 1);

} // namespace psg
