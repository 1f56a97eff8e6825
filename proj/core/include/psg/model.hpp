#pragma once

#include "psg/scene.hpp"
#include "psg/tape.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace psg {

enum class ModelKind {
    /// Transformer over all objects' tokens: any object can influence any
    /// pair's predicate scores.
    global,
    /// Ablation foil: per-object pooling only, no cross-object information
    /// flow before the relation head.
    pairwise,
};

std::string to_string(ModelKind kind);
ModelKind model_kind_from_string(const std::string& name);

struct ModelConfig {
    ModelKind kind = ModelKind::global;
    std::size_t hidden = 32;        // D; equals the scene channel count, no input projection
    std::size_t patches = 4;        // L
    std::size_t layers = 2;         // E encoder layers
    std::size_t heads = 4;          // A attention heads in the encoder
    std::size_t key_dim = 16;       // d_k of the relation head
    std::size_t predicates = 8;     // P; the relation head has exactly P heads
    std::size_t object_classes = 12;
    std::size_t ffn_hidden = 128;

    void validate() const;
};

/// Raw pre-sigmoid scores for every ordered pair and predicate, shape N x N x P.
/// The diagonal (self pairs) is excluded from losses and ranking.
struct RelationLogits {
    Array scores;

    std::size_t objects() const { return scores.ndim() == 3 ? scores.dim(0) : 0; }
    std::size_t predicates() const { return scores.ndim() == 3 ? scores.dim(2) : 0; }
};

/// One ranked prediction: subject/object refer to scene mask indices, labels
/// are the classes attached to those masks.
struct RankedTriplet {
    std::uint16_t subject = 0;
    std::uint16_t object = 0;
    std::uint16_t predicate = 0;
    double score = 0.0;
    std::uint16_t subject_label = 0;
    std::uint16_t object_label = 0;
};

/// The relation predictor: mask-gated tokenization, optional global-context
/// transformer, and a predicate-per-head attention-score readout.
class RelationModel {
public:
    RelationModel(ModelConfig config, std::uint64_t seed);

    const ModelConfig& config() const { return config_; }
    ParamStore& params() { return params_; }
    const ParamStore& params() const { return params_; }

    /// Context-enhanced object embeddings, shape {N, D}. The global model
    /// flattens all N*(L+1) tokens into one sequence, runs the encoder stack
    /// with full attention, regroups by object and average-pools; the pairwise
    /// model pools each object's own tokens directly.
    Var object_embeddings(Tape& tape, const Scene& scene);

    /// Predicate logit planes, one {N, N} tape node per predicate:
    /// logit[i,j,p] = (Q_p e_i) . (K_p e_j) / sqrt(d_k) + b_p.
    std::vector<Var> relation_logit_planes(Tape& tape, Var embeddings);

    /// Forward pass without gradient tracking.
    RelationLogits relation_logits(const Scene& scene);

    RelationModel clone() const;

private:
    Var encoder_layer(Tape& tape, Var x, std::size_t layer);

    ModelConfig config_;
    ParamStore params_;
};

/// Sigmoid-scores all off-diagonal (i, j, p) entries, ranks by score
/// descending with deterministic (i, j, p) ascending tie-break, and returns
/// the top k with the objects' labels attached.
std::vector<RankedTriplet> predict_triplets(const RelationLogits& logits, const Scene& scene,
                                            std::size_t k);

} // namespace psg
