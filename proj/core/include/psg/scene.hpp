#pragma once

#include "psg/array.hpp"
#include "psg/mask.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace psg {

/// Ordered subject-predicate-object relation between two objects of a scene.
struct Triplet {
    std::uint16_t subject = 0;
    std::uint16_t object = 0;
    std::uint16_t predicate = 0;

    bool operator==(const Triplet&) const = default;
    auto operator<=>(const Triplet&) const = default;
};

/// One panoptic scene as the segmentation stage would hand it over: a feature
/// map, per-object binary masks and class labels, and the annotated relation
/// triplets. Background segments are ordinary objects.
struct Scene {
    std::string id;
    Array features;                    // H x W x C
    std::vector<Mask> masks;           // n pairwise-disjoint, nonempty masks
    std::vector<std::uint16_t> labels; // n class ids
    std::vector<Triplet> triplets;     // annotated relations

    /// Relations that are valid in this scene but deliberately left
    /// unannotated by the labeling precedence rule. Generator metadata used by
    /// evaluation experiments, never shown to the model.
    std::vector<Triplet> hidden_triplets;

    std::size_t object_count() const { return masks.size(); }
    std::size_t height() const { return features.ndim() == 3 ? features.dim(0) : 0; }
    std::size_t width() const { return features.ndim() == 3 ? features.dim(1) : 0; }
    std::size_t channels() const { return features.ndim() == 3 ? features.dim(2) : 0; }

    bool operator==(const Scene&) const;
};

/// Throws FormatError when a scene violates its invariants: disjoint nonempty
/// binary masks, matching mask/label counts, triplet indices in range, no
/// duplicate (s, o, p), no self relations.
void validate_scene(const Scene& scene, std::size_t object_classes, std::size_t predicates);

/// Synthetic corpus parameters. `predicate_weights` is the long-tailed
/// frequency profile, positive and normalized to 1.
struct CorpusConfig {
    std::size_t num_scenes = 0;
    std::size_t height = 16;
    std::size_t width = 16;
    std::size_t channels = 32;
    std::size_t min_objects = 2;
    std::size_t max_objects = 5;
    std::size_t object_classes = 12;
    std::size_t predicates = 8;
    std::vector<double> predicate_weights;
    bool context_mode = false;
    double ambiguity_rate = 0.0;
    /// Fraction of ordered pairs that receive an annotation.
    double pair_density = 0.4;
    /// On ambiguous pairs: how often the dominant predicate applies (and the
    /// precise secondary goes unannotated).
    double primary_share = 0.7;
    double feature_noise = 0.25;
    /// Suggested patch count for downstream tokenization; H*W must divide by it.
    std::size_t patches = 4;
    std::uint64_t seed = 1;

    void validate() const;
};

/// w_p proportional to 1/(p+1)^exponent, normalized.
std::vector<double> zipf_weights(std::size_t count, double exponent);

} // namespace psg
