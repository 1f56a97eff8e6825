#include "psg/scene.hpp"

#include "psg/errors.hpp"

#include <cmath>
#include <set>
#include <string>

namespace psg {

bool Scene::operator==(const Scene& other) const {
    return id == other.id && features.shape() == other.features.shape() &&
           std::equal(features.data().begin(), features.data().end(),
                      other.features.data().begin(), other.features.data().end()) &&
           masks == other.masks && labels == other.labels && triplets == other.triplets &&
           hidden_triplets == other.hidden_triplets;
}

void validate_scene(const Scene& scene, std::size_t object_classes, std::size_t predicates) {
    const auto fail = [&](const std::string& what) {
        throw FormatError("scene '" + scene.id + "': " + what);
    };
    if (scene.features.ndim() != 3) fail("feature map must be H x W x C");
    const std::size_t h = scene.height(), w = scene.width();
    if (scene.masks.size() != scene.labels.size()) fail("mask/label count mismatch");
    if (scene.masks.empty()) fail("scene has no objects");

    std::vector<std::uint16_t> coverage(h * w, 0);
    for (std::size_t i = 0; i < scene.masks.size(); ++i) {
        const Mask& m = scene.masks[i];
        if (m.height != h || m.width != w) fail("mask " + std::to_string(i) + " shape mismatch");
        if (!m.binary()) fail("mask " + std::to_string(i) + " is not binary");
        if (m.empty_mask()) fail("mask " + std::to_string(i) + " is empty");
        for (std::size_t px = 0; px < m.data.size(); ++px) coverage[px] += m.data[px];
    }
    for (std::uint16_t c : coverage) {
        if (c > 1) fail("masks overlap");
    }
    for (std::uint16_t label : scene.labels) {
        if (label >= object_classes) fail("object label out of range");
    }

    std::set<Triplet> seen;
    const auto check_triplet = [&](const Triplet& t, const char* kind) {
        if (t.subject == t.object) fail(std::string(kind) + " relates an object to itself");
        if (t.subject >= scene.masks.size() || t.object >= scene.masks.size())
            fail(std::string(kind) + " index out of range");
        if (t.predicate >= predicates) fail(std::string(kind) + " predicate out of range");
    };
    for (const Triplet& t : scene.triplets) {
        check_triplet(t, "triplet");
        if (!seen.insert(t).second) fail("duplicate triplet");
    }
    for (const Triplet& t : scene.hidden_triplets) check_triplet(t, "hidden triplet");

    if (!scene.features.all_finite()) fail("feature map contains non-finite values");
}

void CorpusConfig::validate() const {
    if (height < 8 || width < 8) throw ConfigError("corpus: H and W must be at least 8");
    if (channels == 0) throw ConfigError("corpus: channels must be positive");
    if (min_objects < 2) throw ConfigError("corpus: at least 2 objects per scene required");
    if (max_objects < min_objects) throw ConfigError("corpus: empty object count range");
    if (object_classes < 2) throw ConfigError("corpus: need at least 2 object classes");
    if (predicates < 1) throw ConfigError("corpus: need at least 1 predicate");
    if (!predicate_weights.empty()) {
        if (predicate_weights.size() != predicates)
            throw ConfigError("corpus: predicate weight count mismatch");
        double total = 0.0;
        for (double w : predicate_weights) {
            if (!(w > 0.0)) throw ConfigError("corpus: predicate weights must be positive");
            total += w;
        }
        if (std::abs(total - 1.0) > 1e-9)
            throw ConfigError("corpus: predicate weights must sum to 1");
    }
    if (ambiguity_rate < 0.0 || ambiguity_rate > 1.0)
        throw ConfigError("corpus: ambiguity rate must be in [0, 1]");
    if (pair_density < 0.0 || pair_density > 1.0)
        throw ConfigError("corpus: pair density must be in [0, 1]");
    if (primary_share < 0.0 || primary_share > 1.0)
        throw ConfigError("corpus: primary share must be in [0, 1]");
    if (context_mode && min_objects < 3)
        throw ConfigError("corpus: context mode needs at least 3 objects per scene");
    if (context_mode && predicates < 2)
        throw ConfigError("corpus: context mode needs at least 2 predicates");
    if (patches == 0 || (height * width) % patches != 0)
        throw ConfigError("corpus: H*W (" + std::to_string(height * width) +
                          ") must be divisible by the patch count (" + std::to_string(patches) +
                          ")");
}

std::vector<double> zipf_weights(std::size_t count, double exponent) {
    std::vector<double> w(count);
    double total = 0.0;
    for (std::size_t i = 0; i < count; ++i) {
        w[i] = 1.0 / std::pow(static_cast<double>(i + 1), exponent);
        total += w[i];
    }
    for (double& v : w) v /= total;
    return w;
}

} // namespace psg
