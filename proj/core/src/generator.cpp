#include "psg/generator.hpp"

#include "psg/errors.hpp"
#include "psg/rng.hpp"
#include "psg/threads.hpp"

#include <algorithm>
#include <cstdio>
#include <mutex>
#include <string>

namespace psg {

namespace {

constexpr std::uint64_t kRuleStream = 0x52554c45;      // label-rule tables
constexpr std::uint64_t kSignatureStream = 0x53494740; // class signatures
constexpr std::uint64_t kSceneStream = 0x5343454e;     // per-scene draws

std::vector<double> effective_weights(const CorpusConfig& config) {
    if (!config.predicate_weights.empty()) return config.predicate_weights;
    return zipf_weights(config.predicates, 1.2);
}

} // namespace

LabelRule::LabelRule(const CorpusConfig& config) : classes_(config.object_classes) {
    const std::vector<double> weights = effective_weights(config);
    std::vector<double> tail_weights(weights.rbegin(), weights.rend());

    Rng rng(Rng::mix(config.seed, kRuleStream));
    const std::size_t cells = classes_ * classes_;
    primary_.resize(cells);
    context_alt_.resize(cells);
    ambiguous_.resize(cells);
    secondary_.resize(cells);
    for (std::size_t c = 0; c < cells; ++c) {
        primary_[c] = static_cast<std::uint16_t>(rng.weighted_index(weights));
        // Context alternative must actually differ so the context split is decisive.
        std::uint16_t alt = primary_[c];
        while (config.predicates > 1 && alt == primary_[c]) {
            alt = static_cast<std::uint16_t>(rng.weighted_index(weights));
        }
        context_alt_[c] = alt;
        ambiguous_[c] = rng.bernoulli(config.ambiguity_rate) ? 1 : 0;
        // Valid-but-unannotated alternatives sit in the tail of the profile.
        std::uint16_t sec = primary_[c];
        while (config.predicates > 1 && sec == primary_[c]) {
            sec = static_cast<std::uint16_t>(rng.weighted_index(tail_weights));
        }
        secondary_[c] = sec;
    }
}

std::size_t LabelRule::cell(std::uint16_t cs, std::uint16_t co) const {
    return static_cast<std::size_t>(cs) * classes_ + co;
}

std::uint16_t LabelRule::primary(std::uint16_t cs, std::uint16_t co) const {
    return primary_[cell(cs, co)];
}
std::uint16_t LabelRule::context_alt(std::uint16_t cs, std::uint16_t co) const {
    return context_alt_[cell(cs, co)];
}
bool LabelRule::ambiguous(std::uint16_t cs, std::uint16_t co) const {
    return ambiguous_[cell(cs, co)] != 0;
}
std::uint16_t LabelRule::secondary(std::uint16_t cs, std::uint16_t co) const {
    return secondary_[cell(cs, co)];
}

std::vector<double> class_signature(const CorpusConfig& config, std::uint16_t cls) {
    Rng rng(Rng::mix(config.seed, kSignatureStream + cls));
    std::vector<double> sig(config.channels);
    for (double& v : sig) v = rng.normal();
    return sig;
}

namespace {

struct Placement {
    std::size_t r0, c0, h, w;
};

// Rejection-sampled axis-aligned rectangles over an occupancy grid.
std::vector<Placement> place_objects(const CorpusConfig& config, std::size_t n, Rng& rng) {
    const std::size_t H = config.height, W = config.width;
    std::vector<std::uint8_t> occupied(H * W, 0);
    std::vector<Placement> out;
    const std::size_t hmax = std::max<std::size_t>(2, H / 3);
    const std::size_t wmax = std::max<std::size_t>(2, W / 3);
    for (std::size_t k = 0; k < n; ++k) {
        bool placed = false;
        for (int attempt = 0; attempt < 64 && !placed; ++attempt) {
            const std::size_t h = 2 + rng.index(hmax - 1);
            const std::size_t w = 2 + rng.index(wmax - 1);
            const std::size_t r0 = rng.index(H - h + 1);
            const std::size_t c0 = rng.index(W - w + 1);
            bool free = true;
            for (std::size_t r = r0; r < r0 + h && free; ++r)
                for (std::size_t c = c0; c < c0 + w; ++c)
                    if (occupied[r * W + c]) {
                        free = false;
                        break;
                    }
            if (!free) continue;
            for (std::size_t r = r0; r < r0 + h; ++r)
                for (std::size_t c = c0; c < c0 + w; ++c) occupied[r * W + c] = 1;
            out.push_back({r0, c0, h, w});
            placed = true;
        }
        if (!placed) {
            throw GenerationError("cannot place object " + std::to_string(k + 1) + " of " +
                                  std::to_string(n) + " in a " + std::to_string(H) + "x" +
                                  std::to_string(W) + " scene");
        }
    }
    return out;
}

} // namespace

Scene generate_scene(const CorpusConfig& config, std::size_t index) {
    config.validate();
    const LabelRule rule(config);
    Rng rng(Rng::mix(config.seed, kSceneStream + index));

    Scene scene;
    char idbuf[32];
    std::snprintf(idbuf, sizeof idbuf, "scene-%06zu", index);
    scene.id = idbuf;

    const std::size_t span = config.max_objects - config.min_objects + 1;
    const std::size_t n = config.min_objects + rng.index(span);

    const std::vector<Placement> placements = place_objects(config, n, rng);
    const std::size_t H = config.height, W = config.width, C = config.channels;

    scene.masks.reserve(n);
    scene.labels.reserve(n);
    for (std::size_t k = 0; k < n; ++k) {
        Mask m(H, W);
        const Placement& p = placements[k];
        for (std::size_t r = p.r0; r < p.r0 + p.h; ++r)
            for (std::size_t c = p.c0; c < p.c0 + p.w; ++c) m.at(r, c) = 1;
        scene.masks.push_back(std::move(m));
        scene.labels.push_back(static_cast<std::uint16_t>(rng.index(config.object_classes)));
    }

    // Feature map: class signature inside each mask, noise everywhere.
    std::vector<std::vector<double>> sigs(config.object_classes);
    for (std::uint16_t c = 0; c < config.object_classes; ++c) sigs[c] = class_signature(config, c);
    std::vector<int> owner(H * W, -1);
    for (std::size_t k = 0; k < n; ++k)
        for (std::size_t px = 0; px < H * W; ++px)
            if (scene.masks[k].data[px]) owner[px] = static_cast<int>(k);

    scene.features = Array({H, W, C});
    for (std::size_t px = 0; px < H * W; ++px) {
        double* f = &scene.features.data()[px * C];
        const int o = owner[px];
        for (std::size_t ch = 0; ch < C; ++ch) {
            const double base = (o >= 0) ? sigs[scene.labels[o]][ch] : 0.0;
            f[ch] = base + config.feature_noise * rng.normal();
        }
    }

    // Relations.
    if (config.context_mode) {
        const std::size_t s = rng.index(n);
        std::size_t o = rng.index(n - 1);
        if (o >= s) ++o;
        std::size_t ctx = 0;
        while (ctx == s || ctx == o) ++ctx;
        const std::uint16_t pred =
            rule.context_predicate(scene.labels[s], scene.labels[o], scene.labels[ctx]);
        scene.triplets.push_back({static_cast<std::uint16_t>(s), static_cast<std::uint16_t>(o),
                                  pred});
    } else {
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < n; ++j) {
                if (i == j) continue;
                if (!rng.bernoulli(config.pair_density)) continue;
                const std::uint16_t cs = scene.labels[i], co = scene.labels[j];
                const auto si = static_cast<std::uint16_t>(i);
                const auto sj = static_cast<std::uint16_t>(j);
                if (rule.ambiguous(cs, co)) {
                    if (rng.bernoulli(config.primary_share)) {
                        scene.triplets.push_back({si, sj, rule.primary(cs, co)});
                        scene.hidden_triplets.push_back({si, sj, rule.secondary(cs, co)});
                    } else {
                        // Only the precise relation applies in this instance.
                        scene.triplets.push_back({si, sj, rule.secondary(cs, co)});
                    }
                } else {
                    scene.triplets.push_back({si, sj, rule.primary(cs, co)});
                }
            }
        }
    }

    validate_scene(scene, config.object_classes, config.predicates);
    return scene;
}

std::vector<Scene> generate_corpus(const CorpusConfig& config, std::size_t threads) {
    config.validate();
    std::vector<Scene> scenes(config.num_scenes);
    std::exception_ptr failure;
    std::mutex failure_mutex;
    parallel_for(config.num_scenes, threads, [&](std::size_t i) {
        try {
            scenes[i] = generate_scene(config, i);
        } catch (...) {
            std::lock_guard<std::mutex> lock(failure_mutex);
            if (!failure) failure = std::current_exception();
        }
    });
    if (failure) std::rethrow_exception(failure);
    return scenes;
}

} // namespace psg
