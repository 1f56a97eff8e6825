#include "psg/tokenizer.hpp"

#include "psg/errors.hpp"

#include <array>
#include <string>

namespace psg {

Array mask_gate(const Array& features, const Mask& mask) {
    if (features.ndim() != 3 || features.dim(0) != mask.height || features.dim(1) != mask.width) {
        throw ShapeError("mask_gate: feature map " + shape_str(features) + " vs mask " +
                         std::to_string(mask.height) + "x" + std::to_string(mask.width));
    }
    const std::size_t pixels = mask.height * mask.width;
    const std::size_t channels = features.dim(2);
    Array out(features.shape());
    for (std::size_t px = 0; px < pixels; ++px) {
        if (!mask.data[px]) continue;
        const double* src = &features.data()[px * channels];
        double* dst = &out.data()[px * channels];
        for (std::size_t c = 0; c < channels; ++c) dst[c] = src[c];
    }
    return out;
}

Array patchify(const Array& features, std::size_t patches) {
    if (features.ndim() != 3) {
        throw ShapeError("patchify: expected H x W x C, got " + shape_str(features));
    }
    const std::size_t pixels = features.dim(0) * features.dim(1);
    const std::size_t channels = features.dim(2);
    if (patches == 0 || pixels % patches != 0) {
        throw ConfigError("patchify: " + std::to_string(pixels) +
                          " pixels not divisible into " + std::to_string(patches) + " patches");
    }
    const std::size_t chunk = pixels / patches;
    Array out({patches, channels});
    for (std::size_t p = 0; p < patches; ++p) {
        double* token = &out.data()[p * channels];
        for (std::size_t k = 0; k < chunk; ++k) {
            const double* row = &features.data()[(p * chunk + k) * channels];
            for (std::size_t c = 0; c < channels; ++c) token[c] += row[c];
        }
        for (std::size_t c = 0; c < channels; ++c) token[c] /= static_cast<double>(chunk);
    }
    return out;
}

std::vector<Array> scene_patch_tokens(const Scene& scene, std::size_t patches) {
    std::vector<Array> out;
    out.reserve(scene.object_count());
    for (const Mask& m : scene.masks) out.push_back(patchify(mask_gate(scene.features, m), patches));
    return out;
}

Var tokenize_scene(Tape& tape, const Scene& scene, Var class_token, Var class_embedding,
                   std::size_t patches) {
    const Array& emb = tape.value(class_embedding);
    const Array& cls = tape.value(class_token);
    if (emb.ndim() != 2) throw ShapeError("tokenize_scene: class embedding must be 2-D");
    const std::size_t width = emb.dim(1);
    if (cls.numel() != width) {
        throw ShapeError("tokenize_scene: class token width " + std::to_string(cls.numel()) +
                         " vs embedding width " + std::to_string(width));
    }
    if (scene.channels() != width) {
        throw ConfigError("tokenize_scene: scene has " + std::to_string(scene.channels()) +
                          " channels but the model hidden size is " + std::to_string(width));
    }
    for (std::uint16_t label : scene.labels) {
        if (label >= emb.dim(0)) {
            throw ConfigError("tokenize_scene: object label " + std::to_string(label) +
                              " outside embedding table of " + std::to_string(emb.dim(0)) +
                              " classes");
        }
    }

    const std::size_t n = scene.object_count();
    const Var cls_row = tape.reshape(class_token, {1, width});
    std::vector<Var> blocks;
    blocks.reserve(n);
    std::vector<std::size_t> token_labels;
    token_labels.reserve(n * (patches + 1));
    for (std::size_t i = 0; i < n; ++i) {
        const Var patch_block =
            tape.constant(patchify(mask_gate(scene.features, scene.masks[i]), patches));
        const std::array<Var, 2> parts{cls_row, patch_block};
        blocks.push_back(tape.vstack(parts));
        for (std::size_t t = 0; t < patches + 1; ++t) token_labels.push_back(scene.labels[i]);
    }
    const Var stacked = tape.vstack(blocks);
    const Var per_token_embedding = tape.gather_rows(class_embedding, std::move(token_labels));
    return tape.add(stacked, per_token_embedding);
}

TokenGrid token_grid(const Scene& scene, const Array& class_token, const Array& class_embedding,
                     std::size_t patches) {
    Tape tape;
    Parameter cls("class_token", class_token);
    Parameter emb("class_embedding", class_embedding);
    const Var tokens = tokenize_scene(tape, scene, tape.param(cls), tape.param(emb), patches);
    TokenGrid grid;
    grid.objects = scene.object_count();
    grid.patches = patches;
    const Array& flat = tape.value(tokens);
    grid.tokens = Array({grid.objects, patches + 1, class_embedding.dim(1)},
                        std::vector<double>(flat.data().begin(), flat.data().end()));
    return grid;
}

} // namespace psg
