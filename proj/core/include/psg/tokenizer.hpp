#pragma once

#include "psg/scene.hpp"
#include "psg/tape.hpp"

namespace psg {

/// Token sequences for one scene: `tokens` is N x (L+1) x D with the class
/// token in slot 0 of each object row.
struct TokenGrid {
    Array tokens;
    std::size_t objects = 0;
    std::size_t patches = 0;
};

/// Zeroes the feature map outside the mask: out[h,w,:] = f[h,w,:] * m[h,w].
Array mask_gate(const Array& features, const Mask& mask);

/// Flattens an H x W x C map row-major into (H*W) x C, splits the pixel
/// sequence into L contiguous equal chunks and averages each chunk, giving an
/// L x C token matrix. H*W must be divisible by L (a construction-time
/// configuration error, never a runtime one).
Array patchify(const Array& features, std::size_t patches);

/// Per-object constant patch tokens for a scene (no learnable inputs), one
/// L x D block per object.
std::vector<Array> scene_patch_tokens(const Scene& scene, std::size_t patches);

/// Differentiable tokenization: per object, mask-gate + patchify (constants),
/// prepend the learnable class token, then add the object's class embedding
/// row to all L+1 tokens. Returns an (N*(L+1)) x D tape node.
Var tokenize_scene(Tape& tape, const Scene& scene, Var class_token, Var class_embedding,
                   std::size_t patches);

/// Non-differentiable convenience with the grid reshaped to N x (L+1) x D.
TokenGrid token_grid(const Scene& scene, const Array& class_token, const Array& class_embedding,
                     std::size_t patches);

} // namespace psg
