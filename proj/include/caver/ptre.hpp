#pragma once

#include <cstddef>

#include "caver/tensor.hpp"

// Patch-wise token re-embedding: parameter-free, invertible reshaping
// between pixel tokens and patch tokens.  A feature map [H][W][d] flattens
// to H*W pixel tokens of width d in raster order; grouping non-overlapping
// p x p windows folds those into (H/p)*(W/p) patch tokens of width d*p^2.

namespace caver {

// Token matrix plus the grid it was flattened from, so it can be
// re-folded without carrying the 2D form around.
struct TokenSequence {
    Tensor data;  // [n_tokens][dim]
    std::size_t h = 0;
    std::size_t w = 0;

    std::size_t n_tokens() const { return data.extent(0); }
    std::size_t dim() const { return data.extent(1); }
};

struct PatchTokenSequence {
    Tensor data;  // [n_patches][channels * patch_side^2]
    std::size_t patch_side = 1;
    std::size_t origin_h = 0;
    std::size_t origin_w = 0;
    std::size_t channels = 0;

    std::size_t n_patches() const { return data.extent(0); }
    std::size_t dim() const { return data.extent(1); }
};

// Raster-order flattening of [H][W][d] and its inverse.
TokenSequence flatten(const Tensor& map);
Tensor unflatten(const TokenSequence& seq);

// Folds p x p windows into patch tokens.  Within a token, values are laid
// out pixel-raster-major and channel-minor: position (py*p + px)*d + c
// holds channel c of the window pixel (py, px).  Extents must divide by p.
PatchTokenSequence to_patch_tokens(const Tensor& map, std::size_t p);

// Exact inverse of to_patch_tokens.
Tensor from_patch_tokens(const PatchTokenSequence& seq);

}  // namespace caver
