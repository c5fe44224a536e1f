#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "caver/blocks.hpp"
#include "caver/rng.hpp"
#include "caver/tensor.hpp"

// The top-down decoder: four cascaded cross-modal integration units
// (CMIUs), each fusing the two modality streams at one pyramid level and
// absorbing the upsampled output of the coarser level, followed by a
// saliency predictor head.

namespace caver {

struct LevelGeometry {
    std::size_t h = 0, w = 0, c = 0;  // feature extents and channel count
};

struct TippConfig {
    std::size_t dim = 64;
    std::size_t n_heads = 2;
    // Level 1 is the finest (quarter of the input image); each deeper
    // level halves the spatial extents.
    std::array<LevelGeometry, 4> levels = {
        LevelGeometry{64, 64, 256}, LevelGeometry{32, 32, 512}, LevelGeometry{16, 16, 1024},
        LevelGeometry{8, 8, 2048}};
    std::array<std::size_t, 4> patch = {8, 8, 8, 8};
    std::size_t predictor_hidden = 32;
    double bn_eps = 1e-5;
    std::uint64_t seed = 42;

    std::size_t input_h() const { return levels[0].h * 4; }
    std::size_t input_w() const { return levels[0].w * 4; }
    void validate() const;
};

// One decoder stage: per-modality embedding and self-attention, one
// cross-attention exchange, then self-attention over the scale-fused map.
struct CmiuParams {
    Tensor embed_rgb_kernel, embed_rgb_bias;  // [D][C_i][1][1], [D]
    Tensor embed_dt_kernel, embed_dt_bias;
    SelfAttentionBlockParams imsa_rgb, imsa_dt;
    CrossAttentionBlockParams imca;
    SelfAttentionBlockParams cssa;
};

struct TippWeights {
    std::array<CmiuParams, 4> cmiu;
    ConvFfnParams predictor;  // D -> hidden -> 1, sigmoid applied after
};

struct SaliencyMap {
    Tensor values;  // [H][W][1], every value strictly inside (0, 1)

    static SaliencyMap checked(Tensor values);
};

struct FeaturePair {
    Tensor rgb, dt;  // [H_i][W_i][C_i]
};
using FeaturePyramid = std::array<FeaturePair, 4>;

// Weight enumeration.  Every parameter is visited exactly once, in a
// fixed order, so initialization, loading, and saving stay in lockstep.
enum class WeightKind { learned, bn_mean, bn_var, bn_gamma, bn_beta, mix_coef };

struct WeightRef {
    std::string name;  // dotted path, e.g. "cmiu1.imsa_rgb.attn.wq"
    Tensor* tensor = nullptr;  // set for tensor parameters
    double* scalar = nullptr;  // set for the mixing coefficients
    WeightKind kind = WeightKind::learned;
    std::size_t fan_in = 0;  // input width of the layer, for learned tensors
};

// Correctly-shaped weight set: batch norms are identity, mixing
// coefficients 0.5, learned tensors zero.
TippWeights make_weights(const TippConfig& config);

void for_each_weight(TippWeights& w, const std::function<void(const WeightRef&)>& fn);

// Learned tensors drawn from uniform(-s, s) with s = 1/sqrt(fan_in),
// batch norms identity, mixing coefficients 0.5.  Consumption order is
// the for_each_weight order, so equal seeds give equal weights.
TippWeights init_weights(const TippConfig& config, Rng& rng);
TippWeights init_weights(const TippConfig& config);  // seeds from config.seed

// One CAVR file per parameter ("<name>.cavr") plus a manifest.txt of
// "name = extents" lines.  Loading checks presence and extents against
// the config and reports the offending tensor by name.
void save_weights(TippWeights& w, const std::filesystem::path& dir);
TippWeights load_weights(const TippConfig& config, const std::filesystem::path& dir);

// Standard-normal feature pyramid for the given geometry.
FeaturePyramid synthetic_features(const TippConfig& config, std::uint64_t seed);

// One stage.  f_prev, when present, is the coarser stage's output at half
// the spatial extents; level_index is 0-based (level 1 = finest).
Tensor cmiu_forward(const Tensor& f_rgb, const Tensor& f_dt, const Tensor* f_prev,
                    const CmiuParams& params, const TippConfig& config, std::size_t level_index,
                    std::vector<std::string>* shape_trace = nullptr);

// Full decoder: CMIU4 down to CMIU1, then upsample x4, the predictor FFN,
// and a sigmoid.  Output extent equals the input-image extent.
SaliencyMap tipp_forward(const FeaturePyramid& features, const TippConfig& config,
                         const TippWeights& weights,
                         std::vector<std::string>* shape_trace = nullptr);

}  // namespace caver
