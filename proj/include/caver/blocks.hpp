#pragma once

#include <cstddef>
#include <string>

#include "caver/attention.hpp"
#include "caver/ptre.hpp"
#include "caver/tensor.hpp"

// Residual pre-norm transformer blocks over token sequences, with batch
// norm as the normalizer and a convolutional feed-forward network.

namespace caver {

// Inference-mode batch norm parameters over C channels.
struct BnParams {
    Tensor mean, var, gamma, beta;  // each [C]
    double eps = 1e-5;

    static BnParams identity(std::size_t channels, double eps = 1e-5);
    std::size_t channels() const { return mean.extent(0); }
};

// 3x3 conv -> batch norm -> relu -> 1x1 conv, spatial extents preserved.
struct ConvFfnParams {
    Tensor conv3_kernel, conv3_bias;  // [Dh][Din][3][3], [Dh]
    BnParams bn;                      // over Dh
    Tensor conv1_kernel, conv1_bias;  // [Dout][Dh][1][1], [Dout]

    std::size_t d_in() const { return conv3_kernel.extent(1); }
    std::size_t d_hidden() const { return conv3_kernel.extent(0); }
    std::size_t d_out() const { return conv1_kernel.extent(0); }
    void validate() const;
};

struct SelfAttentionBlockParams {
    BnParams norm1, norm2;  // over D
    AttentionParams attn;
    ConvFfnParams ffn;  // Din = Dout = D
};

struct CrossAttentionBlockParams {
    BnParams norm_rgb, norm_dt;  // over D, one per stream
    AttentionParams attn_rgb_query, attn_dt_query;
    BnParams norm_fused;  // over 2D (concatenated streams)
    ConvFfnParams ffn;    // Din = 2D, Dout = D
};

Tensor conv_ffn(const Tensor& map, const ConvFfnParams& params);

// x1 = VMA(Norm1(x), Norm1(x)) + x; out = ConvFFN(Norm2(x1)) + x1.
// `site` names this block's attention for probing (empty = unprobed).
TokenSequence self_attention_block(const TokenSequence& x, const SelfAttentionBlockParams& params,
                                   const std::string& site = {});

// Two view-mixed cross-attention streams with swapped query sources, plus
// a fused FFN over their channel concatenation:
//   Z_rgb = VMA(Norm(f_rgb), Norm(f_dt));  Z_dt = VMA(Norm(f_dt), Norm(f_rgb));
//   out = Z_rgb + Z_dt + ConvFFN(NormFused(concat(Z_rgb, Z_dt))).
// Attention sites are site + ".rgb_query" and site + ".dt_query".
TokenSequence cross_attention_block(const TokenSequence& f_rgb, const TokenSequence& f_dt,
                                    const CrossAttentionBlockParams& params,
                                    const std::string& site = {});

}  // namespace caver
