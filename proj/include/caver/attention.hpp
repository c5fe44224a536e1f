#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "caver/ptre.hpp"
#include "caver/tensor.hpp"

// View-mixed attention: a spatial branch (token-to-token similarity,
// computed on patch tokens) and a channel branch (channel-to-channel
// similarity, computed on pixel tokens), run per head and blended as
// alpha*Z_s + beta*Z_c.

namespace caver {

struct AttentionParams {
    std::size_t dim = 64;      // D, the embedding width
    std::size_t n_heads = 2;   // N_h; D must divide evenly
    std::size_t patch_side = 8;
    // Per-head projections, head-major: [N_h][D][D/N_h].
    Tensor w_q, w_k, w_v;
    // Output projections applied to the concatenated heads of each branch.
    Tensor w_s, w_c;  // [D][D]
    double alpha = 0.5;  // spatial-branch mixing weight
    double beta = 0.5;   // channel-branch mixing weight

    std::size_t head_dim() const { return dim / n_heads; }
    void validate() const;
};

// One head's projected inputs.  The spatial branch scales logits by
// 1/sqrt(token width); the channel branch scales by 1/sqrt(N).
struct HeadState {
    Tensor q, k, v;  // each [N][D/N_h]
    double scale_spatial = 1.0;
    double scale_channel = 1.0;
};

// Q from x_q, K and V from x_kv.  Self-attention passes the same sequence
// twice; cross-attention swaps sources between the two streams.
std::vector<HeadState> project_heads(const TokenSequence& x_q, const TokenSequence& x_kv,
                                     const AttentionParams& params);

// Softmax(Q K^T * scale) V over pixel tokens.  attn_out, when given,
// receives the post-softmax matrix.
Tensor spatial_head_attention(const HeadState& h, Tensor* attn_out = nullptr);

// Transposed-view attention: Softmax(Q^T K * scale) V^T, transposed back
// to [N][D/N_h].  The similarity matrix is (D/N_h) x (D/N_h).
Tensor channel_head_attention(const HeadState& h, Tensor* attn_out = nullptr);

// Spatial attention after folding Q, K, V into patch tokens over the
// h_src x w_src grid; logits scale with the patch-token width,
// 1/sqrt((D/N_h) * p^2).  p = 1 reduces to spatial_head_attention
// bit-for-bit.
Tensor patchwise_spatial_head_attention(const HeadState& h, std::size_t p, std::size_t h_src,
                                        std::size_t w_src, Tensor* attn_out = nullptr);

// Both branch outputs before mixing, already through their output
// projections.
struct VmaBranches {
    Tensor z_s, z_c;  // each [N][D]
};

// Post-softmax similarity matrices captured by an AttentionProbe.
struct AttentionMaps {
    std::vector<Tensor> spatial;  // per head: [N/p^2][N/p^2]
    std::vector<Tensor> channel;  // per head: [D/N_h][D/N_h]
};

// Captures the similarity matrices of one named attention site on the
// current thread.  Sites are dotted names like "cmiu2.imca.rgb_query";
// passing the empty site to an attention call leaves it unprobed.
class AttentionProbe {
  public:
    explicit AttentionProbe(std::string site);
    ~AttentionProbe();
    AttentionProbe(const AttentionProbe&) = delete;
    AttentionProbe& operator=(const AttentionProbe&) = delete;

    const std::string& site() const { return site_; }
    bool hit() const { return hit_; }
    const AttentionMaps& maps() const { return maps_; }

    static AttentionProbe* current();
    void record(AttentionMaps maps);

  private:
    std::string site_;
    AttentionMaps maps_;
    bool hit_ = false;
    AttentionProbe* prev_;
};

VmaBranches view_mixed_attention_branches(const TokenSequence& x_q, const TokenSequence& x_kv,
                                          const AttentionParams& params,
                                          const std::string& site = {});

// alpha*Z_s + beta*Z_c with the grid metadata of x_q.
TokenSequence view_mixed_attention(const TokenSequence& x_q, const TokenSequence& x_kv,
                                   const AttentionParams& params, const std::string& site = {});

namespace testing {

// Verification-harness hook: while enabled, the spatial branch multiplies
// its logits by the scale factor instead of dividing, a deliberately wrong
// result that oracle checks must catch.  Never enable outside tests.
void set_spatial_scale_fault(bool on);
bool spatial_scale_fault();

}  // namespace testing

}  // namespace caver
