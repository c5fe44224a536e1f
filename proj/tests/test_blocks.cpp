#include <cmath>
#include <limits>

#include "doctest.h"

#include "caver/blocks.hpp"
#include "caver/ops.hpp"
#include "caver/rng.hpp"
#include "caver/tensor.hpp"
#include "oracles.hpp"

using caver::AttentionParams;
using caver::BnParams;
using caver::ConvFfnParams;
using caver::CrossAttentionBlockParams;
using caver::Rng;
using caver::SelfAttentionBlockParams;
using caver::Tensor;
using caver::TokenSequence;
namespace ops = caver::ops;

namespace {

AttentionParams random_attn(Rng& rng, std::size_t dim, std::size_t heads, std::size_t p) {
    AttentionParams a;
    a.dim = dim;
    a.n_heads = heads;
    a.patch_side = p;
    a.w_q = oracles::random_tensor(rng, {heads, dim, dim / heads});
    a.w_k = oracles::random_tensor(rng, {heads, dim, dim / heads});
    a.w_v = oracles::random_tensor(rng, {heads, dim, dim / heads});
    a.w_s = oracles::random_tensor(rng, {dim, dim});
    a.w_c = oracles::random_tensor(rng, {dim, dim});
    return a;
}

AttentionParams zero_attn(std::size_t dim, std::size_t heads, std::size_t p) {
    AttentionParams a;
    a.dim = dim;
    a.n_heads = heads;
    a.patch_side = p;
    a.w_q = Tensor({heads, dim, dim / heads});
    a.w_k = Tensor({heads, dim, dim / heads});
    a.w_v = Tensor({heads, dim, dim / heads});
    a.w_s = Tensor({dim, dim});
    a.w_c = Tensor({dim, dim});
    return a;
}

ConvFfnParams random_ffn(Rng& rng, std::size_t din, std::size_t dh, std::size_t dout) {
    ConvFfnParams f;
    f.conv3_kernel = oracles::random_tensor(rng, {dh, din, 3, 3});
    f.conv3_bias = oracles::random_tensor(rng, {dh});
    f.bn = BnParams::identity(dh);
    f.bn.mean = oracles::random_tensor(rng, {dh});
    f.bn.gamma = oracles::random_tensor(rng, {dh});
    f.bn.beta = oracles::random_tensor(rng, {dh});
    for (std::size_t i = 0; i < dh; ++i) f.bn.var(i) = std::abs(rng.normal()) + 0.2;
    f.conv1_kernel = oracles::random_tensor(rng, {dout, dh, 1, 1});
    f.conv1_bias = oracles::random_tensor(rng, {dout});
    return f;
}

ConvFfnParams zero_ffn(std::size_t din, std::size_t dh, std::size_t dout) {
    ConvFfnParams f;
    f.conv3_kernel = Tensor({dh, din, 3, 3});
    f.conv3_bias = Tensor({dh});
    f.bn = BnParams::identity(dh);
    f.conv1_kernel = Tensor({dout, dh, 1, 1});
    f.conv1_bias = Tensor({dout});
    return f;
}

TokenSequence random_tokens(Rng& rng, std::size_t h, std::size_t w, std::size_t dim) {
    return {oracles::random_tensor(rng, {h * w, dim}), h, w};
}

}  // namespace

TEST_CASE("conv_ffn zero path and composed identity") {
    Rng rng(61);
    const Tensor x = oracles::random_tensor(rng, {3, 3, 2});
    const ConvFfnParams zeros = zero_ffn(2, 2, 2);
    const Tensor out = caver::conv_ffn(x, zeros);
    for (std::size_t i = 0; i < out.size(); ++i) CHECK(out.data()[i] == 0.0);

    // 1-channel unit kernels centered, identity BN with eps -> 0: the
    // whole FFN reduces to relu
    ConvFfnParams id = zero_ffn(1, 1, 1);
    id.bn.eps = 1e-15;
    id.conv3_kernel(0, 0, 1, 1) = 1.0;
    id.conv1_kernel(0, 0, 0, 0) = 1.0;
    const Tensor img = oracles::random_tensor(rng, {4, 5, 1});
    const Tensor r = caver::conv_ffn(img, id);
    for (std::size_t i = 0; i < img.size(); ++i)
        CHECK(r.data()[i] ==
              doctest::Approx(img.data()[i] < 0.0 ? 0.0 : img.data()[i]).epsilon(1e-9));
}

TEST_CASE("conv_ffn equals the layer-by-layer oracle composition") {
    Rng rng(62);
    const Tensor x = oracles::random_tensor(rng, {4, 4, 3});
    const ConvFfnParams f = random_ffn(rng, 3, 5, 2);
    const Tensor got = caver::conv_ffn(x, f);

    Tensor step = oracles::conv2d(x, f.conv3_kernel, &f.conv3_bias);
    step = oracles::batch_norm(step, f.bn.mean, f.bn.var, f.bn.gamma, f.bn.beta, f.bn.eps);
    for (std::size_t i = 0; i < step.size(); ++i)
        step.data()[i] = step.data()[i] < 0.0 ? 0.0 : step.data()[i];
    step = oracles::conv2d(step, f.conv1_kernel, &f.conv1_bias);
    CHECK(oracles::max_abs_diff(got, step) < 1e-10);
}

TEST_CASE("conv_ffn validates extents") {
    Rng rng(63);
    const Tensor x = oracles::random_tensor(rng, {3, 3, 2});
    ConvFfnParams f = zero_ffn(4, 2, 2);  // expects 4 input channels
    CHECK_THROWS_AS(caver::conv_ffn(x, f), caver::Error);
}

TEST_CASE("self block collapses to the identity when branches are zero") {
    Rng rng(64);
    SelfAttentionBlockParams p;
    p.norm1 = BnParams::identity(4);
    p.norm2 = BnParams::identity(4);
    p.attn = zero_attn(4, 2, 2);
    p.ffn = zero_ffn(4, 4, 4);
    const TokenSequence x = random_tokens(rng, 2, 4, 4);
    CHECK(caver::self_attention_block(x, p).data.bit_equal(x.data));

    // alpha = beta = 0 kills the attention branch even with live weights
    SelfAttentionBlockParams q;
    q.norm1 = BnParams::identity(4);
    q.norm2 = BnParams::identity(4);
    q.attn = random_attn(rng, 4, 2, 2);
    q.attn.alpha = 0.0;
    q.attn.beta = 0.0;
    q.ffn = zero_ffn(4, 4, 4);
    CHECK(caver::self_attention_block(x, q).data.bit_equal(x.data));
}

TEST_CASE("self block rejects non-finite output at its boundary") {
    Rng rng(68);
    SelfAttentionBlockParams p;
    p.norm1 = BnParams::identity(4);
    p.norm2 = BnParams::identity(4);
    p.attn = random_attn(rng, 4, 2, 2);
    p.ffn = random_ffn(rng, 4, 4, 4);
    TokenSequence x = random_tokens(rng, 2, 4, 4);
    x.data(3, 1) = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_AS(caver::self_attention_block(x, p), caver::NumericError);
}

TEST_CASE("self block equals its compositional oracle") {
    Rng rng(65);
    const std::size_t dim = 8;
    SelfAttentionBlockParams p;
    p.norm1 = BnParams::identity(dim);
    p.norm1.mean = oracles::random_tensor(rng, {dim});
    p.norm1.gamma = oracles::random_tensor(rng, {dim});
    p.norm2 = BnParams::identity(dim);
    p.norm2.beta = oracles::random_tensor(rng, {dim});
    p.attn = random_attn(rng, dim, 2, 2);
    p.ffn = random_ffn(rng, dim, dim, dim);
    const TokenSequence x = random_tokens(rng, 4, 4, dim);

    const TokenSequence got = caver::self_attention_block(x, p);

    // assemble from the already-verified pieces
    const auto norm = [&](const Tensor& t, const BnParams& bn) {
        return oracles::batch_norm(t, bn.mean, bn.var, bn.gamma, bn.beta, bn.eps);
    };
    TokenSequence n1{norm(x.data, p.norm1), x.h, x.w};
    const Tensor vma = caver::view_mixed_attention(n1, n1, p.attn).data;
    Tensor x1({x.n_tokens(), dim});
    for (std::size_t i = 0; i < x1.size(); ++i) x1.data()[i] = vma.data()[i] + x.data.data()[i];
    const Tensor n2 = norm(x1, p.norm2);
    const Tensor ffn = caver::conv_ffn(n2.reshaped({x.h, x.w, dim}), p.ffn);
    Tensor want({x.n_tokens(), dim});
    for (std::size_t i = 0; i < want.size(); ++i)
        want.data()[i] = ffn.data()[i] + x1.data()[i];

    CHECK(oracles::max_abs_diff(got.data, want) < 1e-10);
}

TEST_CASE("batch norm commutes with the token flattening") {
    Rng rng(66);
    const std::size_t dim = 3;
    BnParams bn = BnParams::identity(dim);
    bn.mean = oracles::random_tensor(rng, {dim});
    bn.gamma = oracles::random_tensor(rng, {dim});
    const Tensor map = oracles::random_tensor(rng, {4, 5, dim});
    const Tensor normed_map =
        ops::batch_norm_infer(map, bn.mean, bn.var, bn.gamma, bn.beta, bn.eps);
    const Tensor flat = map.reshaped({20, dim});
    const Tensor normed_flat =
        ops::batch_norm_infer(flat, bn.mean, bn.var, bn.gamma, bn.beta, bn.eps);
    CHECK(normed_map.reshaped({20, dim}).bit_equal(normed_flat));
}

TEST_CASE("cross block zero weights give exactly zero") {
    Rng rng(67);
    const std::size_t dim = 4;
    CrossAttentionBlockParams p;
    p.norm_rgb = BnParams::identity(dim);
    p.norm_dt = BnParams::identity(dim);
    p.attn_rgb_query = zero_attn(dim, 2, 2);
    p.attn_dt_query = zero_attn(dim, 2, 2);
    p.norm_fused = BnParams::identity(2 * dim);
    p.ffn = zero_ffn(2 * dim, dim, dim);
    const TokenSequence rgb = random_tokens(rng, 2, 4, dim);
    const TokenSequence dt = random_tokens(rng, 2, 4, dim);
    const TokenSequence out = caver::cross_attention_block(rgb, dt, p);
    for (std::size_t i = 0; i < out.data.size(); ++i) CHECK(out.data.data()[i] == 0.0);
}

TEST_CASE("cross block symmetry when streams and parameters coincide") {
    Rng rng(68);
    const std::size_t dim = 4;
    CrossAttentionBlockParams p;
    p.norm_rgb = BnParams::identity(dim);
    p.norm_dt = BnParams::identity(dim);
    p.attn_rgb_query = random_attn(rng, dim, 2, 2);
    p.attn_dt_query = p.attn_rgb_query;
    p.norm_fused = BnParams::identity(2 * dim);
    p.ffn = random_ffn(rng, 2 * dim, dim, dim);
    const TokenSequence x = random_tokens(rng, 4, 2, dim);
    const TokenSequence out = caver::cross_attention_block(x, x, p);

    // both streams produce the same Z, so out = 2 Z + ConvFFN(Norm(concat(Z, Z)))
    TokenSequence n{ops::batch_norm_infer(x.data, p.norm_rgb.mean, p.norm_rgb.var,
                                          p.norm_rgb.gamma, p.norm_rgb.beta, p.norm_rgb.eps),
                    x.h, x.w};
    const Tensor z = caver::view_mixed_attention(n, n, p.attn_rgb_query).data;
    const Tensor cat = ops::concat_cols(z, z);
    const Tensor fused_in = ops::batch_norm_infer(cat, p.norm_fused.mean, p.norm_fused.var,
                                                  p.norm_fused.gamma, p.norm_fused.beta,
                                                  p.norm_fused.eps);
    const Tensor fused = caver::conv_ffn(fused_in.reshaped({x.h, x.w, 2 * dim}), p.ffn);
    for (std::size_t i = 0; i < out.data.size(); ++i)
        CHECK(out.data.data()[i] ==
              doctest::Approx(2.0 * z.data()[i] +
                              fused.data()[i]).epsilon(1e-12));
}

TEST_CASE("cross block modality swap symmetry") {
    Rng rng(69);
    const std::size_t dim = 4;
    CrossAttentionBlockParams p;
    p.norm_rgb = BnParams::identity(dim);
    p.norm_dt = BnParams::identity(dim);
    p.attn_rgb_query = random_attn(rng, dim, 2, 2);
    p.attn_dt_query = random_attn(rng, dim, 2, 2);
    p.norm_fused = BnParams::identity(2 * dim);
    // a symmetric fused BN and FFN so only the concat order matters
    p.ffn = random_ffn(rng, 2 * dim, dim, dim);
    const TokenSequence rgb = random_tokens(rng, 2, 4, dim);
    const TokenSequence dt = random_tokens(rng, 2, 4, dim);

    const TokenSequence ab = caver::cross_attention_block(rgb, dt, p);

    CrossAttentionBlockParams swapped = p;
    std::swap(swapped.attn_rgb_query, swapped.attn_dt_query);
    std::swap(swapped.norm_rgb, swapped.norm_dt);
    // swapping the streams swaps the concat halves; mirror the fused
    // weights so the FFN sees the same function
    for (std::size_t o = 0; o < dim; ++o)
        for (std::size_t c = 0; c < dim; ++c)
            for (std::size_t ky = 0; ky < 3; ++ky)
                for (std::size_t kx = 0; kx < 3; ++kx) {
                    swapped.ffn.conv3_kernel(o, c, ky, kx) = p.ffn.conv3_kernel(o, c + dim, ky, kx);
                    swapped.ffn.conv3_kernel(o, c + dim, ky, kx) = p.ffn.conv3_kernel(o, c, ky, kx);
                }
    const TokenSequence ba = caver::cross_attention_block(dt, rgb, swapped);
    CHECK(oracles::max_abs_diff(ab.data, ba.data) < 1e-12);
}

TEST_CASE("blocks preserve the token shape at all pyramid geometries") {
    Rng rng(70);
    const std::size_t dim = 8;
    SelfAttentionBlockParams p;
    p.norm1 = BnParams::identity(dim);
    p.norm2 = BnParams::identity(dim);
    p.attn = random_attn(rng, dim, 2, 2);
    p.ffn = random_ffn(rng, dim, dim, dim);
    for (const std::size_t side : {16ul, 8ul, 4ul, 2ul}) {
        const TokenSequence x = random_tokens(rng, side, side, dim);
        const TokenSequence out = caver::self_attention_block(x, p);
        CHECK(out.data.extent(0) == side * side);
        CHECK(out.data.extent(1) == dim);
        CHECK(out.h == side);
        CHECK(out.w == side);
    }
}

TEST_CASE("cross block rejects stream shape disagreement") {
    Rng rng(71);
    const std::size_t dim = 4;
    CrossAttentionBlockParams p;
    p.norm_rgb = BnParams::identity(dim);
    p.norm_dt = BnParams::identity(dim);
    p.attn_rgb_query = zero_attn(dim, 1, 1);
    p.attn_dt_query = zero_attn(dim, 1, 1);
    p.norm_fused = BnParams::identity(2 * dim);
    p.ffn = zero_ffn(2 * dim, dim, dim);
    const TokenSequence rgb = random_tokens(rng, 2, 2, dim);
    const TokenSequence dt = random_tokens(rng, 4, 2, dim);
    CHECK_THROWS_AS(caver::cross_attention_block(rgb, dt, p), caver::ShapeError);
}
