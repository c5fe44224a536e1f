#include "caver/blocks.hpp"

#include "caver/errors.hpp"
#include "caver/ops.hpp"
#include "caver/trace.hpp"

namespace caver {

BnParams BnParams::identity(std::size_t channels, double eps) {
    BnParams p;
    p.mean = Tensor({channels});
    p.var = Tensor({channels}, std::vector<double>(channels, 1.0));
    p.gamma = Tensor({channels}, std::vector<double>(channels, 1.0));
    p.beta = Tensor({channels});
    p.eps = eps;
    return p;
}

void ConvFfnParams::validate() const {
    if (conv3_kernel.rank() != 4 || conv3_kernel.extent(2) != 3 || conv3_kernel.extent(3) != 3)
        throw ShapeError(detail::msg("conv_ffn: first kernel must be [Dh][Din][3][3], got ",
                                     shape_string(conv3_kernel)));
    if (conv1_kernel.rank() != 4 || conv1_kernel.extent(2) != 1 || conv1_kernel.extent(3) != 1 ||
        conv1_kernel.extent(1) != d_hidden())
        throw ShapeError(detail::msg("conv_ffn: second kernel must be [Dout][", d_hidden(),
                                     "][1][1], got ", shape_string(conv1_kernel)));
    if (bn.channels() != d_hidden())
        throw ShapeError(detail::msg("conv_ffn: norm covers ", bn.channels(),
                                     " channels, hidden width is ", d_hidden()));
}

namespace {

Tensor batch_norm(const Tensor& x, const BnParams& p) {
    return ops::batch_norm_infer(x, p.mean, p.var, p.gamma, p.beta, p.eps);
}

}  // namespace

Tensor conv_ffn(const Tensor& map, const ConvFfnParams& params) {
    params.validate();
    if (map.rank() != 3 || map.extent(2) != params.d_in())
        throw ShapeError(detail::msg("conv_ffn: input ", shape_string(map), " does not carry ",
                                     params.d_in(), " channels"));
    Tensor y;
    {
        CostTracker::Section s("conv3");
        y = ops::conv2d(map, params.conv3_kernel, &params.conv3_bias);
    }
    {
        CostTracker::Section s("bn");
        y = batch_norm(y, params.bn);
    }
    y = ops::relu(y);
    CostTracker::Section s("conv1");
    return ops::conv2d(y, params.conv1_kernel, &params.conv1_bias);
}

TokenSequence self_attention_block(const TokenSequence& x, const SelfAttentionBlockParams& params,
                                   const std::string& site) {
    if (x.h * x.w != x.n_tokens())
        throw ShapeError(detail::msg("self-attention block: grid ", x.h, "x", x.w,
                                     " does not hold ", x.n_tokens(), " tokens"));
    Tensor normed;
    {
        CostTracker::Section s("norm1");
        normed = batch_norm(x.data, params.norm1);
    }
    const TokenSequence n1{std::move(normed), x.h, x.w};
    Tensor x1;
    {
        CostTracker::Section s("attn");
        TokenSequence a = view_mixed_attention(n1, n1, params.attn, site);
        x1 = ops::add(a.data, x.data);
    }
    Tensor n2;
    {
        CostTracker::Section s("norm2");
        n2 = batch_norm(x1, params.norm2);
    }
    Tensor f;
    {
        CostTracker::Section s("ffn");
        f = conv_ffn(unflatten(TokenSequence{std::move(n2), x.h, x.w}), params.ffn);
    }
    TokenSequence out{ops::add(flatten(f).data, x1), x.h, x.w};
    out.data.ensure_finite("self-attention block output");
    return out;
}

TokenSequence cross_attention_block(const TokenSequence& f_rgb, const TokenSequence& f_dt,
                                    const CrossAttentionBlockParams& params,
                                    const std::string& site) {
    if (f_rgb.n_tokens() != f_dt.n_tokens() || f_rgb.dim() != f_dt.dim() ||
        f_rgb.h != f_dt.h || f_rgb.w != f_dt.w)
        throw ShapeError(detail::msg("cross-attention block: stream shapes disagree, ",
                                     shape_string(f_rgb.data), " on ", f_rgb.h, "x", f_rgb.w,
                                     " vs ", shape_string(f_dt.data), " on ", f_dt.h, "x",
                                     f_dt.w));
    Tensor norm_r, norm_d;
    {
        CostTracker::Section s("norm");
        norm_r = batch_norm(f_rgb.data, params.norm_rgb);
        norm_d = batch_norm(f_dt.data, params.norm_dt);
    }
    const TokenSequence nr{std::move(norm_r), f_rgb.h, f_rgb.w};
    const TokenSequence nd{std::move(norm_d), f_dt.h, f_dt.w};
    TokenSequence z_rgb, z_dt;
    {
        CostTracker::Section s("attn_rgb_query");
        z_rgb = view_mixed_attention(nr, nd, params.attn_rgb_query,
                                     site.empty() ? site : site + ".rgb_query");
    }
    {
        CostTracker::Section s("attn_dt_query");
        z_dt = view_mixed_attention(nd, nr, params.attn_dt_query,
                                    site.empty() ? site : site + ".dt_query");
    }
    Tensor fused;
    {
        CostTracker::Section s("ffn");
        Tensor cat = ops::concat_cols(z_rgb.data, z_dt.data);
        {
            CostTracker::Section sn("norm_fused");
            cat = batch_norm(cat, params.norm_fused);
        }
        fused = conv_ffn(unflatten(TokenSequence{std::move(cat), f_rgb.h, f_rgb.w}), params.ffn);
    }
    TokenSequence out{ops::add(ops::add(z_rgb.data, z_dt.data), flatten(fused).data), f_rgb.h,
                      f_rgb.w};
    out.data.ensure_finite("cross-attention block output");
    return out;
}

}  // namespace caver
