#include "caver/attention.hpp"

#include <atomic>
#include <cmath>

#include "caver/errors.hpp"
#include "caver/ops.hpp"
#include "caver/trace.hpp"

namespace caver {

namespace testing {
namespace {
std::atomic<bool> g_scale_fault{false};
}
void set_spatial_scale_fault(bool on) { g_scale_fault.store(on, std::memory_order_relaxed); }
bool spatial_scale_fault() { return g_scale_fault.load(std::memory_order_relaxed); }
}  // namespace testing

void AttentionParams::validate() const {
    if (dim == 0 || n_heads == 0 || dim % n_heads != 0)
        throw ShapeError(
            detail::msg("attention: head count ", n_heads, " must divide dim ", dim));
    if (patch_side == 0) throw PatchError("attention: patch side must be at least 1");
    const std::size_t hd = head_dim();
    const auto check = [&](const Tensor& t, const char* name, std::initializer_list<std::size_t> want) {
        std::vector<std::size_t> w(want);
        if (t.shape() != w)
            throw ShapeError(detail::msg("attention: ", name, " has shape ", shape_string(t),
                                         ", expected rank ", w.size(), " projection for dim ",
                                         dim, ", heads ", n_heads));
    };
    check(w_q, "w_q", {n_heads, dim, hd});
    check(w_k, "w_k", {n_heads, dim, hd});
    check(w_v, "w_v", {n_heads, dim, hd});
    check(w_s, "w_s", {dim, dim});
    check(w_c, "w_c", {dim, dim});
    if (!(alpha >= 0.0 && alpha <= 1.0) || !(beta >= 0.0 && beta <= 1.0))
        throw NumericError(detail::msg("attention: mixing weights must lie in [0,1], got alpha=",
                                       alpha, " beta=", beta));
}

namespace {

thread_local AttentionProbe* g_probe = nullptr;

// One [D][D/N_h] slice of a head-major projection stack.
Tensor head_slice(const Tensor& stack, std::size_t head) {
    const std::size_t d = stack.extent(1), hd = stack.extent(2);
    const double* base = stack.data() + head * d * hd;
    return Tensor({d, hd}, std::vector<double>(base, base + d * hd));
}

// Shared core of both branches: scale logits, soften, weight the values.
// `scale` is the divisor (sqrt of token width or sqrt of N).
Tensor attend(const Tensor& q, const Tensor& kt, const Tensor& v, double scale, bool faulted,
              Tensor* attn_out) {
    Tensor scores;
    {
        CostTracker::Section s("qk");
        scores = ops::matmul(q, kt);
    }
    {
        CostTracker::Section s("scale");
        scores = ops::scale(scores, faulted ? scale : 1.0 / scale);
    }
    Tensor attn;
    {
        CostTracker::Section s("softmax");
        attn = ops::softmax_rows(scores);
        trace::add_attn_matrix_elems(attn.size());
    }
    if (attn_out) *attn_out = attn;
    CostTracker::Section s("av");
    return ops::matmul(attn, v);
}

}  // namespace

AttentionProbe::AttentionProbe(std::string site) : site_(std::move(site)), prev_(g_probe) {
    g_probe = this;
}

AttentionProbe::~AttentionProbe() { g_probe = prev_; }

AttentionProbe* AttentionProbe::current() { return g_probe; }

void AttentionProbe::record(AttentionMaps maps) {
    maps_ = std::move(maps);
    hit_ = true;
}

std::vector<HeadState> project_heads(const TokenSequence& x_q, const TokenSequence& x_kv,
                                     const AttentionParams& params) {
    params.validate();
    if (x_q.dim() != params.dim || x_kv.dim() != params.dim)
        throw ShapeError(detail::msg("attention: token width ", x_q.dim(), "/", x_kv.dim(),
                                     " does not match dim ", params.dim));
    if (x_q.n_tokens() != x_kv.n_tokens())
        throw ShapeError(detail::msg("attention: query stream has ", x_q.n_tokens(),
                                     " tokens, key/value stream has ", x_kv.n_tokens()));
    CostTracker::Section sec("proj");
    std::vector<HeadState> heads(params.n_heads);
    for (std::size_t i = 0; i < params.n_heads; ++i) {
        HeadState& h = heads[i];
        h.q = ops::matmul(x_q.data, head_slice(params.w_q, i));
        h.k = ops::matmul(x_kv.data, head_slice(params.w_k, i));
        h.v = ops::matmul(x_kv.data, head_slice(params.w_v, i));
        h.scale_spatial = std::sqrt(static_cast<double>(params.head_dim()));
        h.scale_channel = std::sqrt(static_cast<double>(x_kv.n_tokens()));
    }
    return heads;
}

Tensor spatial_head_attention(const HeadState& h, Tensor* attn_out) {
    CostTracker::Section sec("spatial");
    const Tensor kt = ops::transpose2d(h.k);
    return attend(h.q, kt, h.v, h.scale_spatial, testing::spatial_scale_fault(), attn_out);
}

Tensor channel_head_attention(const HeadState& h, Tensor* attn_out) {
    CostTracker::Section sec("channel");
    const Tensor qt = ops::transpose2d(h.q);
    const Tensor vt = ops::transpose2d(h.v);
    const Tensor yt = attend(qt, h.k, vt, h.scale_channel, false, attn_out);
    return ops::transpose2d(yt);
}

Tensor patchwise_spatial_head_attention(const HeadState& h, std::size_t p, std::size_t h_src,
                                        std::size_t w_src, Tensor* attn_out) {
    if (h_src * w_src != h.q.extent(0))
        throw ShapeError(detail::msg("patchwise attention: grid ", h_src, "x", w_src,
                                     " does not hold ", h.q.extent(0), " tokens"));
    const std::size_t d = h.q.extent(1);
    const auto patched = [&](const Tensor& t) {
        return to_patch_tokens(t.reshaped({h_src, w_src, d}), p);
    };
    PatchTokenSequence q = patched(h.q);
    PatchTokenSequence k = patched(h.k);
    PatchTokenSequence v = patched(h.v);
    HeadState folded;
    folded.q = std::move(q.data);
    folded.k = std::move(k.data);
    folded.v = std::move(v.data);
    folded.scale_spatial = std::sqrt(static_cast<double>(d * p * p));
    Tensor out = spatial_head_attention(folded, attn_out);
    PatchTokenSequence result{std::move(out), p, h_src, w_src, d};
    return flatten(from_patch_tokens(result)).data;
}

VmaBranches view_mixed_attention_branches(const TokenSequence& x_q, const TokenSequence& x_kv,
                                          const AttentionParams& params,
                                          const std::string& site) {
    if (x_q.h * x_q.w != x_q.n_tokens())
        throw ShapeError(detail::msg("attention: query grid ", x_q.h, "x", x_q.w,
                                     " does not hold ", x_q.n_tokens(), " tokens"));
    const std::vector<HeadState> heads = project_heads(x_q, x_kv, params);
    AttentionProbe* probe = AttentionProbe::current();
    const bool probing = probe && !site.empty() && probe->site() == site;
    AttentionMaps maps;

    std::vector<Tensor> spatial_heads(heads.size());
    std::vector<Tensor> channel_heads(heads.size());
    for (std::size_t i = 0; i < heads.size(); ++i) {
        CostTracker::Section sec("head" + std::to_string(i));
        Tensor spatial_map, channel_map;
        spatial_heads[i] = patchwise_spatial_head_attention(heads[i], params.patch_side, x_q.h,
                                                            x_q.w,
                                                            probing ? &spatial_map : nullptr);
        channel_heads[i] = channel_head_attention(heads[i], probing ? &channel_map : nullptr);
        if (probing) {
            maps.spatial.push_back(std::move(spatial_map));
            maps.channel.push_back(std::move(channel_map));
        }
    }
    if (probing) probe->record(std::move(maps));

    VmaBranches out;
    {
        CostTracker::Section sec("concat_s");
        std::vector<const Tensor*> parts;
        for (const Tensor& t : spatial_heads) parts.push_back(&t);
        Tensor cat = ops::concat_cols(parts);
        trace::add_token_elems(cat.size());
        CostTracker::Section proj("proj_s");
        out.z_s = ops::matmul(cat, params.w_s);
    }
    {
        CostTracker::Section sec("concat_c");
        std::vector<const Tensor*> parts;
        for (const Tensor& t : channel_heads) parts.push_back(&t);
        Tensor cat = ops::concat_cols(parts);
        trace::add_token_elems(cat.size());
        CostTracker::Section proj("proj_c");
        out.z_c = ops::matmul(cat, params.w_c);
    }
    return out;
}

TokenSequence view_mixed_attention(const TokenSequence& x_q, const TokenSequence& x_kv,
                                   const AttentionParams& params, const std::string& site) {
    VmaBranches b = view_mixed_attention_branches(x_q, x_kv, params, site);
    CostTracker::Section sec("mix");
    return TokenSequence{ops::mix(params.alpha, b.z_s, params.beta, b.z_c), x_q.h, x_q.w};
}

}  // namespace caver
