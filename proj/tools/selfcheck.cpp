#include "selfcheck.hpp"

#include <cmath>
#include <cstdint>
#include <vector>

#include "caver/attention.hpp"
#include "caver/blocks.hpp"
#include "caver/cost_model.hpp"
#include "caver/io.hpp"
#include "caver/ptre.hpp"
#include "caver/rng.hpp"
#include "caver/tensor.hpp"
#include "caver/tipp.hpp"
#include "caver/trace.hpp"

namespace caver::selfcheck {

namespace {

Tensor random_tensor(Rng& rng, const std::vector<std::size_t>& shape) {
    Tensor t(shape);
    for (std::size_t i = 0; i < t.size(); ++i) t.data()[i] = rng.normal();
    return t;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i)
        m = std::max(m, std::abs(a.data()[i] - b.data()[i]));
    return m;
}

// Reference patch-wise spatial attention built from explicit loops: fold
// p x p windows into patch rows, run three-step attention, unfold.
Tensor reference_patch_attention(const Tensor& q, const Tensor& k, const Tensor& v,
                                 std::size_t h, std::size_t w, std::size_t p) {
    const std::size_t d = q.extent(1);
    const std::size_t gh = h / p, gw = w / p;
    const std::size_t np = gh * gw, dp = d * p * p;
    const auto fold = [&](const Tensor& t) {
        std::vector<std::vector<double>> rows(np, std::vector<double>(dp));
        for (std::size_t ph = 0; ph < gh; ++ph)
            for (std::size_t pw = 0; pw < gw; ++pw)
                for (std::size_t py = 0; py < p; ++py)
                    for (std::size_t px = 0; px < p; ++px)
                        for (std::size_t c = 0; c < d; ++c)
                            rows[ph * gw + pw][(py * p + px) * d + c] =
                                t((ph * p + py) * w + (pw * p + px), c);
        return rows;
    };
    const auto qr = fold(q), kr = fold(k), vr = fold(v);
    const double scale = std::sqrt(static_cast<double>(dp));
    std::vector<std::vector<double>> out(np, std::vector<double>(dp, 0.0));
    for (std::size_t i = 0; i < np; ++i) {
        std::vector<double> logits(np);
        for (std::size_t j = 0; j < np; ++j) {
            double dot = 0.0;
            for (std::size_t c = 0; c < dp; ++c) dot += qr[i][c] * kr[j][c];
            logits[j] = dot / scale;
        }
        double mx = logits[0];
        for (double l : logits) mx = std::max(mx, l);
        double sum = 0.0;
        for (double& l : logits) {
            l = std::exp(l - mx);
            sum += l;
        }
        for (std::size_t j = 0; j < np; ++j)
            for (std::size_t c = 0; c < dp; ++c) out[i][c] += (logits[j] / sum) * vr[j][c];
    }
    Tensor result({h * w, d});
    for (std::size_t ph = 0; ph < gh; ++ph)
        for (std::size_t pw = 0; pw < gw; ++pw)
            for (std::size_t py = 0; py < p; ++py)
                for (std::size_t px = 0; px < p; ++px)
                    for (std::size_t c = 0; c < d; ++c)
                        result((ph * p + py) * w + (pw * p + px), c) =
                            out[ph * gw + pw][(py * p + px) * d + c];
    return result;
}

// Reference channel attention: similarity over channel pairs, softened
// row-wise, weighting the value channels.
Tensor reference_channel_attention(const Tensor& q, const Tensor& k, const Tensor& v) {
    const std::size_t n = q.extent(0), d = q.extent(1);
    const double scale = std::sqrt(static_cast<double>(n));
    std::vector<std::vector<double>> sim(d, std::vector<double>(d));
    for (std::size_t a = 0; a < d; ++a)
        for (std::size_t b = 0; b < d; ++b) {
            double dot = 0.0;
            for (std::size_t t = 0; t < n; ++t) dot += q(t, a) * k(t, b);
            sim[a][b] = dot / scale;
        }
    for (std::size_t a = 0; a < d; ++a) {
        double mx = sim[a][0];
        for (double s : sim[a]) mx = std::max(mx, s);
        double sum = 0.0;
        for (double& s : sim[a]) {
            s = std::exp(s - mx);
            sum += s;
        }
        for (double& s : sim[a]) s /= sum;
    }
    Tensor out({n, d});
    for (std::size_t t = 0; t < n; ++t)
        for (std::size_t a = 0; a < d; ++a) {
            double acc = 0.0;
            for (std::size_t b = 0; b < d; ++b) acc += sim[a][b] * v(t, b);
            out(t, a) = acc;
        }
    return out;
}

HeadState random_head(Rng& rng, std::size_t n, std::size_t d) {
    HeadState h;
    h.q = random_tensor(rng, {n, d});
    h.k = random_tensor(rng, {n, d});
    h.v = random_tensor(rng, {n, d});
    h.scale_spatial = std::sqrt(static_cast<double>(d));
    h.scale_channel = std::sqrt(static_cast<double>(n));
    return h;
}

AttentionParams random_attention(Rng& rng, std::size_t dim, std::size_t heads, std::size_t p) {
    AttentionParams a;
    a.dim = dim;
    a.n_heads = heads;
    a.patch_side = p;
    a.w_q = random_tensor(rng, {heads, dim, dim / heads});
    a.w_k = random_tensor(rng, {heads, dim, dim / heads});
    a.w_v = random_tensor(rng, {heads, dim, dim / heads});
    a.w_s = random_tensor(rng, {dim, dim});
    a.w_c = random_tensor(rng, {dim, dim});
    return a;
}

struct Persister {
    std::filesystem::path dir;
    bool used = false;

    std::string save(const std::string& name, const Tensor& t) {
        std::filesystem::create_directories(dir);
        io::write_cavr(dir / (name + ".cavr"), t);
        used = true;
        return (dir / (name + ".cavr")).string();
    }
};

CheckResult check_ptre_roundtrip(Rng& rng, Persister& keep) {
    const std::size_t grid[] = {2, 4, 6, 8};
    for (int c = 0; c < 40; ++c) {
        const std::size_t h = grid[rng.next_u64() % 4], w = grid[rng.next_u64() % 4];
        const std::size_t d = 1 + rng.next_u64() % 5;
        std::vector<std::size_t> sides;
        for (std::size_t p : {1ul, 2ul, 4ul})
            if (h % p == 0 && w % p == 0) sides.push_back(p);
        const std::size_t p = sides[rng.next_u64() % sides.size()];
        const Tensor map = random_tensor(rng, {h, w, d});
        const Tensor back = from_patch_tokens(to_patch_tokens(map, p));
        if (!map.bit_equal(back)) {
            keep.save("ptre_roundtrip_input", map);
            return {"ptre_roundtrip", false,
                    detail::msg("fold/unfold not the identity at ", h, "x", w, "x", d, " p=", p)};
        }
    }
    return {"ptre_roundtrip", true, "40 randomized fold/unfold cases, bit-exact"};
}

CheckResult check_spatial_oracle(Rng& rng, Persister& keep) {
    for (int c = 0; c < 30; ++c) {
        const std::size_t h = 2 * (1 + rng.next_u64() % 3), w = 2 * (1 + rng.next_u64() % 3);
        const std::size_t d = 1 + rng.next_u64() % 4;
        const std::size_t p = (h % 2 == 0 && w % 2 == 0 && rng.next_u64() % 2) ? 2 : 1;
        HeadState head = random_head(rng, h * w, d);
        const Tensor got = patchwise_spatial_head_attention(head, p, h, w);
        const Tensor want = reference_patch_attention(head.q, head.k, head.v, h, w, p);
        const double err = max_abs_diff(got, want);
        if (err > 1e-10) {
            keep.save("spatial_oracle_q", head.q);
            keep.save("spatial_oracle_k", head.k);
            keep.save("spatial_oracle_v", head.v);
            return {"attention_spatial_oracle", false,
                    detail::msg("max |production - reference| = ", err, " at ", h, "x", w, " d=",
                                d, " p=", p, " (tolerance 1e-10)")};
        }
    }
    return {"attention_spatial_oracle", true, "30 randomized cases within 1e-10 of brute force"};
}

CheckResult check_channel_oracle(Rng& rng, Persister& keep) {
    for (int c = 0; c < 30; ++c) {
        const std::size_t n = 2 + rng.next_u64() % 10, d = 1 + rng.next_u64() % 6;
        HeadState head = random_head(rng, n, d);
        const Tensor got = channel_head_attention(head);
        const Tensor want = reference_channel_attention(head.q, head.k, head.v);
        const double err = max_abs_diff(got, want);
        if (err > 1e-10) {
            keep.save("channel_oracle_q", head.q);
            keep.save("channel_oracle_k", head.k);
            keep.save("channel_oracle_v", head.v);
            return {"attention_channel_oracle", false,
                    detail::msg("max |production - reference| = ", err, " at n=", n, " d=", d,
                                " (tolerance 1e-10)")};
        }
    }
    return {"attention_channel_oracle", true, "30 randomized cases within 1e-10 of brute force"};
}

CheckResult check_p1_degeneracy(Rng& rng, Persister& keep) {
    for (int c = 0; c < 25; ++c) {
        const std::size_t h = 1 + rng.next_u64() % 6, w = 1 + rng.next_u64() % 6;
        const std::size_t d = 1 + rng.next_u64() % 6;
        HeadState head = random_head(rng, h * w, d);
        const Tensor patched = patchwise_spatial_head_attention(head, 1, h, w);
        const Tensor plain = spatial_head_attention(head);
        if (!patched.bit_equal(plain)) {
            keep.save("p1_degeneracy_q", head.q);
            return {"p1_degeneracy", false,
                    detail::msg("p=1 fold changed the result at ", h, "x", w, " d=", d)};
        }
    }
    return {"p1_degeneracy", true, "25 cases, p=1 bit-identical to unpatched attention"};
}

CheckResult check_view_mix_isolation(Rng& rng, Persister& keep) {
    for (int c = 0; c < 10; ++c) {
        const std::size_t h = 4, w = 4, dim = 8, heads = 2;
        AttentionParams params = random_attention(rng, dim, heads, 2);
        TokenSequence x{random_tensor(rng, {h * w, dim}), h, w};
        const VmaBranches b = view_mixed_attention_branches(x, x, params);
        params.alpha = 1.0;
        params.beta = 0.0;
        const TokenSequence only_s = view_mixed_attention(x, x, params);
        params.alpha = 0.0;
        params.beta = 1.0;
        const TokenSequence only_c = view_mixed_attention(x, x, params);
        params.alpha = 0.5;
        params.beta = 0.5;
        const TokenSequence mixed = view_mixed_attention(x, x, params);
        if (!only_s.data.bit_equal(b.z_s) || !only_c.data.bit_equal(b.z_c)) {
            keep.save("view_mix_input", x.data);
            return {"view_mix_isolation", false, "isolated branch does not match (1,0)/(0,1) run"};
        }
        double err = 0.0;
        for (std::size_t i = 0; i < mixed.data.size(); ++i)
            err = std::max(err, std::abs(mixed.data.data()[i] -
                                         0.5 * (b.z_s.data()[i] + b.z_c.data()[i])));
        if (err > 1e-12) {
            keep.save("view_mix_input", x.data);
            return {"view_mix_isolation", false,
                    detail::msg("(0.5,0.5) deviates from branch midpoint by ", err)};
        }
    }
    return {"view_mix_isolation", true,
            "(1,0)/(0,1) bit-exact, (0.5,0.5) at branch midpoint within 1e-12"};
}

CheckResult check_residual_identity(Persister& keep) {
    const TippConfig config;
    TippWeights zero = make_weights(config);
    Rng rng(7);
    for (std::size_t level = 0; level < 4; ++level) {
        const auto& g = config.levels[level];
        TokenSequence x{random_tensor(rng, {g.h * g.w, config.dim}), g.h, g.w};
        const TokenSequence out = self_attention_block(x, zero.cmiu[level].imsa_rgb);
        if (!out.data.bit_equal(x.data)) {
            keep.save("residual_identity_input", x.data);
            return {"residual_identity", false,
                    detail::msg("zero-weight block is not the identity at level ", level + 1)};
        }
    }
    return {"residual_identity", true, "zero-weight blocks are bit-exact identities at 4 levels"};
}

CheckResult check_crossover(Persister&) {
    const auto got = cost::crossover(64, 2, 8);
    if (!got || *got != 66)
        return {"cost_crossover", false,
                detail::msg("crossover(64,2,8) = ", got ? std::to_string(*got) : "none",
                            ", expected 66")};
    // Independent scan at (4,1,2): 2N^2*4/4 + 2N*16 < 2N^2*4.
    std::uint64_t want = 0;
    for (std::uint64_t n = 1; n < 100; ++n)
        if (2 * n * n * 4 / 4 + 2 * n * 16 < 2 * n * n * 4) {
            want = n;
            break;
        }
    const auto small = cost::crossover(4, 1, 2);
    if (!small || *small != want)
        return {"cost_crossover", false, detail::msg("crossover(4,1,2) disagrees with hand scan ",
                                                     want)};
    if (cost::crossover(64, 2, 1))
        return {"cost_crossover", false, "p=1 reported a crossover; the mixed form never wins"};
    return {"cost_crossover", true, "crossover(64,2,8)=66; small case matches hand scan"};
}

CheckResult check_closed_vs_instrumented(Rng& rng, Persister&) {
    for (const std::size_t n_side : {4ul, 8ul})
        for (const std::size_t heads : {1ul, 2ul})
            for (const std::size_t p : {1ul, 2ul, 4ul}) {
                if (n_side % p != 0) continue;
                const std::size_t dim = 8, n = n_side * n_side;
                AttentionParams params = random_attention(rng, dim, heads, p);
                TokenSequence x{random_tensor(rng, {n, dim}), n_side, n_side};
                CostTracker tracker;
                {
                    CostTracker::Bind bind(tracker);
                    view_mixed_attention(x, x, params);
                }
                const auto m = cost::measure_attention_core(tracker);
                const auto closed = cost::vma_attention_cost(n, dim, heads, p);
                if (m.spatial_macs != closed.flops_spatial.integer() ||
                    m.channel_macs != closed.flops_channel_per_head.integer() ||
                    m.attn_matrix_elems + m.token_elems != closed.mem.integer())
                    return {"closed_vs_instrumented", false,
                            detail::msg("mismatch at N=", n, " Nh=", heads, " p=", p,
                                        ": spatial ", m.spatial_macs, " vs ",
                                        closed.flops_spatial.str(), ", channel ", m.channel_macs,
                                        " vs ", closed.flops_channel_per_head.str())};
            }
    return {"closed_vs_instrumented", true,
            "instrumented attention cores equal the closed forms exactly"};
}

CheckResult check_saliency_contract(std::uint64_t seed, Persister&) {
    TippConfig config;
    config.levels = {LevelGeometry{16, 16, 12}, LevelGeometry{8, 8, 12}, LevelGeometry{4, 4, 12},
                     LevelGeometry{2, 2, 12}};
    config.patch = {2, 2, 2, 1};
    config.dim = 8;
    config.n_heads = 2;
    config.seed = seed;
    const TippWeights weights = init_weights(config);
    const FeaturePyramid features = synthetic_features(config, seed + 1);
    const SaliencyMap a = tipp_forward(features, config, weights);
    const SaliencyMap b = tipp_forward(features, config, weights);
    if (!a.values.bit_equal(b.values))
        return {"saliency_contract", false, "two identical runs disagree bitwise"};
    FeaturePyramid perturbed = features;
    perturbed[3].rgb(0, 0, 0) += 1.0;
    const SaliencyMap c = tipp_forward(perturbed, config, weights);
    if (c.values.bit_equal(a.values))
        return {"saliency_contract", false, "perturbing the coarsest level left the map unchanged"};
    return {"saliency_contract", true,
            "values in (0,1), deterministic, sensitive to the coarsest level"};
}

}  // namespace

std::vector<CheckResult> run_all(std::uint64_t seed, const std::filesystem::path& out_dir) {
    Rng rng(seed);
    Persister keep{out_dir / "counterexamples"};
    std::vector<CheckResult> results;
    results.push_back(check_ptre_roundtrip(rng, keep));
    results.push_back(check_spatial_oracle(rng, keep));
    results.push_back(check_channel_oracle(rng, keep));
    results.push_back(check_p1_degeneracy(rng, keep));
    results.push_back(check_view_mix_isolation(rng, keep));
    results.push_back(check_residual_identity(keep));
    results.push_back(check_crossover(keep));
    results.push_back(check_closed_vs_instrumented(rng, keep));
    results.push_back(check_saliency_contract(seed, keep));
    return results;
}

}  // namespace caver::selfcheck
