#include <cstdint>

#include <nlohmann/json.hpp>

#include "doctest.h"

#include "caver/attention.hpp"
#include "caver/cost_model.hpp"
#include "caver/rng.hpp"
#include "caver/tipp.hpp"
#include "caver/trace.hpp"
#include "oracles.hpp"

using caver::CostTracker;
using caver::Rng;
using caver::Tensor;
using caver::TokenSequence;
namespace cost = caver::cost;

namespace {

caver::AttentionParams random_params(Rng& rng, std::size_t dim, std::size_t heads,
                                     std::size_t p) {
    caver::AttentionParams a;
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

}  // namespace

TEST_CASE("rational arithmetic and rendering") {
    const cost::Rational half(1, 2), quarter(1, 4);
    CHECK((half + quarter).str() == "3/4");
    CHECK(cost::Rational(6, 3).str() == "2");
    CHECK(cost::Rational(6, 3).integral());
    CHECK(cost::Rational(6, 3).integer() == 2);
    CHECK_FALSE(half.integral());
    CHECK_THROWS_AS(half.integer(), caver::NumericError);
    CHECK(half < cost::Rational(2, 3));
    CHECK(cost::Rational(4, 6) == cost::Rational(2, 3));
    CHECK(half.approx() == 0.5);
}

TEST_CASE("standard attention cost formulas") {
    const auto c = cost::standard_attention_cost(100, 64, 2);
    CHECK(c.flops.integer() == 1280000);  // 2 N^2 D
    CHECK(c.mem.integer() == 2 * 100 * 100 + 100 * 64);

    const auto single = cost::standard_attention_cost(1, 64, 2);
    CHECK(single.flops.integer() == 2 * 64);
    CHECK(single.mem.integer() == 2 + 64);
}

TEST_CASE("standard cost matches an instrumented unpatched attention run") {
    // N=8, D=4, N_h=1: count the two matrix products of a naive run
    Rng rng(81);
    const std::size_t n = 8, d = 4;
    caver::HeadState h;
    h.q = oracles::random_tensor(rng, {n, d});
    h.k = oracles::random_tensor(rng, {n, d});
    h.v = oracles::random_tensor(rng, {n, d});
    h.scale_spatial = 2.0;
    h.scale_channel = std::sqrt(8.0);
    CostTracker tracker;
    {
        CostTracker::Bind bind(tracker);
        CostTracker::Section s("spatial");
        caver::spatial_head_attention(h);
    }
    const std::uint64_t qk_av =
        tracker.macs_matching("spatial.qk") + tracker.macs_matching("spatial.av");
    CHECK(qk_av == cost::standard_attention_cost(n, d, 1).flops.integer());
}

TEST_CASE("vma cost formulas and the documented p=8 point") {
    // p=1 spatial term reduces to the standard 2 N^2 D
    const auto p1 = cost::vma_attention_cost(64, 8, 2, 1);
    CHECK(p1.flops_spatial == cost::standard_attention_cost(64, 8, 2).flops);

    // D=64, N_h=2, p=8, N=64^2, cross-checked in extended precision
    const auto big = cost::vma_attention_cost(64 * 64, 64, 2, 8);
    const long double n = 4096.0L, d = 64.0L, p = 8.0L;
    const long double spatial = 2.0L * n * n * d / (p * p);
    const long double channel = 2.0L * n * d * d;
    CHECK(static_cast<long double>(big.flops_spatial.integer()) == spatial);
    CHECK(static_cast<long double>(big.flops_channel_head_agnostic.integer()) == channel);
    CHECK(big.flops == big.flops_spatial + big.flops_channel_head_agnostic);

    // memory: N_h N^2/p^4 + D^2/N_h + 2 N D
    const auto mem = cost::vma_attention_cost(64, 8, 2, 2).mem;
    CHECK(mem.integer() == 2 * (64 / 4) * (64 / 4) + 8 * 8 / 2 + 2 * 64 * 8);
}

TEST_CASE("crossover scan matches the known point and hand scans") {
    const auto big = cost::crossover(64, 2, 8);
    REQUIRE(big.has_value());
    CHECK(*big == 66);

    // p=1: the mixed form costs strictly more at every N
    CHECK_FALSE(cost::crossover(64, 2, 1).has_value());

    // (4, 1, 2): brute scan of 2 N^2 D / p^2 + 2 N D^2 < 2 N^2 D
    std::uint64_t want = 0;
    for (std::uint64_t n = 1; n < 1000 && want == 0; ++n) {
        const std::uint64_t vma = 2 * n * n * 4 / 4 + 2 * n * 16;
        if (vma < 2 * n * n * 4) want = n;
    }
    const auto small = cost::crossover(4, 1, 2);
    REQUIRE(small.has_value());
    CHECK(*small == want);
}

TEST_CASE("instrumented attention core equals the closed forms") {
    Rng rng(82);
    for (const std::size_t heads : {1ul, 2ul})
        for (const std::size_t p : {1ul, 2ul, 4ul}) {
            const std::size_t side = 4, n = side * side, dim = 8;
            caver::AttentionParams params = random_params(rng, dim, heads, p);
            const TokenSequence x{oracles::random_tensor(rng, {n, dim}), side, side};
            CostTracker tracker;
            {
                CostTracker::Bind bind(tracker);
                caver::view_mixed_attention(x, x, params);
            }
            const auto m = cost::measure_attention_core(tracker);
            const auto closed = cost::vma_attention_cost(n, dim, heads, p);
            CHECK(m.spatial_macs == closed.flops_spatial.integer());
            CHECK(m.channel_macs == closed.flops_channel_per_head.integer());
            CHECK(m.attn_matrix_elems + m.token_elems == closed.mem.integer());
        }
}

TEST_CASE("minimal single-token attention counts 2D") {
    Rng rng(83);
    caver::AttentionParams params = random_params(rng, 4, 1, 1);
    const TokenSequence x{oracles::random_tensor(rng, {1, 4}), 1, 1};
    CostTracker tracker;
    {
        CostTracker::Bind bind(tracker);
        caver::view_mixed_attention(x, x, params);
    }
    CHECK(cost::measure_attention_core(tracker).spatial_macs == 2 * 4);
}

TEST_CASE("instrument_forward verifies every site and aggregates") {
    caver::TippConfig c;
    c.dim = 4;
    c.n_heads = 2;
    c.levels = {caver::LevelGeometry{8, 8, 6}, caver::LevelGeometry{4, 4, 6},
                caver::LevelGeometry{2, 2, 6}, caver::LevelGeometry{1, 1, 6}};
    c.patch = {2, 2, 1, 1};
    c.predictor_hidden = 3;
    const caver::TippWeights w = caver::init_weights(c);
    const caver::FeaturePyramid f = caver::synthetic_features(c, 20);

    caver::SaliencyMap saliency{Tensor({1, 1, 1}, {0.5})};
    const cost::CostReport report = cost::instrument_forward(f, c, w, &saliency);

    CHECK(report.sites.size() == 20);  // five attentions per stage
    CHECK(report.flops_closed == report.flops_measured);
    CHECK(report.mem_closed == report.mem_measured);
    CHECK(report.total_flops > report.flops_measured);  // embeds, FFNs, predictor
    std::uint64_t site_sum = 0;
    for (const auto& s : report.sites) site_sum += s.flops_measured;
    CHECK(site_sum == report.flops_measured);
    CHECK(saliency.values.extent(0) == 32);  // the forward really ran

    // the instrumented run returns the same map as a plain run
    const caver::SaliencyMap plain = caver::tipp_forward(f, c, w);
    CHECK(saliency.values.bit_equal(plain.values));

    // breakdown covers the stages and the predictor
    bool saw_cmiu1 = false, saw_predictor = false;
    for (const auto& b : report.breakdown) {
        saw_cmiu1 = saw_cmiu1 || b.label.rfind("cmiu1", 0) == 0;
        saw_predictor = saw_predictor || b.label.rfind("predictor", 0) == 0;
    }
    CHECK(saw_cmiu1);
    CHECK(saw_predictor);
}

TEST_CASE("cost report text and json are well formed") {
    caver::TippConfig c;
    c.dim = 4;
    c.n_heads = 2;
    c.levels = {caver::LevelGeometry{4, 4, 6}, caver::LevelGeometry{2, 2, 6},
                caver::LevelGeometry{1, 1, 6}, caver::LevelGeometry{1, 1, 6}};
    // default patch does not divide these extents; shrink it
    c.patch = {1, 1, 1, 1};
    c.predictor_hidden = 3;
    // invalid: level 4 must halve level 3
    CHECK_THROWS_AS(c.validate(), caver::ConfigError);
    c.levels = {caver::LevelGeometry{8, 8, 6}, caver::LevelGeometry{4, 4, 6},
                caver::LevelGeometry{2, 2, 6}, caver::LevelGeometry{1, 1, 6}};
    const caver::TippWeights w = caver::init_weights(c);
    const caver::FeaturePyramid f = caver::synthetic_features(c, 21);
    const cost::CostReport report = cost::instrument_forward(f, c, w);

    const std::string text = report.to_text();
    CHECK(text.find("cmiu1") != std::string::npos);
    CHECK(text.find("total") != std::string::npos);

    const auto doc = nlohmann::json::parse(report.to_json());
    CHECK(doc.at("flops_closed").get<std::uint64_t>() == report.flops_closed);
    CHECK(doc.at("flops_measured").get<std::uint64_t>() == report.flops_measured);
    CHECK(doc.at("total_flops").get<std::uint64_t>() == report.total_flops);
    CHECK(doc.at("sites").is_array());
    CHECK(doc.at("sites").size() == report.sites.size());
    // round-trips unchanged
    CHECK(nlohmann::json::parse(doc.dump()) == doc);
}

TEST_CASE("patch sweep decreases decoder flops monotonically") {
    caver::TippConfig c;
    c.dim = 8;
    c.n_heads = 2;
    c.levels = {caver::LevelGeometry{16, 16, 6}, caver::LevelGeometry{8, 8, 6},
                caver::LevelGeometry{4, 4, 6}, caver::LevelGeometry{2, 2, 6}};
    c.predictor_hidden = 3;
    c.patch = {1, 1, 1, 1};  // the default patch does not divide this pyramid
    const caver::FeaturePyramid f = caver::synthetic_features(c, 22);
    std::uint64_t last = 0;
    bool first = true;
    for (const std::size_t p : {1ul, 2ul}) {
        c.patch = {p, p, p, p};
        const caver::TippWeights w = caver::init_weights(c);
        const auto report = cost::instrument_forward(f, c, w);
        if (!first) CHECK(report.total_flops < last);
        last = report.total_flops;
        first = false;
    }
}
