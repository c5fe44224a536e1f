#include "caver/tipp.hpp"

#include <cmath>
#include <utility>

#include "caver/errors.hpp"
#include "caver/io.hpp"
#include "caver/ops.hpp"
#include "caver/trace.hpp"

namespace caver {

void TippConfig::validate() const {
    if (dim == 0 || n_heads == 0 || dim % n_heads != 0)
        throw ConfigError(detail::msg("config: head count ", n_heads, " must divide dim ", dim));
    if (predictor_hidden == 0) throw ConfigError("config: predictor hidden width must be positive");
    if (bn_eps <= 0.0) throw ConfigError("config: bn_eps must be positive");
    for (std::size_t i = 0; i < 4; ++i) {
        const LevelGeometry& g = levels[i];
        if (g.h == 0 || g.w == 0 || g.c == 0)
            throw ConfigError(detail::msg("config: level ", i + 1, " has empty geometry"));
        if (patch[i] == 0)
            throw ConfigError(detail::msg("config: level ", i + 1, " has patch side 0"));
        if (g.h % patch[i] != 0 || g.w % patch[i] != 0)
            throw ConfigError(detail::msg("config: level ", i + 1, " extents ", g.h, "x", g.w,
                                          " not divisible by patch side ", patch[i]));
        if (i > 0 && (levels[i - 1].h != g.h * 2 || levels[i - 1].w != g.w * 2))
            throw ConfigError(detail::msg("config: level ", i + 1, " is ", g.h, "x", g.w,
                                          " but level ", i, " is ", levels[i - 1].h, "x",
                                          levels[i - 1].w, "; each level must halve the previous"));
    }
}

SaliencyMap SaliencyMap::checked(Tensor values) {
    if (values.rank() != 3 || values.extent(2) != 1)
        throw ShapeError(
            detail::msg("saliency map must be [H][W][1], got ", shape_string(values.shape())));
    for (std::size_t i = 0; i < values.size(); ++i) {
        const double v = values.data()[i];
        if (!(v > 0.0 && v < 1.0))
            throw NumericError(detail::msg("saliency value ", v, " at index ", i,
                                           " outside the open interval (0,1)"));
    }
    return SaliencyMap{std::move(values)};
}

namespace {

AttentionParams make_attention(const TippConfig& c, std::size_t level) {
    AttentionParams a;
    a.dim = c.dim;
    a.n_heads = c.n_heads;
    a.patch_side = c.patch[level];
    const std::size_t hd = a.head_dim();
    a.w_q = Tensor({c.n_heads, c.dim, hd});
    a.w_k = Tensor({c.n_heads, c.dim, hd});
    a.w_v = Tensor({c.n_heads, c.dim, hd});
    a.w_s = Tensor({c.dim, c.dim});
    a.w_c = Tensor({c.dim, c.dim});
    return a;
}

ConvFfnParams make_ffn(std::size_t d_in, std::size_t d_hidden, std::size_t d_out, double eps) {
    ConvFfnParams f;
    f.conv3_kernel = Tensor({d_hidden, d_in, 3, 3});
    f.conv3_bias = Tensor({d_hidden});
    f.bn = BnParams::identity(d_hidden, eps);
    f.conv1_kernel = Tensor({d_out, d_hidden, 1, 1});
    f.conv1_bias = Tensor({d_out});
    return f;
}

SelfAttentionBlockParams make_self_block(const TippConfig& c, std::size_t level) {
    SelfAttentionBlockParams b;
    b.norm1 = BnParams::identity(c.dim, c.bn_eps);
    b.norm2 = BnParams::identity(c.dim, c.bn_eps);
    b.attn = make_attention(c, level);
    b.ffn = make_ffn(c.dim, c.dim, c.dim, c.bn_eps);
    return b;
}

CrossAttentionBlockParams make_cross_block(const TippConfig& c, std::size_t level) {
    CrossAttentionBlockParams b;
    b.norm_rgb = BnParams::identity(c.dim, c.bn_eps);
    b.norm_dt = BnParams::identity(c.dim, c.bn_eps);
    b.attn_rgb_query = make_attention(c, level);
    b.attn_dt_query = make_attention(c, level);
    b.norm_fused = BnParams::identity(2 * c.dim, c.bn_eps);
    b.ffn = make_ffn(2 * c.dim, c.dim, c.dim, c.bn_eps);
    return b;
}

// --- weight enumeration -------------------------------------------------

using Visitor = std::function<void(const WeightRef&)>;

void visit_tensor(const Visitor& fn, const std::string& name, Tensor& t, WeightKind kind,
                  std::size_t fan_in = 0) {
    WeightRef r;
    r.name = name;
    r.tensor = &t;
    r.kind = kind;
    r.fan_in = fan_in;
    fn(r);
}

void visit_scalar(const Visitor& fn, const std::string& name, double& s) {
    WeightRef r;
    r.name = name;
    r.scalar = &s;
    r.kind = WeightKind::mix_coef;
    fn(r);
}

void visit_bn(const Visitor& fn, const std::string& prefix, BnParams& p) {
    visit_tensor(fn, prefix + ".mean", p.mean, WeightKind::bn_mean);
    visit_tensor(fn, prefix + ".var", p.var, WeightKind::bn_var);
    visit_tensor(fn, prefix + ".gamma", p.gamma, WeightKind::bn_gamma);
    visit_tensor(fn, prefix + ".beta", p.beta, WeightKind::bn_beta);
}

void visit_attention(const Visitor& fn, const std::string& prefix, AttentionParams& a) {
    const std::size_t fan = a.dim;
    visit_tensor(fn, prefix + ".wq", a.w_q, WeightKind::learned, fan);
    visit_tensor(fn, prefix + ".wk", a.w_k, WeightKind::learned, fan);
    visit_tensor(fn, prefix + ".wv", a.w_v, WeightKind::learned, fan);
    visit_tensor(fn, prefix + ".ws", a.w_s, WeightKind::learned, fan);
    visit_tensor(fn, prefix + ".wc", a.w_c, WeightKind::learned, fan);
    visit_scalar(fn, prefix + ".alpha", a.alpha);
    visit_scalar(fn, prefix + ".beta", a.beta);
}

void visit_ffn(const Visitor& fn, const std::string& prefix, ConvFfnParams& f) {
    visit_tensor(fn, prefix + ".conv3.kernel", f.conv3_kernel, WeightKind::learned,
                 f.d_in() * 9);
    visit_tensor(fn, prefix + ".conv3.bias", f.conv3_bias, WeightKind::learned, f.d_in() * 9);
    visit_bn(fn, prefix + ".bn", f.bn);
    visit_tensor(fn, prefix + ".conv1.kernel", f.conv1_kernel, WeightKind::learned, f.d_hidden());
    visit_tensor(fn, prefix + ".conv1.bias", f.conv1_bias, WeightKind::learned, f.d_hidden());
}

void visit_self_block(const Visitor& fn, const std::string& prefix, SelfAttentionBlockParams& b) {
    visit_bn(fn, prefix + ".norm1", b.norm1);
    visit_attention(fn, prefix + ".attn", b.attn);
    visit_bn(fn, prefix + ".norm2", b.norm2);
    visit_ffn(fn, prefix + ".ffn", b.ffn);
}

void visit_cross_block(const Visitor& fn, const std::string& prefix,
                       CrossAttentionBlockParams& b) {
    visit_bn(fn, prefix + ".norm_rgb", b.norm_rgb);
    visit_bn(fn, prefix + ".norm_dt", b.norm_dt);
    visit_attention(fn, prefix + ".attn_rgb_query", b.attn_rgb_query);
    visit_attention(fn, prefix + ".attn_dt_query", b.attn_dt_query);
    visit_bn(fn, prefix + ".norm_fused", b.norm_fused);
    visit_ffn(fn, prefix + ".ffn", b.ffn);
}

std::string grid_string(std::size_t h, std::size_t w, std::size_t c) {
    return detail::msg(h, "x", w, "x", c);
}

}  // namespace

TippWeights make_weights(const TippConfig& config) {
    config.validate();
    TippWeights w;
    for (std::size_t i = 0; i < 4; ++i) {
        CmiuParams& u = w.cmiu[i];
        const std::size_t ci = config.levels[i].c;
        u.embed_rgb_kernel = Tensor({config.dim, ci, 1, 1});
        u.embed_rgb_bias = Tensor({config.dim});
        u.embed_dt_kernel = Tensor({config.dim, ci, 1, 1});
        u.embed_dt_bias = Tensor({config.dim});
        u.imsa_rgb = make_self_block(config, i);
        u.imsa_dt = make_self_block(config, i);
        u.imca = make_cross_block(config, i);
        u.cssa = make_self_block(config, i);
    }
    w.predictor = make_ffn(config.dim, config.predictor_hidden, 1, config.bn_eps);
    return w;
}

void for_each_weight(TippWeights& w, const Visitor& fn) {
    for (std::size_t i = 0; i < 4; ++i) {
        CmiuParams& u = w.cmiu[i];
        const std::string p = "cmiu" + std::to_string(i + 1);
        const std::size_t ci = u.embed_rgb_kernel.extent(1);
        visit_tensor(fn, p + ".embed_rgb.conv.kernel", u.embed_rgb_kernel, WeightKind::learned,
                     ci);
        visit_tensor(fn, p + ".embed_rgb.conv.bias", u.embed_rgb_bias, WeightKind::learned, ci);
        visit_tensor(fn, p + ".embed_dt.conv.kernel", u.embed_dt_kernel, WeightKind::learned, ci);
        visit_tensor(fn, p + ".embed_dt.conv.bias", u.embed_dt_bias, WeightKind::learned, ci);
        visit_self_block(fn, p + ".imsa_rgb", u.imsa_rgb);
        visit_self_block(fn, p + ".imsa_dt", u.imsa_dt);
        visit_cross_block(fn, p + ".imca", u.imca);
        visit_self_block(fn, p + ".cssa", u.cssa);
    }
    visit_ffn(fn, "predictor", w.predictor);
}

TippWeights init_weights(const TippConfig& config, Rng& rng) {
    TippWeights w = make_weights(config);
    for_each_weight(w, [&](const WeightRef& r) {
        switch (r.kind) {
            case WeightKind::learned: {
                const double s = 1.0 / std::sqrt(static_cast<double>(r.fan_in));
                for (std::size_t i = 0; i < r.tensor->size(); ++i)
                    r.tensor->data()[i] = rng.uniform(-s, s);
                break;
            }
            case WeightKind::bn_mean:
            case WeightKind::bn_beta:
                for (std::size_t i = 0; i < r.tensor->size(); ++i) r.tensor->data()[i] = 0.0;
                break;
            case WeightKind::bn_var:
            case WeightKind::bn_gamma:
                for (std::size_t i = 0; i < r.tensor->size(); ++i) r.tensor->data()[i] = 1.0;
                break;
            case WeightKind::mix_coef:
                *r.scalar = 0.5;
                break;
        }
    });
    return w;
}

TippWeights init_weights(const TippConfig& config) {
    Rng rng(config.seed);
    return init_weights(config, rng);
}

void save_weights(TippWeights& w, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    std::string manifest;
    for_each_weight(w, [&](const WeightRef& r) {
        std::string extents;
        if (r.tensor) {
            io::write_cavr(dir / (r.name + ".cavr"), *r.tensor);
            extents = shape_string(*r.tensor);
        } else {
            io::write_cavr(dir / (r.name + ".cavr"), Tensor({1}, {*r.scalar}));
            extents = "1";
        }
        manifest += r.name + " = " + extents + "\n";
    });
    io::write_text_file(dir / "manifest.txt", manifest);
}

TippWeights load_weights(const TippConfig& config, const std::filesystem::path& dir) {
    TippWeights w = make_weights(config);
    for_each_weight(w, [&](const WeightRef& r) {
        const std::filesystem::path path = dir / (r.name + ".cavr");
        if (!std::filesystem::exists(path))
            throw WeightError(detail::msg("missing weight tensor: ", r.name, " (expected at ",
                                          path.string(), ")"));
        Tensor t = io::read_cavr(path);
        if (r.tensor) {
            if (t.shape() != r.tensor->shape())
                throw WeightError(detail::msg("weight tensor ", r.name, " has extents ",
                                              shape_string(t), ", config expects ",
                                              shape_string(*r.tensor)));
            *r.tensor = std::move(t);
        } else {
            if (t.rank() != 1 || t.extent(0) != 1)
                throw WeightError(detail::msg("weight scalar ", r.name,
                                              " must be a single value, file holds ",
                                              shape_string(t)));
            *r.scalar = t(0);
        }
    });
    return w;
}

FeaturePyramid synthetic_features(const TippConfig& config, std::uint64_t seed) {
    config.validate();
    Rng rng(seed);
    FeaturePyramid features;
    for (std::size_t i = 0; i < 4; ++i) {
        const LevelGeometry& g = config.levels[i];
        for (Tensor* t : {&features[i].rgb, &features[i].dt}) {
            *t = Tensor({g.h, g.w, g.c});
            for (std::size_t j = 0; j < t->size(); ++j) t->data()[j] = rng.normal();
        }
    }
    return features;
}

Tensor cmiu_forward(const Tensor& f_rgb, const Tensor& f_dt, const Tensor* f_prev,
                    const CmiuParams& params, const TippConfig& config, std::size_t level_index,
                    std::vector<std::string>* shape_trace) {
    const LevelGeometry& g = config.levels.at(level_index);
    const std::string name = "cmiu" + std::to_string(level_index + 1);
    const auto check_stream = [&](const Tensor& t, const char* which) {
        if (t.rank() != 3 || t.extent(0) != g.h || t.extent(1) != g.w || t.extent(2) != g.c)
            throw ShapeError(detail::msg("level ", level_index + 1, ": ", which, " features are ",
                                         shape_string(t), ", expected ",
                                         grid_string(g.h, g.w, g.c)));
    };
    check_stream(f_rgb, "rgb");
    check_stream(f_dt, "depth/thermal");
    if (f_prev) {
        if (f_prev->rank() != 3 || f_prev->extent(0) * 2 != g.h || f_prev->extent(1) * 2 != g.w ||
            f_prev->extent(2) != config.dim)
            throw ShapeError(detail::msg("level ", level_index + 1,
                                         ": coarser-level input is ", shape_string(*f_prev),
                                         ", expected ",
                                         grid_string(g.h / 2, g.w / 2, config.dim)));
    }
    const auto log = [&](const std::string& line) {
        if (shape_trace) shape_trace->push_back(line);
    };

    CostTracker::Section cm(name);
    Tensor emb_rgb, emb_dt;
    {
        CostTracker::Section s("embed_rgb");
        emb_rgb = ops::conv2d(f_rgb, params.embed_rgb_kernel, &params.embed_rgb_bias);
        log(name + ".embed_rgb: " + shape_string(f_rgb) + " -> " + shape_string(emb_rgb));
    }
    {
        CostTracker::Section s("embed_dt");
        emb_dt = ops::conv2d(f_dt, params.embed_dt_kernel, &params.embed_dt_bias);
        log(name + ".embed_dt: " + shape_string(f_dt) + " -> " + shape_string(emb_dt));
    }
    TokenSequence x_rgb, x_dt;
    {
        CostTracker::Section s("imsa_rgb");
        x_rgb = self_attention_block(flatten(emb_rgb), params.imsa_rgb, name + ".imsa_rgb");
        log(name + ".imsa_rgb: " + grid_string(g.h, g.w, config.dim) + " -> " +
            grid_string(g.h, g.w, config.dim));
    }
    {
        CostTracker::Section s("imsa_dt");
        x_dt = self_attention_block(flatten(emb_dt), params.imsa_dt, name + ".imsa_dt");
        log(name + ".imsa_dt: " + grid_string(g.h, g.w, config.dim) + " -> " +
            grid_string(g.h, g.w, config.dim));
    }
    TokenSequence f_tilde;
    {
        CostTracker::Section s("imca");
        f_tilde = cross_attention_block(x_rgb, x_dt, params.imca, name + ".imca");
        log(name + ".imca: " + grid_string(g.h, g.w, config.dim) + " + " +
            grid_string(g.h, g.w, config.dim) + " -> " + grid_string(g.h, g.w, config.dim));
    }
    TokenSequence cssa_in = f_tilde;
    if (f_prev) {
        CostTracker::Section s("fuse_prev");
        Tensor up = ops::bilinear_upsample(*f_prev, 2);
        cssa_in = TokenSequence{ops::add(f_tilde.data, flatten(up).data), g.h, g.w};
        log(name + ".fuse_prev: " + shape_string(*f_prev) + " -> " + shape_string(up) +
            ", added to the cross-attention output");
    }
    Tensor out;
    {
        CostTracker::Section s("cssa");
        TokenSequence f_hat = self_attention_block(cssa_in, params.cssa, name + ".cssa");
        log(name + ".cssa: " + grid_string(g.h, g.w, config.dim) + " -> " +
            grid_string(g.h, g.w, config.dim));
        out = unflatten(f_hat);
    }
    return out;
}

SaliencyMap tipp_forward(const FeaturePyramid& features, const TippConfig& config,
                         const TippWeights& weights, std::vector<std::string>* shape_trace) {
    config.validate();
    Tensor current;
    const Tensor* prev = nullptr;
    for (std::size_t i = 4; i-- > 0;) {
        current = cmiu_forward(features[i].rgb, features[i].dt, prev, weights.cmiu[i], config, i,
                               shape_trace);
        prev = &current;
    }
    CostTracker::Section sec("predictor");
    Tensor up;
    {
        CostTracker::Section s("upsample");
        up = ops::bilinear_upsample(current, 4);
        if (shape_trace)
            shape_trace->push_back("predictor.upsample: " + shape_string(current) + " -> " +
                                   shape_string(up));
    }
    Tensor logits;
    {
        CostTracker::Section s("ffn");
        logits = conv_ffn(up, weights.predictor);
        if (shape_trace)
            shape_trace->push_back("predictor.ffn: " + shape_string(up) + " -> " +
                                   shape_string(logits));
    }
    Tensor probs = ops::sigmoid(logits);
    if (shape_trace)
        shape_trace->push_back("predictor.sigmoid: " + shape_string(logits) + " -> " +
                               shape_string(probs));
    probs.ensure_finite("saliency map");
    return SaliencyMap::checked(std::move(probs));
}

}  // namespace caver
