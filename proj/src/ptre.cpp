#include "caver/ptre.hpp"

#include "caver/errors.hpp"

namespace caver {

TokenSequence flatten(const Tensor& map) {
    if (map.rank() != 3)
        throw ShapeError(detail::msg("flatten: expected [H][W][d], got ", shape_string(map)));
    const std::size_t h = map.extent(0), w = map.extent(1), d = map.extent(2);
    return TokenSequence{map.reshaped({h * w, d}), h, w};
}

Tensor unflatten(const TokenSequence& seq) {
    if (seq.data.rank() != 2)
        throw ShapeError(
            detail::msg("unflatten: expected [N][d], got ", shape_string(seq.data)));
    if (seq.h * seq.w != seq.n_tokens())
        throw ShapeError(detail::msg("unflatten: grid ", seq.h, "x", seq.w, " does not hold ",
                                     seq.n_tokens(), " tokens"));
    return seq.data.reshaped({seq.h, seq.w, seq.dim()});
}

PatchTokenSequence to_patch_tokens(const Tensor& map, std::size_t p) {
    if (map.rank() != 3)
        throw ShapeError(
            detail::msg("to_patch_tokens: expected [H][W][d], got ", shape_string(map)));
    if (p == 0) throw PatchError("to_patch_tokens: patch side must be at least 1");
    const std::size_t h = map.extent(0), w = map.extent(1), d = map.extent(2);
    if (h % p != 0 || w % p != 0)
        throw PatchError(detail::msg("to_patch_tokens: extents ", h, "x", w,
                                     " not divisible by patch side ", p));
    const std::size_t gh = h / p, gw = w / p;
    PatchTokenSequence seq;
    seq.data = Tensor({gh * gw, d * p * p});
    seq.patch_side = p;
    seq.origin_h = h;
    seq.origin_w = w;
    seq.channels = d;
    for (std::size_t ph = 0; ph < gh; ++ph)
        for (std::size_t pw = 0; pw < gw; ++pw) {
            const std::size_t token = ph * gw + pw;
            for (std::size_t py = 0; py < p; ++py)
                for (std::size_t px = 0; px < p; ++px)
                    for (std::size_t c = 0; c < d; ++c)
                        seq.data(token, (py * p + px) * d + c) =
                            map(ph * p + py, pw * p + px, c);
        }
    return seq;
}

Tensor from_patch_tokens(const PatchTokenSequence& seq) {
    const std::size_t p = seq.patch_side, h = seq.origin_h, w = seq.origin_w, d = seq.channels;
    if (p == 0 || h % p != 0 || w % p != 0)
        throw PatchError(detail::msg("from_patch_tokens: extents ", h, "x", w,
                                     " inconsistent with patch side ", p));
    const std::size_t gh = h / p, gw = w / p;
    if (seq.data.rank() != 2 || seq.n_patches() != gh * gw || seq.dim() != d * p * p)
        throw ShapeError(detail::msg("from_patch_tokens: token matrix ", shape_string(seq.data),
                                     " inconsistent with ", h, "x", w, "x", d, " at patch side ",
                                     p));
    Tensor map({h, w, d});
    for (std::size_t ph = 0; ph < gh; ++ph)
        for (std::size_t pw = 0; pw < gw; ++pw) {
            const std::size_t token = ph * gw + pw;
            for (std::size_t py = 0; py < p; ++py)
                for (std::size_t px = 0; px < p; ++px)
                    for (std::size_t c = 0; c < d; ++c)
                        map(ph * p + py, pw * p + px, c) =
                            seq.data(token, (py * p + px) * d + c);
        }
    return map;
}

}  // namespace caver
