#include "doctest.h"

#include "caver/ptre.hpp"
#include "caver/rng.hpp"
#include "caver/tensor.hpp"
#include "oracles.hpp"

using caver::PatchError;
using caver::PatchTokenSequence;
using caver::Rng;
using caver::Tensor;
using caver::TokenSequence;

TEST_CASE("flatten and unflatten are inverse raster reshapes") {
    Rng rng(21);
    const Tensor map = oracles::random_tensor(rng, {4, 6, 3});
    const TokenSequence seq = caver::flatten(map);
    CHECK(seq.n_tokens() == 24);
    CHECK(seq.dim() == 3);
    CHECK(seq.h == 4);
    CHECK(seq.w == 6);
    CHECK(caver::unflatten(seq).bit_equal(map));

    const Tensor tiny = oracles::random_tensor(rng, {1, 1, 5});
    CHECK(caver::flatten(tiny).n_tokens() == 1);

    const Tensor abcd({2, 2, 1}, {1, 2, 3, 4});
    const TokenSequence s2 = caver::flatten(abcd);
    CHECK(s2.data(0, 0) == 1);
    CHECK(s2.data(1, 0) == 2);
    CHECK(s2.data(2, 0) == 3);
    CHECK(s2.data(3, 0) == 4);
}

TEST_CASE("patch fold layout follows the documented convention") {
    // p=1 keeps pixel tokens verbatim
    Rng rng(22);
    const Tensor map = oracles::random_tensor(rng, {3, 5, 2});
    const PatchTokenSequence p1 = caver::to_patch_tokens(map, 1);
    CHECK(p1.data.bit_equal(caver::flatten(map).data));

    // 4x4x1, p=2: first token gathers pixels (0,0),(0,1),(1,0),(1,1)
    Tensor m({4, 4, 1});
    for (std::size_t i = 0; i < 16; ++i) m.data()[i] = static_cast<double>(i);
    const PatchTokenSequence p2 = caver::to_patch_tokens(m, 2);
    CHECK(p2.n_patches() == 4);
    CHECK(p2.dim() == 4);
    CHECK(p2.data(0, 0) == 0);  // (0,0)
    CHECK(p2.data(0, 1) == 1);  // (0,1)
    CHECK(p2.data(0, 2) == 4);  // (1,0)
    CHECK(p2.data(0, 3) == 5);  // (1,1)
    CHECK(p2.data(3, 0) == 10);  // second patch row starts at (2,2)

    // channel-minor within a window pixel
    const Tensor mc = oracles::random_tensor(rng, {2, 2, 3});
    const PatchTokenSequence p3 = caver::to_patch_tokens(mc, 2);
    CHECK(p3.dim() == 12);
    CHECK(p3.data(0, 0 * 3 + 2) == mc(0, 0, 2));
    CHECK(p3.data(0, 1 * 3 + 1) == mc(0, 1, 1));
    CHECK(p3.data(0, 2 * 3 + 0) == mc(1, 0, 0));

    // against the loop-built oracle
    const Tensor big = oracles::random_tensor(rng, {8, 8, 4});
    CHECK(caver::to_patch_tokens(big, 4).data.bit_equal(oracles::patch_tokens(big, 4)));
}

TEST_CASE("single-patch fold keeps the whole map in one token") {
    Rng rng(23);
    const Tensor map = oracles::random_tensor(rng, {4, 4, 2});
    const PatchTokenSequence seq = caver::to_patch_tokens(map, 4);
    CHECK(seq.n_patches() == 1);
    CHECK(seq.dim() == 32);
    CHECK(caver::from_patch_tokens(seq).bit_equal(map));
}

TEST_CASE("patch roundtrip is the bit-exact identity") {
    Rng rng(24);
    for (const std::size_t p : {2ul, 4ul, 8ul}) {
        const std::size_t h = p * (1 + rng.next_u64() % 3);
        const std::size_t w = p * (1 + rng.next_u64() % 3);
        const std::size_t d = 1 + rng.next_u64() % 5;
        const Tensor map = oracles::random_tensor(rng, {h, w, d});
        CHECK(caver::from_patch_tokens(caver::to_patch_tokens(map, p)).bit_equal(map));
    }
}

TEST_CASE("indivisible extents are a hard error naming the geometry") {
    const Tensor map({6, 4, 2});
    CHECK_THROWS_WITH_AS(caver::to_patch_tokens(map, 4), doctest::Contains("6"), PatchError);
    CHECK_THROWS_AS(caver::to_patch_tokens(map, 5), PatchError);
    CHECK_NOTHROW(caver::to_patch_tokens(map, 2));
}

TEST_CASE("from_patch_tokens validates its metadata") {
    Rng rng(25);
    const Tensor map = oracles::random_tensor(rng, {4, 4, 2});
    PatchTokenSequence seq = caver::to_patch_tokens(map, 2);
    seq.channels = 3;  // no longer consistent with dim = channels * p^2
    CHECK_THROWS_AS(caver::from_patch_tokens(seq), caver::Error);
}
