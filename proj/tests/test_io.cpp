#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>

#include <unistd.h>

#include "doctest.h"

#include "caver/io.hpp"
#include "caver/rng.hpp"
#include "caver/tensor.hpp"
#include "oracles.hpp"

using caver::IoError;
using caver::Rng;
using caver::Tensor;
namespace fs = std::filesystem;
namespace io = caver::io;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() /
               ("caver_io_test_" + std::to_string(::getpid()) + "_" +
                std::to_string(counter()++));
        fs::create_directories(path);
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path, ec);
    }
    static int& counter() {
        static int c = 0;
        return c;
    }
};

std::string slurp(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    std::string s((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return s;
}

void spit(const fs::path& p, const std::string& bytes) {
    std::ofstream f(p, std::ios::binary | std::ios::trunc);
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace

TEST_CASE("cavr roundtrip preserves float32-representable values exactly") {
    TempDir tmp;
    const Tensor t({2, 3}, {0.5, -2.25, 1.0, 0.0, 128.0, -0.125});
    io::write_cavr(tmp.path / "t.cavr", t);
    const Tensor back = io::read_cavr(tmp.path / "t.cavr");
    CHECK(back.bit_equal(t));
}

TEST_CASE("cavr roundtrip quantizes to float32 precision") {
    TempDir tmp;
    Rng rng(31);
    const Tensor t = oracles::random_tensor(rng, {3, 4, 2});
    io::write_cavr(tmp.path / "t.cavr", t);
    const Tensor back = io::read_cavr(tmp.path / "t.cavr");
    REQUIRE(back.same_shape(t));
    CHECK(oracles::max_abs_diff(back, t) < 1e-6);
    CHECK(oracles::max_abs_diff(back, t) > 0.0);  // doubles really were narrowed
}

TEST_CASE("cavr header layout is as documented") {
    TempDir tmp;
    const Tensor t({2}, {1.0f, 2.0f});
    io::write_cavr(tmp.path / "t.cavr", t);
    const std::string bytes = slurp(tmp.path / "t.cavr");
    REQUIRE(bytes.size() == 6 + 4 + 8);
    CHECK(bytes.substr(0, 4) == "CAVR");
    CHECK(bytes[4] == 1);  // version
    CHECK(bytes[5] == 1);  // rank
    CHECK(static_cast<unsigned char>(bytes[6]) == 2);  // extent, little-endian
    CHECK(bytes[7] == 0);
}

TEST_CASE("cavr rejects malformed files with specific messages") {
    TempDir tmp;
    const Tensor t({2, 2}, {1, 2, 3, 4});
    io::write_cavr(tmp.path / "good.cavr", t);
    const std::string good = slurp(tmp.path / "good.cavr");

    const auto expect_throw = [&](const std::string& bytes, const char* fragment) {
        spit(tmp.path / "bad.cavr", bytes);
        CHECK_THROWS_WITH_AS(io::read_cavr(tmp.path / "bad.cavr"),
                             doctest::Contains(fragment), IoError);
    };

    std::string wrong_magic = good;
    wrong_magic[0] = 'X';
    expect_throw(wrong_magic, "bad magic");

    std::string wrong_version = good;
    wrong_version[4] = 9;
    expect_throw(wrong_version, "unsupported version");

    std::string wrong_rank = good;
    wrong_rank[5] = 5;
    expect_throw(wrong_rank, "rank outside 1..4");

    expect_throw(good.substr(0, good.size() - 4), "truncated payload");
    expect_throw(good + "zz", "trailing bytes");
    expect_throw(good.substr(0, 3), "shorter than the fixed header");

    CHECK_THROWS_AS(io::read_cavr(tmp.path / "does_not_exist.cavr"), IoError);
}

TEST_CASE("cavr refuses non-finite payloads") {
    TempDir tmp;
    const Tensor t({1}, {1.0});
    io::write_cavr(tmp.path / "t.cavr", t);
    std::string bytes = slurp(tmp.path / "t.cavr");
    // overwrite the payload with the f32 quiet-NaN bit pattern 0x7fc00000
    bytes[10] = 0x00;
    bytes[11] = 0x00;
    bytes[12] = static_cast<char>(0xc0);
    bytes[13] = 0x7f;
    spit(tmp.path / "t.cavr", bytes);
    CHECK_THROWS_AS(io::read_cavr(tmp.path / "t.cavr"), caver::Error);
}

TEST_CASE("pgm writes min-max normalized bytes") {
    TempDir tmp;
    const Tensor t({1, 3}, {0.0, 0.5, 1.0});
    io::write_pgm(tmp.path / "t.pgm", t);
    const std::string bytes = slurp(tmp.path / "t.pgm");
    const std::string header = "P5\n3 1\n255\n";
    REQUIRE(bytes.size() == header.size() + 3);
    CHECK(bytes.substr(0, header.size()) == header);
    CHECK(static_cast<unsigned char>(bytes[header.size() + 0]) == 0);
    CHECK(static_cast<unsigned char>(bytes[header.size() + 1]) == 128);  // lround(127.5)
    CHECK(static_cast<unsigned char>(bytes[header.size() + 2]) == 255);
}

TEST_CASE("pgm maps constant images to black") {
    TempDir tmp;
    io::write_pgm(tmp.path / "t.pgm", Tensor::full({2, 2}, 3.25));
    const std::string bytes = slurp(tmp.path / "t.pgm");
    for (std::size_t i = bytes.size() - 4; i < bytes.size(); ++i) CHECK(bytes[i] == 0);
}

TEST_CASE("pgm accepts trailing singleton channel and rejects multichannel") {
    TempDir tmp;
    CHECK_NOTHROW(io::write_pgm(tmp.path / "a.pgm", Tensor({4, 4, 1})));
    CHECK_THROWS_AS(io::write_pgm(tmp.path / "b.pgm", Tensor({4, 4, 2})), IoError);
}

TEST_CASE("writes leave no temporary files behind") {
    TempDir tmp;
    io::write_cavr(tmp.path / "t.cavr", Tensor({1}, {1.0}));
    io::write_text_file(tmp.path / "t.txt", "hello\n");
    CHECK(io::read_text_file(tmp.path / "t.txt") == "hello\n");
    std::size_t files = 0;
    for (const auto& e : fs::directory_iterator(tmp.path)) {
        ++files;
        CHECK(e.path().extension() != ".tmp");
    }
    CHECK(files == 2);
}
