#include "caver/io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <vector>

#include "caver/errors.hpp"

namespace caver::io {

namespace {

constexpr unsigned char kMagic[4] = {0x43, 0x41, 0x56, 0x52};  // "CAVR"
constexpr unsigned char kVersion = 1;

void append_u32_le(std::string& out, std::uint32_t v) {
    out.push_back(static_cast<char>(v & 0xff));
    out.push_back(static_cast<char>((v >> 8) & 0xff));
    out.push_back(static_cast<char>((v >> 16) & 0xff));
    out.push_back(static_cast<char>((v >> 24) & 0xff));
}

std::uint32_t read_u32_le(const unsigned char* p) {
    return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

void write_file_atomic(const std::filesystem::path& path, const std::string& bytes) {
    const std::filesystem::path tmp = path.string() + ".tmp";
    {
        std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
        if (!f) throw IoError(detail::msg("cannot open ", tmp.string(), " for writing"));
        f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        if (!f) throw IoError(detail::msg("short write to ", tmp.string()));
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec)
        throw IoError(
            detail::msg("cannot move ", tmp.string(), " to ", path.string(), ": ", ec.message()));
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError(detail::msg("cannot open ", path.string()));
    std::ostringstream buf;
    buf << f.rdbuf();
    return std::move(buf).str();
}

}  // namespace

void write_cavr(const std::filesystem::path& path, const Tensor& t) {
    std::string out;
    out.reserve(6 + 4 * t.rank() + 4 * t.size());
    out.append(reinterpret_cast<const char*>(kMagic), 4);
    out.push_back(static_cast<char>(kVersion));
    out.push_back(static_cast<char>(t.rank()));
    for (std::size_t i = 0; i < t.rank(); ++i) {
        if (t.extent(i) > 0xffffffffu)
            throw IoError(detail::msg("extent too large for CAVR: ", t.extent(i)));
        append_u32_le(out, static_cast<std::uint32_t>(t.extent(i)));
    }
    for (std::size_t i = 0; i < t.size(); ++i) {
        const float v = static_cast<float>(t.data()[i]);
        std::uint32_t bits;
        std::memcpy(&bits, &v, 4);
        append_u32_le(out, bits);
    }
    write_file_atomic(path, out);
}

Tensor read_cavr(const std::filesystem::path& path) {
    const std::string bytes = read_file(path);
    const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
    const auto fail = [&](const char* why) {
        throw IoError(detail::msg("malformed CAVR file ", path.string(), ": ", why));
    };
    if (bytes.size() < 6) fail("shorter than the fixed header");
    if (std::memcmp(p, kMagic, 4) != 0) fail("bad magic");
    if (p[4] != kVersion) fail("unsupported version");
    const std::size_t rank = p[5];
    if (rank < 1 || rank > 4) fail("rank outside 1..4");
    if (bytes.size() < 6 + 4 * rank) fail("truncated extent list");
    std::vector<std::size_t> shape(rank);
    std::size_t count = 1;
    for (std::size_t i = 0; i < rank; ++i) {
        shape[i] = read_u32_le(p + 6 + 4 * i);
        if (shape[i] == 0) fail("zero extent");
        count *= shape[i];
    }
    const std::size_t payload_at = 6 + 4 * rank;
    if (bytes.size() != payload_at + 4 * count)
        fail(bytes.size() < payload_at + 4 * count ? "truncated payload" : "trailing bytes");
    std::vector<double> values(count);
    for (std::size_t i = 0; i < count; ++i) {
        const std::uint32_t bits = read_u32_le(p + payload_at + 4 * i);
        float v;
        std::memcpy(&v, &bits, 4);
        values[i] = static_cast<double>(v);
    }
    Tensor t(shape, std::move(values));
    t.ensure_finite(path.string().c_str());
    return t;
}

void write_pgm(const std::filesystem::path& path, const Tensor& image) {
    if (!(image.rank() == 2 || (image.rank() == 3 && image.extent(2) == 1)))
        throw IoError(
            detail::msg("PGM wants a single-channel image, got ", shape_string(image.shape())));
    const std::size_t h = image.extent(0), w = image.extent(1);
    double lo = image.data()[0], hi = image.data()[0];
    for (std::size_t i = 1; i < image.size(); ++i) {
        lo = std::min(lo, image.data()[i]);
        hi = std::max(hi, image.data()[i]);
    }
    std::string out = "P5\n" + std::to_string(w) + " " + std::to_string(h) + "\n255\n";
    out.reserve(out.size() + h * w);
    const double span = hi - lo;
    for (std::size_t i = 0; i < h * w; ++i) {
        const double v = span > 0.0 ? (image.data()[i] - lo) / span : 0.0;
        const long q = std::lround(v * 255.0);
        out.push_back(static_cast<char>(static_cast<unsigned char>(std::clamp(q, 0l, 255l))));
    }
    write_file_atomic(path, out);
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
    write_file_atomic(path, text);
}

std::string read_text_file(const std::filesystem::path& path) { return read_file(path); }

}  // namespace caver::io
