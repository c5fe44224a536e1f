#pragma once

#include <filesystem>
#include <string>

#include "caver/tensor.hpp"

namespace caver::io {

// CAVR v1 container: magic "CAVR", version byte 1, rank byte (1..4),
// rank little-endian uint32 extents, then the elements as row-major
// IEEE-754 binary32 little endian.  Values are widened to doubles on
// read and narrowed on write.
void write_cavr(const std::filesystem::path& path, const Tensor& t);
Tensor read_cavr(const std::filesystem::path& path);

// 8-bit binary PGM (P5), min-max normalized; accepts [H][W] or [H][W][1].
// A constant image maps to all zeros.
void write_pgm(const std::filesystem::path& path, const Tensor& image);

// Whole-file text helpers.  All writers in this module go through a
// temporary file plus rename, so a crash never leaves a torn file behind.
void write_text_file(const std::filesystem::path& path, const std::string& text);
std::string read_text_file(const std::filesystem::path& path);

}  // namespace caver::io
