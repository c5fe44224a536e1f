#pragma once

#include <cstdint>
#include <random>

namespace caver {

// Deterministic random source. The generator sequence of std::mt19937_64 is
// pinned by the standard, and the float mappings below avoid the
// distribution classes (whose output is implementation-defined), so equal
// seeds give bit-identical streams on every platform.
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : gen_(seed), seed_(seed) {}

    static constexpr const char* algorithm = "mt19937_64/bits53";

    std::uint64_t seed() const { return seed_; }

    std::uint64_t next_u64() { return gen_(); }

    // Uniform in [0, 1) with 53 significand bits.
    double uniform01() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

    // Standard normal via Box-Muller; the spare value is cached.
    double normal();

  private:
    std::mt19937_64 gen_;
    std::uint64_t seed_ = 0;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace caver
