#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

// The `check` subcommand: re-verifies the library's core properties
// against small brute-force reimplementations, independent of the unit
// test suite.

namespace caver::selfcheck {

struct CheckResult {
    std::string name;
    bool passed = false;
    std::string detail;  // failure explanation or a short success note
};

// Runs every property check; on failure, counterexample inputs are
// persisted as CAVR files under out_dir (created on demand).
std::vector<CheckResult> run_all(std::uint64_t seed, const std::filesystem::path& out_dir);

}  // namespace caver::selfcheck
