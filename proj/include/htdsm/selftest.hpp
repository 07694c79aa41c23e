#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace htdsm {

struct SelfTestResult {
    std::string name;
    bool passed = false;
    /// Measured quantities in shortest round-trip form; identical across reruns
    /// with the same seed.
    std::string detail;
};

/// Fast invariant suite over every module (a few seconds in total).
std::vector<SelfTestResult> run_selftest(std::uint64_t seed = 0);

}  // namespace htdsm
