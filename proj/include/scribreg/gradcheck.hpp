#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace scribreg {

struct CheckResult {
    std::string name;
    double measured = 0.0;
    double tolerance = 0.0;
    bool pass = false;
    std::string detail;
};

// Oracle equivalence of pair enumeration and loss values.
std::vector<CheckResult> check_oracle_equivalence(std::uint64_t seed, int instances = 100);
// Analytic vs central-difference gradients of each loss and of the full objective.
std::vector<CheckResult> check_gradients(std::uint64_t seed);
// The affinity's feature input never receives gradient.
std::vector<CheckResult> check_stop_gradient(std::uint64_t seed);

// All of the above.
std::vector<CheckResult> run_gradcheck(std::uint64_t seed = 0);

}  // namespace scribreg
