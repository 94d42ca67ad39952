#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace tcm {

// Finite-difference verification battery: every autodiff primitive and every
// training loss, checked against central differences at `points` random
// parameter settings. Returns (name, max relative error) rows.
std::vector<std::pair<std::string, double>> gradient_battery(std::uint64_t seed,
                                                             std::size_t points = 100);

inline constexpr double kGradCheckTolerance = 1e-5;

}  // namespace tcm
