#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

namespace poinv {

/// Evenly spaced points lo, lo+dx, ... up to hi (inclusive when hi is on the lattice).
inline std::vector<double> build_grid(double lo, double hi, double dx) {
    if (!(dx > 0)) throw std::invalid_argument("build_grid: step must be > 0");
    if (!(hi >= lo)) throw std::invalid_argument("build_grid: upper bound below lower bound");
    const auto n = static_cast<std::size_t>(std::floor((hi - lo) / dx + 1e-9)) + 1;
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i) out[i] = lo + static_cast<double>(i) * dx;
    return out;
}

}  // namespace poinv
