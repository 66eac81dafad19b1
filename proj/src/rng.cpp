#include "adapcr/rng.hpp"

#include <cmath>
#include <numbers>

namespace adapcr::rng {

// Box-Muller; one draw per call keeps the stream position predictable.
double normal(Engine& engine) {
    double u1 = uniform01(engine);
    while (u1 <= 0.0) u1 = uniform01(engine);
    const double u2 = uniform01(engine);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

}  // namespace adapcr::rng
