#include "caver/rng.hpp"

#include <cmath>

namespace caver {

double Rng::normal() {
    if (has_spare_) {
        has_spare_ = false;
        return spare_;
    }
    // Draw u in (0, 1] so the log is finite.
    double u = 0.0;
    do {
        u = uniform01();
    } while (u == 0.0);
    const double v = uniform01();
    const double r = std::sqrt(-2.0 * std::log(u));
    const double theta = 2.0 * M_PI * v;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
}

}  // namespace caver
