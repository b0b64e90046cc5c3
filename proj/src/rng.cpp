#include "fedgrpo/rng.hpp"

#include <cmath>
#include <stdexcept>

namespace fedgrpo {

double Rng::normal() {
    // u1 in (0, 1] so the log is finite; u2 in [0, 1).
    double u1 = 1.0 - unit();
    double u2 = unit();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

double Rng::gamma(double alpha) {
    if (!(alpha > 0.0)) {
        throw std::invalid_argument("gamma: alpha must be positive");
    }
    if (alpha < 1.0) {
        double g = gamma(alpha + 1.0);
        double u = 1.0 - unit();  // (0, 1]
        return g * std::pow(u, 1.0 / alpha);
    }
    const double d = alpha - 1.0 / 3.0;
    const double c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
        double x = normal();
        double t = 1.0 + c * x;
        if (t <= 0.0) continue;
        double v = t * t * t;
        double u = unit();
        if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
        if (u > 0.0 && std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) {
            return d * v;
        }
    }
}

std::vector<double> Rng::dirichlet(double concentration, std::size_t n) {
    if (n == 0) {
        throw std::invalid_argument("dirichlet: need at least one component");
    }
    std::vector<double> draws(n);
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        draws[i] = gamma(concentration);
        sum += draws[i];
    }
    for (double& d : draws) d /= sum;
    return draws;
}

}  // namespace fedgrpo
