#pragma once

#include <cmath>

#include "lpbf/common.hpp"

namespace lpbf::thermal {

struct LaserState {
    Vec3 focus;                 // m
    double power = 0.0;         // W
    double spot_radius = 80e-6; // m
    double absorptivity = 1.0;  // (0, 1]
};

/// Gaussian surface flux in W/m^2 at lateral distance from the focus.
inline double source_flux(const LaserState& laser, Vec2 surface_point) {
    const double r2 = (surface_point.x - laser.focus.x) * (surface_point.x - laser.focus.x) +
                      (surface_point.y - laser.focus.y) * (surface_point.y - laser.focus.y);
    const double w2 = laser.spot_radius * laser.spot_radius;
    return laser.absorptivity * 2.0 * laser.power / (pi * w2) * std::exp(-2.0 * r2 / w2);
}

/// Fraction of a 1-D marginal of the Gaussian falling in [a, b]. The product
/// of the x and y fractions is the exact share of beam power on a cell.
inline double gaussian_interval_fraction(double a, double b, double center, double spot_radius) {
    const double k = std::sqrt(2.0) / spot_radius;
    return 0.5 * (std::erf(k * (b - center)) - std::erf(k * (a - center)));
}

}  // namespace lpbf::thermal
