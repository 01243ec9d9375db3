#pragma once

#include <cmath>
#include <cstddef>
#include <numbers>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace lpbf {

inline constexpr double pi = std::numbers::pi;

struct Vec2 {
    double x = 0.0;
    double y = 0.0;

    friend constexpr Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
    friend constexpr Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
    friend constexpr Vec2 operator*(double s, Vec2 a) { return {s * a.x, s * a.y}; }
    friend constexpr Vec2 operator*(Vec2 a, double s) { return {s * a.x, s * a.y}; }
    friend constexpr bool operator==(Vec2, Vec2) = default;
};

inline double norm(Vec2 v) { return std::hypot(v.x, v.y); }
inline double distance(Vec2 a, Vec2 b) { return norm(a - b); }
inline constexpr double dot(Vec2 a, Vec2 b) { return a.x * b.x + a.y * b.y; }

/// Counter-clockwise rotation by `angle_rad` about the origin.
inline Vec2 rotate(Vec2 v, double angle_rad) {
    const double c = std::cos(angle_rad);
    const double s = std::sin(angle_rad);
    return {c * v.x - s * v.y, s * v.x + c * v.y};
}

struct Vec3 {
    double x = 0.0;
    double y = 0.0;
    double z = 0.0;

    friend constexpr bool operator==(Vec3, Vec3) = default;
};

struct Circle {
    Vec2 center;
    double radius = 0.0;
};

inline constexpr double deg_to_rad(double deg) { return deg * pi / 180.0; }

/// Reduces an angle in degrees to [0, 180).
inline double reduce_half_turn(double deg) {
    double a = std::fmod(deg, 180.0);
    if (a < 0.0) a += 180.0;
    if (a >= 180.0) a -= 180.0;
    return a;
}

// Errors. Every failure mode named by a module contract maps to one of these.

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Query outside the valid range of a trajectory or grid.
class RangeError : public Error {
public:
    using Error::Error;
};

/// Malformed or unreadable input file.
class InputError : public Error {
public:
    using Error::Error;
};

/// Explicit time step above the stability bound of the stencil.
class StabilityError : public Error {
public:
    StabilityError(double requested, double max_admissible)
        : Error("time step " + std::to_string(requested) + " s exceeds stability limit; maximum admissible dt = " +
                std::to_string(max_admissible) + " s"),
          requested_dt(requested),
          max_dt(max_admissible) {}

    double requested_dt;
    double max_dt;
};

/// One or more violated configuration invariants. All violations are collected.
class ConfigError : public Error {
public:
    explicit ConfigError(std::vector<std::string> v) : Error(join(v)), violations(std::move(v)) {}

    std::vector<std::string> violations;

private:
    static std::string join(const std::vector<std::string>& v) {
        std::string out;
        for (const auto& s : v) {
            if (!out.empty()) out += "; ";
            out += s;
        }
        return out;
    }
};

/// Regular 2-D lattice over the build plane, in mm. Cell (i, j) spans
/// [x0 + i*cell, x0 + (i+1)*cell) x [y0 + j*cell, y0 + (j+1)*cell).
struct MapFrame {
    double x0 = 0.0;
    double y0 = 0.0;
    double cell = 0.0;
    std::size_t nx = 0;
    std::size_t ny = 0;

    std::size_t size() const { return nx * ny; }
    Vec2 cell_center(std::size_t i, std::size_t j) const {
        return {x0 + (static_cast<double>(i) + 0.5) * cell, y0 + (static_cast<double>(j) + 0.5) * cell};
    }
    /// Returns false if `p` falls outside the lattice.
    bool locate(Vec2 p, std::size_t& i, std::size_t& j) const {
        const double fi = std::floor((p.x - x0) / cell);
        const double fj = std::floor((p.y - y0) / cell);
        if (fi < 0.0 || fj < 0.0 || fi >= static_cast<double>(nx) || fj >= static_cast<double>(ny)) return false;
        i = static_cast<std::size_t>(fi);
        j = static_cast<std::size_t>(fj);
        return true;
    }

    friend bool operator==(const MapFrame&, const MapFrame&) = default;
};

/// Square lattice snapped to multiples of `cell` that covers `c`.
inline MapFrame frame_covering(const Circle& c, double cell) {
    MapFrame f;
    f.cell = cell;
    const double lo_x = std::floor((c.center.x - c.radius) / cell);
    const double lo_y = std::floor((c.center.y - c.radius) / cell);
    const double hi_x = std::ceil((c.center.x + c.radius) / cell);
    const double hi_y = std::ceil((c.center.y + c.radius) / cell);
    f.x0 = lo_x * cell;
    f.y0 = lo_y * cell;
    f.nx = static_cast<std::size_t>(hi_x - lo_x);
    f.ny = static_cast<std::size_t>(hi_y - lo_y);
    return f;
}

}  // namespace lpbf
