#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <concepts>
#include <cstddef>
#include <string>
#include <vector>

#include "lpbf/common.hpp"
#include "lpbf/thermal/material.hpp"

namespace lpbf::thermal {

/// Uniform cell-centred grid. Cell (i, j, k) covers
/// origin + [i, i+1) * dx along x, likewise y and z. The top face is z = origin.z + nz * dx.
struct Grid {
    std::size_t nx = 2, ny = 2, nz = 2;
    double dx = 10e-6;  // m
    Vec3 origin;        // lower corner, m

    std::size_t cells() const { return nx * ny * nz; }
    std::size_t index(std::size_t i, std::size_t j, std::size_t k) const { return i + nx * (j + ny * k); }
    double cell_volume() const { return dx * dx * dx; }
    double top_z() const { return origin.z + static_cast<double>(nz) * dx; }
    Vec3 cell_center(std::size_t i, std::size_t j, std::size_t k) const {
        return {origin.x + (static_cast<double>(i) + 0.5) * dx, origin.y + (static_cast<double>(j) + 0.5) * dx,
                origin.z + (static_cast<double>(k) + 0.5) * dx};
    }
    bool contains(Vec3 p, double tol = 1e-12) const {
        const double hx = static_cast<double>(nx) * dx, hy = static_cast<double>(ny) * dx,
                     hz = static_cast<double>(nz) * dx;
        return p.x >= origin.x - tol && p.x <= origin.x + hx + tol && p.y >= origin.y - tol &&
               p.y <= origin.y + hy + tol && p.z >= origin.z - tol && p.z <= origin.z + hz + tol;
    }

    friend bool operator==(const Grid&, const Grid&) = default;
};

enum class Face : std::size_t { x_min = 0, x_max, y_min, y_max, bottom, top };

struct FaceCondition {
    enum class Kind { adiabatic, fixed } kind = Kind::adiabatic;
    double temperature = 0.0;  // K, used when fixed

    static FaceCondition adiabatic_face() { return {}; }
    static FaceCondition fixed_face(double T) { return {Kind::fixed, T}; }
    bool is_fixed() const { return kind == Kind::fixed; }

    friend bool operator==(const FaceCondition&, const FaceCondition&) = default;
};

inline constexpr double build_plate_temperature = 373.15;

struct BoundarySpec {
    std::array<FaceCondition, 6> faces{};

    FaceCondition& operator[](Face f) { return faces[static_cast<std::size_t>(f)]; }
    const FaceCondition& operator[](Face f) const { return faces[static_cast<std::size_t>(f)]; }

    static BoundarySpec all_adiabatic() { return {}; }
    /// Heated build plate below, everything else insulated.
    static BoundarySpec build_plate(double T = build_plate_temperature) {
        BoundarySpec b;
        b[Face::bottom] = FaceCondition::fixed_face(T);
        return b;
    }

    friend bool operator==(const BoundarySpec&, const BoundarySpec&) = default;
};

/// Read-only access used by samplers; satisfied by ThermalField and HeatSolver.
template <class F>
concept TemperatureField = requires(const F& f, std::size_t i) {
    { f.grid() } -> std::convertible_to<const Grid&>;
    { f.temperature(i, i, i) } -> std::convertible_to<double>;
};

struct ThermalField {
    Grid geometry;
    std::vector<double> T;  // K, x-fastest
    BoundarySpec boundary;
    MaterialProps material;
    double time = 0.0;  // s

    const Grid& grid() const { return geometry; }
    double temperature(std::size_t i, std::size_t j, std::size_t k) const { return T[geometry.index(i, j, k)]; }

    std::vector<std::string> validate() const {
        std::vector<std::string> v = material.validate();
        if (geometry.nx < 2 || geometry.ny < 2 || geometry.nz < 2) v.push_back("grid needs >= 2 cells per axis");
        if (!(geometry.dx > 0.0)) v.push_back("grid spacing must be > 0");
        if (T.size() != geometry.cells()) v.push_back("temperature array size does not match grid");
        for (double t : T)
            if (!(t >= 0.0) || !std::isfinite(t)) {
                v.push_back("temperatures must be finite and >= 0 K");
                break;
            }
        return v;
    }
};

inline ThermalField make_uniform_field(const Grid& g, double T0, const BoundarySpec& bc = BoundarySpec::build_plate(),
                                       const MaterialProps& m = {}) {
    ThermalField f;
    f.geometry = g;
    f.T.assign(g.cells(), T0);
    f.boundary = bc;
    f.material = m;
    return f;
}

/// Total enthalpy relative to 0 K, J.
template <TemperatureField F>
double total_enthalpy(const F& f, const MaterialProps& m) {
    const Grid& g = f.grid();
    double sum = 0.0;
    for (std::size_t k = 0; k < g.nz; ++k)
        for (std::size_t j = 0; j < g.ny; ++j)
            for (std::size_t i = 0; i < g.nx; ++i) sum += specific_enthalpy(f.temperature(i, j, k), m);
    return sum * m.density * g.cell_volume();
}

/// Largest explicit step that keeps every stencil weight non-negative.
/// A fixed face is imposed half a cell from the adjacent centre, which adds one
/// to the coefficient sum of cells on that axis.
inline double max_stable_dt(const Grid& g, const MaterialProps& m, const BoundarySpec& bc) {
    int extra = 0;
    for (std::size_t axis = 0; axis < 3; ++axis)
        if (bc.faces[2 * axis].is_fixed() || bc.faces[2 * axis + 1].is_fixed()) ++extra;
    return g.dx * g.dx * m.density * m.heat_capacity / (m.conductivity * (6.0 + extra));
}

/// safety * dx^2 rho C_p / (6 lambda).
inline double default_time_step(const Grid& g, const MaterialProps& m, double safety = 0.4) {
    return safety * g.dx * g.dx * m.density * m.heat_capacity / (6.0 * m.conductivity);
}

/// Trilinear interpolation between cell centres; clamped to the outermost
/// centres inside the domain. Throws RangeError outside the domain box.
template <TemperatureField F>
double sample_trilinear(const F& f, Vec3 p) {
    const Grid& g = f.grid();
    if (!g.contains(p, 1e-9 * g.dx))
        throw RangeError("point (" + std::to_string(p.x) + ", " + std::to_string(p.y) + ", " + std::to_string(p.z) +
                         ") m outside thermal domain");
    auto axis = [&](double coord, double origin, std::size_t n, std::size_t& i0, double& frac) {
        double u = (coord - origin) / g.dx - 0.5;
        u = std::clamp(u, 0.0, static_cast<double>(n - 1));
        i0 = std::min(static_cast<std::size_t>(u), n - 2);
        frac = u - static_cast<double>(i0);
    };
    std::size_t i, j, k;
    double fx, fy, fz;
    axis(p.x, g.origin.x, g.nx, i, fx);
    axis(p.y, g.origin.y, g.ny, j, fy);
    axis(p.z, g.origin.z, g.nz, k, fz);
    auto lerp = [](double a, double b, double t) { return a + t * (b - a); };
    const double c00 = lerp(f.temperature(i, j, k), f.temperature(i + 1, j, k), fx);
    const double c10 = lerp(f.temperature(i, j + 1, k), f.temperature(i + 1, j + 1, k), fx);
    const double c01 = lerp(f.temperature(i, j, k + 1), f.temperature(i + 1, j, k + 1), fx);
    const double c11 = lerp(f.temperature(i, j + 1, k + 1), f.temperature(i + 1, j + 1, k + 1), fx);
    return lerp(lerp(c00, c10, fy), lerp(c01, c11, fy), fz);
}

}  // namespace lpbf::thermal
