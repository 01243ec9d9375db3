#pragma once

// Material properties and the apparent heat capacity model.
//
// Latent heat is absorbed by a raised-cosine bump over [T_sol, T_liq]:
//
//   C_app(T) = C_p + (L_f / dT) * (1 - cos(2 pi s)),  s = (T - T_sol) / dT
//
// which integrates to exactly L_f and is identical on heating and cooling.
// The solver advances specific enthalpy h(T) = integral of C_app from 0 K, and
// recovers T by inverting h.

#include <cmath>
#include <string>
#include <vector>

#include "lpbf/common.hpp"

namespace lpbf::thermal {

struct MaterialProps {
    double density = 7800.0;        // kg/m^3
    double conductivity = 13.8;     // W/(m K)
    double heat_capacity = 460.0;   // J/(kg K)
    double solidus = 1677.0;        // K
    double liquidus = 1713.0;       // K
    double latent_heat = 247000.0;  // J/kg

    double diffusivity() const { return conductivity / (density * heat_capacity); }
    double mushy_width() const { return liquidus - solidus; }

    std::vector<std::string> validate() const {
        std::vector<std::string> v;
        auto positive = [&](double x, const char* name) {
            if (!(x > 0.0) || !std::isfinite(x)) v.push_back(std::string(name) + " must be > 0");
        };
        positive(density, "density");
        positive(conductivity, "conductivity");
        positive(heat_capacity, "heat_capacity");
        positive(solidus, "solidus");
        positive(liquidus, "liquidus");
        positive(latent_heat, "latent_heat");
        if (!(liquidus > solidus)) v.push_back("liquidus must exceed solidus");
        return v;
    }
};

/// Fraction of latent heat released/absorbed up to T (smooth, in [0, 1]).
inline double melt_fraction(double T, const MaterialProps& m) {
    const double s = (T - m.solidus) / m.mushy_width();
    if (s <= 0.0) return 0.0;
    if (s >= 1.0) return 1.0;
    return s - std::sin(2.0 * pi * s) / (2.0 * pi);
}

inline double latent_bump(double T, const MaterialProps& m) {
    const double s = (T - m.solidus) / m.mushy_width();
    if (s <= 0.0 || s >= 1.0) return 0.0;
    return m.latent_heat / m.mushy_width() * (1.0 - std::cos(2.0 * pi * s));
}

/// J/(kg K).
inline double apparent_heat_capacity(double T, const MaterialProps& m) { return m.heat_capacity + latent_bump(T, m); }

/// Specific enthalpy relative to 0 K, J/kg.
inline double specific_enthalpy(double T, const MaterialProps& m) {
    return m.heat_capacity * T + m.latent_heat * melt_fraction(T, m);
}

/// Inverse of specific_enthalpy. Newton on the melt parameter, bracketed.
inline double temperature_from_enthalpy(double h, const MaterialProps& m) {
    const double cp = m.heat_capacity;
    const double h_sol = cp * m.solidus;
    if (h <= h_sol) return h / cp;
    const double h_liq = cp * m.liquidus + m.latent_heat;
    if (h >= h_liq) return (h - m.latent_heat) / cp;

    const double dT = m.mushy_width();
    const double L = m.latent_heat;
    double lo = 0.0, hi = 1.0;
    double s = (h - h_sol) / (h_liq - h_sol);
    const double tol = 1e-14 * h;
    for (int it = 0; it < 60; ++it) {
        const double g = cp * (m.solidus + s * dT) + L * (s - std::sin(2.0 * pi * s) / (2.0 * pi)) - h;
        if (std::abs(g) <= tol) break;
        if (g > 0.0) hi = s; else lo = s;
        const double dg = cp * dT + L * (1.0 - std::cos(2.0 * pi * s));
        double next = s - g / dg;
        if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
        if (std::abs(next - s) < 1e-15) {
            s = next;
            break;
        }
        s = next;
    }
    return m.solidus + s * dT;
}

}  // namespace lpbf::thermal
