#pragma once

#include <algorithm>
#include <cstddef>
#include <vector>

#include "lpbf/common.hpp"
#include "lpbf/thermal/material.hpp"

namespace lpbf::thermal {

/// Minimum topographic prominence (K) for a local maximum to count as a peak.
inline constexpr double default_peak_prominence = 50.0;

struct ProbeMetrics {
    double T_peak = 0.0;                    // K
    std::vector<double> peak_times;         // s
    double t_above_liquidus = 0.0;          // s, total measure of {T > T_liq}
    double longest_above_liquidus = 0.0;    // s, longest contiguous interval
    double integral_above_liquidus = 0.0;   // K s, integral of max(T - T_liq, 0)
};

struct ProbeHistory {
    Vec3 position;  // m
    std::vector<double> times;
    std::vector<double> temperatures;
    ProbeMetrics metrics;
};

/// Indices of interior local maxima whose prominence is at least `min_prominence`.
/// Plateaus report their first sample.
inline std::vector<std::size_t> find_peaks(const std::vector<double>& v, double min_prominence) {
    std::vector<std::size_t> out;
    const std::size_t n = v.size();
    std::size_t i = 1;
    while (i + 1 < n) {
        if (v[i] > v[i - 1]) {
            std::size_t j = i;
            while (j + 1 < n && v[j + 1] == v[i]) ++j;
            if (j + 1 < n && v[j + 1] < v[i]) {
                double left_min = v[i];
                for (std::size_t l = i; l-- > 0;) {
                    if (v[l] > v[i]) break;
                    left_min = std::min(left_min, v[l]);
                }
                double right_min = v[i];
                for (std::size_t r = j + 1; r < n; ++r) {
                    if (v[r] > v[i]) break;
                    right_min = std::min(right_min, v[r]);
                }
                if (v[i] - std::max(left_min, right_min) >= min_prominence) out.push_back(i);
            }
            i = j + 1;
        } else {
            ++i;
        }
    }
    return out;
}

/// Metrics treat the history as piecewise linear between samples, so
/// liquidus crossings are located by interpolation.
inline ProbeMetrics probe_metrics(const ProbeHistory& h, const MaterialProps& m,
                                  double min_prominence = default_peak_prominence) {
    ProbeMetrics out;
    const auto& t = h.times;
    const auto& T = h.temperatures;
    if (T.empty()) return out;
    out.T_peak = *std::max_element(T.begin(), T.end());
    for (std::size_t i : find_peaks(T, min_prominence)) out.peak_times.push_back(t[i]);

    const double Tl = m.liquidus;
    double run = 0.0;
    for (std::size_t i = 0; i + 1 < T.size(); ++i) {
        const double dt = t[i + 1] - t[i];
        const double a = T[i] - Tl, b = T[i + 1] - Tl;
        double above = 0.0, area = 0.0;
        if (a > 0.0 && b > 0.0) {
            above = dt;
            area = 0.5 * (a + b) * dt;
        } else if (a > 0.0 || b > 0.0) {
            const double hi = std::max(a, b);
            above = dt * hi / (hi - std::min(a, b));
            area = 0.5 * hi * above;
        }
        out.t_above_liquidus += above;
        out.integral_above_liquidus += area;
        if (a > 0.0 && b > 0.0) {
            run += dt;
        } else if (a > 0.0) {
            run += above;
            out.longest_above_liquidus = std::max(out.longest_above_liquidus, run);
            run = 0.0;
        } else if (b > 0.0) {
            run = above;
        }
        out.longest_above_liquidus = std::max(out.longest_above_liquidus, run);
    }
    return out;
}

}  // namespace lpbf::thermal
