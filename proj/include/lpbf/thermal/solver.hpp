#pragma once

// Explicit finite-volume solver for rho dh/dt = lambda lap(T) + q on a uniform
// grid. Each step updates specific enthalpy h(T) (the integral of the apparent
// heat capacity) and inverts it, so latent heat is conserved exactly and the
// effective diffusivity never exceeds lambda / (rho C_p). The stability bound
// therefore only depends on C_p.
//
// Double buffering: each step reads the previous temperature level (with ghost
// cells carrying the boundary conditions) and writes the next one.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "lpbf/common.hpp"
#include "lpbf/scanpath.hpp"
#include "lpbf/thermal/field.hpp"
#include "lpbf/thermal/material.hpp"
#include "lpbf/thermal/probe.hpp"
#include "lpbf/thermal/source.hpp"

namespace lpbf::thermal {

enum class SourceMode {
    surface,     // lateral Gaussian deposited into the top cell layer
    volumetric,  // Gaussian in the full 3-D focal distance, below the surface
};

/// Energy delivered during one step.
struct Deposit {
    double energy = 0.0;  // J absorbed
    Vec2 focus;           // m
    double spot_radius = 80e-6;
};

class HeatSolver {
public:
    /// `dt <= 0` selects default_time_step(safety). Throws StabilityError if
    /// the step is above max_stable_dt.
    explicit HeatSolver(const ThermalField& initial, double dt = 0.0, double safety = 0.4,
                        SourceMode mode = SourceMode::surface)
        : grid_(initial.grid()), bc_(initial.boundary), mat_(initial.material), time_(initial.time), mode_(mode) {
        if (auto v = initial.validate(); !v.empty()) throw ConfigError(v);
        dt_ = dt > 0.0 ? dt : default_time_step(grid_, mat_, safety);
        const double limit = max_stable_dt(grid_, mat_, bc_);
        if (dt_ > limit * (1.0 + 1e-12)) throw StabilityError(dt_, limit);

        px_ = grid_.nx + 2;
        pxy_ = px_ * (grid_.ny + 2);
        T_.assign(pxy_ * (grid_.nz + 2), 0.0);
        for (std::size_t k = 0; k < grid_.nz; ++k)
            for (std::size_t j = 0; j < grid_.ny; ++j)
                for (std::size_t i = 0; i < grid_.nx; ++i) T_[padded(i, j, k)] = initial.temperature(i, j, k);
        Tn_ = T_;
        fx_.assign(grid_.nx, 0.0);
        fy_.assign(grid_.ny, 0.0);
    }

    const Grid& grid() const { return grid_; }
    const MaterialProps& material() const { return mat_; }
    double time() const { return time_; }
    double dt() const { return dt_; }
    std::size_t steps_taken() const { return steps_; }

    double temperature(std::size_t i, std::size_t j, std::size_t k) const { return T_[padded(i, j, k)]; }

    /// Sum of rho h(T) V over all cells, J.
    double total_enthalpy() const { return thermal::total_enthalpy(*this, mat_); }

    /// Per top-surface cell (x-fastest): total time above liquidus and the
    /// longest contiguous interval above liquidus since the last reset, s.
    void enable_surface_melt_tracking() {
        const std::size_t n = grid_.nx * grid_.ny;
        melt_time_.assign(n, 0.0);
        melt_run_.assign(n, 0.0);
        melt_longest_.assign(n, 0.0);
    }
    const std::vector<double>& surface_melt_time() const { return melt_time_; }
    const std::vector<double>& surface_longest_melt() const { return melt_longest_; }
    void reset_surface_longest_melt() { std::fill(melt_longest_.begin(), melt_longest_.end(), 0.0); }

    ThermalField snapshot() const {
        ThermalField f;
        f.geometry = grid_;
        f.boundary = bc_;
        f.material = mat_;
        f.time = time_;
        f.T.resize(grid_.cells());
        for (std::size_t k = 0; k < grid_.nz; ++k)
            for (std::size_t j = 0; j < grid_.ny; ++j)
                for (std::size_t i = 0; i < grid_.nx; ++i) f.T[grid_.index(i, j, k)] = temperature(i, j, k);
        return f;
    }

    /// Source (if any) is absorbed first, then one diffusion step is taken.
    void step(const Deposit* deposit = nullptr) {
        if (deposit && deposit->energy > 0.0) deposit_energy(*deposit);
        fill_ghosts();

        // Enthalpy per unit mass: h = cp T below solidus, cp T + L above
        // liquidus, with the smooth latent term in between.
        const double c = dt_ * mat_.conductivity / (grid_.dx * grid_.dx * mat_.density);
        const double cp = mat_.heat_capacity;
        const double inv_cp = 1.0 / cp;
        const double Ts = mat_.solidus, Tl = mat_.liquidus;
        const double h_sol = cp * Ts;
        const double h_liq = cp * Tl + mat_.latent_heat;
        const double L = mat_.latent_heat;
        const std::size_t nx = grid_.nx, ny = grid_.ny, nz = grid_.nz;
        const auto nxs = static_cast<std::ptrdiff_t>(nx);
        const auto sx = static_cast<std::ptrdiff_t>(px_);
        const auto sxy = static_cast<std::ptrdiff_t>(pxy_);

        for (std::size_t k = 0; k < nz; ++k) {
            for (std::size_t j = 0; j < ny; ++j) {
                const std::size_t row = padded(0, j, k);
                const double* t = T_.data() + row;
                double* tn = Tn_.data() + row;
                // Branch-free so the row vectorises; mushy cells are redone below.
                double mushy = 0.0;
                for (std::ptrdiff_t i = 0; i < nxs; ++i) {
                    const double tc = t[i];
                    const double lap = t[i - 1] + t[i + 1] + t[i - sx] + t[i + sx] + t[i - sxy] + t[i + sxy] -
                                       6.0 * tc;
                    const double lat = tc >= Tl ? L : 0.0;
                    const double hv = cp * tc + lat + c * lap;
                    const double off = hv > h_sol ? L : 0.0;
                    tn[i] = (hv - off) * inv_cp;
                    const double was = (tc > Ts ? 1.0 : 0.0) * (tc < Tl ? 1.0 : 0.0);
                    const double now = (hv > h_sol ? 1.0 : 0.0) * (hv < h_liq ? 1.0 : 0.0);
                    mushy += was + now;
                }
                if (mushy > 0.0) {
                    for (std::ptrdiff_t i = 0; i < nxs; ++i) {
                        const double tc = t[i];
                        const double lap = t[i - 1] + t[i + 1] + t[i - sx] + t[i + sx] + t[i - sxy] + t[i + sxy] -
                                           6.0 * tc;
                        const bool was = tc > Ts && tc < Tl;
                        const double hv = (was ? specific_enthalpy(tc, mat_) : cp * tc + (tc >= Tl ? L : 0.0)) +
                                          c * lap;
                        if (was || (hv > h_sol && hv < h_liq)) tn[i] = temperature_from_enthalpy(hv, mat_);
                    }
                }
            }
        }
        std::swap(T_, Tn_);
        ++steps_;
        time_ += dt_;

        if (!melt_time_.empty()) {
            const std::size_t k = nz - 1;
            for (std::size_t j = 0; j < ny; ++j)
                for (std::size_t i = 0; i < nx; ++i) {
                    const std::size_t c = i + nx * j;
                    if (T_[padded(i, j, k)] > mat_.liquidus) {
                        melt_time_[c] += dt_;
                        melt_run_[c] += dt_;
                        melt_longest_[c] = std::max(melt_longest_[c], melt_run_[c]);
                    } else {
                        melt_run_[c] = 0.0;
                    }
                }
        }
    }

    /// Adds energy (J) to one cell without time stepping; used for impulse tests.
    void add_cell_energy(std::size_t i, std::size_t j, std::size_t k, double joules) {
        double& t = T_[padded(i, j, k)];
        t = temperature_from_enthalpy(specific_enthalpy(t, mat_) + joules / (mat_.density * grid_.cell_volume()), mat_);
    }

private:
    std::size_t padded(std::size_t i, std::size_t j, std::size_t k) const {
        return (i + 1) + px_ * (j + 1) + pxy_ * (k + 1);
    }

    void fill_ghosts() {
        const std::size_t nx = grid_.nx, ny = grid_.ny, nz = grid_.nz;
        auto ghost = [&](const FaceCondition& fc, double inner) {
            return fc.is_fixed() ? 2.0 * fc.temperature - inner : inner;
        };
        const auto& xm = bc_[Face::x_min];
        const auto& xp = bc_[Face::x_max];
        const auto& ym = bc_[Face::y_min];
        const auto& yp = bc_[Face::y_max];
        const auto& zm = bc_[Face::bottom];
        const auto& zp = bc_[Face::top];
        for (std::size_t k = 0; k < nz; ++k)
            for (std::size_t j = 0; j < ny; ++j) {
                const std::size_t row = padded(0, j, k);
                T_[row - 1] = ghost(xm, T_[row]);
                T_[row + nx] = ghost(xp, T_[row + nx - 1]);
            }
        for (std::size_t k = 0; k < nz; ++k)
            for (std::size_t i = 0; i < nx; ++i) {
                const std::size_t lo = padded(i, 0, k), hi = padded(i, ny - 1, k);
                T_[lo - px_] = ghost(ym, T_[lo]);
                T_[hi + px_] = ghost(yp, T_[hi]);
            }
        for (std::size_t j = 0; j < ny; ++j)
            for (std::size_t i = 0; i < nx; ++i) {
                const std::size_t lo = padded(i, j, 0), hi = padded(i, j, nz - 1);
                T_[lo - pxy_] = ghost(zm, T_[lo]);
                T_[hi + pxy_] = ghost(zp, T_[hi]);
            }
    }

    void heat_cell(std::size_t i, std::size_t j, std::size_t k, double dh) {
        double& t = T_[padded(i, j, k)];
        t = temperature_from_enthalpy(specific_enthalpy(t, mat_) + dh, mat_);
    }

    void deposit_energy(const Deposit& d) {
        if (mode_ == SourceMode::volumetric) {
            deposit_volumetric(d);
            return;
        }
        const double dx = grid_.dx;
        const double reach = 5.0 * d.spot_radius;
        auto window = [&](double c, double origin, std::size_t n, std::vector<double>& frac, std::size_t& lo,
                          std::size_t& hi) {
            const double a = std::floor((c - reach - origin) / dx);
            const double b = std::ceil((c + reach - origin) / dx);
            lo = static_cast<std::size_t>(std::clamp(a, 0.0, static_cast<double>(n)));
            hi = static_cast<std::size_t>(std::clamp(b, 0.0, static_cast<double>(n)));
            for (std::size_t i = lo; i < hi; ++i) {
                const double x0 = origin + static_cast<double>(i) * dx;
                frac[i] = gaussian_interval_fraction(x0, x0 + dx, c, d.spot_radius);
            }
        };
        std::size_t ilo, ihi, jlo, jhi;
        window(d.focus.x, grid_.origin.x, grid_.nx, fx_, ilo, ihi);
        window(d.focus.y, grid_.origin.y, grid_.ny, fy_, jlo, jhi);
        const double scale = d.energy / (mat_.density * grid_.cell_volume());
        const std::size_t k = grid_.nz - 1;
        for (std::size_t j = jlo; j < jhi; ++j)
            for (std::size_t i = ilo; i < ihi; ++i) heat_cell(i, j, k, scale * fx_[i] * fy_[j]);
    }

    // Weights exp(-2 r^2 / w^2) with r measured from the focus on the top face,
    // normalised over the cells they touch so the step energy is exact.
    void deposit_volumetric(const Deposit& d) {
        const double dx = grid_.dx;
        const double reach = 3.0 * d.spot_radius;
        const double w2 = d.spot_radius * d.spot_radius;
        const double ztop = grid_.top_z();
        auto lo_idx = [&](double v, double origin, std::size_t n) {
            return static_cast<std::size_t>(std::clamp(std::floor((v - origin) / dx), 0.0, static_cast<double>(n)));
        };
        auto hi_idx = [&](double v, double origin, std::size_t n) {
            return static_cast<std::size_t>(std::clamp(std::ceil((v - origin) / dx), 0.0, static_cast<double>(n)));
        };
        const std::size_t ilo = lo_idx(d.focus.x - reach, grid_.origin.x, grid_.nx),
                          ihi = hi_idx(d.focus.x + reach, grid_.origin.x, grid_.nx),
                          jlo = lo_idx(d.focus.y - reach, grid_.origin.y, grid_.ny),
                          jhi = hi_idx(d.focus.y + reach, grid_.origin.y, grid_.ny),
                          klo = lo_idx(ztop - reach, grid_.origin.z, grid_.nz);
        scratch_.clear();
        double total = 0.0;
        for (std::size_t k = klo; k < grid_.nz; ++k)
            for (std::size_t j = jlo; j < jhi; ++j)
                for (std::size_t i = ilo; i < ihi; ++i) {
                    const Vec3 c = grid_.cell_center(i, j, k);
                    const double r2 = (c.x - d.focus.x) * (c.x - d.focus.x) + (c.y - d.focus.y) * (c.y - d.focus.y) +
                                      (c.z - ztop) * (c.z - ztop);
                    const double w = std::exp(-2.0 * r2 / w2);
                    scratch_.push_back(w);
                    total += w;
                }
        if (total <= 0.0) return;
        const double scale = d.energy / (mat_.density * grid_.cell_volume() * total);
        std::size_t n = 0;
        for (std::size_t k = klo; k < grid_.nz; ++k)
            for (std::size_t j = jlo; j < jhi; ++j)
                for (std::size_t i = ilo; i < ihi; ++i) heat_cell(i, j, k, scale * scratch_[n++]);
    }

    Grid grid_;
    BoundarySpec bc_;
    MaterialProps mat_;
    double time_ = 0.0;
    double dt_ = 0.0;
    SourceMode mode_;
    std::size_t steps_ = 0;
    std::size_t px_ = 0, pxy_ = 0;
    std::vector<double> T_, Tn_;
    std::vector<double> fx_, fy_, scratch_;
    std::vector<double> melt_time_, melt_run_, melt_longest_;
};

/// One explicit step as a pure function of the field. The focus is held at
/// `laser.focus` for the whole step.
inline ThermalField step(const ThermalField& field, const LaserState& laser, double dt,
                         SourceMode mode = SourceMode::surface) {
    if (!(dt > 0.0)) throw ConfigError({"dt must be > 0"});
    HeatSolver s(field, dt, 0.4, mode);
    Deposit d{laser.absorptivity * laser.power * dt, {laser.focus.x, laser.focus.y}, laser.spot_radius};
    s.step(&d);
    return s.snapshot();
}

/// Passed to the per-step observer of run().
struct StepInfo {
    std::size_t step = 0;
    double time = 0.0;         // s, end of step
    TrajectoryPoint point;     // mm, focus at end of step
    int layer = 0;
};

struct RunSettings {
    double power = 170.0;          // W
    double spot_radius = 80e-6;    // m
    double absorptivity = 1.0;
    double dt = 0.0;               // <= 0: default_time_step(safety)
    double safety = 0.4;
    double sample_dt = 0.0;        // probe cadence; <= 0: every step
    double cooldown = 0.0;         // s of laser-off relaxation after the last segment
    SourceMode source = SourceMode::surface;
    bool track_surface_melt = false;
    double peak_prominence = default_peak_prominence;
    std::function<void(const HeatSolver&, const StepInfo&)> observer;
};

struct RunResult {
    std::vector<ProbeHistory> probes;
    ThermalField final_field;
    std::vector<double> surface_melt_time;  // per top cell, s (if tracked)
    // Per top cell, mean over layers of the longest contiguous interval above
    // liquidus within each layer, s (if tracked).
    std::vector<double> surface_longest_melt;
    double dt = 0.0;
    std::size_t steps = 0;
    double absorbed_energy = 0.0;  // J
};

inline constexpr double mm = 1e-3;

/// Drives the laser along `patterns` (mm, s) over `field` (m). Probe positions
/// are in metres in the field frame.
inline RunResult run(std::span<const ScanPattern> patterns, const ThermalField& field, const RunSettings& settings,
                     std::span<const Vec3> probes) {
    for (const auto& p : probes)
        if (!field.grid().contains(p))
            throw RangeError("probe (" + std::to_string(p.x) + ", " + std::to_string(p.y) + ", " +
                             std::to_string(p.z) + ") m outside thermal domain");
    if (!(settings.spot_radius > 0.0) || !(settings.power >= 0.0) ||
        !(settings.absorptivity > 0.0 && settings.absorptivity <= 1.0))
        throw ConfigError({"laser settings need spot_radius > 0, power >= 0, absorptivity in (0, 1]"});

    TrajectoryCursor cursor(patterns);
    ThermalField start = field;
    const double t0 = patterns.empty() ? field.time : cursor.t_begin();
    start.time = t0;
    HeatSolver solver(start, settings.dt, settings.safety, settings.source);
    if (settings.track_surface_melt) solver.enable_surface_melt_tracking();

    const double dt = solver.dt();
    const double t_stop = (patterns.empty() ? t0 : cursor.t_end()) + settings.cooldown;
    const auto n_steps = static_cast<std::size_t>(std::ceil((t_stop - t0) / dt - 1e-9));
    const std::size_t stride =
        settings.sample_dt > 0.0 ? std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(settings.sample_dt / dt)))
                                 : 1;

    RunResult res;
    res.dt = dt;
    res.probes.resize(probes.size());
    auto sample = [&](double t) {
        for (std::size_t p = 0; p < probes.size(); ++p) {
            res.probes[p].times.push_back(t);
            res.probes[p].temperatures.push_back(sample_trilinear(solver, probes[p]));
        }
    };
    for (std::size_t p = 0; p < probes.size(); ++p) res.probes[p].position = probes[p];
    sample(t0);

    const double absorbed_power = settings.absorptivity * settings.power;
    std::size_t layers_seen = 0;
    int layer = patterns.empty() ? 0 : patterns.front().layer_index;
    auto fold_longest = [&] {
        if (!settings.track_surface_melt) return;
        const auto& l = solver.surface_longest_melt();
        if (res.surface_longest_melt.empty()) res.surface_longest_melt.assign(l.size(), 0.0);
        for (std::size_t c = 0; c < l.size(); ++c) res.surface_longest_melt[c] += l[c];
        solver.reset_surface_longest_melt();
        ++layers_seen;
    };
    for (std::size_t n = 0; n < n_steps; ++n) {
        const double ta = t0 + static_cast<double>(n) * dt;
        const double tb = t0 + static_cast<double>(n + 1) * dt;
        const Exposure e = cursor.exposure(ta, tb);
        if (e.on_time > 0.0 && absorbed_power > 0.0) {
            Deposit d{absorbed_power * e.on_time, {e.centroid.x * mm, e.centroid.y * mm}, settings.spot_radius};
            res.absorbed_energy += d.energy;
            solver.step(&d);
        } else {
            solver.step(nullptr);
        }
        if (settings.observer || settings.track_surface_melt) {
            StepInfo info;
            info.step = n + 1;
            info.time = tb;
            info.point = cursor.at(tb, &info.layer);
            if (settings.track_surface_melt && info.layer != layer) {
                fold_longest();
                layer = info.layer;
            }
            if (settings.observer) settings.observer(solver, info);
        }
        if ((n + 1) % stride == 0 || n + 1 == n_steps) sample(tb);
    }

    for (auto& h : res.probes) h.metrics = probe_metrics(h, field.material, settings.peak_prominence);
    res.final_field = solver.snapshot();
    res.surface_melt_time = solver.surface_melt_time();
    fold_longest();
    for (double& v : res.surface_longest_melt) v /= static_cast<double>(layers_seen);
    res.steps = n_steps;
    return res;
}

}  // namespace lpbf::thermal
