#pragma once

// On-axis photodiode synthesis (I ~ T^4 over the optical field of view) and
// spatial intensity maps built from co-registered signal samples.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "lpbf/common.hpp"
#include "lpbf/tabular.hpp"
#include "lpbf/thermal/field.hpp"

namespace lpbf::signal {

struct SignalSample {
    double t = 0.0;      // s
    double value = 0.0;  // arbitrary units
    Vec2 position;       // mm, focus position at t
    int layer = 0;
};

struct SignalSeries {
    std::vector<SignalSample> samples;
    double gain = 1.0;  // recorded for provenance

    bool empty() const { return samples.empty(); }
    std::size_t size() const { return samples.size(); }
};

namespace detail {

/// Area of the disc of radius r at the origin inside the quadrant u <= x, v <= y.
inline double disc_quadrant_area(double x, double y, double r) {
    if (x <= -r || y <= -r) return 0.0;
    x = std::min(x, r);
    auto G = [r](double u) { return 0.5 * (u * std::sqrt(std::max(0.0, r * r - u * u)) + r * r * std::asin(u / r)); };
    // Integral of sqrt(r^2 - u^2) and of 1 over [a, min(b, x)].
    auto chord = [&](double a, double b) {
        b = std::min(b, x);
        return b > a ? G(b) - G(a) : 0.0;
    };
    auto length = [&](double a, double b) {
        b = std::min(b, x);
        return b > a ? b - a : 0.0;
    };
    if (y >= r) return 2.0 * chord(-r, r);
    const double s = std::sqrt(r * r - y * y);
    const double middle = y * length(-s, s) + chord(-s, s);
    if (y >= 0.0) return 2.0 * chord(-r, -s) + middle + 2.0 * chord(s, r);
    return middle;
}

/// Area of [x0, x1] x [y0, y1] covered by the disc of radius r at the origin.
inline double disc_rect_area(double x0, double x1, double y0, double y1, double r) {
    return disc_quadrant_area(x1, y1, r) - disc_quadrant_area(x0, y1, r) - disc_quadrant_area(x1, y0, r) +
           disc_quadrant_area(x0, y0, r);
}

}  // namespace detail

/// gain * sum over top-surface cells of T^4 times the cell area inside the
/// field of view (disc of radius `r_fov` about `focus`, lateral, m).
template <thermal::TemperatureField F>
double sample_photodiode(const F& field, Vec2 focus, double r_fov, double gain) {
    const thermal::Grid& g = field.grid();
    const double dx = g.dx;
    auto range = [&](double c, double origin, std::size_t n, std::size_t& lo, std::size_t& hi) {
        const double a = std::floor((c - r_fov - origin) / dx);
        const double b = std::ceil((c + r_fov - origin) / dx);
        lo = static_cast<std::size_t>(std::clamp(a, 0.0, static_cast<double>(n)));
        hi = static_cast<std::size_t>(std::clamp(b, 0.0, static_cast<double>(n)));
    };
    std::size_t ilo, ihi, jlo, jhi;
    range(focus.x, g.origin.x, g.nx, ilo, ihi);
    range(focus.y, g.origin.y, g.ny, jlo, jhi);
    const std::size_t k = g.nz - 1;
    // Work in cell units so boundary-cell areas do not cancel against the disc area.
    const double r = r_fov / dx, r2 = r * r;
    const double fx = (focus.x - g.origin.x) / dx, fy = (focus.y - g.origin.y) / dx;
    double sum = 0.0;
    for (std::size_t j = jlo; j < jhi; ++j) {
        const double y0 = static_cast<double>(j) - fy, y1 = y0 + 1.0;
        const double ny = std::max({y0, 0.0, -y1}), fy2 = std::max(y0 * y0, y1 * y1);
        for (std::size_t i = ilo; i < ihi; ++i) {
            const double x0 = static_cast<double>(i) - fx, x1 = x0 + 1.0;
            const double nx = std::max({x0, 0.0, -x1});
            if (nx * nx + ny * ny >= r2) continue;
            const double w =
                std::max(x0 * x0, x1 * x1) + fy2 <= r2 ? 1.0 : detail::disc_rect_area(x0, x1, y0, y1, r);
            const double t = field.temperature(i, j, k);
            const double t2 = t * t;
            sum += w * t2 * t2;
        }
    }
    return gain * sum * dx * dx;
}

/// Additive Gaussian detector noise; values are clipped at zero.
inline void add_noise(SignalSeries& s, double sigma, std::uint64_t seed) {
    if (!(sigma > 0.0)) return;
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> n(0.0, sigma);
    for (auto& x : s.samples) x.value = std::max(0.0, x.value + n(rng));
}

enum class Statistic { max, mean, sum };

inline const char* to_string(Statistic s) {
    switch (s) {
        case Statistic::max: return "max";
        case Statistic::mean: return "mean";
        case Statistic::sum: return "sum";
    }
    return "?";
}

inline std::optional<Statistic> parse_statistic(std::string_view s) {
    if (s == "max") return Statistic::max;
    if (s == "mean") return Statistic::mean;
    if (s == "sum") return Statistic::sum;
    return std::nullopt;
}

/// Per-cell running sum, count and maximum; the declared statistic is a view
/// over them, which keeps merging associative for every statistic.
class IntensityMap {
public:
    IntensityMap() = default;
    IntensityMap(const MapFrame& frame, Statistic stat)
        : frame_(frame), stat_(stat), sum_(frame.size(), 0.0), count_(frame.size(), 0),
          max_(frame.size(), -std::numeric_limits<double>::infinity()) {}

    const MapFrame& frame() const { return frame_; }
    Statistic statistic() const { return stat_; }
    bool empty() const { return frame_.size() == 0; }
    std::size_t outside() const { return outside_; }

    void add(Vec2 p, double v) {
        std::size_t i, j;
        if (!frame_.locate(p, i, j)) {
            ++outside_;
            return;
        }
        const std::size_t c = i + frame_.nx * j;
        sum_[c] += v;
        ++count_[c];
        max_[c] = std::max(max_[c], v);
    }

    std::size_t count(std::size_t i, std::size_t j) const { return count_[i + frame_.nx * j]; }

    /// Statistic of cell (i, j); 0 for cells without samples.
    double value(std::size_t i, std::size_t j) const {
        const std::size_t c = i + frame_.nx * j;
        if (count_[c] == 0) return 0.0;
        switch (stat_) {
            case Statistic::max: return max_[c];
            case Statistic::mean: return sum_[c] / static_cast<double>(count_[c]);
            case Statistic::sum: return sum_[c];
        }
        return 0.0;
    }

    void merge(const IntensityMap& o) {
        if (!(o.frame_ == frame_)) throw Error("cannot merge intensity maps with different frames");
        for (std::size_t c = 0; c < sum_.size(); ++c) {
            sum_[c] += o.sum_[c];
            count_[c] += o.count_[c];
            max_[c] = std::max(max_[c], o.max_[c]);
        }
        outside_ += o.outside_;
    }

private:
    MapFrame frame_;
    Statistic stat_ = Statistic::max;
    std::vector<double> sum_;
    std::vector<std::size_t> count_;
    std::vector<double> max_;
    std::size_t outside_ = 0;
};

/// Lattice snapped to multiples of `cell` around every sample.
inline MapFrame frame_for(std::span<const SignalSeries> series, double cell) {
    double lo_x = HUGE_VAL, lo_y = HUGE_VAL, hi_x = -HUGE_VAL, hi_y = -HUGE_VAL;
    for (const auto& s : series)
        for (const auto& x : s.samples) {
            lo_x = std::min(lo_x, x.position.x);
            lo_y = std::min(lo_y, x.position.y);
            hi_x = std::max(hi_x, x.position.x);
            hi_y = std::max(hi_y, x.position.y);
        }
    MapFrame f;
    f.cell = cell;
    if (lo_x > hi_x) return f;
    const double ix0 = std::floor(lo_x / cell), iy0 = std::floor(lo_y / cell);
    f.x0 = ix0 * cell;
    f.y0 = iy0 * cell;
    f.nx = static_cast<std::size_t>(std::floor(hi_x / cell) - ix0) + 1;
    f.ny = static_cast<std::size_t>(std::floor(hi_y / cell) - iy0) + 1;
    return f;
}

/// Bins every sample by position. With `layer` set only that layer's samples
/// contribute (single-layer map); otherwise all layers do.
inline IntensityMap accumulate_map(std::span<const SignalSeries> series, double cell, Statistic stat,
                                   std::optional<MapFrame> frame = std::nullopt,
                                   std::optional<int> layer = std::nullopt) {
    if (!(cell > 0.0)) throw ConfigError({"map cell size must be > 0"});
    MapFrame f = frame ? *frame : frame_for(series, cell);
    IntensityMap map(f, stat);
    if (map.empty()) return map;
    for (const auto& s : series)
        for (const auto& x : s.samples)
            if (!layer || x.layer == *layer) map.add(x.position, x.value);
    return map;
}

inline IntensityMap accumulate_map(const SignalSeries& series, double cell, Statistic stat,
                                   std::optional<MapFrame> frame = std::nullopt,
                                   std::optional<int> layer = std::nullopt) {
    return accumulate_map(std::span<const SignalSeries>(&series, 1), cell, stat, frame, layer);
}

/// Mean of the statistic over sampled cells whose centres lie at a distance in
/// [r_inner, r_outer] from `center`. NaN when no such cell was sampled.
inline double region_mean(const IntensityMap& m, Vec2 center, double r_inner, double r_outer) {
    double sum = 0.0;
    std::size_t n = 0;
    const MapFrame& f = m.frame();
    for (std::size_t j = 0; j < f.ny; ++j)
        for (std::size_t i = 0; i < f.nx; ++i) {
            if (m.count(i, j) == 0) continue;
            const double r = distance(f.cell_center(i, j), center);
            if (r < r_inner || r > r_outer) continue;
            sum += m.value(i, j);
            ++n;
        }
    return n == 0 ? std::nan("") : sum / static_cast<double>(n);
}

enum class Direction { above, below };

inline std::optional<Direction> parse_direction(std::string_view s) {
    if (s == "above") return Direction::above;
    if (s == "below") return Direction::below;
    return std::nullopt;
}

inline const char* to_string(Direction d) { return d == Direction::above ? "above" : "below"; }

/// Times of threshold excursions. `above` selects samples > threshold,
/// `below` samples <= threshold. Excursions separated by fewer than
/// `merge_window` samples are merged and reported at their extremal sample.
inline std::vector<double> threshold_events(const SignalSeries& s, double threshold, Direction dir,
                                            std::size_t merge_window = 10) {
    std::vector<double> out;
    const auto& x = s.samples;
    auto hit = [&](double v) { return dir == Direction::above ? v > threshold : v <= threshold; };
    auto better = [&](double a, double b) { return dir == Direction::above ? a > b : a < b; };
    std::optional<std::size_t> best;
    std::size_t last_hit = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        if (!hit(x[i].value)) continue;
        if (best && i - last_hit >= merge_window) {
            out.push_back(x[*best].t);
            best.reset();
        }
        if (!best || better(x[i].value, x[*best].value)) best = i;
        last_hit = i;
    }
    if (best) out.push_back(x[*best].t);
    return out;
}

}  // namespace lpbf::signal

namespace lpbf::io {

inline std::string format_series(const signal::SignalSeries& s, const Provenance& prov) {
    std::ostringstream os;
    write_provenance(os, prov, "signal-series");
    write_meta(os, "gain", s.gain);
    os << "t\tvalue\tx\ty\tlayer\n";
    for (const auto& x : s.samples)
        os << format_number(x.t) << '\t' << format_number(x.value) << '\t' << format_number(x.position.x) << '\t'
           << format_number(x.position.y) << '\t' << x.layer << '\n';
    return os.str();
}

inline signal::SignalSeries parse_series(const Table& t) {
    const std::size_t ct = t.require_column("t"), cv = t.require_column("value"), cx = t.require_column("x"),
                      cy = t.require_column("y"), cl = t.require_column("layer");
    signal::SignalSeries s;
    s.gain = t.meta_number("gain").value_or(1.0);
    for (const auto& row : t.rows) {
        auto num = [&](std::size_t c) {
            if (c >= row.fields.size()) throw InputError("line " + std::to_string(row.line) + ": missing field");
            auto v = parse_double(row.fields[c]);
            if (!v) throw InputError("line " + std::to_string(row.line) + ": bad number '" + row.fields[c] + "'");
            return *v;
        };
        signal::SignalSample x{num(ct), num(cv), {num(cx), num(cy)}, static_cast<int>(num(cl))};
        if (!s.samples.empty() && !(x.t > s.samples.back().t))
            throw InputError("line " + std::to_string(row.line) + ": times must be strictly increasing");
        if (x.value < 0.0) throw InputError("line " + std::to_string(row.line) + ": negative intensity");
        s.samples.push_back(x);
    }
    return s;
}

inline signal::SignalSeries read_series_file(const std::string& path) { return parse_series(read_table_file(path)); }

/// Plain-text grid, one row per y index (ascending), metadata as comment
/// lines; loadable with numpy.loadtxt or gnuplot `matrix`.
inline std::string format_map(const signal::IntensityMap& m, const Provenance& prov) {
    std::ostringstream os;
    write_provenance(os, prov, "intensity-map");
    const MapFrame& f = m.frame();
    write_meta(os, "statistic", signal::to_string(m.statistic()));
    write_meta(os, "cell_mm", f.cell);
    write_meta(os, "x0_mm", f.x0);
    write_meta(os, "y0_mm", f.y0);
    write_meta(os, "nx", format_number(f.nx));
    write_meta(os, "ny", format_number(f.ny));
    for (std::size_t j = 0; j < f.ny; ++j) {
        for (std::size_t i = 0; i < f.nx; ++i) {
            if (i) os << ' ';
            os << format_number(m.value(i, j));
        }
        os << '\n';
    }
    return os.str();
}

}  // namespace lpbf::io
