#pragma once

// Layer-wise line hatching of a circular cross-section with per-layer rotation,
// plus trajectory queries used by the thermal driver and co-registration.
//
// Units: mm, mm/s, s, degrees. The thermal module converts to SI at its boundary.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "lpbf/common.hpp"

namespace lpbf {

struct MachineParams {
    double laser_power = 170.0;        // W
    double scan_speed = 1085.0;        // mm/s
    double hatch_distance = 0.1;       // mm
    double layer_thickness = 0.02;     // mm
    double rotation_increment = 67.0;  // degrees
    double spot_radius = 80.0;         // um
    double base_angle = 0.0;           // degrees

    /// Violated invariants, empty when valid.
    std::vector<std::string> validate() const {
        std::vector<std::string> v;
        auto positive = [&](double x, const char* name) {
            if (!(x > 0.0) || !std::isfinite(x)) v.push_back(std::string(name) + " must be > 0");
        };
        if (!(laser_power >= 0.0) || !std::isfinite(laser_power)) v.push_back("laser_power must be >= 0");
        positive(scan_speed, "scan_speed");
        positive(hatch_distance, "hatch_distance");
        positive(layer_thickness, "layer_thickness");
        positive(spot_radius, "spot_radius");
        if (!(rotation_increment > 0.0 && rotation_increment < 180.0))
            v.push_back("rotation_increment must lie in (0, 180) degrees");
        if (!(base_angle >= 0.0 && base_angle < 180.0)) v.push_back("base_angle must lie in [0, 180) degrees");
        return v;
    }
};

struct ScanSegment {
    Vec2 start;
    Vec2 end;
    double t_start = 0.0;
    double t_end = 0.0;
    bool laser_on = false;

    double length() const { return distance(start, end); }
    double duration() const { return t_end - t_start; }
    Vec2 at(double t) const {
        const double s = (t - t_start) / (t_end - t_start);
        return start + s * (end - start);
    }
};

struct ScanPattern {
    int layer_index = 0;
    double z = 0.0;       // mm
    double angle = 0.0;   // degrees, in [0, 180)
    Circle domain;        // clipping circle, mm
    std::vector<ScanSegment> segments;

    bool empty() const { return segments.empty(); }
    double t_begin() const { return segments.empty() ? 0.0 : segments.front().t_start; }
    double t_end() const { return segments.empty() ? 0.0 : segments.back().t_end; }
    std::size_t line_count() const {
        return static_cast<std::size_t>(
            std::count_if(segments.begin(), segments.end(), [](const ScanSegment& s) { return s.laser_on; }));
    }
};

enum class TurnKind { re_entry, departure };

struct TurnEvent {
    double time = 0.0;
    Vec2 position;
    TurnKind kind = TurnKind::re_entry;
};

struct TrajectoryPoint {
    Vec2 position;
    bool laser_on = false;
};

inline double layer_angle(const MachineParams& p, int layer_index) {
    return reduce_half_turn(p.base_angle + static_cast<double>(layer_index) * p.rotation_increment);
}

/// Hatch lines sit at signed offsets n * hatch_distance from the diameter with
/// the layer's orientation, visited in serpentine order. Consecutive lines are
/// joined by laser-off traverses at scan speed. A circle with radius not
/// exceeding the hatch distance yields an empty pattern.
inline ScanPattern generate_layer(const MachineParams& params, const Circle& domain, int layer_index,
                                  double t_begin = 0.0) {
    if (auto v = params.validate(); !v.empty()) throw ConfigError(v);
    if (layer_index < 0) throw ConfigError({"layer_index must be >= 0"});
    if (!(domain.radius > 0.0)) throw ConfigError({"domain radius must be > 0"});

    ScanPattern pat;
    pat.layer_index = layer_index;
    pat.z = static_cast<double>(layer_index) * params.layer_thickness;
    pat.angle = layer_angle(params, layer_index);
    pat.domain = domain;
    if (domain.radius <= params.hatch_distance) return pat;

    const double a = deg_to_rad(pat.angle);
    const Vec2 along{std::cos(a), std::sin(a)};
    const Vec2 normal{-std::sin(a), std::cos(a)};
    const double r = domain.radius;
    const double h = params.hatch_distance;
    const long n_max = static_cast<long>(std::floor(r / h)) + 1;

    std::vector<std::pair<Vec2, Vec2>> lines;
    for (long n = -n_max; n <= n_max; ++n) {
        const double d = static_cast<double>(n) * h;
        const double half_sq = r * r - d * d;
        if (half_sq <= 1e-18) continue;
        const double half = std::sqrt(half_sq);
        const Vec2 mid = domain.center + d * normal;
        Vec2 p0 = mid - half * along;
        Vec2 p1 = mid + half * along;
        if (lines.size() % 2 == 1) std::swap(p0, p1);
        lines.emplace_back(p0, p1);
    }

    double t = t_begin;
    const double v = params.scan_speed;
    for (std::size_t k = 0; k < lines.size(); ++k) {
        if (k > 0) {
            const Vec2 from = lines[k - 1].second;
            const Vec2 to = lines[k].first;
            const double dur = distance(from, to) / v;
            pat.segments.push_back({from, to, t, t + dur, false});
            t += dur;
        }
        const double dur = distance(lines[k].first, lines[k].second) / v;
        pat.segments.push_back({lines[k].first, lines[k].second, t, t + dur, true});
        t += dur;
    }
    return pat;
}

/// Consecutive layers chained in time, separated by `dead_time` seconds.
inline std::vector<ScanPattern> generate_build(const MachineParams& params, const Circle& domain, int layers,
                                               double dead_time = 0.0, double t_begin = 0.0) {
    std::vector<ScanPattern> out;
    out.reserve(static_cast<std::size_t>(std::max(layers, 0)));
    double t = t_begin;
    for (int k = 0; k < layers; ++k) {
        out.push_back(generate_layer(params, domain, k, t));
        if (!out.back().empty()) t = out.back().t_end();
        t += dead_time;
    }
    return out;
}

inline TrajectoryPoint position_at(const ScanPattern& pattern, double t) {
    if (pattern.empty() || t < pattern.t_begin() || t > pattern.t_end())
        throw RangeError("time " + std::to_string(t) + " s outside pattern of layer " +
                         std::to_string(pattern.layer_index));
    const auto& segs = pattern.segments;
    auto it = std::upper_bound(segs.begin(), segs.end(), t,
                               [](double tv, const ScanSegment& s) { return tv < s.t_start; });
    const ScanSegment& s = *(it == segs.begin() ? it : std::prev(it));
    return {s.at(std::min(t, s.t_end)), s.laser_on};
}

/// Across a time-ordered build; gaps between layers are out of range.
inline TrajectoryPoint position_at(std::span<const ScanPattern> patterns, double t) {
    for (const auto& p : patterns)
        if (!p.empty() && t >= p.t_begin() && t <= p.t_end()) return position_at(p, t);
    throw RangeError("time " + std::to_string(t) + " s not covered by any layer pattern");
}

inline std::vector<TurnEvent> turning_points(const ScanPattern& pattern) {
    std::vector<const ScanSegment*> on;
    for (const auto& s : pattern.segments)
        if (s.laser_on) on.push_back(&s);
    std::vector<TurnEvent> out;
    if (on.size() < 2) return out;
    out.reserve(2 * (on.size() - 1));
    for (std::size_t k = 0; k < on.size(); ++k) {
        if (k + 1 < on.size()) out.push_back({on[k]->t_end, on[k]->end, TurnKind::departure});
        if (k > 0) out.push_back({on[k]->t_start, on[k]->start, TurnKind::re_entry});
    }
    std::stable_sort(out.begin(), out.end(), [](const TurnEvent& a, const TurnEvent& b) { return a.time < b.time; });
    return out;
}

inline double laser_on_length(const ScanPattern& pattern) {
    double total = 0.0;
    for (const auto& s : pattern.segments)
        if (s.laser_on) total += s.length();
    return total;
}

/// Laser exposure over a time interval: total on-time and the time-averaged
/// focus position during that on-time.
struct Exposure {
    double on_time = 0.0;
    Vec2 centroid;
};

/// Sequential cursor over a build. Queries must be non-decreasing in time.
class TrajectoryCursor {
public:
    explicit TrajectoryCursor(std::span<const ScanPattern> patterns) {
        for (const auto& p : patterns)
            for (const auto& s : p.segments) segments_.push_back({s, p.layer_index});
        for (std::size_t k = 1; k < segments_.size(); ++k)
            if (segments_[k].seg.t_start < segments_[k - 1].seg.t_end - 1e-12)
                throw InputError("patterns are not time-ordered");
    }

    double t_begin() const { return segments_.empty() ? 0.0 : segments_.front().seg.t_start; }
    double t_end() const { return segments_.empty() ? 0.0 : segments_.back().seg.t_end; }

    Exposure exposure(double t0, double t1) {
        advance(t0);
        Exposure e;
        double wx = 0.0, wy = 0.0;
        for (std::size_t k = cursor_; k < segments_.size(); ++k) {
            const ScanSegment& s = segments_[k].seg;
            if (s.t_start >= t1) break;
            if (!s.laser_on) continue;
            const double a = std::max(t0, s.t_start);
            const double b = std::min(t1, s.t_end);
            if (b <= a) continue;
            const Vec2 mid = s.at(0.5 * (a + b));
            e.on_time += b - a;
            wx += (b - a) * mid.x;
            wy += (b - a) * mid.y;
        }
        if (e.on_time > 0.0) e.centroid = {wx / e.on_time, wy / e.on_time};
        return e;
    }

    /// Point on the trajectory at `t`; laser off (and last known position) in gaps.
    TrajectoryPoint at(double t, int* layer = nullptr) {
        advance(t);
        if (segments_.empty()) return {};
        if (cursor_ >= segments_.size()) {
            if (layer) *layer = segments_.back().layer;
            return {segments_.back().seg.end, false};
        }
        const auto& cur = segments_[cursor_];
        if (layer) *layer = cur.layer;
        if (t < cur.seg.t_start) return {cur.seg.start, false};
        return {cur.seg.at(t), cur.seg.laser_on};
    }

private:
    struct Tagged {
        ScanSegment seg;
        int layer;
    };

    void advance(double t) {
        while (cursor_ < segments_.size() && segments_[cursor_].seg.t_end < t) ++cursor_;
    }

    std::vector<Tagged> segments_;
    std::size_t cursor_ = 0;
};

}  // namespace lpbf
