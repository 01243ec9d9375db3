#pragma once

// Anomaly windows from the photodiode series, density-based clustering of
// their normalised shapes, and co-registration of clusters with the scan
// trajectory (turning points, part boundary).

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <deque>
#include <map>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "lpbf/common.hpp"
#include "lpbf/scanpath.hpp"
#include "lpbf/signal.hpp"
#include "lpbf/tabular.hpp"

namespace lpbf::cluster {

enum class Normalization { minmax, zscore };

inline std::optional<Normalization> parse_normalization(std::string_view s) {
    if (s == "minmax") return Normalization::minmax;
    if (s == "zscore") return Normalization::zscore;
    return std::nullopt;
}

inline const char* to_string(Normalization n) { return n == Normalization::minmax ? "minmax" : "zscore"; }

struct Normalized {
    std::vector<double> values;
    bool flat = false;
};

/// Min-max scaling onto [0, 1]; a flat window maps to 0.5 everywhere.
inline Normalized normalize(std::span<const double> raw) {
    Normalized out;
    out.values.resize(raw.size());
    if (raw.empty()) return out;
    const auto [lo, hi] = std::minmax_element(raw.begin(), raw.end());
    if (!(*hi > *lo)) {
        std::fill(out.values.begin(), out.values.end(), 0.5);
        out.flat = true;
        return out;
    }
    const double span = *hi - *lo;
    for (std::size_t i = 0; i < raw.size(); ++i) out.values[i] = (raw[i] - *lo) / span;
    return out;
}

/// Zero mean, unit (population) standard deviation; flat windows map to 0.
inline Normalized normalize_zscore(std::span<const double> raw) {
    Normalized out;
    out.values.assign(raw.size(), 0.0);
    if (raw.empty()) return out;
    double mean = 0.0;
    for (double v : raw) mean += v;
    mean /= static_cast<double>(raw.size());
    double var = 0.0;
    for (double v : raw) var += (v - mean) * (v - mean);
    const double sd = std::sqrt(var / static_cast<double>(raw.size()));
    if (!(sd > 0.0)) {
        out.flat = true;
        return out;
    }
    for (std::size_t i = 0; i < raw.size(); ++i) out.values[i] = (raw[i] - mean) / sd;
    return out;
}

struct SignalWindow {
    double center_time = 0.0;  // s
    std::vector<double> raw;
    std::vector<double> normalized;
    bool flat = false;
    Vec2 position;  // mm, focus at the event sample
    int layer = 0;
};

struct WindowSet {
    std::vector<SignalWindow> windows;
    std::size_t dropped = 0;  // events whose window crosses a series boundary
};

/// W samples per event: ceil(W/2) before the event sample, the event sample
/// and the rest after it. Events are matched to the nearest sample in time.
inline WindowSet extract_windows(const signal::SignalSeries& series, std::span<const double> events,
                                 std::size_t W = 10, Normalization norm = Normalization::minmax) {
    if (W < 2) throw ConfigError({"window length must be >= 2"});
    WindowSet out;
    const auto& s = series.samples;
    const std::size_t before = (W + 1) / 2;
    for (double t : events) {
        if (s.empty() || t < s.front().t || t > s.back().t) {
            ++out.dropped;
            continue;
        }
        auto it = std::lower_bound(s.begin(), s.end(), t,
                                   [](const signal::SignalSample& x, double tv) { return x.t < tv; });
        std::size_t idx = static_cast<std::size_t>(it - s.begin());
        if (idx > 0 && (idx == s.size() || std::abs(s[idx - 1].t - t) <= std::abs(s[idx].t - t))) --idx;
        if (idx < before || idx - before + W > s.size()) {
            ++out.dropped;
            continue;
        }
        SignalWindow w;
        w.center_time = s[idx].t;
        w.position = s[idx].position;
        w.layer = s[idx].layer;
        for (std::size_t k = idx - before; k < idx - before + W; ++k) w.raw.push_back(s[k].value);
        auto n = norm == Normalization::minmax ? normalize(w.raw) : normalize_zscore(w.raw);
        w.normalized = std::move(n.values);
        w.flat = n.flat;
        out.windows.push_back(std::move(w));
    }
    return out;
}

inline constexpr int noise = -1;

inline double squared_distance(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
    return s;
}

/// DBSCAN, Euclidean metric. A point is core when at least `min_samples`
/// points (itself included) lie within `eps`. Clusters are seeded in input
/// order; a border point keeps the first cluster that reaches it.
inline std::vector<int> dbscan(std::span<const std::vector<double>> points, double eps, std::size_t min_samples) {
    if (!(eps > 0.0) || min_samples < 1) throw ConfigError({"dbscan needs eps > 0 and min_samples >= 1"});
    const std::size_t n = points.size();
    const double eps2 = eps * eps;
    std::vector<std::vector<std::size_t>> nbr(n);
    for (std::size_t i = 0; i < n; ++i) {
        nbr[i].push_back(i);
        for (std::size_t j = i + 1; j < n; ++j)
            if (squared_distance(points[i], points[j]) <= eps2) {
                nbr[i].push_back(j);
                nbr[j].push_back(i);
            }
    }
    constexpr int unvisited = -2;
    std::vector<int> label(n, unvisited);
    int next = 0;
    std::deque<std::size_t> queue;
    for (std::size_t i = 0; i < n; ++i) {
        if (label[i] != unvisited) continue;
        if (nbr[i].size() < min_samples) {
            label[i] = noise;
            continue;
        }
        const int c = next++;
        label[i] = c;
        queue.assign(nbr[i].begin(), nbr[i].end());
        while (!queue.empty()) {
            const std::size_t q = queue.front();
            queue.pop_front();
            if (label[q] == noise) label[q] = c;
            if (label[q] != unvisited) continue;
            label[q] = c;
            if (nbr[q].size() >= min_samples) queue.insert(queue.end(), nbr[q].begin(), nbr[q].end());
        }
    }
    return label;
}

enum class ClassLabel { class1_turning, class2_boundary, residual };

inline const char* to_string(ClassLabel c) {
    switch (c) {
        case ClassLabel::class1_turning: return "class1_turning";
        case ClassLabel::class2_boundary: return "class2_boundary";
        case ClassLabel::residual: return "residual";
    }
    return "?";
}

struct ClusterResult {
    std::vector<int> labels;
    double eps = 0.55;
    std::size_t min_samples = 5;
    std::string metric = "euclidean";
    std::map<int, ClassLabel> annotations;  // per cluster label; noise is always residual

    ClassLabel class_of(int label) const {
        auto it = annotations.find(label);
        return it == annotations.end() ? ClassLabel::residual : it->second;
    }
};

inline ClusterResult cluster_windows(std::span<const SignalWindow> windows, double eps, std::size_t min_samples) {
    std::vector<std::vector<double>> pts;
    pts.reserve(windows.size());
    for (const auto& w : windows) pts.push_back(w.normalized);
    ClusterResult r;
    r.labels = dbscan(pts, eps, min_samples);
    r.eps = eps;
    r.min_samples = min_samples;
    return r;
}

struct ClassifyOptions {
    double turn_radius = 0.2;        // mm
    double member_fraction = 0.8;    // share of windows that must satisfy the proximity test
    double min_decay = 0.3;          // normalised drop from the maximum to the window end
};

/// Shape descriptors of a mean normalised window.
struct ShapeTraits {
    std::size_t argmax = 0;
    std::size_t rise_span = 0;  // samples from the pre-peak minimum to the maximum
    bool decays = false;        // falling trend after the maximum
};

inline ShapeTraits shape_traits(std::span<const double> m, double min_decay) {
    ShapeTraits s;
    if (m.empty()) return s;
    s.argmax = static_cast<std::size_t>(std::max_element(m.begin(), m.end()) - m.begin());
    const auto lo = std::min_element(m.begin(), m.begin() + static_cast<std::ptrdiff_t>(s.argmax) + 1);
    s.rise_span = s.argmax - static_cast<std::size_t>(lo - m.begin());
    const std::size_t tail = m.size() - s.argmax;
    if (tail >= 2) {
        double mt = 0.0, mv = 0.0;
        for (std::size_t i = s.argmax; i < m.size(); ++i) {
            mt += static_cast<double>(i);
            mv += m[i];
        }
        mt /= static_cast<double>(tail);
        mv /= static_cast<double>(tail);
        double num = 0.0, den = 0.0;
        for (std::size_t i = s.argmax; i < m.size(); ++i) {
            num += (static_cast<double>(i) - mt) * (m[i] - mv);
            den += (static_cast<double>(i) - mt) * (static_cast<double>(i) - mt);
        }
        s.decays = num < 0.0 && m[s.argmax] - m.back() >= min_decay;
    }
    return s;
}

/// Class 1: spike (maximum no later than the event sample, rise within half
/// a window, decaying tail) and >= member_fraction of windows near a re-entry
/// turning point. Class 2: smoother rise (maximum in the second half or rise
/// spanning more than half a window) with >= member_fraction near the part
/// boundary. Everything else, and noise, is residual.
inline std::map<int, ClassLabel> coregister_and_classify(ClusterResult& result, std::span<const SignalWindow> windows,
                                                         std::span<const ScanPattern> patterns,
                                                         const ClassifyOptions& opt = {}) {
    if (result.labels.size() != windows.size()) throw Error("cluster labels do not match window count");
    std::map<int, const ScanPattern*> by_layer;
    std::map<int, std::vector<TurnEvent>> reentries;
    for (const auto& p : patterns) {
        by_layer[p.layer_index] = &p;
        auto& v = reentries[p.layer_index];
        for (const auto& e : turning_points(p))
            if (e.kind == TurnKind::re_entry) v.push_back(e);
    }
    for (const auto& w : windows) {
        auto it = by_layer.find(w.layer);
        if (it == by_layer.end())
            throw Error("frame mismatch: window at t=" + std::to_string(w.center_time) + " s references layer " +
                        std::to_string(w.layer) + " absent from the pattern");
        const Circle& c = it->second->domain;
        if (distance(w.position, c.center) > c.radius + opt.turn_radius)
            throw Error("frame mismatch: window at t=" + std::to_string(w.center_time) +
                        " s lies outside the scanned domain");
    }

    struct Acc {
        std::size_t n = 0, near_turn = 0, near_boundary = 0;
        std::vector<double> mean;
    };
    std::map<int, Acc> acc;
    for (std::size_t i = 0; i < windows.size(); ++i) {
        const int label = result.labels[i];
        if (label == noise) continue;
        const auto& w = windows[i];
        Acc& a = acc[label];
        if (a.mean.empty()) a.mean.assign(w.normalized.size(), 0.0);
        for (std::size_t k = 0; k < w.normalized.size() && k < a.mean.size(); ++k) a.mean[k] += w.normalized[k];
        ++a.n;
        const Circle& c = by_layer[w.layer]->domain;
        if (c.radius - distance(w.position, c.center) <= opt.turn_radius) ++a.near_boundary;
        for (const auto& e : reentries[w.layer])
            if (distance(e.position, w.position) <= opt.turn_radius) {
                ++a.near_turn;
                break;
            }
    }

    std::map<int, ClassLabel> out;
    for (auto& [label, a] : acc) {
        for (double& v : a.mean) v /= static_cast<double>(a.n);
        const ShapeTraits s = shape_traits(a.mean, opt.min_decay);
        const std::size_t half = a.mean.size() / 2;
        const double n = static_cast<double>(a.n);
        const bool spike = s.argmax <= half && s.rise_span <= half && s.decays;
        const bool smooth = s.argmax > half || s.rise_span > half;
        ClassLabel cls = ClassLabel::residual;
        if (spike && static_cast<double>(a.near_turn) >= opt.member_fraction * n)
            cls = ClassLabel::class1_turning;
        else if (smooth && static_cast<double>(a.near_boundary) >= opt.member_fraction * n)
            cls = ClassLabel::class2_boundary;
        out[label] = cls;
    }
    result.annotations = out;
    return out;
}

}  // namespace lpbf::cluster

namespace lpbf::io {

inline std::string format_windows(std::span<const cluster::SignalWindow> w, const cluster::ClusterResult& r,
                                  const Provenance& prov) {
    std::ostringstream os;
    write_provenance(os, prov, "cluster-windows");
    write_meta(os, "eps", r.eps);
    write_meta(os, "min_samples", format_number(r.min_samples));
    write_meta(os, "metric", r.metric);
    const std::size_t W = w.empty() ? 0 : w.front().normalized.size();
    os << "window_id\tt\tx\ty\tlayer\tlabel\tclass\tflat";
    for (std::size_t k = 0; k < W; ++k) os << "\tn" << k;
    os << '\n';
    for (std::size_t i = 0; i < w.size(); ++i) {
        const int label = i < r.labels.size() ? r.labels[i] : cluster::noise;
        os << i << '\t' << format_number(w[i].center_time) << '\t' << format_number(w[i].position.x) << '\t'
           << format_number(w[i].position.y) << '\t' << w[i].layer << '\t' << label << '\t'
           << cluster::to_string(r.class_of(label)) << '\t' << (w[i].flat ? 1 : 0);
        for (double v : w[i].normalized) os << '\t' << format_number(v);
        os << '\n';
    }
    return os.str();
}

}  // namespace lpbf::io
