#include "packbench/rewards.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace packbench {

double compactness(const PackingState& state) {
    if (state.packed.empty()) return 0.0;
    const double h = quanta_to_mm(state.box.max());
    if (h <= 0.0) return 0.0;
    return state.packed_volume_mm3() / (state.length_mm() * state.width_mm() * h);
}

double pyramidality(const PackingState& state) {
    if (state.packed.empty()) return 0.0;
    const double c = state.box.cell_mm();
    const double projected = static_cast<double>(state.box.sum()) / kQuantaPerMm * c * c;
    if (projected <= 0.0) return 0.0;
    return state.packed_volume_mm3() / projected;
}

namespace {

double cross(Point2 o, Point2 a, Point2 b) { return (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x); }

}  // namespace

std::vector<Point2> convex_hull(std::vector<Point2> pts) {
    std::sort(pts.begin(), pts.end(), [](Point2 a, Point2 b) { return a.x < b.x || (a.x == b.x && a.y < b.y); });
    pts.erase(std::unique(pts.begin(), pts.end(), [](Point2 a, Point2 b) { return a.x == b.x && a.y == b.y; }),
              pts.end());
    if (pts.size() < 3) return pts;
    std::vector<Point2> h(2 * pts.size());
    std::size_t k = 0;
    for (std::size_t i = 0; i < pts.size(); ++i) {
        while (k >= 2 && cross(h[k - 2], h[k - 1], pts[i]) <= 0) --k;
        h[k++] = pts[i];
    }
    for (std::size_t i = pts.size() - 1, t = k + 1; i-- > 0;) {
        while (k >= t && cross(h[k - 2], h[k - 1], pts[i]) <= 0) --k;
        h[k++] = pts[i];
    }
    h.resize(k - 1);
    // All points collinear: keep the two extremes as a segment.
    if (h.size() < 3) return {pts.front(), pts.back()};
    return h;
}

bool hull_contains(std::span<const Point2> hull, Point2 p) {
    constexpr double tol = 1e-9;
    if (hull.empty()) return false;
    if (hull.size() == 1) return std::hypot(p.x - hull[0].x, p.y - hull[0].y) <= tol;
    if (hull.size() == 2) {
        const Point2 a = hull[0], b = hull[1];
        const double len = std::hypot(b.x - a.x, b.y - a.y);
        if (std::abs(cross(a, b, p)) > tol * std::max(1.0, len)) return false;
        const double t = ((p.x - a.x) * (b.x - a.x) + (p.y - a.y) * (b.y - a.y)) / (len * len);
        return t >= -tol && t <= 1.0 + tol;
    }
    for (std::size_t i = 0; i < hull.size(); ++i) {
        const Point2 a = hull[i], b = hull[(i + 1) % hull.size()];
        const double len = std::hypot(b.x - a.x, b.y - a.y);
        if (cross(a, b, p) < -tol * std::max(1.0, len)) return false;
    }
    return true;
}

int stability_check(const Heightmap& box_before, const Placement& p, const OrientedShape& shape,
                    const StabilityThresholds&) {
    const auto& top = shape.views.top;
    const auto& bottom = shape.views.bottom;
    const int x0 = footprint_origin(p.x, top.rows()), y0 = footprint_origin(p.y, top.cols());
    std::vector<Point2> contacts;
    for (int a = 0; a < top.rows(); ++a)
        for (int b = 0; b < top.cols(); ++b) {
            if (top.at(a, b) == 0) continue;
            if (box_before.at(x0 + a, y0 + b) - bottom.at(a, b) == p.z)
                contacts.push_back({x0 + a + 0.5, y0 + b + 0.5});
        }
    if (contacts.empty()) throw std::logic_error("stability_check: placement has no contact cell");
    const auto hull = convex_hull(std::move(contacts));
    return hull_contains(hull, {x0 + shape.com_x, y0 + shape.com_y}) ? 1 : 0;
}

double stability_value(const PackingState& state, StabilityTerm term) {
    if (state.packed.empty()) return 0.0;
    if (term == StabilityTerm::latest) return state.packed.back().stable;
    double s = 0.0;
    for (const auto& p : state.packed) s += p.stable;
    return s / static_cast<double>(state.packed.size());
}

double objective_value(double C, double P, double S, const ObjectiveWeights& w) {
    return w.alpha * C + w.beta * P + w.gamma * S;
}

double objective(const PackingState& state, const ObjectiveWeights& w, StabilityTerm term) {
    if (state.packed.empty()) return 0.0;
    return objective_value(compactness(state), pyramidality(state), stability_value(state, term), w);
}

MetricsRecord measure(const PackingState& state) {
    MetricsRecord m;
    m.C = compactness(state);
    m.P = pyramidality(state);
    m.S = stability_value(state, StabilityTerm::mean);
    m.packed_count = static_cast<int>(state.packed.size());
    return m;
}

}  // namespace packbench
