#pragma once

// Packing objective: compactness, pyramidality, stability, step reward.

#include <array>
#include <span>

#include "packbench/geometry.hpp"
#include "packbench/placement.hpp"

namespace packbench {

struct ObjectiveWeights {
    double alpha = 0.75;
    double beta = 0.25;
    double gamma = 0.25;
};

/// Kept for a dynamics backend; the static check below does not read them.
struct StabilityThresholds {
    double pos_tol_mm = 20.0;
    double ang_tol = kPi / 6;
};

/// Which stability value enters J: the latest placement's, or the mean over
/// all placements so far.
enum class StabilityTerm { latest, mean };

struct MetricsRecord {
    double C = 0.0;
    double P = 0.0;
    double S = 0.0;
    int packed_count = 0;
    double latency_per_object = 0.0;  // seconds
};

/// Packed volume over L * W * (max box height). 0 for an empty packing.
double compactness(const PackingState& state);

/// Packed volume over the volume under the box heightmap. 0 for an empty packing.
double pyramidality(const PackingState& state);

struct Point2 {
    double x = 0.0;
    double y = 0.0;
};

/// Convex hull, counter-clockwise, collinear points dropped.
std::vector<Point2> convex_hull(std::vector<Point2> pts);

/// Inside or on the hull (which may be a point or a segment), tolerance 1e-9.
bool hull_contains(std::span<const Point2> hull, Point2 p);

/// Quasi-static test: 1 iff the center of mass projects inside (or onto) the
/// convex hull of the contact cell centers. Contact cells are occupied
/// footprint columns whose bottom rests exactly on H_c at drop height z.
int stability_check(const Heightmap& box_before, const Placement& p, const OrientedShape& shape,
                    const StabilityThresholds& thresholds = {});

/// Fraction of stable placements, or the latest one's flag (0 when empty).
double stability_value(const PackingState& state, StabilityTerm term);

double objective_value(double C, double P, double S, const ObjectiveWeights& w);

/// J = alpha C + beta P + gamma S.
double objective(const PackingState& state, const ObjectiveWeights& w, StabilityTerm term = StabilityTerm::latest);

inline double step_reward(double j_next, double j_curr) { return j_next - j_curr; }

/// C, P, mean S and packed count for a state (latency left at 0).
MetricsRecord measure(const PackingState& state);

}  // namespace packbench
