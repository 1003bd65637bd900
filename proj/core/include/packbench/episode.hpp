#pragma once

// The packing loop: the sequence policy picks an object, the placement policy
// places it, the state is updated, until every candidate is packed or
// discarded for lack of space.

#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "packbench/placement.hpp"
#include "packbench/planners.hpp"
#include "packbench/rewards.hpp"

namespace packbench {

enum class Termination { all_packed, no_space };

std::string_view termination_name(Termination t);

/// One manager/worker round. `placement` is nullopt when the object fits
/// nowhere; it is then dropped from the candidates and the state is unchanged.
struct StepRecord {
    const PackingState& before;
    const PackingState& after;
    std::span<const std::size_t> candidates;  // before the pick
    std::size_t object;
    std::optional<Placement> placement;
    double j_before;
    double j_after;
};

struct RunOptions {
    ObjectiveWeights weights;
    StabilityTerm term = StabilityTerm::latest;
    bool timing = true;
    bool keep_frames = false;
    std::function<void(const StepRecord&)> observer;
};

struct EpisodeReport {
    std::vector<Placement> plan;
    MetricsRecord metrics;
    Termination termination = Termination::all_packed;
    std::vector<double> j_trace;  // J before the first placement, then after each
    std::vector<double> rewards;  // one per placement
    double j_final = 0.0;
    double planning_seconds = 0.0;
    PackingState final_state;
    std::vector<Heightmap> frames;  // initial box, then after each placement
    std::string error;              // policy failure; the state stays at the last good step
};

EpisodeReport run_episode(const EpisodeContext& ctx, SequencePolicy& sequence, PlacementPolicy& placement,
                          const RunOptions& options = {});

}  // namespace packbench
